# Copyright © 2024 age-lens contributors
# SPDX-License-Identifier: MIT

"""Synthetic review corpora with planted item ranges and ageing children.

Every item gets a true target range; every user gets a child born on a known
day, so the child's age at any purchase is exact.  Users mostly buy items
whose range holds that age and rate those well; some purchases are random and
rated poorly.  Reviews of fitting purchases may mention the child's age, as
written in ``months`` (``weeks`` below one month) with one decimal, so a
noise-free corpus is recovered exactly by extraction.

Items, users, and review texts draw from independent child seeds of the
same `numpy.random.SeedSequence`, so changing one does not reshuffle the
others.
"""

from typing import Dict, List, NamedTuple, Optional, Tuple

from fractions import Fraction
from os import path

import numpy as np

from . import core
from .core import AgeMention, ReviewRecord
from .corpus import dump_ratings, dump_reviews, dump_titles, ratings_of_reviews
from .json import dump_records

START_DAY = core.parse_day("2012-01-01")

class ItemTruth(NamedTuple):
    item_id: str
    title: str
    low_years: float
    high_years: float
    popularity: float

class UserTruth(NamedTuple):
    user_id: str
    birth_day: int
    slope: float = 1.0

class SynthParams(NamedTuple):
    n_users: int = 200
    n_items: int = 60
    seed: int = 0
    noise: float = 0.0
    typo_rate: float = 0.0
    outlier_rate: float = 0.0
    in_range: float = 0.85
    mention_rate: float = 0.7
    possessive_rate: float = 0.7
    min_purchases: int = 8
    max_purchases: int = 20

class SynthCorpus(NamedTuple):
    params: SynthParams
    items: List[ItemTruth]
    users: List[UserTruth]
    reviews: List[ReviewRecord]
    mentions: List[AgeMention]

CHILDREN = ("son", "daughter", "baby", "little one")
POSSESSIVE_TEMPLATES = (
    "My {child} is {age} old and {verdict}.",
    "Our {child} was {age} when we got this, {verdict}.",
    "Bought it when my {child} was {age}. {Verdict}.",
)
GENERAL_TEMPLATES = (
    "Got this for a {age} old {child}, {verdict}.",
    "Works for a {age} old, {verdict}.",
    "Gift for a friend's {child} who is {age}. {Verdict}.",
)
PLAIN_TEMPLATES = ("Nice product, {verdict}.", "{Verdict}, shipping was quick.")
LIKED = ("we love it", "works great", "highly recommended", "a real favourite")
DISLIKED = ("not a good fit", "it did not hold attention", "we returned it")
TYPOS = {"months": "mnths", "month": "mnth", "weeks": "wekks", "week": "wek"}

def _pick(rng, seq):
    return seq[int(rng.integers(len(seq)))]

def age_phrase(age_years: float) -> Tuple[str, Fraction]:
    """Render an age as written in a review, and the years value it denotes.

    >>> age_phrase(0.5)
    ('6 months', Fraction(1, 2))
    >>> age_phrase(0.04)
    ('2.1 weeks', Fraction(21, 520))
    """
    months = round(age_years * 12, 1)
    if months >= 1:
        value, unit, per_year = months, "month", 12
    else:
        value, unit, per_year = max(round(age_years * 52, 1), 0.1), "week", 52
    text = "{:g}".format(value)
    years = Fraction(text) / per_year
    return "{} {}{}".format(text, unit, "" if text == "1" else "s"), years

def make_items(params: SynthParams, rng) -> List[ItemTruth]:
    items = []
    for n in range(params.n_items):
        low = float(rng.uniform(0.0, 2.5))
        high = low + float(rng.uniform(0.25, 0.75))
        popularity = float(rng.lognormal(0.0, 0.75))
        title = "Synthetic item {} ({:g}-{:g} months)".format(
            n, round(low * 12, 1), round(high * 12, 1))
        items.append(ItemTruth("I{:04d}".format(n), title, low, high, popularity))
    return items

def make_users(params: SynthParams, rng) -> List[UserTruth]:
    return [UserTruth("U{:05d}".format(n),
                      START_DAY + int(rng.uniform(-2.0, 1.0) * core.DAYS_PER_YEAR))
            for n in range(params.n_users)]

def _purchase_days(user: UserTruth, rng, params: SynthParams) -> List[int]:
    count = int(rng.integers(params.min_purchases, params.max_purchases + 1))
    first = max(START_DAY, user.birth_day + 14) + int(rng.integers(0, 180))
    span = int(rng.integers(300, 600))
    return sorted(first + int(d) for d in rng.integers(0, span, size=count))

def _choose_item(items, weights, owned, age, rng, params) -> Tuple[int, bool]:
    fitting = [n for n, it in enumerate(items)
               if it.low_years <= age <= it.high_years and n not in owned]
    if fitting and rng.random() < params.in_range:
        w = weights[fitting] / weights[fitting].sum()
        return fitting[int(rng.choice(len(fitting), p=w))], True
    others = [n for n in range(len(items)) if n not in owned]
    n = others[int(rng.integers(len(others)))]
    it = items[n]
    return n, it.low_years <= age <= it.high_years

def _review_text(age, fits, rating, rng, params) \
        -> Tuple[str, Optional[Tuple[Fraction, str, bool, str]]]:
    verdict = _pick(rng, LIKED if rating > 3 else DISLIKED)
    if not fits or rng.random() >= params.mention_rate:
        template = _pick(rng, PLAIN_TEMPLATES)
        return template.format(verdict=verdict, Verdict=verdict.capitalize()), None
    possessive = bool(rng.random() < params.possessive_rate)
    if params.outlier_rate and rng.random() < params.outlier_rate:
        years = int(rng.integers(6, 13))
        phrase, value = "{} years".format(years), Fraction(years)
    else:
        written = age + float(rng.normal(0.0, params.noise)) if params.noise else age
        phrase, value = age_phrase(max(written, 1 / 52))
    text_unit = phrase.split()[1]
    if params.typo_rate and rng.random() < params.typo_rate and text_unit in TYPOS:
        phrase = phrase.replace(text_unit, TYPOS[text_unit])
        text_unit = TYPOS[text_unit]
    templates = POSSESSIVE_TEMPLATES if possessive else GENERAL_TEMPLATES
    text = _pick(rng, templates).format(child=_pick(rng, CHILDREN), age=phrase,
                                        verdict=verdict, Verdict=verdict.capitalize())
    return text, (value, text_unit, possessive, phrase)

def _rating(fits, rng):
    return int(rng.integers(4, 6)) if fits else int(rng.integers(1, 4))

def generate(params: SynthParams) -> SynthCorpus:
    """Build a corpus in memory; the same `params` always give the same corpus."""
    if params.n_users < 1 or params.n_items < 1:
        raise core.ConfigError("synth", "expecting at least one user and one item")
    if params.max_purchases > params.n_items:
        params = params._replace(max_purchases=params.n_items,
                                 min_purchases=min(params.min_purchases, params.n_items))
    items_seq, users_seq, buys_seq, text_seq = np.random.SeedSequence(params.seed).spawn(4)
    items = make_items(params, np.random.default_rng(items_seq))
    users = make_users(params, np.random.default_rng(users_seq))
    buys, texts = np.random.default_rng(buys_seq), np.random.default_rng(text_seq)
    weights = np.array([it.popularity for it in items])

    reviews: List[ReviewRecord] = []
    mentions: List[AgeMention] = []
    for user in users:
        owned: set = set()
        for day in _purchase_days(user, buys, params):
            age = core.years_between(user.birth_day, day)
            n, fits = _choose_item(items, weights, owned, age, buys, params)
            owned.add(n)
            rating = _rating(fits, buys)
            text, planted = _review_text(age, fits, rating, texts, params)
            review = ReviewRecord("R{:07d}".format(len(reviews)), user.user_id,
                                  items[n].item_id, rating, day, text,
                                  LIKED[0] if rating > 3 else DISLIKED[0])
            reviews.append(review)
            if planted:
                value, unit_raw, possessive, phrase = planted
                mentions.append(AgeMention(review.review_id, user.user_id, review.item_id,
                                           day, rating, float(value), unit_raw, possessive,
                                           text.index(phrase)))
    core.notify("Generated {} review(s) with {} planted mention(s)".format(
        len(reviews), len(mentions)))
    return SynthCorpus(params, items, users, reviews, mentions)

OUTPUTS = {
    "reviews": "reviews.jsonl",
    "ratings": "ratings.csv",
    "titles": "titles.jsonl",
    "items": "truth_items.jsonl",
    "users": "truth_users.jsonl",
    "mentions": "truth_mentions.jsonl",
}

def write_corpus(corpus: SynthCorpus, out_dir) -> Dict[str, str]:
    """Write the corpus and its ground truth under `out_dir`; return the file paths."""
    paths = {k: path.join(out_dir, v) for k, v in OUTPUTS.items()}
    dump_reviews(corpus.reviews, paths["reviews"])
    dump_ratings(ratings_of_reviews(corpus.reviews), paths["ratings"])
    dump_titles({it.item_id: it.title for it in corpus.items}, paths["titles"])
    dump_records(corpus.items, paths["items"])
    dump_records(corpus.users, paths["users"])
    dump_records(corpus.mentions, paths["mentions"])
    return paths

def synth_gen(n_users, n_items, seed, out_dir=None, **kwargs) -> SynthCorpus:
    corpus = generate(SynthParams(n_users=n_users, n_items=n_items, seed=seed, **kwargs))
    if out_dir is not None:
        write_corpus(corpus, out_dir)
    return corpus
