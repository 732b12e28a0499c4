# Copyright © 2024 age-lens contributors
# SPDX-License-Identifier: MIT

"""Mine normalized age mentions out of review text.

The pipeline is rule-based: `tokenize` splits text into sentences of
offset-carrying tokens, `extract_age_phrases` matches number/unit patterns
(with a nearby possessive pronoun), and `normalize_phrase` converts each
phrase to an `AgeMention` whose value is expressed in years.
"""

from typing import Dict, FrozenSet, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import re
from collections import Counter
from enum import Enum
from fractions import Fraction

import numpy as np
from rapidfuzz.distance import Levenshtein
from scipy import sparse

from . import core
from .core import AgeMention, ReviewRecord

# Units
# =====

class Unit(Enum):
    YEAR = "year"
    MONTH = "month"
    WEEK = "week"

YEARS_PER_UNIT = {
    Unit.YEAR: Fraction(1),
    Unit.MONTH: Fraction(1, 12),
    Unit.WEEK: Fraction(1, 52),
}

CANONICAL_FORMS = {
    Unit.YEAR: ("year", "years"),
    Unit.MONTH: ("month", "months"),
    Unit.WEEK: ("week", "weeks"),
}

SHORTHAND_FORMS = {
    Unit.YEAR: ("yr", "yrs"),
    Unit.MONTH: ("mo", "mos", "mnt", "mnts", "mth", "mths"),
    Unit.WEEK: ("wk", "wks"),
}

class UnitLexicon:
    """Map surface variants (``"yrs"``, ``"mnts"``, …) to canonical units.

    >>> lex = UnitLexicon.builtin()
    >>> lex.unit_of("Yrs"), lex.unit_of("pounds")
    (<Unit.YEAR: 'year'>, None)
    >>> lex.years_per_unit(Unit.WEEK)
    Fraction(1, 52)
    """

    def __init__(self, variants: Dict[Unit, Iterable[str]]):
        self.variants: Dict[Unit, FrozenSet[str]] = {
            unit: frozenset(v.lower() for v in variants.get(unit, ())) for unit in Unit}
        self._index: Dict[str, Unit] = {}
        for unit, forms in self.variants.items():
            for form in forms:
                other = self._index.setdefault(form, unit)
                if other is not unit:
                    MSG = "variant {!r} listed under both {} and {}"
                    raise core.ConfigError("lexicon", MSG.format(form, other.value, unit.value))

    @classmethod
    def seed(cls):
        return cls(CANONICAL_FORMS)

    @classmethod
    def builtin(cls):
        return cls({u: CANONICAL_FORMS[u] + SHORTHAND_FORMS[u] for u in Unit})

    @staticmethod
    def years_per_unit(unit: Unit) -> Fraction:
        return YEARS_PER_UNIT[unit]

    def unit_of(self, token: str) -> Optional[Unit]:
        return self._index.get(token.lower())

    def __contains__(self, token):
        return token.lower() in self._index

    def __eq__(self, other):
        return isinstance(other, UnitLexicon) and self.variants == other.variants

    def __repr__(self):
        return "UnitLexicon({})".format(
            {u.value: sorted(v) for u, v in self.variants.items()})

    def extended(self, additions: Dict[Unit, Iterable[str]]) -> "UnitLexicon":
        return UnitLexicon({u: self.variants[u] | frozenset(additions.get(u, ())) for u in Unit})

    def to_json(self):
        return {u.value: sorted(self.variants[u]) for u in Unit}

    @classmethod
    def of_json(cls, js):
        try:
            return cls({Unit(k): v for k, v in js.items()})
        except ValueError as e:
            raise core.ConfigError("lexicon", "unknown unit in {}".format(sorted(js))) from e

def load_lexicon(source) -> UnitLexicon:
    """Resolve ``builtin``, ``seed``, or a JSON file path into a lexicon."""
    if source in (None, "builtin"):
        return UnitLexicon.builtin()
    if source == "seed":
        return UnitLexicon.seed()
    from .json import load_json
    return UnitLexicon.of_json(load_json(source))

# Tokenization
# ============

SENTENCE_BREAK = re.compile(r"(?<=[.!?])\s+|\n\s*")
TOKEN_RE = re.compile(r"""
   (?P<num>\d+/\d+|\d+(?:\.\d+)?)
 | (?P<word>[^\W\d_]+(?:['’][^\W\d_]+)*)
 | (?P<clause>[,;:()\[\]])
""", re.VERBOSE)

class Token(str):
    """A token that remembers its character offset and clause number."""
    def __new__(cls, s, *_args):
        return super().__new__(cls, s)

    def __init__(self, _s, offset, clause):
        super().__init__()
        self.offset, self.clause = offset, clause

def _sentence_spans(text):
    beg = 0
    for m in SENTENCE_BREAK.finditer(text):
        yield beg, m.start()
        beg = m.end()
    yield beg, len(text)

def tokenize(text: str) -> List[List[Token]]:
    """Split `text` into sentences, each a list of tokens.

    Punctuation is dropped, except that clause punctuation (commas, colons,
    semicolons, parentheses) advances the ``clause`` counter of later tokens.
    Digits and letters never share a token, so ``3-years`` and ``3years`` both
    yield ``3`` and ``years``.

    >>> tokenize("My son is 3-years old. He loves it.")
    [['My', 'son', 'is', '3', 'years', 'old'], ['He', 'loves', 'it']]
    >>> tokenize("my 3years old")
    [['my', '3', 'years', 'old']]
    >>> tokenize("")
    []
    """
    sentences = []
    for beg, end in _sentence_spans(text):
        tokens, clause = [], 0
        for m in TOKEN_RE.finditer(text, beg, end):
            if m.lastgroup == "clause":
                clause += 1
            else:
                tokens.append(Token(m.group(), m.start(), clause))
        if tokens:
            sentences.append(tokens)
    return sentences

# Phrases
# =======

NUMBER_WORDS = {
    "one": 1, "two": 2, "three": 3, "four": 4, "five": 5, "six": 6,
    "seven": 7, "eight": 8, "nine": 9, "ten": 10, "eleven": 11, "twelve": 12,
}
HALF = "half"
AND_A_HALF = ["and", "a", HALF]
COORDINATORS = frozenset(("and", "or", "to"))
POSSESSIVES = frozenset(("my", "our"))
NUMERIC_RE = re.compile(r"(?:\d+/\d+|\d+(?:\.\d+)?)\Z")
INTEGER_RE = re.compile(r"\d+\Z")
FRACTION_RE = re.compile(r"\d+/\d+\Z")

POSS_WINDOW = 4
UNIT_WINDOW = 2
MAX_YEARS = 18.0

class AgePhrase(NamedTuple):
    value_tokens: Tuple[str, ...]
    unit: str
    pronoun: Optional[str]
    start: int
    offset: int = 0

def is_number(word):
    return bool(NUMERIC_RE.match(word)) or word in NUMBER_WORDS

def _numeric_span(lower, i):
    """Return the end of the numeric expression starting at `i`, if any."""
    if lower[i] == HALF:
        return i + 1
    if not is_number(lower[i]):
        return None
    if lower[i + 1:i + 4] == AND_A_HALF:
        return i + 4
    if INTEGER_RE.match(lower[i]) and i + 1 < len(lower) and FRACTION_RE.match(lower[i + 1]):
        return i + 2 # "1 1/2"
    return i + 1

def _find_unit(lower, tokens, i, lexicon, depth=0):
    """Find the unit index for the number at `i`, and the end of its span."""
    end = _numeric_span(lower, i)
    if end is None:
        return None, None
    for j in range(end, min(end + UNIT_WINDOW, len(lower))):
        if tokens[j].clause != tokens[i].clause:
            break
        if lower[j] in lexicon:
            return j, end
        if _numeric_span(lower, j) is not None:
            break
    # Coordinated numbers share the unit of the last one: "12 and 10 years", "3-4 months"
    nxt = end + 1 if end < len(lower) and lower[end] in COORDINATORS else end
    if depth < 4 and nxt < len(lower) and nxt != i and _numeric_span(lower, nxt) is not None \
       and tokens[nxt].clause == tokens[i].clause:
        unit_idx, _ = _find_unit(lower, tokens, nxt, lexicon, depth + 1)
        return unit_idx, end
    return None, end

def extract_age_phrases(tokens: Sequence[str], lexicon: UnitLexicon,
                        poss_window=POSS_WINDOW) -> List[AgePhrase]:
    """Find (number, unit) phrases in one sentence.

    >>> lex = UnitLexicon.builtin()
    >>> extract_age_phrases(["my", "3", "years", "old"], lex)
    [AgePhrase(value_tokens=('3',), unit='years', pronoun='my', start=1, offset=0)]
    >>> extract_age_phrases(["weighs", "10", "pounds"], lex)
    []
    >>> [p.value_tokens for p in
    ...  extract_age_phrases("our daughter is 2 and a half year".split(), lex)]
    [('2', 'and', 'a', 'half')]
    """
    if tokens and not isinstance(tokens[0], Token):
        tokens = [Token(t, 0, 0) for t in tokens]
    lower = [t.lower() for t in tokens]

    spans: List[Tuple[int, int, int]] = []
    i = 0
    while i < len(lower):
        unit_idx, end = _find_unit(lower, tokens, i, lexicon)
        if end is None:
            i += 1
            continue
        if unit_idx is not None:
            spans.append((i, end, unit_idx))
        i = end

    pronouns = [p for p, w in enumerate(lower) if w in POSSESSIVES]
    candidates = sorted((start - p, start, p)
                        for (start, _, _) in spans for p in pronouns
                        if 0 < start - p <= poss_window
                        and tokens[p].clause == tokens[start].clause)
    attached: Dict[int, int] = {}
    used = set()
    for _, start, p in candidates:
        if start not in attached and p not in used:
            attached[start] = p
            used.add(p)

    phrases = []
    for start, end, unit_idx in spans:
        p = attached.get(start)
        phrases.append(AgePhrase(
            value_tokens=tuple(str(t) for t in tokens[start:end]),
            unit=str(tokens[unit_idx]),
            pronoun=lower[p] if p is not None else None,
            start=start, offset=tokens[start].offset))
    return phrases

def parse_value(value_tokens: Sequence[str]) -> Fraction:
    """Parse a numeric expression into an exact rational.

    >>> parse_value(["three"]), parse_value(["2", "and", "a", "half"])
    (Fraction(3, 1), Fraction(5, 2))
    >>> parse_value(["1.5"]), parse_value(["1", "1/2"])
    (Fraction(3, 2), Fraction(3, 2))
    """
    words = [w.lower() for w in value_tokens]
    extra = Fraction(0)
    if words[-3:] == AND_A_HALF and len(words) > 3:
        extra, words = Fraction(1, 2), words[:-3]
    elif len(words) == 2 and FRACTION_RE.match(words[1]):
        extra, words = _fraction(words[1], value_tokens), words[:1]
    if words == [HALF]:
        return Fraction(1, 2)
    if len(words) != 1:
        raise core.PhraseError(" ".join(value_tokens))
    word = words[0]
    if word in NUMBER_WORDS:
        return NUMBER_WORDS[word] + extra
    if NUMERIC_RE.match(word):
        return _fraction(word, value_tokens) + extra
    raise core.PhraseError(" ".join(value_tokens))

def _fraction(word, value_tokens):
    try:
        return Fraction(word)
    except ZeroDivisionError as e:
        raise core.PhraseError(" ".join(value_tokens)) from e

def normalize_phrase(phrase: AgePhrase, lexicon: UnitLexicon,
                     review: ReviewRecord) -> AgeMention:
    """Convert `phrase` into an `AgeMention` (value in years).

    >>> from .core import ReviewRecord as R
    >>> r = R("r", "u", "i", 5, 0, "", "")
    >>> normalize_phrase(AgePhrase(("18",), "months", "my", 0), UnitLexicon.builtin(), r)
    AgeMention(review_id='r', user_id='u', item_id='i', day=0, rating=5, value_years=1.5, unit_raw='months', possessive=True, position=0)
    """
    unit = lexicon.unit_of(phrase.unit)
    if unit is None:
        raise core.PhraseError(phrase.unit)
    value = parse_value(phrase.value_tokens)
    return AgeMention(review_id=review.review_id, user_id=review.user_id,
                      item_id=review.item_id, day=review.day, rating=review.rating,
                      value_years=float(value * lexicon.years_per_unit(unit)),
                      unit_raw=phrase.unit.lower(),
                      possessive=phrase.pronoun in POSSESSIVES,
                      position=phrase.offset)

# Corpus extraction
# =================

class ExtractionCounts(NamedTuple):
    phrases: int = 0
    unparseable: int = 0
    implausible: int = 0

    def __add__(self, other):
        return ExtractionCounts(*(a + b for a, b in zip(self, other)))

class Extractor:
    def __init__(self, lexicon: UnitLexicon, poss_window=POSS_WINDOW, max_years=MAX_YEARS):
        self.lexicon = lexicon
        self.poss_window = poss_window
        self.max_years = max_years

    def extract_review(self, review: ReviewRecord) -> Tuple[List[AgeMention], ExtractionCounts]:
        mentions, phrases, unparseable, implausible = [], 0, 0, 0
        for sentence in tokenize(review.text):
            for phrase in extract_age_phrases(sentence, self.lexicon, self.poss_window):
                phrases += 1
                try:
                    mention = normalize_phrase(phrase, self.lexicon, review)
                except core.PhraseError:
                    unparseable += 1
                    continue
                if not 0 < mention.value_years <= self.max_years:
                    implausible += 1
                    continue
                mentions.append(mention)
        return mentions, ExtractionCounts(phrases, unparseable, implausible)

    def extract_corpus(self, reviews: Iterable[ReviewRecord], threads=1):
        results = core.parallel_map(self.extract_review, reviews, threads)
        counts = sum((c for _, c in results), ExtractionCounts())
        mentions = sorted((m for ms, _ in results for m in ms), key=core.mention_order)
        return mentions, counts

def extract_corpus(reviews: Iterable[ReviewRecord], lexicon: UnitLexicon,
                   poss_window=POSS_WINDOW, max_years=MAX_YEARS, threads=1) -> List[AgeMention]:
    """Extract every age mention of `reviews`, ordered by review id then position."""
    mentions, counts = Extractor(lexicon, poss_window, max_years).extract_corpus(reviews, threads)
    MSG = "{} phrase(s): {} unparseable, {} implausible, {} mention(s) kept"
    core.notify(MSG.format(counts.phrases, counts.unparseable, counts.implausible, len(mentions)))
    return mentions

# Unit-variant discovery
# ======================

STOPLIST = frozenset("""
ears tears bears wears gears hears pears years year yeah yes yet yard yards yarn
dear near bear gear hear pear rear tear wear fear deer beer beers peers veers
mouth mouths moths mother north worth mount most monty morn
week meek seek peek weak weed weeds went west wee wet were web when weds
""".split())

def unit_distances(word: str) -> Dict[Unit, int]:
    """Levenshtein distance from `word` to the closest canonical form of each unit.

    >>> d = unit_distances("mnths"); d[Unit.MONTH], d[Unit.YEAR]
    (1, 4)
    >>> unit_distances("yrs")[Unit.YEAR]
    2
    """
    return {u: min(Levenshtein.distance(word, f) for f in CANONICAL_FORMS[u]) for u in Unit}

def _candidate_counts(sentences, lexicon):
    counts: Counter = Counter()
    for tokens in sentences:
        lower = [t.lower() for t in tokens]
        for j in range(1, len(lower)):
            w = lower[j]
            if is_number(lower[j - 1]) and w.isalpha() and len(w) >= 2 \
               and w not in lexicon and w not in NUMBER_WORDS and w not in STOPLIST:
                counts[w] += 1
    return counts

def _nearest_unit(scores: Dict[Unit, float], better) -> Optional[Unit]:
    ranked = sorted(scores.items(), key=lambda kv: kv[1], reverse=better == max)
    if not ranked:
        return None
    if len(ranked) > 1 and ranked[0][1] == ranked[1][1]:
        return None
    return ranked[0][0]

def _admit_by_edit_distance(counts, max_distance):
    admitted: Dict[Unit, List[str]] = {}
    for w in sorted(counts):
        distances = unit_distances(w)
        unit = _nearest_unit(distances, min)
        if unit is not None and distances[unit] <= max_distance:
            admitted.setdefault(unit, []).append(w)
    return admitted

NUM_CONTEXT = "<num>"

def cooccurrence_vectors(sentences, window):
    """Build PPMI-weighted skip-gram co-occurrence vectors (rows: words)."""
    vocab: Dict[str, int] = {}
    rows, cols = [], []
    for tokens in sentences:
        words = [NUM_CONTEXT if is_number(t.lower()) else t.lower() for t in tokens]
        ids = [vocab.setdefault(w, len(vocab)) for w in words]
        for j, wid in enumerate(ids):
            for k in range(max(0, j - window), min(len(ids), j + window + 1)):
                if k != j:
                    rows.append(wid)
                    cols.append(ids[k])
    n = len(vocab)
    data = np.ones(len(rows))
    counts = sparse.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()
    if counts.nnz == 0:
        return vocab, counts
    total = counts.sum()
    row_sums = np.asarray(counts.sum(axis=1)).ravel()
    col_sums = np.asarray(counts.sum(axis=0)).ravel()
    coo = counts.tocoo()
    pmi = np.log(coo.data * total / (row_sums[coo.row] * col_sums[coo.col]))
    keep = pmi > 0
    ppmi = sparse.csr_matrix((pmi[keep], (coo.row[keep], coo.col[keep])), shape=(n, n))
    return vocab, ppmi

def _cosine(a, b):
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(a @ b / (na * nb))

def _admit_by_context(sentences, counts, lexicon, window, threshold):
    vocab, vectors = cooccurrence_vectors(sentences, window)
    unit_vectors = {}
    for unit in Unit:
        ids = [vocab[f] for f in sorted(lexicon.variants[unit]) if f in vocab]
        if ids:
            unit_vectors[unit] = np.asarray(vectors[ids].sum(axis=0)).ravel()
    admitted: Dict[Unit, List[str]] = {}
    for w in sorted(counts):
        if w not in vocab:
            continue
        row = vectors[vocab[w]].toarray().ravel()
        sims = {u: round(_cosine(row, v), 12) for u, v in unit_vectors.items()}
        unit = _nearest_unit(sims, max)
        if unit is not None and sims[unit] > threshold:
            admitted.setdefault(unit, []).append(w)
    return admitted

EDIT, CONTEXT = "edit", "context"

def discover_unit_variants(sentences: Iterable[Sequence[str]], seeds: UnitLexicon,
                           window=3, strategy=EDIT, min_count=5,
                           max_distance=2, threshold=0.5) -> UnitLexicon:
    """Extend `seeds` with misspelt or shorthand unit variants found in `sentences`.

    Candidates are non-lexicon words that follow a number at least
    `min_count` times.  The ``edit`` strategy admits candidates within
    `max_distance` edits of a canonical unit form; the ``context`` strategy
    admits candidates whose skip-gram context vector (window `window`) is more
    than `threshold` cosine-similar to a unit's.  Each variant goes to its
    nearest unit; ties are rejected.

    >>> sentences = [["my", "son", "is", "6", "mnths"]] * 20
    >>> discover_unit_variants(sentences, UnitLexicon.seed()).unit_of("mnths")
    <Unit.MONTH: 'month'>
    """
    if window < 1:
        raise core.ConfigError("window", "expecting a positive window, not {}".format(window))
    sentences = [list(s) for s in sentences]
    counts = _candidate_counts(sentences, seeds)
    counts = Counter({w: c for w, c in counts.items() if c >= min_count})
    if not counts:
        return seeds
    if strategy == EDIT:
        admitted = _admit_by_edit_distance(counts, max_distance)
    elif strategy == CONTEXT:
        admitted = _admit_by_context(sentences, counts, seeds, window, threshold)
    else:
        raise core.ConfigError("strategy", "unknown discovery strategy {!r}".format(strategy))
    for unit, words in sorted(admitted.items(), key=lambda kv: kv[0].value):
        core.notify("Admitted {} variant(s): {}".format(unit.value, ", ".join(words)))
    return seeds.extended(admitted)
