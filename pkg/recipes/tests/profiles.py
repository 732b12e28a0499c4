r"""
Item target age ranges and per-user target age models.

To run::

  $ python profiles.py
"""

import math
import sys
import unittest
from fractions import Fraction

from hypothesis import given, settings, strategies as st

def _mention(n, item="i", value=0.5, rating=5, possessive=True, user=None, day=0):
    from agelens.core import AgeMention
    return AgeMention("r{:04d}".format(n), user or "u{}".format(n), item, day, rating,
                      value, "months", possessive, 0)

def _lerp(a, b, t):
    diff = b - a
    return b - diff * (1 - t) if t >= 0.5 else a + diff * t

def brute_percentile(values, p):
    s = sorted(values)
    h = (len(s) - 1) * p
    lo = math.floor(h)
    hi = min(lo + 1, len(s) - 1)
    return _lerp(s[lo], s[hi], h - lo)

def brute_tukey(values, p_low=0.05, p_high=0.95, k=1.5):
    low, high = brute_percentile(values, p_low), brute_percentile(values, p_high)
    spread = high - low
    return [v for v in values if low - k * spread <= v <= high + k * spread]

AGES = st.one_of(st.floats(min_value=0.01, max_value=18.0),
                 st.sampled_from([0.25, 0.5, 0.75, 1.0, 12.0]))

MENTION_ROWS = st.lists(st.tuples(st.integers(0, 4), st.integers(0, 5), AGES,
                                  st.integers(1, 5), st.booleans(), st.integers(0, 2000)),
                        max_size=80)

def _mentions_of_rows(rows):
    return [_mention(n, "i{}".format(item), value, rating, possessive, "u{}".format(user), day)
            for n, (item, user, value, rating, possessive, day) in enumerate(rows)]

def _is_submultiset(small, large):
    from collections import Counter
    return not Counter(small) - Counter(large)

class tukey(unittest.TestCase):
    @settings(max_examples=1000, deadline=None)
    @given(st.lists(AGES, min_size=4, max_size=200))
    def test_oracle(self, values):
        from agelens.items import tukey_filter
        self.assertEqual(tukey_filter(values), brute_tukey(values))

    def test_examples(self):
        from agelens.items import tukey_filter
        self.assertNotIn(12.0, tukey_filter([0.1] * 18 + [0.2, 12.0]))
        self.assertEqual(tukey_filter([]), [])
        self.assertEqual(tukey_filter([3.0] * 5), [3.0] * 5)

    def test_quoted_review(self):
        from agelens.items import Strategy, profile_item
        values = [(k % 12 + 1) / 12 for k in range(39)] + [12.0, 10.0]
        mentions = [_mention(n, value=v) for n, v in enumerate(values)]
        profile = profile_item("i", mentions, Strategy.ALL)
        self.assertEqual((profile.low_years, profile.high_years), (1 / 12, 1.0))
        self.assertEqual((profile.n_used, profile.n_removed), (39, 2))

class items(unittest.TestCase):
    def test_jumperoo(self):
        from agelens.items import Strategy, profile_items
        mentions = [_mention(n, "B1", months / 12) for n, months in enumerate(range(4, 10))]
        [profile] = profile_items(mentions, Strategy.ALL).values()
        self.assertEqual(profile.item_id, "B1")
        self.assertEqual((profile.low_years, profile.high_years), (4 / 12, 9 / 12))
        self.assertTrue(profile.contains(0.5))
        self.assertFalse(profile.contains(14 / 12))
        self.assertAlmostEqual(profile.midpoint, 6.5 / 12)

    def test_min_reviews(self):
        from agelens.items import Strategy, profile_items
        few = [_mention(n, "few") for n in range(3)]
        # Several mentions in one review count once
        same = [_mention(0, "same")._replace(review_id="s", position=p) for p in range(5)]
        many = [_mention(n, "many") for n in range(10, 14)]
        profiles = profile_items(few + same + many, Strategy.ALL, min_reviews=4)
        self.assertEqual(sorted(profiles), ["many"])
        profiles = profile_items(few + same + many, Strategy.ALL, min_reviews=1)
        self.assertEqual(sorted(profiles), ["few", "many", "same"])

    def test_strategies(self):
        from agelens.items import Strategy, profile_all_strategies, select_mentions
        mentions = [_mention(0, value=0.25, rating=5, possessive=True),
                    _mention(1, value=0.5, rating=2, possessive=True),
                    _mention(2, value=0.75, rating=5, possessive=False),
                    _mention(3, value=1.0, rating=3, possessive=False)]
        self.assertEqual(select_mentions(mentions, Strategy.ALL), [0.25, 0.5, 0.75, 1.0])
        self.assertEqual(select_mentions(mentions, Strategy.RATING), [0.25, 0.75])
        self.assertEqual(select_mentions(mentions, Strategy.POSSESSIVE), [0.25, 0.5])
        self.assertEqual(select_mentions(mentions, Strategy.RATING_POSSESSIVE), [0.25])

        per_strategy = profile_all_strategies(mentions, min_reviews=4)
        ranges = {s: (p["i"].low_years, p["i"].high_years) for s, p in per_strategy.items()}
        self.assertEqual(ranges, {Strategy.ALL: (0.25, 1.0),
                                  Strategy.RATING: (0.25, 0.75),
                                  Strategy.POSSESSIVE: (0.25, 0.5),
                                  Strategy.RATING_POSSESSIVE: (0.25, 0.25)})

    def test_fallback(self):
        from agelens.items import Strategy, profile_items
        mentions = [_mention(n, possessive=False) for n in range(5)]
        self.assertEqual(profile_items(mentions, Strategy.POSSESSIVE), {})
        profiles = profile_items(mentions, Strategy.POSSESSIVE, fallback=Strategy.ALL)
        self.assertEqual(profiles["i"].strategy, Strategy.ALL)

    def test_threads(self):
        from agelens.items import Strategy, profile_items
        mentions = [_mention(n, "i{}".format(n % 7), (n % 11 + 1) / 12) for n in range(200)]
        self.assertEqual(profile_items(mentions, Strategy.ALL, threads=4),
                         profile_items(mentions, Strategy.ALL))

    @settings(deadline=None)
    @given(MENTION_ROWS, st.data())
    def test_permutation(self, rows, data):
        from agelens.items import Strategy, profile_items
        mentions = _mentions_of_rows(rows)
        shuffled = data.draw(st.permutations(mentions))
        for strategy in Strategy:
            self.assertEqual(profile_items(shuffled, strategy, min_reviews=1),
                             profile_items(mentions, strategy, min_reviews=1))

    @given(MENTION_ROWS)
    def test_subset_inclusion(self, rows):
        from agelens.items import Strategy, select_mentions
        mentions = _mentions_of_rows(rows)
        subsets = {s: select_mentions(mentions, s) for s in Strategy}
        self.assertTrue(_is_submultiset(subsets[Strategy.POSSESSIVE], subsets[Strategy.ALL]))
        self.assertTrue(_is_submultiset(subsets[Strategy.RATING], subsets[Strategy.ALL]))
        both = subsets[Strategy.RATING_POSSESSIVE]
        self.assertTrue(_is_submultiset(both, subsets[Strategy.POSSESSIVE]))
        self.assertTrue(_is_submultiset(both, subsets[Strategy.RATING]))

class activity(unittest.TestCase):
    @given(MENTION_ROWS, st.data())
    def test_corpus_stats_permutation(self, rows, data):
        from agelens.core import ReviewRecord
        from agelens.corpus import corpus_stats
        mentions = _mentions_of_rows(rows)
        reviews = [ReviewRecord(m.review_id, m.user_id, m.item_id, m.rating, m.day, "", "")
                   for m in mentions]
        self.assertEqual(corpus_stats(data.draw(st.permutations(reviews)),
                                      data.draw(st.permutations(mentions))),
                         corpus_stats(reviews, mentions))

    @given(MENTION_ROWS, st.integers(1, 10), st.integers(0, 10))
    def test_filter_monotone(self, rows, k, step):
        from agelens.corpus import ITEM, USER, filter_min_mentions
        mentions = _mentions_of_rows(rows)
        for by in (ITEM, USER):
            loose = filter_min_mentions(None, mentions, k, by)
            strict = filter_min_mentions(None, mentions, k + step, by)
            self.assertLessEqual(strict, loose)

    def test_dump_load(self):
        import tempfile
        from os import path
        from agelens.items import Strategy, dump_profiles, load_profiles, profile_items
        mentions = [_mention(n, "i{}".format(n % 3), (n % 5 + 1) / 12) for n in range(30)]
        profiles = profile_items(mentions, Strategy.RATING)
        with tempfile.TemporaryDirectory() as d:
            fpath = path.join(d, "items.json.gz")
            dump_profiles(profiles, fpath)
            self.assertEqual(load_profiles(fpath), profiles)

# Users
# =====

def brute_ols(pairs):
    xs = [Fraction(x) for x, _ in pairs]
    ys = [Fraction(y) for _, y in pairs]
    n = len(pairs)
    sx, sy = sum(xs), sum(ys)
    sxx = sum(x * x for x in xs)
    sxy = sum(x * y for x, y in zip(xs, ys))
    slope = (n * sxy - sx * sy) / (n * sxx - sx * sx)
    intercept = (sy - slope * sx) / n
    return float(slope), float(intercept)

def _close(a, b, rel=1e-9):
    return abs(a - b) <= rel * max(1.0, abs(b))

DAYS = st.integers(min_value=0, max_value=2000)

@st.composite
def regression_inputs(draw):
    days = draw(st.lists(DAYS, min_size=2, max_size=30))
    if len(set(days)) < 2:
        days.append(days[0] + draw(st.integers(min_value=1, max_value=500)))
    ys = draw(st.lists(st.floats(min_value=-2.0, max_value=18.0),
                       min_size=len(days), max_size=len(days)))
    return [(d / 365.25, y) for d, y in zip(days, ys)]

class regression(unittest.TestCase):
    @settings(max_examples=1000, deadline=None)
    @given(regression_inputs())
    def test_oracle(self, pairs):
        from agelens.users import fit_linear
        fit = fit_linear(pairs)
        slope, intercept = brute_ols(pairs)
        self.assertTrue(_close(fit.slope, slope), (fit.slope, slope))
        self.assertTrue(_close(fit.intercept, intercept), (fit.intercept, intercept))

    @settings(max_examples=1000, deadline=None)
    @given(st.lists(DAYS, min_size=2, max_size=30, unique=True),
           st.floats(min_value=-3.0, max_value=3.0), st.floats(min_value=-3.0, max_value=3.0))
    def test_affine(self, days, a, b):
        from agelens.users import fit_linear
        pairs = [(d / 365.25, a + b * (d / 365.25)) for d in days]
        self.assertLess(fit_linear(pairs).residual_rms, 1e-12)

    def test_example(self):
        from agelens.users import fit_linear
        fit = fit_linear([(0, 0), (1, 1), (2, 1.9), (3, 3.1)])
        self.assertAlmostEqual(fit.slope, 1.02, places=9)
        self.assertAlmostEqual(fit.intercept, -0.03, places=9)

    def test_degenerate(self):
        from agelens.core import DegenerateFit
        from agelens.users import fit_linear
        with self.assertRaises(DegenerateFit):
            fit_linear([(0.0, 1.0)])
        with self.assertRaises(DegenerateFit):
            fit_linear([(0.5, 1.0), (0.5, 2.0), (0.5, 3.0)])

class users(unittest.TestCase):
    def _stream(self, user, days, ages, possessive=True):
        return [_mention(n, "i{}".format(n), a, user=user, day=d, possessive=possessive)
                for n, (d, a) in enumerate(zip(days, ages))]

    def test_build_models(self):
        from agelens.users import Variant, build_user_models
        growing = self._stream("grow", [0, 100, 200, 400], [0.5, 0.5 + 100 / 365.25,
                                                            0.5 + 200 / 365.25,
                                                            0.5 + 400 / 365.25])
        flat = self._stream("flat", [10, 10, 10, 10], [1.0, 1.1, 0.9, 1.0], possessive=False)
        short = self._stream("short", [0, 50, 90], [0.2, 0.3, 0.4])
        models = build_user_models(growing + flat + short, k=4)
        self.assertEqual(sorted(models), [("flat", Variant.ALL_TERMS),
                                          ("grow", Variant.POSSESSIVE)])
        grow = models[("grow", Variant.POSSESSIVE)]
        self.assertAlmostEqual(grow.slope, 1.0, places=9)
        self.assertAlmostEqual(grow.intercept, 0.0, places=9)
        self.assertEqual((grow.t0, grow.a0, grow.n_points), (0, 0.5, 4))
        self.assertFalse(grow.fallback)
        flat = models[("flat", Variant.ALL_TERMS)]
        self.assertTrue(flat.fallback)
        self.assertEqual((flat.slope, flat.intercept), (1.0, 0.0))

    def test_threads(self):
        from agelens.users import build_user_models
        mentions = [m for u in range(20)
                    for m in self._stream("u{}".format(u), [u, u + 30, u + 90, u + 200],
                                          [0.1 * u, 0.1 * u + 0.1, 0.1 * u + 0.3, 0.1 * u + 0.5])]
        self.assertEqual(build_user_models(mentions, threads=4), build_user_models(mentions))

    @settings(deadline=None)
    @given(MENTION_ROWS, st.data())
    def test_permutation(self, rows, data):
        from agelens.users import build_user_models
        mentions = _mentions_of_rows(rows)
        shuffled = data.draw(st.permutations(mentions))
        self.assertEqual(build_user_models(shuffled, k=2), build_user_models(mentions, k=2))

    def test_user_tukey(self):
        from agelens.users import build_user_models
        days = list(range(0, 200, 10))
        ages = [0.5 + d / 365.25 for d in days]
        ages[7] = 12.0
        mentions = self._stream("u", days, ages)
        [noisy] = build_user_models(mentions).values()
        [clean] = build_user_models(mentions, user_tukey=True).values()
        self.assertEqual((noisy.n_points, clean.n_points), (20, 19))
        self.assertAlmostEqual(clean.slope, 1.0, places=9)

    def test_table_example(self):
        from agelens.users import UserAgeModel, Variant, target_age
        model = UserAgeModel("u", Variant.POSSESSIVE, 100, 2 / 12, 0.25, 0.0, 4, 0.0)
        self.assertAlmostEqual(target_age(model, 100 + 1461), 14 / 12, places=12)

    def test_select_model(self):
        from agelens.core import ConfigError
        from agelens.users import UserAgeModel, Variant, select_model
        poss = UserAgeModel("u", Variant.POSSESSIVE, 0, 0.5, 1.0, 0.0, 4, 0.0)
        general = poss._replace(variant=Variant.ALL_TERMS)
        both = {("u", Variant.POSSESSIVE): poss, ("u", Variant.ALL_TERMS): general}
        only_general = {("u", Variant.ALL_TERMS): general}
        self.assertEqual(select_model(both, "u"), poss)
        self.assertEqual(select_model(only_general, "u"), general)
        self.assertEqual(select_model(both, "u", "all-terms"), general)
        self.assertIsNone(select_model(only_general, "u", "possessive"))
        self.assertIsNone(select_model(both, "v"))
        with self.assertRaises(ConfigError):
            select_model(both, "u", "newest")

    def test_regression_dump(self):
        from agelens.users import Variant, format_regression_csv, regression_dump
        mentions = self._stream("u", [0, 1461], [0.5, 4.5])
        points = regression_dump(mentions, "u", Variant.POSSESSIVE)
        self.assertEqual([(p.dt_years, p.dage_years) for p in points], [(0.0, 0.0), (4.0, 4.0)])
        self.assertEqual(format_regression_csv(points).splitlines(),
                         ["dt_years,dage_years,fitted", "0.0,0.0,0.0", "4.0,4.0,4.0"])
        self.assertEqual(regression_dump(mentions, "u", Variant.ALL_TERMS), [])

    def test_dump_load(self):
        import tempfile
        from os import path
        from agelens.users import build_user_models, dump_models, load_models
        mentions = self._stream("u", [0, 30, 60, 90], [0.1, 0.2, 0.3, 0.4])
        models = build_user_models(mentions)
        with tempfile.TemporaryDirectory() as d:
            fpath = path.join(d, "users.json")
            dump_models(models, fpath)
            self.assertEqual(load_models(fpath), models)

if __name__ == '__main__':
    sys.stderr = sys.stdout
    unittest.main(verbosity=2)
