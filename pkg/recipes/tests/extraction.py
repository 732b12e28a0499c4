r"""
Age-mention extraction and unit-variant discovery.

The golden suite runs the extractor over ``fixtures/reviews.jsonl`` (50
hand-labeled reviews) and compares the output with
``fixtures/reviews.mentions.jsonl`` (63 hand-labeled mentions).

To run::

  $ python extraction.py
"""

import sys
import time
import unittest
from fractions import Fraction
from pathlib import Path

FIXTURES = Path(__file__).parent / "fixtures"

def _extract(text, **kwargs):
    from agelens.core import ReviewRecord
    from agelens.extract import UnitLexicon, extract_corpus
    review = ReviewRecord("r", "u", "i", 5, 0, text, "")
    return extract_corpus([review], UnitLexicon.builtin(), **kwargs)

def _triples(text):
    return [(Fraction(m.value_years).limit_denominator(1000), m.unit_raw, m.possessive)
            for m in _extract(text)]

class golden(unittest.TestCase):
    def test_fixture(self):
        from agelens.core import AgeMention
        from agelens.corpus import load_reviews
        from agelens.extract import UnitLexicon, extract_corpus
        from agelens.json import load_records

        expected = list(load_records(AgeMention, FIXTURES / "reviews.mentions.jsonl"))
        start = time.perf_counter()
        reviews = list(load_reviews(FIXTURES / "reviews.jsonl"))
        actual = extract_corpus(reviews, UnitLexicon.builtin())
        elapsed = time.perf_counter() - start

        self.assertEqual(len(reviews), 50)
        self.assertEqual(len(expected), 63)
        self.assertEqual(actual, expected)
        self.assertLess(elapsed, 1.0)

    def test_threads(self):
        from agelens.corpus import load_reviews
        from agelens.extract import UnitLexicon, extract_corpus
        reviews = list(load_reviews(FIXTURES / "reviews.jsonl"))
        lex = UnitLexicon.builtin()
        self.assertEqual(extract_corpus(reviews, lex, threads=4), extract_corpus(reviews, lex))

class phrases(unittest.TestCase):
    def test_literal_examples(self):
        self.assertEqual(_triples("She is three years old."), [(3, "years", False)])
        self.assertEqual(_triples("Our girl is 2 and a half year old."),
                         [(Fraction(5, 2), "year", True)])
        self.assertEqual(_triples("Fine for 18 mnts."), [(Fraction(3, 2), "mnts", False)])
        self.assertEqual(_triples("Fine for 4 yrs."), [(4, "yrs", False)])
        self.assertEqual(_triples("For my 3-years old."), [(3, "years", True)])
        self.assertEqual(_triples("For my 3years old."), [(3, "years", True)])

    def test_value_forms(self):
        self.assertEqual(_triples("Great at 1.5 years."), [(Fraction(3, 2), "years", False)])
        self.assertEqual(_triples("Great at 1 1/2 years."), [(Fraction(3, 2), "years", False)])
        self.assertEqual(_triples("Great at half a year."), [(Fraction(1, 2), "year", False)])
        self.assertEqual(_triples("Great at 6 wks."), [(Fraction(3, 26), "wks", False)])

    def test_coordinated_numbers(self):
        text = "I used it for my girls, now 12 and 10-years-old.."
        self.assertEqual(_triples(text), [(12, "years", False), (10, "years", False)])
        self.assertEqual(_triples("Rated 3-4 months."),
                         [(Fraction(1, 4), "months", False), (Fraction(1, 3), "months", False)])
        self.assertEqual(_triples("Ages 3 to 5 years."), [(3, "years", False), (5, "years", False)])

    def test_possessive_window(self):
        self.assertEqual(_triples("My daughter just turned 2 years."), [(2, "years", True)])
        self.assertEqual(_triples("My daughter has just turned 2 years."), [(2, "years", False)])
        mentions = _extract("My daughter has just turned 2 years.", poss_window=5)
        self.assertTrue(mentions[0].possessive)

    def test_possessive_clauses(self):
        self.assertEqual(_triples("My son (3 years) loves it."), [(3, "years", False)])
        self.assertEqual(_triples("My son was born in May, at 6 weeks he used it."),
                         [(Fraction(3, 26), "weeks", False)])

    def test_one_pronoun_per_phrase(self):
        self.assertEqual(_triples("For my 3 and 5 year old."),
                         [(3, "year", True), (5, "year", False)])

    def test_rejections(self):
        self.assertEqual(_extract("It weighs 10 pounds."), [])
        self.assertEqual(_extract("Battery died after a month."), [])
        self.assertEqual(_extract("My husband is 35 years old."), [])
        self.assertEqual(_extract("The box says 0 months."), [])
        self.assertEqual(_extract(""), [])
        self.assertEqual(len(_extract("My husband is 35 years old.", max_years=40.0)), 1)

    def test_positions(self):
        text = "Great. My son is 14 months old."
        [m] = _extract(text)
        self.assertEqual(text[m.position:m.position + 2], "14")

    def test_exact_values(self):
        for value, unit, years in [("7", "months", Fraction(7, 12)),
                                   ("10", "weeks", Fraction(10, 52)),
                                   ("2.5", "yrs", Fraction(5, 2))]:
            [m] = _extract("At {} {}.".format(value, unit))
            self.assertLessEqual(abs(m.value_years - float(years)), 1e-12 * float(years))

class lexicons(unittest.TestCase):
    def test_builtin_and_seed(self):
        from agelens.extract import Unit, UnitLexicon, load_lexicon
        self.assertEqual(load_lexicon("builtin"), UnitLexicon.builtin())
        self.assertEqual(load_lexicon(None), UnitLexicon.builtin())
        seed = load_lexicon("seed")
        self.assertIsNone(seed.unit_of("yrs"))
        self.assertEqual(seed.unit_of("Weeks"), Unit.WEEK)

    def test_json_file(self):
        import tempfile
        from agelens.extract import Unit, UnitLexicon, load_lexicon
        from agelens.json import dump_json
        lex = UnitLexicon.seed().extended({Unit.MONTH: ["mnths"]})
        with tempfile.TemporaryDirectory() as d:
            fpath = str(Path(d) / "lexicon.json")
            dump_json(lex.to_json(), fpath)
            self.assertEqual(load_lexicon(fpath), lex)

    def test_seed_lexicon_extraction(self):
        from agelens.core import ReviewRecord
        from agelens.extract import UnitLexicon, extract_corpus
        review = ReviewRecord("r", "u", "i", 5, 0, "Fine for 18 mnts and 2 months.", "")
        mentions = extract_corpus([review], UnitLexicon.seed())
        self.assertEqual([m.unit_raw for m in mentions], ["months"])

class discovery(unittest.TestCase):
    SENTENCES = ([["my", "son", "is", "6", "mnths", "old"]] * 20
                 + [["my", "son", "is", "6", "months", "old"]] * 20
                 + [["she", "is", "2", "yers", "old"]] * 3
                 + [["it", "weighs", "10", "pounds", "now"]] * 20)

    def test_edit_distance(self):
        from agelens.extract import EDIT, Unit, UnitLexicon, discover_unit_variants
        lex = discover_unit_variants(self.SENTENCES, UnitLexicon.seed(), strategy=EDIT)
        self.assertEqual(lex.unit_of("mnths"), Unit.MONTH)
        self.assertIsNone(lex.unit_of("pounds"))
        self.assertIsNone(lex.unit_of("yers")) # below min_count
        lex = discover_unit_variants(self.SENTENCES, UnitLexicon.seed(), min_count=3)
        self.assertEqual(lex.unit_of("yers"), Unit.YEAR)

    def test_context(self):
        from agelens.extract import CONTEXT, Unit, UnitLexicon, discover_unit_variants
        lex = discover_unit_variants(self.SENTENCES, UnitLexicon.seed(), strategy=CONTEXT)
        self.assertEqual(lex.unit_of("mnths"), Unit.MONTH)

    def test_nothing_to_admit(self):
        from agelens.extract import UnitLexicon, discover_unit_variants
        seed = UnitLexicon.seed()
        self.assertEqual(discover_unit_variants([["a", "b"]], seed), seed)

    def test_cooccurrence_vectors(self):
        from agelens.extract import NUM_CONTEXT, cooccurrence_vectors
        vocab, ppmi = cooccurrence_vectors([["6", "mnths"], ["7", "mnths"]], window=1)
        self.assertEqual(sorted(vocab), sorted([NUM_CONTEXT, "mnths"]))
        self.assertEqual(ppmi.shape, (2, 2))

if __name__ == '__main__':
    sys.stderr = sys.stdout
    unittest.main(verbosity=2)
