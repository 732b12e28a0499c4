r"""
This file tests errors raised on paths that are not easily reachable from
the command line.

To run::

  $ python errors.py | sed 's/\(tests\) in [0-9.]\+s$/\1/g' > errors.py.out
      # Errors and warnings; produces ‘errors.py.out’
"""

import contextlib
import io
import sys
import tempfile
import unittest
from pathlib import Path

@contextlib.contextmanager
def redirected_std():
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        yield (out, err)

class core(unittest.TestCase):
    def test_errors(self):
        from agelens.core import AgeLensError, ConfigError, DegenerateFit, LeakageError, parse_day
        with self.assertRaisesRegex(ConfigError, "YYYY-MM-DD"):
            parse_day("2013-13-01")
        self.assertTrue(issubclass(AgeLensError, ValueError))
        self.assertEqual((ConfigError.EXIT_CODE, LeakageError.EXIT_CODE), (1, 2))
        self.assertRegex(str(DegenerateFit(1, 1)), "1 point")

    def test_as_json(self):
        import json
        from agelens.core import EmptyCorpusError
        js = json.loads(EmptyCorpusError("r.jsonl", 3).as_json())
        self.assertEqual(js, {"error": "EmptyCorpusError", "exit_code": 2,
                              "message": "r.jsonl: no parseable records (3 malformed lines skipped)"})

    def test_observers(self):
        from agelens.core import LEVELS, CollectingObserver, StderrObserver
        obs = StderrObserver(LEVELS["warning"])
        with redirected_std() as (_, err):
            obs.notify(None, "hidden", level=LEVELS["info"])
            obs.notify(None, "shown", "f.jsonl:3", level=LEVELS["error"])
        self.assertEqual(err.getvalue(), "f.jsonl:3: (ERROR/3) shown\n")
        self.assertEqual(obs.max_level, LEVELS["error"])
        col = CollectingObserver()
        col.notify(None, "kept", level=LEVELS["debug"])
        self.assertEqual([n.message for n in col.notifications], ["kept"])

class json(unittest.TestCase):
    def test_errors(self):
        from agelens.core import DataError, Rating
        from agelens.json import RecordSerializer
        with self.assertRaisesRegex(DataError, "unexpected field 'stars'"):
            RecordSerializer.decode(Rating, {"user_id": "u", "stars": 5})
        with self.assertRaisesRegex(DataError, "Rating"):
            RecordSerializer.decode(Rating, {"user_id": "u"})

    def test_caches(self):
        from agelens.json import Cache, DummyCache, StageCache
        self.assertIsInstance(Cache("stats", "-", {}, []), DummyCache)
        self.assertIsInstance(Cache("stats", None, {}, []), DummyCache)
        self.assertFalse(Cache("stats", "-", {}, []).fresh())
        with tempfile.TemporaryDirectory() as d:
            src = Path(d) / "in.txt"
            src.write_text("a", encoding="utf-8")
            out = Path(d) / "out.txt"
            cache = Cache("extract", out, {"x": 1}, [src])
            self.assertIsInstance(cache, StageCache)
            self.assertFalse(cache.fresh())
            out.write_text("b", encoding="utf-8")
            cache.stamp()
            self.assertTrue(Cache("extract", out, {"x": 1}, [src]).fresh())
            self.assertFalse(Cache("extract", out, {"x": 2}, [src]).fresh())
            src.write_text("c", encoding="utf-8")
            self.assertFalse(Cache("extract", out, {"x": 1}, [src]).fresh())

    def test_load_json(self):
        from agelens.core import DataError
        from agelens.json import load_json
        with tempfile.TemporaryDirectory() as d:
            fpath = Path(d) / "models.json"
            fpath.write_text("{not json\n", encoding="utf-8")
            with self.assertRaisesRegex(DataError, "not a JSON document"):
                load_json(fpath)
            fpath.write_bytes(b'["caf\xe9"]\n')
            with self.assertRaisesRegex(DataError, "not a JSON document"):
                load_json(fpath)
            fpath.write_text("// comment\n[1]\n", encoding="utf-8")
            self.assertEqual(load_json(fpath), [1])

    def test_compression(self):
        from agelens.json import open_text
        with tempfile.TemporaryDirectory() as d:
            for ext in (".gz", ".xz", ".txt"):
                fpath = Path(d) / "sub" / ("f" + ext)
                with open_text(fpath, "wt") as f:
                    f.write("ünïcode\n")
                with open_text(fpath) as f:
                    self.assertEqual(f.read(), "ünïcode\n")
            self.assertEqual((Path(d) / "sub" / "f.gz").read_bytes()[:2], b"\x1f\x8b")

class corpus(unittest.TestCase):
    def test_reader(self):
        from agelens.core import CollectingObserver, EmptyCorpusError
        from agelens.corpus import ReviewReader
        good = ('{"reviewerID": "u", "asin": "i", "overall": 5.0, '
                '"unixReviewTime": 86400, "reviewText": "ok", "reviewID": "r1"}\n')
        with tempfile.TemporaryDirectory() as d:
            fpath = Path(d) / "reviews.jsonl"
            fpath.write_text(good + "\n{oops\n" + good, encoding="utf-8")
            obs = CollectingObserver()
            reader = ReviewReader(str(fpath), obs)
            self.assertEqual([r.review_id for r in reader], ["r1"])
            self.assertEqual(reader.skipped, 2)
            self.assertRegex(obs.notifications[-1].message, "Skipped 2")

            fpath.write_text("\n{oops\n", encoding="utf-8")
            with self.assertRaises(EmptyCorpusError):
                list(ReviewReader(str(fpath), CollectingObserver()))

    def test_invalid_utf8(self):
        import gzip
        from agelens.core import CollectingObserver
        from agelens.corpus import ReviewReader
        good = ('{{"reviewerID": "u", "asin": "i", "overall": 4.0, '
                '"unixReviewTime": 86400, "reviewText": "ok", "reviewID": "r{}"}}\n')
        with tempfile.TemporaryDirectory() as d:
            fpath = Path(d) / "reviews.jsonl.gz"
            with gzip.open(fpath, "wb") as f:
                f.write(good.format(1).encode("utf-8") + b"caf\xe9 \xff\n"
                        + good.format(2).encode("utf-8"))
            reader = ReviewReader(str(fpath), CollectingObserver())
            self.assertEqual([r.review_id for r in reader], ["r1", "r2"])
            self.assertEqual(reader.skipped, 1)

    def test_line_ids(self):
        from agelens.core import CollectingObserver
        from agelens.corpus import ReviewReader
        line = ('{"reviewerID": "u", "asin": "i", "overall": 4.0, '
                '"unixReviewTime": 86400, "reviewText": "ok"}\n')
        with tempfile.TemporaryDirectory() as d:
            fpath = Path(d) / "reviews.jsonl"
            fpath.write_text(line + "\n" + line, encoding="utf-8")
            reader = ReviewReader(str(fpath), CollectingObserver())
            self.assertEqual([r.review_id for r in reader], ["L1", "L3"])

    def test_titles(self):
        from agelens.core import DataError
        from agelens.corpus import dump_titles, load_titles
        titles = {"B1": 'The "Jumbo" jumper', "B2": "Soother\\night"}
        with tempfile.TemporaryDirectory() as d:
            fpath = Path(d) / "titles.jsonl"
            dump_titles(titles, fpath)
            self.assertEqual(load_titles(fpath), titles)
            fpath.write_text('{"asin": "B1", "title": "The "Jumbo" jumper"}\n', encoding="utf-8")
            with self.assertRaisesRegex(DataError, "titles.jsonl:1"):
                load_titles(fpath)

    def test_ratings(self):
        from agelens.core import DataError, EmptyCorpusError
        from agelens.corpus import load_ratings
        with tempfile.TemporaryDirectory() as d:
            fpath = Path(d) / "ratings.csv"
            fpath.write_text("user_id,item_id,rating,timestamp\nu,i,4,86400\n", encoding="utf-8")
            self.assertEqual([tuple(r) for r in load_ratings(str(fpath))], [("u", "i", 4, 1)])
            for bad in ("u,i,7,0\n", "u,i,four,0\n", "u,i,4\n"):
                fpath.write_text(bad, encoding="utf-8")
                with self.assertRaisesRegex(DataError, "malformed rating row"):
                    load_ratings(str(fpath))
            fpath.write_text("user_id,item_id,rating,timestamp\n", encoding="utf-8")
            with self.assertRaises(EmptyCorpusError):
                load_ratings(str(fpath))

    def test_filters(self):
        from agelens.core import ConfigError
        from agelens.corpus import filter_min_mentions, mention_counts
        with self.assertRaisesRegex(ValueError, "Unknown entity kind"):
            mention_counts([], "shop")
        with self.assertRaises(ConfigError):
            filter_min_mentions(None, [], 0, "item")

class extract(unittest.TestCase):
    def test_errors(self):
        from agelens.core import ConfigError, PhraseError
        from agelens.extract import Unit, UnitLexicon, discover_unit_variants, parse_value
        with self.assertRaisesRegex(ConfigError, "both"):
            UnitLexicon.seed().extended({Unit.WEEK: ["months"]})
        with self.assertRaises(ConfigError):
            UnitLexicon.of_json({"fortnight": ["fortnights"]})
        with self.assertRaises(PhraseError):
            parse_value(["1", "1/0"])
        with self.assertRaises(PhraseError):
            parse_value(["many"])
        with self.assertRaises(ConfigError):
            discover_unit_variants([], UnitLexicon.seed(), window=0)
        with self.assertRaises(ConfigError):
            discover_unit_variants([["6", "mnths"]] * 5, UnitLexicon.seed(), strategy="guess")

class modeling(unittest.TestCase):
    def test_errors(self):
        from agelens.core import ConfigError, DataError, Rating
        from agelens.recommend import RatingMatrix
        from agelens.users import build_user_models
        with self.assertRaises(ConfigError):
            build_user_models([], k=0)
        with self.assertRaisesRegex(DataError, "rating out of range"):
            RatingMatrix([Rating("u", "i", 6, 0)])

if __name__ == '__main__':
    sys.stderr = sys.stdout
    unittest.main(verbosity=2)
