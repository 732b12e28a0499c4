# Copyright © 2024 age-lens contributors
# SPDX-License-Identifier: MIT

"""Standalone HTML rendering of evaluation reports."""

from typing import Iterable, List, Optional, Sequence, Tuple

from dominate import document, tags
from dominate.util import text as txt

from . import GENERATOR, __version__
from .core import AgeMention, ReviewRecord
from .evaluate import METRICS, EvalReport

CSS = """
body { font-family: sans-serif; max-width: 60em; margin: auto; }
table { border-collapse: collapse; margin: 1em 0; }
td, th { border: 1px solid #ccc; padding: .2em .6em; text-align: right; }
td.label, th.label { text-align: left; }
tr.filtered td { background: #f3f8ff; }
mark.age-mention { background: #ffe9a8; }
mark.age-mention.possessive { background: #c9f0c4; }
.footnote { font-size: small; color: #555; }
"""

def gen_banner():
    return "Generated by {} {}.".format(GENERATOR, __version__)

def _fmt(x, digits=4):
    return "{:.{}f}".format(x, digits)

def gen_metrics_table(report: EvalReport):
    with tags.table(cls="age-lens-metrics"):
        with tags.tr():
            tags.th("Strategy", cls="label")
            for name in METRICS:
                tags.th("{}@{}".format(name.upper() if name in ("ndcg", "map") else
                                       name[0].upper(), report.n))
            tags.th("Users")
        for row in report.rows:
            with tags.tr(cls="filtered" if row.post_filter else "base"):
                tags.td(row.strategy, cls="label")
                for name in METRICS:
                    tags.td(_fmt(getattr(row, name)))
                tags.td(str(row.n_users))

def gen_examples_table(report: EvalReport):
    with tags.table(cls="age-lens-examples"):
        with tags.tr():
            for header in ("Strategy", "User", "Item", "Estimated range", "Predicted user age"):
                tags.th(header, cls="label")
        for ex in report.filtered_examples:
            with tags.tr():
                tags.td(ex.strategy, cls="label")
                tags.td(ex.user_id, cls="label")
                tags.td(ex.title or ex.item_id, cls="label")
                tags.td("{:g} months - {:g} months".format(ex.low_months, ex.high_months))
                tags.td("{:g} months".format(ex.predicted_age_months))

def gen_drift_tables(report: EvalReport):
    with tags.table(cls="age-lens-drift-summary"):
        with tags.tr():
            tags.th("Source", cls="label")
            tags.th("Mean drift (years)")
        for source, delta in report.drift_summary.items():
            with tags.tr():
                tags.td(source, cls="label")
                tags.td(_fmt(delta))
    with tags.details():
        tags.summary("Drift per month")
        with tags.table(cls="age-lens-drift"):
            with tags.tr():
                for header in ("Month", "Source", "Δ years", "Users"):
                    tags.th(header, cls="label")
            for p in report.drift:
                with tags.tr():
                    tags.td(p.bucket, cls="label")
                    tags.td(p.source, cls="label")
                    tags.td(_fmt(p.delta_years))
                    tags.td(str(p.n_users))

def mention_spans(review: ReviewRecord, mentions: Sequence[AgeMention]) \
        -> List[Tuple[int, int, AgeMention]]:
    """Character spans of `mentions` in `review`'s text, from number to unit.

    >>> from .core import ReviewRecord as R, AgeMention as M
    >>> r = R("r", "u", "i", 5, 0, "My son is 3-years old.", "")
    >>> [(b, e) for b, e, _ in mention_spans(r, [M("r", "u", "i", 0, 5, 3.0, "years", True, 10)])]
    [(10, 17)]
    """
    lower = review.text.lower()
    spans = []
    for m in sorted(mentions, key=lambda m: m.position):
        end = lower.find(m.unit_raw, m.position)
        if end >= 0:
            spans.append((m.position, end + len(m.unit_raw), m))
    return spans

def gen_review(review: ReviewRecord, mentions: Sequence[AgeMention]):
    with tags.blockquote(cls="age-lens-review"):
        tags.small("{} · {} · {}★".format(review.review_id, review.item_id, review.rating))
        tags.br()
        pos = 0
        for beg, end, m in mention_spans(review, mentions):
            if beg < pos:
                continue
            txt(review.text[pos:beg])
            cls = "age-mention possessive" if m.possessive else "age-mention"
            tags.mark(review.text[beg:end], cls=cls,
                      title="{:.3f} years".format(m.value_years))
            pos = end
        txt(review.text[pos:])

def render_report(report: EvalReport,
                  samples: Optional[Iterable[Tuple[ReviewRecord, Sequence[AgeMention]]]] = None,
                  title="age-lens evaluation report") -> str:
    doc = document(title=title)
    with doc.head:
        tags.meta(charset="utf-8")
        tags.style(CSS)
    with doc.body:
        tags.h1(title)
        tags.p(gen_banner(), cls="footnote")
        tags.h2("Ranking metrics")
        gen_metrics_table(report)
        for note in report.footnotes:
            tags.p(note, cls="footnote")
        tags.h2("Items removed by the age filter")
        if report.filtered_examples:
            gen_examples_table(report)
        else:
            tags.p("No candidate was removed.")
        tags.h2("Age drift")
        gen_drift_tables(report)
        if samples:
            tags.h2("Sample age mentions")
            for review, mentions in samples:
                gen_review(review, mentions)
    return doc.render()
