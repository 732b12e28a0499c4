# Copyright © 2024 age-lens contributors
# SPDX-License-Identifier: MIT

import argparse
import inspect
import json
import sys
from typing import Any, Dict, List

from . import __version__, core
from .core import AgeMention

# Pipelines
# =========

def read_reviews(_, reviews, ctx):
    from .corpus import ReviewReader
    reader = ReviewReader(reviews)
    records = list(reader)
    ctx["records"], ctx["skipped"] = records, reader.skipped
    return records

def read_mentions(_, mentions):
    from .json import load_records
    return list(load_records(AgeMention, mentions))

def read_ratings(_, ratings):
    from .corpus import load_ratings, load_reviews, ratings_of_reviews
    if ratings.endswith((".csv", ".csv.gz", ".csv.xz")):
        return load_ratings(ratings)
    return ratings_of_reviews(load_reviews(ratings))

def read_report(_, report):
    from .evaluate import report_of_json
    from .json import load_json
    return report_of_json(load_json(report))

def extract_mentions(records, lexicon, poss_window, max_years, threads):
    from .extract import extract_corpus, load_lexicon
    return extract_corpus(records, load_lexicon(lexicon), poss_window, max_years, threads)

def compute_stats(mentions, records, skipped):
    from .corpus import corpus_stats
    return corpus_stats(records, mentions, skipped)

def tokenize_reviews(records):
    from .extract import tokenize
    return [sentence for r in records for sentence in tokenize(r.text)]

def discover_units(sentences, seed_lexicon, discovery, window, min_count,
                   max_distance, threshold):
    from .extract import discover_unit_variants, load_lexicon
    return discover_unit_variants(sentences, load_lexicon(seed_lexicon), window, discovery,
                                  min_count, max_distance, threshold)

def lexicon_json(lexicon):
    return lexicon.to_json()

def profile_items(mentions, strategy, all_strategies, min_reviews,
                  p_low, p_high, fence_k, fallback, threads):
    from .items import Strategy, profile_all_strategies, profile_items as profile, strategy_of
    kwargs = dict(p_low=p_low, p_high=p_high, fence_k=fence_k, threads=threads,
                  fallback=strategy_of(fallback))
    if all_strategies:
        per_strategy = profile_all_strategies(mentions, min_reviews, **kwargs)
        return {s.value: [ps[k] for k in sorted(ps)] for s, ps in per_strategy.items()}
    profiles = profile(mentions, Strategy(strategy), min_reviews, **kwargs)
    return [profiles[k] for k in sorted(profiles)]

def build_models(mentions, k, user_tukey, threads):
    from .users import build_user_models
    models = build_user_models(mentions, k, user_tukey, threads)
    return [models[key] for key in sorted(models, key=lambda key: (key[0], key[1].value))]

def predict_age(_, user_models, user, date, prefer):
    from .users import load_models, select_model, target_age
    model = select_model(load_models(user_models), user, prefer)
    if model is None:
        raise core.DataError(user, "no age model for this user")
    return "{:.4f}\n".format(target_age(model, date))

def dump_regression(mentions, user, variant):
    from .users import Variant, format_regression_csv, regression_dump
    return format_regression_csv(regression_dump(mentions, user, Variant(variant)))

def train_engine(ratings, engine, neighborhood, factors, reg, sweeps, seed, threads):
    from .recommend import RatingMatrix, make_engine
    params: Dict[str, Any] = {}
    if engine == "ub-cf":
        params = dict(k=neighborhood)
    elif engine == "mf-als":
        params = dict(factors=factors, reg=reg, sweeps=sweeps, seed=seed, threads=threads)
    return make_engine(engine, RatingMatrix(ratings), **params)

def generate_list(engine, user, date, n, post_filter, oversample,
                  item_profiles, user_models, prefer):
    from .items import load_profiles
    from .recommend import json_of_list, recommend_for
    from .users import load_models, select_model
    profiles = load_profiles(item_profiles) if item_profiles else {}
    model = select_model(load_models(user_models), user, prefer) if user_models else None
    recs = recommend_for(engine, user, date, n, oversample, model, profiles,
                         age_filter=post_filter == "on")
    return json_of_list(recs)

def run_evaluation(_, config, threads):
    from .evaluate import run_experiment
    return run_experiment(config, threads)

def write_report(report, output, drift_csv):
    from .evaluate import format_drift_csv, report_json
    write_output(report_json(report), output)
    if drift_csv:
        write_output(format_drift_csv(report.drift), drift_csv)

def drift_csv_text(report):
    from .evaluate import format_drift_csv
    return format_drift_csv(report.drift)

def generate_corpus(_, users, items, seed, noise, typo_rate, outlier_rate):
    from .synth import SynthParams, generate
    return generate(SynthParams(n_users=users, n_items=items, seed=seed, noise=noise,
                                typo_rate=typo_rate, outlier_rate=outlier_rate))

def write_corpus(corpus, output):
    from .synth import write_corpus as write
    write(corpus, output)

def attach_samples(report, reviews, mentions, samples):
    if not (reviews and mentions and samples):
        return report, None
    from .corpus import load_reviews
    by_review: Dict[str, List[AgeMention]] = {}
    for m in read_mentions(None, mentions):
        by_review.setdefault(m.review_id, []).append(m)
    picked = []
    for review in load_reviews(reviews):
        if review.review_id in by_review:
            picked.append((review, by_review[review.review_id]))
            if len(picked) >= samples:
                break
    return report, picked

def render_html(report_and_samples):
    from .html import render_report
    report, samples = report_and_samples
    return render_report(report, samples)

def encode_json(obj):
    from .json import RecordSerializer, dumps
    return dumps(RecordSerializer.encode(obj))

def encode_jsonl(records):
    from .json import RecordSerializer
    return "".join(json.dumps(RecordSerializer.encode(r), ensure_ascii=False) + "\n"
                   for r in records)

def write_output(contents, output):
    if output == "-":
        sys.stdout.write(contents)
    else:
        from .json import open_text
        with open_text(output, "wt") as f:
            f.write(contents)

PIPELINES = {
    'stats':
    (read_reviews, extract_mentions, compute_stats, encode_json, write_output),
    'extract':
    (read_reviews, extract_mentions, encode_jsonl, write_output),
    'discover-units':
    (read_reviews, tokenize_reviews, discover_units, lexicon_json, encode_json,
     write_output),
    'profile-items':
    (read_mentions, profile_items, encode_json, write_output),
    'profile-users':
    (read_mentions, build_models, encode_json, write_output),
    'predict-age':
    (predict_age, write_output),
    'regression-dump':
    (read_mentions, dump_regression, write_output),
    'recommend':
    (read_ratings, train_engine, generate_list, encode_json, write_output),
    'evaluate':
    (run_evaluation, write_report),
    'drift-report':
    (read_report, drift_csv_text, write_output),
    'synth-gen':
    (generate_corpus, write_corpus),
    'report-html':
    (read_report, attach_samples, render_html, write_output),
}

# CLI
# ===

INPUT_ARGS = ("reviews", "mentions", "ratings", "user_models", "item_profiles",
              "report", "config")
UNSTAMPED_ARGS = ("threads", "force", "log_level", "debug", "traceback")

class ArgumentParser(argparse.ArgumentParser):
    """Argument parser that exits with the configuration-error status."""
    def error(self, message):
        self.print_usage(sys.stderr)
        print("{}: error: {}".format(self.prog, message), file=sys.stderr)
        print(core.ConfigError("arguments", message).as_json(), file=sys.stderr)
        sys.exit(core.ConfigError.EXIT_CODE)

def post_process_arguments(parser, args):
    if args.threads < 1:
        parser.error("argument --threads: expecting a positive count")

    if getattr(args, "date", None) is not None:
        args.date = core.parse_day(args.date)

    if args.command == "recommend":
        if args.post_filter == "on" and not args.item_profiles:
            parser.error("argument --post-filter: 'on' requires --item-profiles")
        if args.seed is None:
            args.seed = 42
    if args.command == "synth-gen":
        if args.users < 1 or args.items < 1:
            parser.error("arguments --users/--items: expecting positive counts")
        if args.seed is None:
            args.seed = 0
    if args.command == "evaluate":
        from .evaluate import load_config
        config = load_config(args.config)
        if args.seed is not None:
            config = config._replace(seed=args.seed)
        args.config_values = config

    return args

def _add_common(sub):
    common = sub.add_argument_group("Global options")

    THREADS_HELP = "Run per-user and per-review work on N threads (results do not depend on N)."
    common.add_argument("--threads", type=int, default=1, metavar="N", help=THREADS_HELP)

    SEED_HELP = "Seed for randomized stages (ALS initialization, synthetic corpora)."
    common.add_argument("--seed", type=int, default=None, help=SEED_HELP)

    FORCE_HELP = "Recompute outputs even when their stamp matches the inputs."
    common.add_argument("--force", action="store_true", default=False, help=FORCE_HELP)

    LOG_LEVEL_HELP = "Minimum level of diagnostics printed on stderr."
    common.add_argument("--log-level", default="warning", choices=list(core.LEVELS),
                        help=LOG_LEVEL_HELP)

    DEBUG_HELP = "Print internal traces."
    common.add_argument("--debug", action="store_true", default=False, help=DEBUG_HELP)

    TRACEBACK_HELP = "Print error traces."
    common.add_argument("--traceback", action="store_true", default=False,
                        help=TRACEBACK_HELP)

def _add_output(sub, default=None, required=False, help="Output file ('-' for stdout)."):
    sub.add_argument("--out", dest="output", default=default, required=required, help=help)

def _add_extraction(sub):
    from .extract import MAX_YEARS, POSS_WINDOW
    ext = sub.add_argument_group("Extraction")

    LEXICON_HELP = "Unit lexicon: 'builtin', 'seed', or a lexicon JSON file."
    ext.add_argument("--lexicon", default="builtin", help=LEXICON_HELP)

    POSS_WINDOW_HELP = "Attach 'my'/'our' at most N tokens before a number."
    ext.add_argument("--poss-window", type=int, default=POSS_WINDOW, metavar="N",
                     help=POSS_WINDOW_HELP)

    MAX_YEARS_HELP = "Drop mentions above this many years."
    ext.add_argument("--max-years", type=float, default=MAX_YEARS, help=MAX_YEARS_HELP)

def _add_engine(sub):
    from .recommend import ENGINES
    eng = sub.add_argument_group("Engine")

    ENGINE_HELP = "Collaborative-filtering engine."
    eng.add_argument("--engine", required=True, choices=sorted(ENGINES), help=ENGINE_HELP)

    NEIGHBORHOOD_HELP = "Neighborhood size of the user-based engine."
    eng.add_argument("--neighborhood", type=int, default=50, help=NEIGHBORHOOD_HELP)

    FACTORS_HELP = "Rank of the ALS factorization."
    eng.add_argument("--factors", type=int, default=20, help=FACTORS_HELP)

    REG_HELP = "ALS regularization weight."
    eng.add_argument("--reg", type=float, default=0.05, help=REG_HELP)

    SWEEPS_HELP = "ALS sweeps."
    eng.add_argument("--sweeps", type=int, default=15, help=SWEEPS_HELP)

def build_parser():
    from .extract import CONTEXT, EDIT
    from .items import FENCE_K, MIN_REVIEWS, NO_FALLBACK, P_HIGH, P_LOW, Strategy
    from .users import MIN_TERMS, PREFERENCES, Variant

    parser = ArgumentParser(
        prog="age-lens",
        description="""\
Estimate the target age of products and the age of the children users shop \
for from review text, and use both to post-filter recommendations.""",
        fromfile_prefix_chars='@')

    VERSION_HELP = "Print version and exit."
    parser.add_argument("--version", action="version",
                        version="age-lens v{}".format(__version__),
                        help=VERSION_HELP)

    subs = parser.add_subparsers(dest="command", metavar="COMMAND")
    subs.required = True
    strategies = [s.value for s in Strategy]

    def command(name, help):
        sub = subs.add_parser(name, help=help, description=help,
                              fromfile_prefix_chars='@')
        _add_common(sub)
        return sub

    REVIEWS_HELP = "Amazon-style JSON-lines review dump (.gz/.xz accepted)."
    MENTIONS_HELP = "Mention file written by 'extract'."

    sub = command("stats", "Print corpus statistics.")
    sub.add_argument("--input", "--reviews", dest="reviews", required=True, help=REVIEWS_HELP)
    _add_extraction(sub)
    _add_output(sub, default="-")

    sub = command("extract", "Extract age mentions from reviews.")
    sub.add_argument("--input", "--reviews", dest="reviews", required=True, help=REVIEWS_HELP)
    _add_extraction(sub)
    _add_output(sub, required=True)

    sub = command("discover-units", "Find misspelt or shorthand unit variants.")
    sub.add_argument("--input", "--reviews", dest="reviews", required=True, help=REVIEWS_HELP)
    disc = sub.add_argument_group("Discovery")
    SEED_LEXICON_HELP = "Lexicon to extend: 'builtin', 'seed', or a lexicon JSON file."
    disc.add_argument("--seed-lexicon", default="seed", help=SEED_LEXICON_HELP)
    DISCOVERY_HELP = "Admit candidates by edit distance or by skip-gram context."
    disc.add_argument("--strategy", dest="discovery", default=EDIT, choices=(EDIT, CONTEXT),
                      help=DISCOVERY_HELP)
    WINDOW_HELP = "Context window of the skip-gram strategy."
    disc.add_argument("--window", type=int, default=3, help=WINDOW_HELP)
    MIN_COUNT_HELP = "Minimum number of occurrences after a number."
    disc.add_argument("--min-count", type=int, default=5, help=MIN_COUNT_HELP)
    MAX_DISTANCE_HELP = "Maximum edit distance to a canonical unit form."
    disc.add_argument("--max-distance", type=int, default=2, help=MAX_DISTANCE_HELP)
    THRESHOLD_HELP = "Minimum cosine similarity to a unit's context vector."
    disc.add_argument("--threshold", type=float, default=0.5, help=THRESHOLD_HELP)
    _add_output(sub, default="-")

    sub = command("profile-items", "Estimate item target age ranges.")
    sub.add_argument("--mentions", required=True, help=MENTIONS_HELP)
    prof = sub.add_argument_group("Profiling")
    STRATEGY_HELP = "Which mentions to trust."
    prof.add_argument("--strategy", default=Strategy.RATING_POSSESSIVE.value, choices=strategies,
                      help=STRATEGY_HELP)
    ALL_STRATEGIES_HELP = "Profile with every strategy; output maps strategy to profiles."
    prof.add_argument("--all-strategies", action="store_true", default=False,
                      help=ALL_STRATEGIES_HELP)
    FALLBACK_HELP = "Strategy for items whose selected subset is empty ('none' skips them)."
    prof.add_argument("--fallback", default=Strategy.ALL.value, choices=strategies + [NO_FALLBACK],
                      help=FALLBACK_HELP)
    MIN_REVIEWS_HELP = "Skip items with fewer mention-bearing reviews."
    prof.add_argument("--min-reviews", type=int, default=MIN_REVIEWS, help=MIN_REVIEWS_HELP)
    prof.add_argument("--p-low", type=float, default=P_LOW, help="Lower fence percentile.")
    prof.add_argument("--p-high", type=float, default=P_HIGH, help="Upper fence percentile.")
    prof.add_argument("--fence-k", type=float, default=FENCE_K, help="Fence multiplier.")
    _add_output(sub, required=True)

    sub = command("profile-users", "Fit per-user target age models.")
    sub.add_argument("--mentions", required=True, help=MENTIONS_HELP)
    K_HELP = "Minimum number of mentions per user stream."
    sub.add_argument("--k", type=int, default=MIN_TERMS, help=K_HELP)
    USER_TUKEY_HELP = "Remove outliers from each user stream before fitting."
    sub.add_argument("--user-tukey", action="store_true", default=False, help=USER_TUKEY_HELP)
    _add_output(sub, required=True)

    PREFER_HELP = "Which user model variant to use ('auto' prefers possessive)."
    sub = command("predict-age", "Print a user's predicted target age in years.")
    sub.add_argument("--models", dest="user_models", required=True,
                     help="User models written by 'profile-users'.")
    sub.add_argument("--user", required=True, help="User id.")
    sub.add_argument("--date", required=True, help="Date (YYYY-MM-DD).")
    sub.add_argument("--prefer", default="auto", choices=PREFERENCES, help=PREFER_HELP)
    _add_output(sub, default="-")

    sub = command("regression-dump", "Write one user's normalized (Δt, Δage) points as CSV.")
    sub.add_argument("--mentions", required=True, help=MENTIONS_HELP)
    sub.add_argument("--user", required=True, help="User id.")
    sub.add_argument("--variant", default=Variant.POSSESSIVE.value,
                     choices=[v.value for v in Variant], help="Mention stream.")
    _add_output(sub, default="-")

    sub = command("recommend", "Recommend items to one user.")
    sub.add_argument("--ratings", required=True,
                     help="Ratings CSV (user_id,item_id,rating,timestamp) or review dump.")
    _add_engine(sub)
    rec = sub.add_argument_group("Recommendation")
    rec.add_argument("--user", required=True, help="User id.")
    rec.add_argument("--date", required=True, help="Recommendation date (YYYY-MM-DD).")
    rec.add_argument("--n", type=int, default=10, help="List length.")
    POST_FILTER_HELP = "Remove items whose age range excludes the user's predicted age."
    rec.add_argument("--post-filter", default="off", choices=("on", "off"),
                     help=POST_FILTER_HELP)
    OVERSAMPLE_HELP = "Filter N * M candidates before truncating to N."
    rec.add_argument("--oversample", type=int, default=5, metavar="M", help=OVERSAMPLE_HELP)
    rec.add_argument("--item-profiles", default=None,
                     help="Item profiles written by 'profile-items'.")
    rec.add_argument("--user-models", default=None,
                     help="User models written by 'profile-users'.")
    rec.add_argument("--prefer", default="auto", choices=PREFERENCES, help=PREFER_HELP)
    _add_output(sub, default="-")

    sub = command("evaluate", "Run the temporal evaluation described by a config file.")
    sub.add_argument("--config", required=True, help="TOML or JSON experiment config.")
    _add_output(sub, required=True, help="Report JSON file.")
    sub.add_argument("--drift-csv", default=None, help="Also write the drift series as CSV.")

    sub = command("drift-report", "Write the drift series of a report as CSV.")
    sub.add_argument("--report", required=True, help="Report written by 'evaluate'.")
    _add_output(sub, default="-")

    sub = command("synth-gen", "Generate a synthetic corpus with ground truth.")
    syn = sub.add_argument_group("Corpus")
    syn.add_argument("--users", type=int, default=200, help="Number of users.")
    syn.add_argument("--items", type=int, default=60, help="Number of items.")
    syn.add_argument("--noise", type=float, default=0.0,
                     help="Standard deviation (years) of written ages.")
    syn.add_argument("--typo-rate", type=float, default=0.0,
                     help="Fraction of mentions with a misspelt unit.")
    syn.add_argument("--outlier-rate", type=float, default=0.0,
                     help="Fraction of mentions replaced by an implausible age.")
    _add_output(sub, default="synth", help="Output directory.")

    sub = command("report-html", "Render a report as a standalone HTML page.")
    sub.add_argument("--report", required=True, help="Report written by 'evaluate'.")
    sub.add_argument("--reviews", default=None, help="Review dump to sample mentions from.")
    sub.add_argument("--mentions", default=None, help=MENTIONS_HELP)
    sub.add_argument("--samples", type=int, default=10,
                     help="Number of reviews with highlighted mentions.")
    _add_output(sub, required=True)

    return parser

def parse_arguments(argv=None):
    parser = build_parser()
    return post_process_arguments(parser, parser.parse_args(argv))

# Entry point
# ===========

def call_pipeline_step(step, state, ctx):
    params = list(inspect.signature(step).parameters.keys())[1:]
    return step(state, **{p: ctx[p] for p in params})

def build_context(args):
    ctx = dict(vars(args))
    if "config_values" in ctx:
        ctx["config"] = ctx.pop("config_values")
    ctx["ctx"] = ctx
    return ctx

def stage_inputs(args) -> List[str]:
    inputs = [getattr(args, name) for name in INPUT_ARGS
              if isinstance(getattr(args, name, None), str)]
    config = getattr(args, "config_values", None)
    if config is not None:
        from .evaluate import PATH_FIELDS
        inputs += [getattr(config, f) for f in PATH_FIELDS if getattr(config, f)]
    return inputs

def stage_params(args) -> Dict[str, Any]:
    return {k: v for k, v in vars(args).items() if k not in UNSTAMPED_ARGS}

def except_hook(etype, value, tb):
    from traceback import TracebackException
    for line in TracebackException(etype, value, tb, capture_locals=True).format():
        print(line, file=sys.stderr)

def configure(args):
    core.DEBUG = args.debug
    core.OBSERVER = core.StderrObserver(core.LEVELS[args.log_level])
    if args.traceback:
        core.TRACEBACK = True
        sys.excepthook = except_hook

def process_pipeline(args):
    from .json import Cache
    configure(args)
    output = args.output
    cache = Cache(args.command, output, stage_params(args), stage_inputs(args))
    if not args.force and cache.fresh():
        core.notify("{} is up to date; use --force to rebuild".format(output))
        return 0
    state, ctx = None, build_context(args)
    for step in PIPELINES[args.command]:
        core.debug(step.__name__, ">> ")
        state = call_pipeline_step(step, state, ctx)
    cache.stamp()
    return 0

def _report_error(e):
    MSG = "Exiting early due to an error; use --traceback to diagnose:"
    print(MSG, file=sys.stderr)
    print(core.indent(str(e), "  "), file=sys.stderr)
    if not isinstance(e, core.AgeLensError):
        e = core.DataError(getattr(e, "filename", None) or type(e).__name__,
                           getattr(e, "strerror", None) or str(e))
    print(e.as_json(), file=sys.stderr)
    return e.EXIT_CODE

def run(argv=None) -> int:
    """Run one subcommand and return its exit status."""
    core.TRACEBACK = False
    try:
        args = parse_arguments(argv)
        return process_pipeline(args)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else (0 if e.code is None else 1)
    except (core.AgeLensError, OSError, UnicodeDecodeError) as e:
        if core.TRACEBACK:
            raise e
        return _report_error(e)

def main():
    sys.exit(run())
