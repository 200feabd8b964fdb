"""Command-line interface: every analysis pipeline behind one executable.

Every subcommand takes ``--out DIR``, writes its artifacts (CSV or JSON) plus
a ``manifest.json`` echoing the resolved configuration and input hashes, and
never writes outside that directory.  Runs are deterministic given the
manifest, so re-running a command reproduces byte-identical artifacts.

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numerical failure.
Errors are reported as a JSON object on stderr.  The environment variable
FORUMLENS_THREADS caps per-course parallelism (default 1).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .corpus import (
    Corpus,
    ThreadLabel,
    attach_metadata,
    ingest_corpus,
    load_stopwords,
    serialize_corpus,
    thread_tokens,
)
from .classify import (
    NbMode,
    SvmModel,
    evaluate,
    labeled_docs,
    load_model,
    predict_nb,
    roc_sweep,
    save_model,
    train_nb,
    train_svm,
)
from .errors import (
    ConfigError,
    DegenerateDesign,
    DegenerateGroup,
    DomainMismatch,
    EmptyCorpus,
    InvariantViolation,
    MissingClass,
    ParseError,
    RankDeficient,
    SampleSizeError,
)
from .genmodel import GenerativeSpec, adversarial_spec, make_spec, sample_corpus
from .ranking import (
    RankedList,
    RankWindow,
    hits_rank,
    sample_query_days,
    split_window,
    tfidf_rank,
    topical_rank,
    topk_diff,
)
from .stats import (
    PanelTarget,
    build_series,
    fit_course_trend,
    fit_panel_ols,
    neighborhood_counts,
    partition_by_threshold,
    qq_points,
    shapiro_wilk,
    smalltalk_moving_average,
    trim_and_diff,
    two_sample_tests,
)
from .topics import convergence_series, extract_keywords

_DATA_ERRORS = (
    ParseError,
    InvariantViolation,
    EmptyCorpus,
    MissingClass,
    DomainMismatch,
    DegenerateDesign,
    DegenerateGroup,
    SampleSizeError,
)


def _max_workers() -> int:
    try:
        return max(1, int(os.environ.get("FORUMLENS_THREADS", "1")))
    except ValueError:
        return 1


def _pmap(fn, items):
    workers = _max_workers()
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _fmt(value):
    if isinstance(value, float):
        return format(value, ".12g")
    return value


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(args, out_dir, input_paths):
    config = {
        k: (list(v) if isinstance(v, tuple) else v)
        for k, v in sorted(vars(args).items())
        if k != "config" and isinstance(v, (str, int, float, bool, list, tuple, type(None)))
    }
    manifest = {
        "tool": f"forumlens {__version__}",
        "config": config,
        "inputs": {str(p): _sha256(p) for p in input_paths if p},
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)


def _prepare_out(args, input_paths):
    os.makedirs(args.out, exist_ok=True)
    _write_manifest(args, args.out, input_paths)


def _load_corpus(args) -> Corpus:
    corpus = ingest_corpus(args.threads, "jsonl")
    meta = getattr(args, "meta", None)
    if meta:
        corpus = attach_metadata(corpus, meta)
    return corpus


def _load_spec(path) -> GenerativeSpec:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    kind = obj.get("kind", "explicit")
    if kind == "adversarial":
        return adversarial_spec(
            n=obj["n"],
            c=obj.get("c", 4.0),
            d=obj.get("d", 2.0),
            epsilon=obj.get("epsilon", 0.5),
            smalltalk_support_size=obj.get("smalltalk_support_size", 50),
            seed=obj.get("seed", 0),
        )
    if kind == "uniform":
        return make_spec(
            n=obj["n"],
            num_courses=obj["num_courses"],
            epsilon=obj["epsilon"],
            p=obj["p"],
            s=obj["s"],
            support_size=obj.get("support_size", 50),
            smalltalk_support_size=obj.get("smalltalk_support_size"),
            seed=obj.get("seed", 0),
            training_counts=obj.get("training_counts"),
        )
    if kind == "explicit":
        return GenerativeSpec.from_json(json.dumps(obj["spec"]))
    raise ParseError(1, f"unknown spec kind {kind!r}")


def _background_ids(args):
    raw = getattr(args, "background", None)
    if not raw:
        return None
    return [c.strip() for c in raw.split(",") if c.strip()]


def _text_options(args) -> tuple[frozenset | None, bool]:
    """(stopwords, include_staff) resolved from the shared text flags."""
    path = getattr(args, "stopwords", None)
    stopwords = load_stopwords(path) if path else None
    return stopwords, not getattr(args, "exclude_staff", False)


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------


def _cmd_gen(args) -> int:
    spec = _load_spec(args.spec)
    if args.seed is not None:
        import dataclasses

        spec = dataclasses.replace(spec, seed=args.seed)
    if args.counts:
        counts = [int(c) for c in args.counts.split(",")]
    elif spec.training_counts is not None:
        counts = list(spec.training_counts)
    else:
        raise ConfigError("no --counts given and the spec carries no training counts")
    corpus = sample_corpus(spec, counts, threads_per_day=args.threads_per_day)
    _prepare_out(args, [args.spec])
    serialize_corpus(corpus, os.path.join(args.out, args.name))
    with open(os.path.join(args.out, "spec.json"), "w", encoding="utf-8") as fh:
        fh.write(spec.to_json())
    return 0


def _cmd_ingest(args) -> int:
    corpus = _load_corpus(args)
    _prepare_out(args, [args.threads, getattr(args, "meta", None)])
    rows = [
        (c.course_id, c.num_threads, sum(t.length for t in c.threads), c.start_date, c.category.value)
        for c in corpus.courses
    ]
    _write_csv(
        os.path.join(args.out, "summary.csv"),
        ["course_id", "threads", "posts", "start_date", "category"],
        rows,
    )
    serialize_corpus(corpus, os.path.join(args.out, "normalized.jsonl"))
    return 0


def _cmd_classify_train(args) -> int:
    corpus = _load_corpus(args)
    stopwords, include_staff = _text_options(args)
    _prepare_out(args, [args.threads])
    if args.algo == "nb":
        model = train_nb(corpus, NbMode(args.mode), pseudocount=args.pseudocount,
                         stopwords=stopwords, include_staff=include_staff)
    else:
        docs = labeled_docs(corpus, stopwords=stopwords, include_staff=include_staff)
        model = train_svm(docs, lambda_=args.lam, epochs=args.epochs)
    save_model(model, os.path.join(args.out, "model.json"))
    return 0


def _cmd_classify_eval(args) -> int:
    corpus = _load_corpus(args)
    stopwords, include_staff = _text_options(args)
    model = load_model(args.model)
    _prepare_out(args, [args.threads, args.model])
    rows = []
    if isinstance(model, dict):
        for course_id, sub in sorted(model.items()):
            docs = labeled_docs(corpus, course_id, stopwords=stopwords, include_staff=include_staff)
            if not docs:
                continue
            rep = evaluate(sub, docs, theta=args.theta)
            rows.append((course_id, rep.tp, rep.fp, rep.tn, rep.fn, rep.tpr, rep.fpr))
    else:
        docs = labeled_docs(corpus, stopwords=stopwords, include_staff=include_staff)
        rep = evaluate(model, docs, theta=args.theta)
        rows.append(("all", rep.tp, rep.fp, rep.tn, rep.fn, rep.tpr, rep.fpr))
    _write_csv(
        os.path.join(args.out, "eval.csv"),
        ["scope", "tp", "fp", "tn", "fn", "tpr", "fpr"],
        rows,
    )
    return 0


def _cmd_classify_roc(args) -> int:
    corpus = _load_corpus(args)
    stopwords, include_staff = _text_options(args)
    model = load_model(args.model)
    if not isinstance(model, SvmModel):
        raise ConfigError("roc sweeps require an SVM model")
    _prepare_out(args, [args.threads, args.model])
    thetas = np.linspace(args.theta_min, args.theta_max, args.theta_steps).tolist()
    docs = labeled_docs(corpus, stopwords=stopwords, include_staff=include_staff)
    reports = roc_sweep(model, docs, thetas)
    _write_csv(
        os.path.join(args.out, "roc.csv"),
        ["theta", "tpr", "fpr", "tp", "fp", "tn", "fn"],
        [(th, r.tpr, r.fpr, r.tp, r.fp, r.tn, r.fn) for th, r in reports],
    )
    return 0


def _cmd_topics_extract(args) -> int:
    corpus = _load_corpus(args)
    stopwords, include_staff = _text_options(args)
    _prepare_out(args, [args.threads])
    ranking = extract_keywords(
        corpus, args.course, _background_ids(args), k=args.k,
        warmup_days=args.warmup_days, stopwords=stopwords, include_staff=include_staff,
    )
    rows = [(r, w, g) for r, (w, g) in enumerate(ranking.entries[: args.k], start=1)]
    _write_csv(os.path.join(args.out, "keywords.csv"), ["rank", "word", "gamma"], rows)
    return 0


def _cmd_topics_converge(args) -> int:
    corpus = _load_corpus(args)
    stopwords, include_staff = _text_options(args)
    _prepare_out(args, [args.threads])
    points = convergence_series(
        corpus, args.course, _background_ids(args), k=args.k, max_days=args.max_days,
        stopwords=stopwords, include_staff=include_staff,
    )
    _write_csv(
        os.path.join(args.out, "convergence.csv"),
        ["day", "new_words", "kendall_tau", "cumulative_tokens"],
        [(p.day, p.new_words, p.kendall_tau, p.cumulative_tokens) for p in points],
    )
    return 0


def _rank_one(corpus, course_id, algo, window, alpha, keyword_k, stopwords, include_staff):
    course = corpus.course(course_id)
    window_threads, query_threads = split_window(course.threads, course.start_date, window)
    if not query_threads:
        raise EmptyCorpus(f"no query threads in days {window.warmup_days + 1}..{window.window_days}")
    if algo == "topical":
        keywords = extract_keywords(
            corpus, course_id, None, k=keyword_k, warmup_days=window.warmup_days,
            stopwords=stopwords, include_staff=include_staff,
        )
        return topical_rank(keywords, query_threads, alpha=alpha, k=keyword_k, stopwords=stopwords)
    if algo == "tfidf":
        return tfidf_rank(window_threads, query_threads, stopwords=stopwords)
    if algo == "hits":
        ranked = hits_rank(window_threads)
        query_ids = {t.thread_id for t in query_threads}
        entries = tuple(e for e in ranked.entries if e[0] in query_ids)
        return RankedList(entries, ranked.converged)
    raise ConfigError(f"unknown ranking algorithm {algo!r}")


def _cmd_rank(args) -> int:
    corpus = _load_corpus(args)
    stopwords, include_staff = _text_options(args)
    _prepare_out(args, [args.threads])
    window = RankWindow(args.warmup, args.query)
    ranked = _rank_one(
        corpus, args.course, args.algo, window, args.alpha, args.keyword_k,
        stopwords, include_staff,
    )
    _write_csv(
        os.path.join(args.out, "ranked.csv"),
        ["rank", "thread_id", "score"],
        [(i, tid, s) for i, (tid, s) in enumerate(ranked.entries, start=1)],
    )
    return 0


def _cmd_compare(args) -> int:
    corpus = _load_corpus(args)
    stopwords, include_staff = _text_options(args)
    _prepare_out(args, [args.threads])
    course = corpus.course(args.course)
    irrelevant_ids = {t.thread_id for t in course.threads if t.label == ThreadLabel.SMALL_TALK}
    days = sample_query_days(args.low, args.high, args.extra_days, seed=args.seed or 0)

    def run_day(day):
        window = RankWindow(day, args.query)
        out = []
        try:
            ours = _rank_one(corpus, args.course, "topical", window, args.alpha,
                             args.keyword_k, stopwords, include_staff)
        except EmptyCorpus:
            return out
        for baseline_name in ("tfidf", "hits"):
            baseline = _rank_one(corpus, args.course, baseline_name, window, args.alpha,
                                 args.keyword_k, stopwords, include_staff)
            d1, d2 = topk_diff(ours, baseline, args.k)
            out.append(
                (
                    day,
                    baseline_name,
                    len(d1),
                    sum(1 for tid in d1 if tid in irrelevant_ids),
                    sum(1 for tid in d2 if tid in irrelevant_ids),
                )
            )
        return out

    rows = [row for chunk in _pmap(run_day, days) for row in chunk]
    _write_csv(
        os.path.join(args.out, "compare.csv"),
        ["warmup_day", "baseline", "diff_size", "ours_irrelevant", "baseline_irrelevant"],
        rows,
    )
    return 0


def _cmd_stats_series(args) -> int:
    corpus = _load_corpus(args)
    _prepare_out(args, [args.threads, getattr(args, "meta", None)])
    series = build_series(corpus)
    rows = []
    for course_id in sorted(series):
        s = series[course_id]
        for t in range(1, s.days + 1):
            rows.append((course_id, t, s.y[t - 1], s.z[t - 1]))
    _write_csv(os.path.join(args.out, "series.csv"), ["course_id", "day", "posts", "users"], rows)
    return 0


def _cmd_stats_trend(args) -> int:
    corpus = _load_corpus(args)
    _prepare_out(args, [args.threads, getattr(args, "meta", None)])
    series = build_series(corpus)
    rows = []
    for course_id in sorted(series):
        slope, intercept = fit_course_trend(series[course_id])
        rows.append((course_id, slope, intercept))
    _write_csv(os.path.join(args.out, "trend.csv"), ["course_id", "slope", "intercept"], rows)
    return 0


def _cmd_stats_panel(args) -> int:
    corpus = _load_corpus(args)
    if not getattr(args, "meta", None):
        raise ConfigError("panel regression requires --meta course metadata")
    _prepare_out(args, [args.threads, args.meta])
    series = build_series(corpus)
    factors = {c.course_id: c.factors for c in corpus.courses if c.factors is not None}
    series = {cid: s for cid, s in series.items() if cid in factors}
    fit = fit_panel_ols(series, factors, PanelTarget(args.target), staff_scale=args.scale_staff)
    _write_csv(
        os.path.join(args.out, "panel.csv"),
        ["term", "estimate", "std_error", "t", "p"],
        [
            (term, fit.coefficients[i], fit.standard_errors[i], fit.t_stats[i], fit.p_values[i])
            for i, term in enumerate(fit.terms)
        ],
    )
    _write_csv(
        os.path.join(args.out, "panel_summary.csv"),
        ["r_squared", "adj_r_squared", "n_obs", "dropped_rows"],
        [(fit.r_squared, fit.adj_r_squared, fit.n_obs, fit.dropped_rows)],
    )
    return 0


def _cmd_stats_shapiro(args) -> int:
    corpus = _load_corpus(args)
    _prepare_out(args, [args.threads, getattr(args, "meta", None)])
    series = build_series(corpus)

    def run_course(course_id):
        diffs = trim_and_diff(series[course_id], args.trim)
        if diffs.size < 3 or np.ptp(diffs) == 0:
            return (course_id, diffs.size, "", ""), None
        res = shapiro_wilk(diffs)
        return (course_id, diffs.size, res.statistic, res.pvalue), (course_id, qq_points(diffs))

    results = _pmap(run_course, sorted(series))
    _write_csv(
        os.path.join(args.out, "shapiro.csv"),
        ["course_id", "n", "W", "p"],
        [row for row, _ in results],
    )
    for _, qq in results:
        if qq is None:
            continue
        course_id, points = qq
        _write_csv(
            os.path.join(args.out, f"qq_{course_id}.csv"),
            ["theoretical", "sample"],
            [(p[0], p[1]) for p in points],
        )
    return 0


def _cmd_stats_ttest(args) -> int:
    corpus = _load_corpus(args)
    _prepare_out(args, [args.threads, getattr(args, "meta", None)])
    f_values = []
    lengths = []
    for course in corpus.courses:
        counts = neighborhood_counts(course, args.t_days)
        for t in course.threads:
            f_values.append(counts[t.thread_id])
            lengths.append(t.length)
    g1, g2 = partition_by_threshold(lengths, f_values, args.threshold)
    result = two_sample_tests(g1, g2)
    _write_csv(
        os.path.join(args.out, "ttest.csv"),
        [
            "t",
            "t_p_one_sided",
            "t_p_two_sided",
            "df",
            "U",
            "U_p_one_sided",
            "U_p_two_sided",
            "u_method",
            "n1",
            "n2",
            "var1",
            "var2",
        ],
        [
            (
                result.t_statistic,
                result.t_pvalue,
                result.t_pvalue_two_sided,
                result.df,
                result.u_statistic,
                result.u_pvalue,
                result.u_pvalue_two_sided,
                result.u_method,
                result.n1,
                result.n2,
                result.var1,
                result.var2,
            )
        ],
    )
    return 0


def _cmd_stats_moving_avg(args) -> int:
    corpus = _load_corpus(args)
    stopwords, include_staff = _text_options(args)
    model = load_model(args.model) if getattr(args, "model", None) else None
    _prepare_out(args, [args.threads, getattr(args, "meta", None), getattr(args, "model", None)])
    by_category: dict[str, list[tuple[int, int, int]]] = {}
    for course in corpus.courses:
        for t in course.threads:
            elapsed = t.created_at - course.start_date
            if elapsed > args.max_days * 86400:
                continue
            if model is not None:
                tokens = thread_tokens(t, stopwords, include_staff)
                if isinstance(model, SvmModel):
                    flag = 1 if model.score(tokens) > model.theta else 0
                else:
                    flag = 1 if predict_nb(model, tokens).positive else 0
            elif t.label == ThreadLabel.UNLABELED:
                continue
            else:
                flag = 1 if t.label == ThreadLabel.SMALL_TALK else 0
            by_category.setdefault(course.category.value, []).append((elapsed, flag))
    rows = []
    for category in sorted(by_category):
        ordered = sorted(by_category[category])
        flags = [flag for _, flag in ordered]
        avg = smalltalk_moving_average(flags, alpha=args.alpha_ma, denominator=args.denominator)
        for i, ((elapsed, _), s) in enumerate(zip(ordered, avg), start=1):
            rows.append((category, i, elapsed / 86400.0, s))
    _write_csv(
        os.path.join(args.out, "moving_avg.csv"),
        ["category", "seq", "elapsed_days", "s_t"],
        rows,
    )
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_corpus_args(p, meta=True):
    p.add_argument("--threads", required=True, help="thread corpus (JSON lines)")
    if meta:
        p.add_argument("--meta", default=None, help="course metadata CSV")
    p.add_argument("--out", required=True, help="output directory")


def _add_text_args(p):
    p.add_argument("--stopwords", default=None, help="stopword file (default: shipped list)")
    p.add_argument("--exclude-staff", action="store_true", help="drop staff posts from text")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="forumlens", description=__doc__)
    parser.add_argument("--config", default=None, help="JSON config file; flags override it")
    parser.add_argument("--seed", type=int, default=None, help="seed override for seeded commands")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="sample a synthetic corpus from a generative spec")
    p.add_argument("--spec", required=True)
    p.add_argument("--counts", default=None, help="comma-separated threads per course")
    p.add_argument("--threads-per-day", type=int, default=24)
    p.add_argument("--name", default="corpus.jsonl")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("ingest", help="validate a corpus and emit summaries")
    _add_corpus_args(p)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("classify", help="train/evaluate small-talk classifiers")
    csub = p.add_subparsers(dest="subcommand", required=True)
    pt = csub.add_parser("train")
    _add_corpus_args(pt, meta=False)
    _add_text_args(pt)
    pt.add_argument("--algo", choices=["nb", "svm"], default="nb")
    pt.add_argument("--mode", choices=[m.value for m in NbMode], default="aggregate")
    pt.add_argument("--pseudocount", type=float, default=1.0)
    pt.add_argument("--lambda", dest="lam", type=float, default=1e-4)
    pt.add_argument("--epochs", type=int, default=50)
    pt.set_defaults(func=_cmd_classify_train)
    pe = csub.add_parser("eval")
    _add_corpus_args(pe, meta=False)
    _add_text_args(pe)
    pe.add_argument("--model", required=True)
    pe.add_argument("--theta", type=float, default=None)
    pe.set_defaults(func=_cmd_classify_eval)
    pr = csub.add_parser("roc")
    _add_corpus_args(pr, meta=False)
    _add_text_args(pr)
    pr.add_argument("--model", required=True)
    pr.add_argument("--theta-min", type=float, default=-5.0)
    pr.add_argument("--theta-max", type=float, default=5.0)
    pr.add_argument("--theta-steps", type=int, default=21)
    pr.set_defaults(func=_cmd_classify_roc)

    p = sub.add_parser("topics", help="surprise-weight keywords and convergence")
    tsub = p.add_subparsers(dest="subcommand", required=True)
    te = tsub.add_parser("extract")
    _add_corpus_args(te, meta=False)
    _add_text_args(te)
    te.add_argument("--course", required=True)
    te.add_argument("--background", default=None, help="comma-separated background course ids")
    te.add_argument("--k", type=int, default=50)
    te.add_argument("--warmup-days", type=int, default=10)
    te.set_defaults(func=_cmd_topics_extract)
    tc = tsub.add_parser("converge")
    _add_corpus_args(tc, meta=False)
    _add_text_args(tc)
    tc.add_argument("--course", required=True)
    tc.add_argument("--background", default=None)
    tc.add_argument("--k", type=int, default=50)
    tc.add_argument("--max-days", type=int, default=None)
    tc.set_defaults(func=_cmd_topics_converge)

    p = sub.add_parser("rank", help="rank query-period threads")
    _add_corpus_args(p, meta=False)
    _add_text_args(p)
    p.add_argument("--course", required=True)
    p.add_argument("--algo", choices=["topical", "tfidf", "hits"], default="topical")
    p.add_argument("--warmup", type=int, default=12)
    p.add_argument("--query", type=int, default=2)
    p.add_argument("--k", type=int, default=15)
    p.add_argument("--alpha", type=float, default=0.96)
    p.add_argument("--keyword-k", type=int, default=50)
    p.set_defaults(func=_cmd_rank)

    p = sub.add_parser("compare", help="top-k differences against the baselines")
    _add_corpus_args(p, meta=False)
    _add_text_args(p)
    p.add_argument("--course", required=True)
    p.add_argument("--k", type=int, default=15)
    p.add_argument("--alpha", type=float, default=0.96)
    p.add_argument("--keyword-k", type=int, default=50)
    p.add_argument("--query", type=int, default=2)
    p.add_argument("--low", type=int, default=10)
    p.add_argument("--high", type=int, default=30)
    p.add_argument("--extra-days", type=int, default=5)
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("stats", help="activity statistics pipelines")
    ssub = p.add_subparsers(dest="subcommand", required=True)
    for name, func in [("series", _cmd_stats_series), ("trend", _cmd_stats_trend)]:
        ps = ssub.add_parser(name)
        _add_corpus_args(ps)
        ps.set_defaults(func=func)
    pp = ssub.add_parser("panel")
    _add_corpus_args(pp)
    pp.add_argument("--target", choices=[t.value for t in PanelTarget], default="y")
    pp.add_argument("--scale-staff", type=float, default=100.0)
    pp.set_defaults(func=_cmd_stats_panel)
    psh = ssub.add_parser("shapiro")
    _add_corpus_args(psh)
    psh.add_argument("--trim", type=float, default=0.03)
    psh.set_defaults(func=_cmd_stats_shapiro)
    ptt = ssub.add_parser("ttest")
    _add_corpus_args(ptt)
    ptt.add_argument("--t-days", type=float, default=1.0)
    ptt.add_argument("--threshold", type=float, default=140.0)
    ptt.set_defaults(func=_cmd_stats_ttest)
    pma = ssub.add_parser("moving-avg")
    _add_corpus_args(pma)
    _add_text_args(pma)
    pma.add_argument("--alpha-ma", type=float, default=0.99)
    pma.add_argument("--denominator", choices=["printed", "timealigned"], default="printed")
    pma.add_argument("--model", default=None, help="classifier model for unlabeled threads")
    pma.add_argument("--max-days", type=int, default=35)
    pma.set_defaults(func=_cmd_stats_moving_avg)

    return parser


def _all_parsers(parser) -> list[argparse.ArgumentParser]:
    out = []
    stack = [parser]
    while stack:
        current = stack.pop()
        out.append(current)
        for action in current._actions:
            if isinstance(action, argparse._SubParsersAction):
                stack.extend(action.choices.values())
    return out


def _collect_dests(parser) -> set[str]:
    dests = set()
    for sub in _all_parsers(parser):
        for action in sub._actions:
            if action.dest not in (argparse.SUPPRESS, "help"):
                dests.add(action.dest)
    return dests


def _apply_config(parser, argv):
    if "--config" not in argv:
        return
    path = argv[argv.index("--config") + 1]
    try:
        with open(path, encoding="utf-8") as fh:
            config = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from None
    if not isinstance(config, dict):
        raise ConfigError("config file must hold a JSON object")
    known = _collect_dests(parser)
    unknown = set(config) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    # subcommands parse into a fresh namespace, so the defaults must be
    # installed on every parser in the tree for flags to keep precedence
    for sub in _all_parsers(parser):
        sub.set_defaults(**config)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:
            return int(exc.code or 0)
        return args.func(args)
    except ConfigError as exc:
        _emit_error(exc)
        return 2
    except FileNotFoundError as exc:
        _emit_error(ConfigError(f"input not found: {exc.filename}"))
        return 2
    except _DATA_ERRORS as exc:
        _emit_error(exc)
        return 3
    except (RankDeficient, FloatingPointError, np.linalg.LinAlgError) as exc:
        _emit_error(exc)
        return 4


def _emit_error(exc) -> None:
    obj = {"error": {"type": type(exc).__name__, "message": str(exc)}}
    print(json.dumps(obj, sort_keys=True), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
