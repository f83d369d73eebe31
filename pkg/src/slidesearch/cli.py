"""Command-line entry point: build, query, eval, bench, synth, mosaic.

Exit codes: 0 success, 1 usage error, 2 data or format error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import store
from .bench import BenchConfig, bench_speed
from .encoding import DEFAULT_FEATURE_DIM
from .evaluation import loo_evaluate, queries_from_rows, site_matrices
from .mosaic import PatchRecord, select_mosaics
from .ranking import ANATOMIC_SITE_N, FIXED_SITE_N, normalize_weights, rank_patch, rank_results
from .search import SearchParams, guided_search
from .store import DataFormatError
from .synth import SynthSpec, generate, write_jsonl

log = logging.getLogger("slidesearch")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _fraction(text: str) -> float:
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"expected a value in [0, 1], got {text}")
    return v


def _sizes(text: str) -> list[int]:
    try:
        sizes = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad size list {text!r}") from None
    if not sizes or min(sizes) < 1:
        raise argparse.ArgumentTypeError("sizes must be positive integers")
    return sizes


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="slidesearch", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="TOML or JSON file with flag defaults")
    p.add_argument("--log-level", default="INFO")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, required=True)

    b = sub.add_parser("build", help="build a database directory from JSON-lines mosaics")
    b.add_argument("--input", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--texture-len", type=_positive_int, default=DEFAULT_FEATURE_DIM - 1)
    g = b.add_mutually_exclusive_group()
    g.add_argument("--strict", dest="strict", action="store_true", default=True)
    g.add_argument("--lenient", dest="strict", action="store_false")

    q = sub.add_parser("query", help="search a database with a slide or patch query")
    q.add_argument("--db", required=True)
    q.add_argument("--query", required=True, help="JSON-lines mosaics of the query")
    q.add_argument("--topk", type=_positive_int)
    q.add_argument("--mode", choices=("slide", "patch", "site"), default="slide")
    q.add_argument("--mask-patient")
    q.add_argument("--out")

    e = sub.add_parser("eval", help="leave-one-patient-out evaluation")
    e.add_argument("--db", required=True)
    e.add_argument("--queries", required=True)
    e.add_argument("--k", type=_positive_int)
    e.add_argument("--mode", choices=("slide", "site"), default="slide")
    e.add_argument("--report", required=True)
    e.add_argument("--lenient", action="store_true")

    n = sub.add_parser("bench", help="query latency versus database size")
    n.add_argument("--sizes", type=_sizes, default=[1000, 5000, 10000, 50000, 100000])
    n.add_argument("--queries", type=_positive_int, default=100)
    n.add_argument("--seed", type=int, default=0)
    n.add_argument("--classes", type=_positive_int, default=5)
    n.add_argument("--mosaics", type=_positive_int, default=20)
    n.add_argument("--mode", choices=("slide", "patch"), default="slide")
    n.add_argument("--csv", required=True)
    n.add_argument("--plot")

    s = sub.add_parser("synth", help="generate a synthetic JSON-lines dataset")
    s.add_argument("--classes", type=_positive_int, default=5)
    s.add_argument("--slides", type=_positive_int, default=100, help="slides per class")
    s.add_argument("--mosaics", type=_positive_int, default=20, help="mosaics per slide")
    s.add_argument("--patients", type=_positive_int, help="patients per class (default: one per slide)")
    s.add_argument("--latent-noise", type=_fraction, default=0.05)
    s.add_argument("--texture-flip", type=_fraction, default=0.05)
    s.add_argument("--feature-dim", type=int, default=DEFAULT_FEATURE_DIM)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)

    m = sub.add_parser("mosaic", help="select mosaics from JSON-lines patch records")
    m.add_argument("--patches", required=True)
    m.add_argument("--k", type=_positive_int, default=9)
    m.add_argument("--ratio", type=float, default=0.05)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--out", required=True)
    return p


def _load_config(path: str) -> dict:
    text = Path(path).read_bytes()
    if path.endswith(".json"):
        return json.loads(text)
    try:
        import tomllib
    except ModuleNotFoundError:  # python < 3.11
        import tomli as tomllib
    return tomllib.loads(text.decode())


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    """Parse ``argv``; config-file values become defaults under explicit flags."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.config:
        return args
    try:
        cfg = _load_config(args.config)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read config {args.config}: {exc}") from None
    section = cfg.get(args.command, {k: v for k, v in cfg.items() if not isinstance(v, dict)})
    known = set(vars(args))
    unknown = sorted(k.replace("-", "_") for k in section if k.replace("-", "_") not in known)
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    subparser.set_defaults(**{k.replace("-", "_"): v for k, v in section.items()})
    return parser.parse_args(argv)


def _emit(payload, out: Optional[str]) -> None:
    text = json.dumps(payload, indent=2)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def _hit_row(hit) -> dict:
    m = hit.meta
    return {"slide_id": m.slide_id, "diagnosis": m.diagnosis, "dist": hit.dist, "site": m.site,
            "x": m.x, "y": m.y, "key": hit.key}


def cmd_build(args) -> int:
    db = store.build_database(store.read_jsonl(args.input, args.strict), texture_length=args.texture_len,
                              strict=args.strict, params={"source": str(args.input)})
    store.save(db, args.out)
    log.info("built %s: %d keys, %d mosaics, %d slides", args.out, len(db.table), db.n_records, len(db.slides))
    return EXIT_OK


def cmd_query(args) -> int:
    db = store.load(args.db)
    view = db.masked_view(args.mask_patient)
    params = SearchParams()
    K = args.topk or (10 if args.mode == "site" else 5)
    rows = [row for _, row in store.read_jsonl(args.query)]
    if args.mode == "patch":
        out = []
        for i, row in enumerate(rows):
            index, meta = store.parse_row(row, db.texture_length)
            hits = rank_patch(guided_search(index, meta.texture, view, params), K)
            out.append({"query_row": i, "index": index, "results": [_hit_row(h) for h in hits]})
        _emit(out, args.out)
        return EXIT_OK
    N = ANATOMIC_SITE_N if args.mode == "site" else FIXED_SITE_N
    weights = normalize_weights(db.diag_counts, N)
    out = []
    for q in queries_from_rows(rows, db.texture_length):
        per_mosaic = [guided_search(i, t, view, params) for i, t in q.mosaics]
        ranked = rank_results(per_mosaic, weights, K)
        out.append({
            "query_slide": q.slide_id,
            "results": [{"slide_id": e.slide_id, "diagnosis": e.diagnosis, "dist": e.dist,
                         "mosaic_pos": e.mosaic_pos, "entropy": e.entropy} for e in ranked],
        })
    _emit(out, args.out)
    return EXIT_OK


def cmd_eval(args) -> int:
    db = store.load(args.db)
    queries = queries_from_rows(store.read_jsonl(args.queries, not args.lenient), db.texture_length)
    k = args.k or (10 if args.mode == "site" else 5)
    N = ANATOMIC_SITE_N if args.mode == "site" else FIXED_SITE_N
    params = SearchParams()
    report = loo_evaluate(db, queries, params, k=k, N=N, strict=not args.lenient)
    report.write(args.report)
    stem = Path(args.report).with_suffix("")
    for site, pair in site_matrices(report, params.theta_h).items():
        pair.to_csv(f"{stem}_{site}_confusion.csv", f"{stem}_{site}_distance.csv")
    o = report.overall
    log.info("%d queries: mMV@%d %.4f, mAP@%d %.4f (macro %.4f / %.4f)",
             o["n_queries"], k, o["mmv"], k, o["map"], o["macro_mmv"], o["macro_map"])
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = BenchConfig(sizes=args.sizes, n_queries=args.queries, seed=args.seed, n_classes=args.classes,
                      mosaics_per_slide=args.mosaics, mode=args.mode)
    result = bench_speed(cfg)
    result.write_csv(args.csv)
    result.write_samples_csv(str(Path(args.csv).with_suffix("")) + "_samples.csv")
    if args.plot:
        result.plot(args.plot)
    log.info("median latency ratio (max/min): %.3f", result.median_ratio)
    return EXIT_OK


def cmd_synth(args) -> int:
    spec = SynthSpec(n_classes=args.classes, slides_per_class=args.slides, mosaics_per_slide=args.mosaics,
                     patients_per_class=args.patients, latent_noise=args.latent_noise,
                     texture_flip=args.texture_flip, feature_dim=args.feature_dim, seed=args.seed)
    n = write_jsonl(generate(spec), args.out)
    log.info("wrote %d rows to %s", n, args.out)
    return EXIT_OK


def cmd_mosaic(args) -> int:
    by_slide: dict[str, list] = {}
    for lineno, row in store.read_jsonl(args.patches):
        try:
            p = PatchRecord.from_row(row)
        except (KeyError, TypeError, ValueError) as exc:
            raise DataFormatError(f"bad patch record ({exc})", lineno) from None
        by_slide.setdefault(p.slide_id, []).append(p)
    rows = []
    for patches in by_slide.values():
        rows += [p.to_row() for p in select_mosaics(patches, args.k, args.ratio, args.seed)]
    write_jsonl(rows, args.out)
    log.info("selected %d mosaics from %d slides", len(rows), len(by_slide))
    return EXIT_OK


COMMANDS = {"build": cmd_build, "query": cmd_query, "eval": cmd_eval, "bench": cmd_bench,
            "synth": cmd_synth, "mosaic": cmd_mosaic}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except (DataFormatError, KeyError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
