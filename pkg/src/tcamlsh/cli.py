"""``tcamlsh`` command line: plan, gen, build, query, sweep, model, eval, bench.

Machine-readable results go to stdout as JSON; logs go to stderr.  Any
flag can also come from ``--config FILE`` (``key = value`` lines, ``#``
comments); flags given on the command line win.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .datagen import PointSet, QuerySet, gen_queries_random, gen_random_cube, gen_threshold
from .evalkit import (
    DeltaSearchError, RandomPipeline, ThresholdPipeline, evaluate, find_delta_opt, log_grid, model_for, sweep_delta,
)
from .index import NNIndex, build_index, query_nn, query_ss
from .metrics import ModelParams, emit_report, model_predict, reports_to_csv
from .planner import InfeasiblePlanError, Plan, plan_log_width, plan_multi_lookup, plan_single_lookup
from .plots import plot_delta_sweep, plot_width_sweep
from .seeds import default_seed
from .simhash import gen_simhash_dataset, read_feature_file

log = logging.getLogger("tcamlsh")

SWEEP_WIDTHS = (32, 64, 96, 128, 144, 160, 192, 224, 256, 288, 320)
DESK_N = 100_000


class UsageError(Exception):
    pass


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, sort_keys=True, indent=1, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _count(text: str) -> int:
    """Accepts ``100000`` as well as ``1e5``."""
    v = float(text)
    if v != int(v) or v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return int(v)


def _float_list(text: str) -> list[float]:
    """``a,b,c`` or ``lo:hi:count`` (log spaced)."""
    if ":" in text:
        lo, hi, k = text.split(":")
        return log_grid(float(lo), float(hi), int(k))
    return [float(x) for x in text.split(",") if x]


def _int_list(text: str) -> list[int]:
    return [_count(x) for x in text.split(",") if x]


def read_config(path) -> dict[str, str]:
    cfg = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        cfg[key.strip().replace("-", "_")] = value.strip()
    return cfg


# --- commands --------------------------------------------------------------------


def cmd_plan(args) -> dict:
    base = math.e if args.log_base == "e" else float(args.log_base)
    if args.mode == "single":
        plan = plan_single_lookup(args.n, args.c, args.eps, args.bounds, base)
    elif args.mode == "multi":
        plan = plan_multi_lookup(args.n, args.c, args.eps, args.bounds, base)
    else:
        if args.k is None:
            raise UsageError("--mode logwidth needs --k")
        plan = plan_log_width(args.n, args.c, args.eps, args.k, base)
    return {"plan": plan.to_record()}


def cmd_gen(args) -> dict:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    desc = {"regime": args.regime, "seed": args.seed, "d": args.d, "l": args.l, "c": args.c, "queries": args.queries}
    if args.regime == "random":
        P = gen_random_cube(args.n, args.d, args.seed, args.kind)
        Q = gen_queries_random(P, args.l, args.queries, args.seed, args.kind)
        P.save(out / "points.bin")
        Q.save(out / "queries.bin")
        desc.update(n=args.n, kind=args.kind)
    elif args.regime == "threshold":
        shells, Q = gen_threshold(args.n, args.d, args.l, args.c, args.queries, args.seed,
                                  args.n_similar, args.kind)
        Q.save(out / "queries.bin")
        desc.update(n=args.n, kind=args.kind, n_similar=shells.n_similar)
    else:
        if not args.features:
            raise UsageError("--regime simhash needs --features")
        docs = read_feature_file(args.features)
        P, Q = gen_simhash_dataset(docs, args.bits, args.queries, args.seed)
        P.save(out / "points.bin")
        Q.save(out / "queries.bin")
        desc.update(n=P.n, d=P.d, bits=args.bits, scale=P.meta["scale"], features=str(args.features))
    (out / "dataset.json").write_text(json.dumps(desc, sort_keys=True, indent=1) + "\n")
    return {"dataset": desc, "path": str(out)}


def _load_points(path) -> PointSet:
    path = Path(path)
    if path.is_dir():
        path = path / "points.bin"
    return PointSet.from_csv(path) if path.suffix == ".csv" else PointSet.load(path)


def _load_queries(path) -> QuerySet:
    path = Path(path)
    if path.is_dir():
        path = path / "queries.bin"
    if path.suffix == ".csv":
        Q = np.loadtxt(path, delimiter=",", ndmin=2)
        return QuerySet(Q, np.full(len(Q), -1), np.full(len(Q), np.nan))
    return QuerySet.load(path)


def _plan_from_args(args, n: int) -> Plan:
    if args.delta is not None or args.w is not None:
        if args.delta is None or args.w is None:
            raise UsageError("--delta and --w go together")
        return Plan.fixed(args.delta, args.w, args.c, n)
    if args.mode == "multi":
        return plan_multi_lookup(max(n, 1), args.c, args.eps, args.bounds)
    return plan_single_lookup(max(n, 1), args.c, args.eps, args.bounds)


def cmd_build(args) -> dict:
    P = _load_points(args.points)
    plan = _plan_from_args(args, P.n)
    t0 = time.perf_counter()
    index = build_index(P.data, plan, args.seed, scale=args.scale)
    elapsed = time.perf_counter() - t0
    index.meta = {"points": str(args.points)}
    index.save(args.out)
    return {"index": str(args.out), "entries": len(index.table), "width": index.table.width,
            "plan": plan.to_record(), "seed": args.seed, "meta": {"build_seconds": elapsed}}


def cmd_query(args) -> dict:
    index = NNIndex.load(args.index)
    Q = _load_queries(args.queries)
    answers = []
    for i, q in enumerate(Q.queries):
        if args.kind == "nn":
            hit = query_nn(index, q)
            answers.append({"query": i, "id": None if hit is None else hit.id,
                            "distance": None if hit is None else hit.distance})
        else:
            raw, verified = query_ss(index, q)
            answers.append({"query": i, "raw": raw, "verified": verified})
    return {"index": str(args.index), "kind": args.kind, "answers": answers, "lookups": index.table.lookups}


def _dataset(path) -> dict:
    return json.loads((Path(path) / "dataset.json").read_text())


def load_pipeline(path, seed: int, threads: int = 1):
    """Pipeline for a directory written by ``gen``."""
    desc = _dataset(path)
    Q = _load_queries(path)
    name = f"{desc['regime']}:{Path(path).name}"
    if desc["regime"] == "threshold":
        shells, Qgen = gen_threshold(desc["n"], desc["d"], desc["l"], desc["c"], desc["queries"], desc["seed"],
                                     desc.get("n_similar"), desc.get("kind", "vertices"))
        if not np.array_equal(Qgen.queries, Q.queries):
            raise ValueError(f"{path}: stored queries do not match the recorded generator parameters")
        return ThresholdPipeline(shells, Q, seed, name, threads)
    return RandomPipeline(_load_points(path), Q, desc["l"], desc["c"], seed, name, threads)


def _write_outputs(reports, args, *, width_table: bool, model=None) -> dict:
    out = {}
    if args.out:
        emit_report(reports, args.out, config=vars_echo(args))
        out["report"] = str(args.out)
        if not args.no_figures:
            fig = Path(args.out).with_suffix(".png")
            (plot_width_sweep if width_table else plot_delta_sweep)(reports, fig, **({} if width_table else {"model": model}))
            out["figure"] = str(fig)
    if args.plot_data:
        d = Path(args.plot_data)
        d.mkdir(parents=True, exist_ok=True)
        (d / ("width_sweep.csv" if width_table else "delta_sweep.csv")).write_text(reports_to_csv(reports))
        if model:
            (d / "model.csv").write_text(reports_to_csv(model))
        out["plot_data"] = str(d)
    return out


def vars_echo(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "config") and _jsonable(v)}


def _jsonable(v) -> bool:
    try:
        json.dumps(v, default=_json_default)
        return True
    except TypeError:
        return False


def cmd_sweep(args) -> dict:
    pipeline = load_pipeline(args.data, args.seed, args.threads)
    widths = args.widths or list(SWEEP_WIDTHS)
    if args.opt == "none":
        deltas = args.deltas or log_grid(0.5, 8.0, 13)
        reports = [r for w in widths for r in sweep_delta(pipeline, deltas, w)]
        model = [model_for(r) for r in reports] if args.with_model else None
        files = _write_outputs(reports, args, width_table=False, model=model)
    else:
        reports = []
        for w in widths:
            try:
                _, best = find_delta_opt(pipeline, w, args.eps_n, args.opt, fn_basis=args.fn_basis)
            except DeltaSearchError as exc:
                log.warning("w=%d: %s", w, exc)
                continue
            reports.append(best)
        files = _write_outputs(reports, args, width_table=True)
    return {"config": vars_echo(args), "reports": [r.__dict__ for r in reports], "files": files}


def cmd_model(args) -> dict:
    deltas = args.deltas or log_grid(0.5, 8.0, 13)
    widths = args.widths or [288]
    reports = [model_predict(ModelParams(args.n1, args.n2, w, d, args.c, args.l)) for w in widths for d in deltas]
    files = _write_outputs(reports, args, width_table=False)
    return {"config": vars_echo(args), "reports": [r.__dict__ for r in reports], "files": files}


def cmd_eval(args) -> dict:
    index = NNIndex.load(args.index)
    P = PointSet(index.points)
    Q = _load_queries(args.queries)
    rep = evaluate(index, P, Q, args.l, args.c, dataset=str(args.queries), threads=args.threads)
    files = _write_outputs([rep], args, width_table=False)
    return {"report": rep.__dict__, "files": files}


def cmd_bench(args) -> dict:
    rows = []
    for n in args.n_list:
        for d in args.d_list:
            for w in args.w_list:
                P = gen_random_cube(n, d, args.seed)
                Q = gen_queries_random(P, 1.0, args.queries, args.seed)
                t0 = time.perf_counter()
                index = build_index(P.data, Plan.fixed(args.delta, w, 2.0, n), args.seed)
                build = time.perf_counter() - t0
                t0 = time.perf_counter()
                for q in Q.queries:
                    query_nn(index, q)
                elapsed = time.perf_counter() - t0
                rows.append({"n": n, "d": d, "w": w, "build_seconds": build,
                             "queries_per_second": len(Q) / elapsed if elapsed > 0 else math.inf})
                log.info("bench n=%d d=%d w=%d build=%.3fs qps=%.1f", n, d, w, build, rows[-1]["queries_per_second"])
    return {"meta": {"timings": rows}, "config": vars_echo(args)}


# --- parser ----------------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="root seed (default: $TCAMLSH_SEED or a fixed constant)")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker cap; results do not depend on it")
    p.add_argument("--config", help="key = value file; command-line flags win")


def _outputs(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", help="report file (.csv or .json); a .png figure is written next to it")
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("--plot-data", help="directory for tidy per-figure CSV tables")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="tcamlsh", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    p = subs["plan"] = sub.add_parser("plan", help="solve delta and width for an error target")
    p.add_argument("--n", type=_count, required=True)
    p.add_argument("--c", type=float, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--mode", choices=("single", "multi", "logwidth"), default="single")
    p.add_argument("--bounds", choices=("simple", "tight"), default="tight")
    p.add_argument("--k", type=float)
    p.add_argument("--log-base", default="2", help="2 (default), e, or any base > 1")
    p.set_defaults(func=cmd_plan)

    p = subs["gen"] = sub.add_parser("gen", help="write a dataset directory")
    p.add_argument("--regime", choices=("random", "threshold", "simhash"), default="random")
    p.add_argument("--n", type=_count, default=DESK_N)
    p.add_argument("--d", type=_count, default=64)
    p.add_argument("--l", type=float, default=1.0)
    p.add_argument("--c", type=float, default=2.0)
    p.add_argument("--queries", type=_count, default=1000)
    p.add_argument("--kind", choices=("vertices", "box"), default="vertices")
    p.add_argument("--n-similar", type=_count)
    p.add_argument("--features", help="token:weight document file (simhash regime)")
    p.add_argument("--bits", type=_count, default=64)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = subs["build"] = sub.add_parser("build", help="hash points into a saved index")
    p.add_argument("--points", required=True, help="points.bin, a .csv, or a dataset directory")
    p.add_argument("--delta", type=float)
    p.add_argument("--w", type=_count)
    p.add_argument("--c", type=float, default=2.0)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--mode", choices=("single", "multi"), default="single")
    p.add_argument("--bounds", choices=("simple", "tight"), default="tight")
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build)

    p = subs["query"] = sub.add_parser("query", help="answer queries against a saved index")
    p.add_argument("--index", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--kind", choices=("nn", "ss"), default="nn")
    p.set_defaults(func=cmd_query)

    p = subs["sweep"] = sub.add_parser("sweep", help="delta sweeps or per-width delta_opt on a dataset")
    p.add_argument("--data", required=True, help="dataset directory from gen")
    p.add_argument("--widths", type=_int_list)
    p.add_argument("--deltas", type=_float_list, help="a,b,c or lo:hi:count")
    p.add_argument("--opt", choices=("none", "min_fp", "max_fscore"), default="none")
    p.add_argument("--eps-n", type=float, default=0.05)
    p.add_argument("--fn-basis", choices=("query", "pair"), default="query")
    p.add_argument("--with-model", action="store_true", help="add sphere-model curves")
    _outputs(p)
    p.set_defaults(func=cmd_sweep)

    p = subs["model"] = sub.add_parser("model", help="analytic expected metrics")
    p.add_argument("--n1", type=float, required=True)
    p.add_argument("--n2", type=float, required=True)
    p.add_argument("--widths", type=_int_list)
    p.add_argument("--deltas", type=_float_list)
    p.add_argument("--c", type=float, default=2.0)
    p.add_argument("--l", type=float, default=1.0)
    _outputs(p)
    p.set_defaults(func=cmd_model)

    p = subs["eval"] = sub.add_parser("eval", help="metrics of a saved index on a query set")
    p.add_argument("--index", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--l", type=float, default=1.0)
    p.add_argument("--c", type=float, default=2.0)
    _outputs(p)
    p.set_defaults(func=cmd_eval)

    p = subs["bench"] = sub.add_parser("bench", help="build time and query throughput")
    p.add_argument("--n-list", type=_int_list, default=[10_000])
    p.add_argument("--d-list", type=_int_list, default=[64])
    p.add_argument("--w-list", type=_int_list, default=[288])
    p.add_argument("--delta", type=float, default=3.0)
    p.add_argument("--queries", type=_count, default=200)
    p.set_defaults(func=cmd_bench)

    for p in subs.values():
        _common(p)
    return parser, subs


def _apply_config(argv: Sequence[str], subs: dict[str, argparse.ArgumentParser]) -> None:
    pre = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    pre.add_argument("command", nargs="?")
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config or known.command not in subs:
        return
    p = subs[known.command]
    cfg = read_config(known.config)
    actions = {a.dest: a for a in p._actions}
    defaults = {}
    for key, raw in cfg.items():
        if key not in actions:
            raise UsageError(f"{known.config}: unknown key {key!r} for '{known.command}'")
        act = actions[key]
        if act.type is not None:
            defaults[key] = act.type(raw)
        elif act.const is True:
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
        else:
            defaults[key] = raw
        act.required = False
    p.set_defaults(**defaults)


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subs = build_parser()
    try:
        _apply_config(argv, subs)
    except (UsageError, OSError, ValueError) as exc:
        parser.print_usage(sys.stderr)
        print(f"tcamlsh: error: {exc}", file=sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.seed is None:
        args.seed = default_seed()
    try:
        result = args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"tcamlsh: error: {exc}", file=sys.stderr)
        return 2
    except (InfeasiblePlanError, DeltaSearchError, ValueError, OSError) as exc:
        print(f"tcamlsh: error: {exc}", file=sys.stderr)
        return 1
    _emit(result)
    return 0


if __name__ == "__main__":
    sys.exit(main())
