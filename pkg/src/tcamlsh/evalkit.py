"""Evaluation pipelines, delta sweeps and delta_opt search."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional, Protocol, Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .datagen import PointSet, QuerySet, ThresholdShells
from .hashing import SignatureScheme
from .index import NNIndex, build_index, raw_matches_batch
from .metrics import (
    GroundTruth, MetricsReport, ModelParams, QueryCounts, exact_distances, ground_truth, model_predict, tally,
)
from .planner import Plan
from .seeds import derive_seed
from .tcam import TcamTable
from .ternary import TernaryWord

log = logging.getLogger(__name__)

OBJECTIVES = ("min_fp", "max_fscore")
DEFAULT_BRACKET = (0.25, 16.0)
_GOLDEN = (math.sqrt(5) - 1) / 2


class DeltaSearchError(ValueError):
    pass


class Pipeline(Protocol):
    c: float
    l: float

    def evaluate_many(self, deltas: Sequence[float], w: int) -> list[MetricsReport]: ...


def _chunks(k: int, parts: int) -> list[np.ndarray]:
    return [c for c in np.array_split(np.arange(k), max(1, min(parts, k))) if c.size]


def _pmap(fn: Callable, items: list, threads: int) -> list:
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(threads) as pool:
        return list(pool.map(fn, items))


def evaluate(
    index: NNIndex, points, queries, l: float, c: float, *, truth: Optional[GroundTruth] = None,
    dataset: str = "", threads: int = 1,
) -> MetricsReport:
    """Raw-match metrics of ``index`` on ``queries``."""
    X = points.data if isinstance(points, PointSet) else np.asarray(points, np.float64)
    Q = queries.queries if isinstance(queries, QuerySet) else np.asarray(queries, np.float64)
    if len(Q) == 0:
        raise ValueError("no queries to evaluate")
    if truth is None:
        truth = ground_truth(X, Q, l, c)
    parts = _chunks(len(Q), threads)
    matches = [m for part in _pmap(lambda idx: raw_matches_batch(index, Q[idx]), parts, threads) for m in part]
    counts = tally(matches, truth)
    return counts.report(dataset=dataset, seed=index.seed, n=len(X), w=index.scheme.w,
                         delta=index.scheme.delta, c=c, l=l)


def model_params_for(report: MetricsReport) -> ModelParams:
    """Sphere-model inputs measured from an observed report."""
    return ModelParams(report.relevant / report.queries, report.dissimilar / report.queries,
                       report.w, report.delta, report.c, report.l)


def model_for(report: MetricsReport) -> MetricsReport:
    return model_predict(model_params_for(report), queries=report.queries)


class RandomPipeline:
    """One fixed database and query set; each delta rebuilds the index with the same seed.

    Because the scheme seed is fixed, every delta reuses the same directions
    and unit offsets, which keeps sweep curves smooth.
    """

    def __init__(self, points: PointSet, queries: QuerySet, l: float = 1.0, c: float = 2.0,
                 seed: int = 0, dataset: str = "random", threads: int = 1):
        if points.d != queries.d:
            raise ValueError(f"points have d={points.d}, queries d={queries.d}")
        self.points, self.queries = points, queries
        self.l, self.c, self.seed, self.dataset, self.threads = l, c, seed, dataset, threads
        self.truth = ground_truth(points.data, queries.queries, l, c)
        self._cache: dict[tuple[float, int], MetricsReport] = {}

    def build(self, delta: float, w: int) -> NNIndex:
        return build_index(self.points.data, Plan.fixed(delta, w, self.c, self.points.n), self.seed)

    def evaluate(self, delta: float, w: int) -> MetricsReport:
        key = (float(delta), int(w))
        if key not in self._cache:
            self._cache[key] = evaluate(self.build(delta, w), self.points, self.queries, self.l, self.c,
                                        truth=self.truth, dataset=self.dataset, threads=self.threads)
        return self._cache[key]

    def evaluate_many(self, deltas: Sequence[float], w: int) -> list[MetricsReport]:
        return [self.evaluate(d, w) for d in deltas]


class ThresholdPipeline:
    """Per-query shells, each hashed with its own scheme seeded by the query number.

    Shell generation and projection happen once per query per call; all
    deltas passed to ``evaluate_many`` share them.
    """

    def __init__(self, shells: ThresholdShells, queries: QuerySet, seed: int = 0,
                 dataset: str = "threshold", threads: int = 1):
        if len(shells) != len(queries):
            raise ValueError("one shell per query is required")
        self.shells, self.queries = shells, queries
        self.l, self.c = shells.l, shells.c
        self.seed, self.dataset, self.threads = seed, dataset, threads
        self._cache: dict[tuple[float, int], MetricsReport] = {}

    def _run(self, qidx: np.ndarray, deltas: Sequence[float], w: int) -> list[QueryCounts]:
        out = [QueryCounts.empty(len(qidx)) for _ in deltas]
        d = self.queries.d
        l, c = self.l, self.c
        for j, i in enumerate(qidx):
            S, _ = self.shells.instance(int(i))
            q = self.queries.queries[i]
            dist = exact_distances(S, q)
            rel = np.flatnonzero(dist <= l * (1 + 1e-9))
            far = dist >= c * l * (1 - 1e-9)
            base = SignatureScheme(d, w, deltas[0], derive_seed(self.seed, "query", int(i)))
            P, pq = base.project(S), base.project(q)
            for k, delta in enumerate(deltas):
                scheme = base.with_delta(delta)
                v, cp = scheme.planes_from_projections(P)
                qv, qc = scheme.planes_from_projections(pq)
                table = TcamTable(w)
                table.program_planes(v, cp, np.arange(len(S)))
                table.freeze()
                ids = table.lookup_all_array(TernaryWord.from_planes(w, qv[0], qc[0]))[1]
                cnt = out[k]
                cnt.relevant[j] = rel.size
                cnt.dissimilar[j] = int(far.sum())
                cnt.tp[j] = np.intersect1d(ids, rel, assume_unique=True).size
                cnt.fp[j] = int(far[ids].sum())
        return out

    def evaluate_many(self, deltas: Sequence[float], w: int) -> list[MetricsReport]:
        todo = [float(x) for x in dict.fromkeys(float(x) for x in deltas) if (float(x), int(w)) not in self._cache]
        if todo:
            parts = _pmap(lambda idx: self._run(idx, todo, w), _chunks(len(self.queries), self.threads), self.threads)
            for k, delta in enumerate(todo):
                merged = QueryCounts(*(np.concatenate([getattr(p[k], f) for p in parts])
                                       for f in ("relevant", "dissimilar", "tp", "fp")))
                self._cache[(delta, int(w))] = merged.report(
                    dataset=self.dataset, seed=self.seed, n=self.shells.n, w=w, delta=delta, c=self.c, l=self.l)
        return [self._cache[(float(x), int(w))] for x in deltas]

    def evaluate(self, delta: float, w: int) -> MetricsReport:
        return self.evaluate_many([delta], w)[0]


def sweep_delta(pipeline: Pipeline, deltas: Sequence[float], w: int) -> list[MetricsReport]:
    """One report per grid point, in grid order."""
    if len(deltas) == 0:
        raise ValueError("empty delta grid")
    return pipeline.evaluate_many(list(deltas), w)


def log_grid(lo: float, hi: float, size: int) -> list[float]:
    return [float(x) for x in np.geomspace(lo, hi, size)]


def _min_fp(pipeline, w, eps_n, basis, bracket, grid_size, refine_rounds, refine_size, trace):
    lo, hi = bracket
    seen: dict[float, MetricsReport] = {}

    def run(grid):
        for r in pipeline.evaluate_many(grid, w):
            seen[r.delta] = r
            trace.append(r)

    run(log_grid(lo, hi, grid_size))
    for _ in range(refine_rounds):
        ds = sorted(seen)
        feasible = [x for x in ds if seen[x].fn_for(basis) <= eps_n]
        if not feasible:
            break
        first = feasible[0]
        below = [x for x in ds if x < first]
        if not below:
            break
        run(list(np.linspace(below[-1], first, refine_size + 2)[1:-1]))
    feasible = [r for r in seen.values() if r.fn_for(basis) <= eps_n]
    if not feasible:
        raise DeltaSearchError(f"no delta in [{lo:g}, {hi:g}] meets fn_rate <= {eps_n:g} at w={w}")
    best = min(feasible, key=lambda r: (r.fp_per_query, r.fn_for(basis), r.delta))
    return best


def _max_fscore(pipeline, w, bracket, grid_size, iterations, trace):
    grid = log_grid(*bracket, grid_size)
    reports = pipeline.evaluate_many(grid, w)
    trace.extend(reports)
    k = max(range(len(grid)), key=lambda i: (reports[i].fscore, -i))
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    best = reports[k]

    def f(x):
        nonlocal best
        r = pipeline.evaluate_many([x], w)[0]
        trace.append(r)
        if r.fscore > best.fscore:
            best = r
        return r.fscore

    x1, x2 = b - _GOLDEN * (b - a), a + _GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(iterations):
        if f1 >= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = f(x2)
    return best


def find_delta_opt(
    pipeline: Pipeline, w: int, epsilon_n: float = 0.05, objective: str = "min_fp", *,
    fn_basis: str = "query", bracket: tuple[float, float] = DEFAULT_BRACKET, grid_size: int = 13,
    refine_rounds: int = 3, refine_size: int = 4, iterations: int = 10,
    trace: Optional[list] = None,
) -> tuple[float, MetricsReport]:
    """Pick delta by one of two objectives.

    ``min_fp``: fewest false positives per query among deltas whose FN rate
    (``fn_basis`` ``"query"`` or ``"pair"``) is at most ``epsilon_n``; the
    feasibility edge is refined by repeated linear grids.  ``max_fscore``:
    golden-section search around the best point of a log grid.  Every
    evaluated report is appended to ``trace`` when given.
    """
    if not 0 < epsilon_n < 1:
        raise ValueError(f"epsilon_n must lie in (0, 1), got {epsilon_n}")
    if objective in ("min_fp", "min_fp_subject_to_fn"):
        best = _min_fp(pipeline, w, epsilon_n, fn_basis, bracket, grid_size, refine_rounds, refine_size,
                       trace if trace is not None else [])
    elif objective == "max_fscore":
        best = _max_fscore(pipeline, w, bracket, grid_size, iterations, trace if trace is not None else [])
    else:
        raise ValueError(f"objective must be one of {OBJECTIVES}, got {objective!r}")
    log.info("delta_opt w=%d objective=%s -> %.6g", w, objective, best.delta)
    return best.delta, best


def model_delta_opt(
    params: ModelParams, epsilon_n: float = 0.05, objective: str = "min_fp", fn_basis: str = "query",
    bracket: tuple[float, float] = DEFAULT_BRACKET,
) -> float:
    """delta_opt of the analytic model (dense log grid, then local polish)."""
    def rep(x):
        return model_predict(ModelParams(params.n1, params.n2, params.w, x, params.c, params.l))

    if objective in ("min_fp", "min_fp_subject_to_fn"):
        # model FN falls and FP rises with delta, so the optimum is the FN edge
        g = lambda x: math.log(max(rep(x).fn_for(fn_basis), 1e-300)) - math.log(epsilon_n)
        lo, hi = bracket
        if g(hi) > 0:
            raise DeltaSearchError(f"model FN stays above {epsilon_n:g} on the bracket")
        if g(lo) <= 0:
            return lo
        return brentq(g, lo, hi, xtol=1e-12)
    if objective == "max_fscore":
        grid = np.geomspace(*bracket, 400)
        k = int(np.argmax([rep(x).fscore for x in grid]))
        a, b = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
        return float(minimize_scalar(lambda x: -rep(x).fscore, bounds=(a, b), method="bounded",
                                     options={"xatol": 1e-10}).x)
    raise ValueError(f"objective must be one of {OBJECTIVES}, got {objective!r}")
