"""Match classification, metric reports and the analytic sphere model."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Optional, Sequence

import numpy as np

from .hashing import mismatch_prob

# rows of the gram-trick distance matrix are rechecked exactly inside this band
_RECHECK = 1e-6
_GT_BLOCK_ELEMS = 1 << 24


@dataclass(frozen=True)
class MetricsReport:
    """Pair-level counts plus the rates derived from them.

    ``fn_rate`` counts queries that have at least one relevant point and
    matched none of them; ``pair_fn_rate`` is ``fn / relevant``.  Precision,
    recall and F-score are micro-averaged over all queries.  A ``kind`` of
    ``"model"`` marks expected values from ``model_predict``.
    """

    kind: str
    dataset: str
    seed: int
    n: int
    w: int
    delta: float
    c: float
    l: float
    queries: int
    queries_with_relevant: float
    queries_missed: float
    relevant: float
    dissimilar: float
    tp: float
    fp: float
    fn: float
    fn_rate: float
    pair_fn_rate: float
    fp_per_query: float
    precision: float
    recall: float
    fscore: float

    @property
    def config(self) -> dict:
        return {k: getattr(self, k) for k in ("dataset", "seed", "n", "w", "delta", "c", "l")}

    def fn_for(self, basis: str) -> float:
        if basis == "query":
            return self.fn_rate
        if basis == "pair":
            return self.pair_fn_rate
        raise ValueError(f"fn basis must be 'query' or 'pair', got {basis!r}")

    def fn_trials(self, basis: str) -> float:
        return self.queries_with_relevant if basis == "query" else self.relevant


REPORT_COLUMNS = tuple(f.name for f in fields(MetricsReport))
_INT_COLUMNS = {"seed", "n", "w", "queries"}
_STR_COLUMNS = {"kind", "dataset"}


def f_measure(precision: float, recall: float) -> float:
    s = precision + recall
    return 2 * precision * recall / s if s > 0 else 0.0


def make_report(
    *, kind: str = "observed", dataset: str = "", seed: int = 0, n: int, w: int, delta: float, c: float,
    l: float, queries: int, queries_with_relevant: float, queries_missed: float, relevant: float,
    dissimilar: float, tp: float, fp: float,
) -> MetricsReport:
    if queries < 1:
        raise ValueError("a report needs at least one query")
    fn = relevant - tp
    precision = tp / (tp + fp) if tp + fp > 0 else 1.0
    recall = tp / relevant if relevant > 0 else 1.0
    return MetricsReport(
        kind, dataset, int(seed), int(n), int(w), float(delta), float(c), float(l), int(queries),
        queries_with_relevant, queries_missed, relevant, dissimilar, tp, fp, fn,
        queries_missed / queries_with_relevant if queries_with_relevant > 0 else 0.0,
        fn / relevant if relevant > 0 else 0.0,
        fp / queries, precision, recall, f_measure(precision, recall),
    )


@dataclass
class QueryCounts:
    """Per-query tallies; merging is a plain sum, so query order is irrelevant."""

    relevant: np.ndarray
    dissimilar: np.ndarray
    tp: np.ndarray
    fp: np.ndarray

    @classmethod
    def empty(cls, k: int) -> QueryCounts:
        return cls(*(np.zeros(k, np.int64) for _ in range(4)))

    def report(self, **config) -> MetricsReport:
        has_rel = self.relevant > 0
        return make_report(
            queries=len(self.tp),
            queries_with_relevant=int(has_rel.sum()),
            queries_missed=int((has_rel & (self.tp == 0)).sum()),
            relevant=int(self.relevant.sum()),
            dissimilar=int(self.dissimilar.sum()),
            tp=int(self.tp.sum()),
            fp=int(self.fp.sum()),
            **config,
        )


def exact_distances(X: np.ndarray, q: np.ndarray) -> np.ndarray:
    diff = X - q
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


@dataclass
class GroundTruth:
    """Per query: relevant ids (distance <= l), ids closer than ``c*l``, dissimilar count."""

    relevant: list[np.ndarray]
    near: list[np.ndarray]
    dissimilar: np.ndarray
    l: float
    c: float


def ground_truth(X: np.ndarray, Q: np.ndarray, l: float, c: float, rtol: float = 1e-9) -> GroundTruth:
    """Blocked squared-distance scan; entries near either threshold are recomputed directly."""
    X = np.asarray(X, np.float64)
    Q = np.asarray(Q, np.float64)
    lo2, hi2 = (l * (1 + rtol)) ** 2, (c * l * (1 - rtol)) ** 2
    xx = np.einsum("ij,ij->i", X, X)
    relevant, nearby, dissimilar = [], [], np.zeros(len(Q), np.int64)
    block = max(1, _GT_BLOCK_ELEMS // max(len(X), 1))
    for s in range(0, len(Q), block):
        Qb = Q[s : s + block]
        D2 = xx[None, :] - 2.0 * (Qb @ X.T) + np.einsum("ij,ij->i", Qb, Qb)[:, None]
        for r, row in enumerate(D2):
            q = Qb[r]
            near = np.flatnonzero(row <= lo2 * (1 + _RECHECK) + _RECHECK)
            rel = near[exact_distances(X[near], q) ** 2 <= lo2] if near.size else near
            cand = np.flatnonzero(row < hi2 * (1 + _RECHECK) + _RECHECK)
            close = cand[exact_distances(X[cand], q) ** 2 < hi2] if cand.size else cand
            relevant.append(rel.astype(np.int64))
            nearby.append(close.astype(np.int64))
            dissimilar[s + r] = len(X) - close.size
    return GroundTruth(relevant, nearby, dissimilar, l, c)


def tally(matches: Sequence[np.ndarray], truth: GroundTruth) -> QueryCounts:
    """Classify raw matches; pairs strictly between ``l`` and ``c*l`` count nowhere."""
    counts = QueryCounts.empty(len(matches))
    for i, ids in enumerate(matches):
        ids = np.asarray(ids, np.int64)
        counts.relevant[i] = truth.relevant[i].size
        counts.dissimilar[i] = truth.dissimilar[i]
        counts.tp[i] = np.intersect1d(ids, truth.relevant[i], assume_unique=True).size
        counts.fp[i] = ids.size - np.intersect1d(ids, truth.near[i], assume_unique=True).size
    return counts


# --- analytic model ----------------------------------------------------------------


@dataclass(frozen=True)
class ModelParams:
    """Mean similar (distance l) and dissimilar (distance c*l) points per query."""

    n1: float
    n2: float
    w: int
    delta: float
    c: float
    l: float = 1.0

    def __post_init__(self):
        if self.n1 < 0 or self.n2 < 0:
            raise ValueError("n1 and n2 must be non-negative")


def whole_match_prob(x: float, delta: float, w: int) -> float:
    """``Psi(x)**w`` computed as ``exp(w log1p(-mismatch))``."""
    if w == 0:
        return 1.0
    return math.exp(w * math.log1p(-float(mismatch_prob(x, delta))))


def model_predict(params: ModelParams, queries: int = 1) -> MetricsReport:
    """Expected metrics when every similar point sits at ``l`` and every dissimilar one at ``c*l``."""
    ps = whole_match_prob(params.l, params.delta, params.w)
    pd = whole_match_prob(params.c * params.l, params.delta, params.w)
    tp, fp = params.n1 * ps, params.n2 * pd
    missed = (1 - ps) ** params.n1 if params.n1 > 0 else 0.0
    return make_report(
        kind="model", n=int(round(params.n1 + params.n2)), w=params.w, delta=params.delta, c=params.c,
        l=params.l, queries=queries, queries_with_relevant=float(queries if params.n1 > 0 else 0),
        queries_missed=missed * queries, relevant=params.n1 * queries, dissimilar=params.n2 * queries,
        tp=tp * queries, fp=fp * queries,
    )


# --- report files ----------------------------------------------------------------


def _coerce(name: str, text: str):
    if name in _STR_COLUMNS:
        return text
    if name in _INT_COLUMNS:
        return int(text)
    return float(text)


def reports_to_csv(reports: Iterable[MetricsReport]) -> str:
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(REPORT_COLUMNS)
    for r in reports:
        out.writerow([getattr(r, k) if isinstance(getattr(r, k), str) else repr(getattr(r, k)) for k in REPORT_COLUMNS])
    return buf.getvalue()


def reports_from_csv(text: str) -> list[MetricsReport]:
    rows = csv.reader(io.StringIO(text))
    header = tuple(next(rows))
    if header != REPORT_COLUMNS:
        raise ValueError(f"unexpected report header {header}")
    return [MetricsReport(*(_coerce(k, v) for k, v in zip(REPORT_COLUMNS, row))) for row in rows if row]


def reports_to_json(reports: Iterable[MetricsReport], config: Optional[dict] = None) -> str:
    body = {"columns": list(REPORT_COLUMNS), "config": config or {}, "reports": [asdict(r) for r in reports]}
    return json.dumps(body, sort_keys=True, indent=1)


def reports_from_json(text: str) -> list[MetricsReport]:
    body = json.loads(text)
    return [MetricsReport(**{k: r[k] for k in REPORT_COLUMNS}) for r in body["reports"]]


def emit_report(reports: Sequence[MetricsReport], path, fmt: Optional[str] = None, config: Optional[dict] = None) -> None:
    fmt = fmt or ("json" if str(path).endswith(".json") else "csv")
    if fmt == "csv":
        text = reports_to_csv(reports)
    elif fmt == "json":
        text = reports_to_json(reports, config)
    else:
        raise ValueError(f"format must be csv or json, got {fmt!r}")
    with open(path, "w") as fh:
        fh.write(text)


def parse_report(path, fmt: Optional[str] = None) -> list[MetricsReport]:
    fmt = fmt or ("json" if str(path).endswith(".json") else "csv")
    with open(path) as fh:
        text = fh.read()
    return reports_from_json(text) if fmt == "json" else reports_from_csv(text)
