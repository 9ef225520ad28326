"""Synthetic point sets and query sets for the three evaluation regimes.

Random regime: points in the cube ``C_d`` of half-side ``2/sqrt(d)``, half
the queries planted at distance ``l`` from a data point.  Threshold regime:
per query, half the points on the sphere of radius ``l`` and half on radius
``c*l``.  Every generator is a pure function of its seed.
"""

from __future__ import annotations

import csv
import json
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .matrix_io import load_matrix, save_matrix
from .seeds import derive_seed, rng_for

CUBE_KINDS = ("vertices", "box")


def cube_half_side(d: int) -> float:
    return 2.0 / math.sqrt(d)


@dataclass(eq=False)
class PointSet:
    data: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ValueError(f"point data must be 2-D, got shape {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("point data contains non-finite coordinates")

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    def __len__(self) -> int:
        return self.n

    def save(self, path) -> None:
        """Binary matrix at ``path`` plus ``<path>.meta.json``."""
        save_matrix(path, self.data)
        Path(f"{path}.meta.json").write_text(json.dumps(self.meta, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> PointSet:
        meta_path = Path(f"{path}.meta.json")
        meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
        return cls(load_matrix(path), meta)

    def to_csv(self, path) -> None:
        np.savetxt(path, self.data, delimiter=",", fmt="%.17g")

    @classmethod
    def from_csv(cls, path) -> PointSet:
        return cls(np.loadtxt(path, delimiter=",", ndmin=2), {"source": str(path)})


@dataclass(eq=False)
class QuerySet:
    """Queries plus per-query planted-neighbor labels (``-1`` / NaN when unplanted)."""

    queries: np.ndarray
    planted_id: np.ndarray
    planted_distance: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.queries = np.asarray(self.queries, dtype=np.float64)
        self.planted_id = np.asarray(self.planted_id, dtype=np.int64)
        self.planted_distance = np.asarray(self.planted_distance, dtype=np.float64)
        k = self.queries.shape[0]
        if self.planted_id.shape != (k,) or self.planted_distance.shape != (k,):
            raise ValueError("one label per query is required")

    def __len__(self) -> int:
        return self.queries.shape[0]

    @property
    def d(self) -> int:
        return self.queries.shape[1]

    @property
    def planted(self) -> np.ndarray:
        return self.planted_id >= 0

    def save(self, path) -> None:
        """Binary matrix, ``<path>.labels.csv`` sidecar, ``<path>.meta.json``."""
        save_matrix(path, self.queries)
        with open(f"{path}.labels.csv", "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["query", "planted_id", "planted_distance"])
            for i, (pid, dist) in enumerate(zip(self.planted_id, self.planted_distance)):
                out.writerow([i, int(pid), "" if math.isnan(dist) else repr(float(dist))])
        Path(f"{path}.meta.json").write_text(json.dumps(self.meta, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> QuerySet:
        Q = load_matrix(path)
        ids = np.full(len(Q), -1, np.int64)
        dists = np.full(len(Q), np.nan)
        labels = Path(f"{path}.labels.csv")
        if labels.exists():
            with open(labels, newline="") as fh:
                for row in csv.DictReader(fh):
                    i = int(row["query"])
                    ids[i] = int(row["planted_id"])
                    dists[i] = float(row["planted_distance"]) if row["planted_distance"] else np.nan
        meta_path = Path(f"{path}.meta.json")
        meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
        return cls(Q, ids, dists, meta)


def sphere_points(center, radius: float, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` points uniform on the sphere of ``radius`` around ``center``."""
    center = np.asarray(center, dtype=np.float64)
    u = rng.standard_normal((count, center.shape[-1]))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    return center + radius * u


def cube_points(n: int, d: int, rng: np.random.Generator, kind: str = "vertices") -> np.ndarray:
    h = cube_half_side(d)
    if kind == "vertices":
        return np.where(rng.random((n, d)) < 0.5, -h, h)
    if kind == "box":
        return rng.uniform(-h, h, (n, d))
    raise ValueError(f"kind must be one of {CUBE_KINDS}, got {kind!r}")


def gen_random_cube(n: int, d: int, seed: int, kind: str = "vertices") -> PointSet:
    """``n`` i.i.d. points of ``C_d``.

    ``kind="vertices"`` draws each coordinate from ``{-2/sqrt(d), +2/sqrt(d)}``
    so that every pair sits near distance ``2*sqrt(2)``; ``kind="box"`` draws
    uniformly from the solid cube, where pairs concentrate near ``1.63``.
    """
    if n < 1 or d < 1:
        raise ValueError(f"n and d must be >= 1, got n={n}, d={d}")
    data = cube_points(n, d, rng_for(seed, "cube"), kind)
    return PointSet(data, {"generator": "random_cube", "kind": kind, "n": n, "d": d, "seed": seed})


def gen_queries_random(points: PointSet, l: float, count: int, seed: int, kind: Optional[str] = None) -> QuerySet:
    """First ``count // 2`` queries planted at distance ``l``; the rest drawn from ``C_d``."""
    if count < 2:
        raise ValueError(f"count must be >= 2, got {count}")
    kind = kind or points.meta.get("kind", "vertices")
    rng = rng_for(seed, "queries")
    planted = count // 2
    ids = rng.integers(0, points.n, planted)
    near = sphere_points(points.data[ids], l, planted, rng)
    far = cube_points(count - planted, points.d, rng, kind)
    return QuerySet(
        np.vstack([near, far]),
        np.concatenate([ids, np.full(count - planted, -1)]),
        np.concatenate([np.full(planted, float(l)), np.full(count - planted, np.nan)]),
        {"generator": "queries_random", "l": l, "count": count, "seed": seed, "kind": kind},
    )


class ThresholdShells(Sequence):
    """Lazily generated per-query point sets of the threshold regime.

    Item ``i`` holds ``n_similar`` points at distance ``l`` from query ``i``
    and ``n - n_similar`` at ``c*l``, in a seeded random order.  ``labels(i)``
    marks the similar ones.
    """

    def __init__(self, queries: np.ndarray, n: int, l: float, c: float, seed: int, n_similar: int):
        self._queries = queries
        self.n, self.l, self.c, self.seed, self.n_similar = n, l, c, seed, n_similar

    def __len__(self) -> int:
        return self._queries.shape[0]

    def _build(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        if not -len(self) <= i < len(self):
            raise IndexError(i)
        i %= len(self)
        rng = rng_for(self.seed, "shell", i)
        q = self._queries[i]
        pts = np.vstack([
            sphere_points(q, self.l, self.n_similar, rng),
            sphere_points(q, self.c * self.l, self.n - self.n_similar, rng),
        ])
        similar = np.arange(self.n) < self.n_similar
        order = rng.permutation(self.n)
        return pts[order], similar[order]

    def instance(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """``(points, similar_mask)`` for query ``i``."""
        return self._build(int(i))

    def __getitem__(self, i) -> PointSet:
        pts, _ = self._build(int(i))
        return PointSet(pts, {"generator": "threshold_shell", "query": int(i), "seed": self.seed})

    def labels(self, i: int) -> np.ndarray:
        return self._build(i)[1]


def gen_threshold(
    n: int, d: int, l: float, c: float, count: int, seed: int,
    n_similar: Optional[int] = None, kind: str = "vertices",
) -> tuple[ThresholdShells, QuerySet]:
    """Per-query shells; ``n_similar`` defaults to ``n / 2`` (needs even ``n``)."""
    if n_similar is None:
        if n % 2:
            raise ValueError(f"n must be even, got {n}")
        n_similar = n // 2
    if not 0 <= n_similar <= n:
        raise ValueError(f"n_similar must lie in [0, {n}], got {n_similar}")
    Q = cube_points(count, d, rng_for(seed, "threshold-queries"), kind)
    shells = ThresholdShells(Q, n, l, c, derive_seed(seed, "threshold-shells"), n_similar)
    qs = QuerySet(Q, np.full(count, -1), np.full(count, np.nan),
                  {"generator": "threshold", "n": n, "d": d, "l": l, "c": c, "count": count,
                   "seed": seed, "n_similar": n_similar})
    return shells, qs
