"""Single-table near-neighbor index: hash every point, program one TCAM, look up once."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np

from .hashing import SignatureScheme
from .matrix_io import load_matrix, save_matrix
from .planner import Plan
from .seeds import derive_seed
from .tcam import TcamTable
from .ternary import TernaryWord, n_chunks

INDEX_FORMAT_VERSION = 1

# relative slack on distance thresholds so points planted exactly at c*l verify
DIST_RTOL = 1e-9


class Neighbor(NamedTuple):
    id: int
    distance: float


def as_matrix(points, d: Optional[int] = None) -> np.ndarray:
    X = np.asarray(points, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(0, d) if X.size == 0 and d else X[None, :]
    if X.ndim != 2:
        raise ValueError(f"points must be a 2-D array, got shape {X.shape}")
    if d is not None and X.shape[1] != d:
        raise ValueError(f"dimension mismatch: got {X.shape[1]}, expected {d}")
    if not np.all(np.isfinite(X)):
        raise ValueError("points contain non-finite coordinates")
    return X


def _shift_planes(plane: np.ndarray, shift: int, width: int) -> np.ndarray:
    """Move every ternion ``shift`` (< 64) positions up, growing to ``width``."""
    nc = n_chunks(width)
    out = np.zeros((plane.shape[0], nc), np.uint64)
    out[:, : plane.shape[1]] = plane << np.uint64(shift)
    if shift:
        carry = plane >> np.uint64(64 - shift)
        m = min(plane.shape[1], nc - 1)
        out[:, 1 : m + 1] |= carry[:, :m]
    return out


def encode_planes(scheme: SignatureScheme, X: np.ndarray, scale: float, version: int, width: int):
    """Signature planes of ``X / scale`` shifted behind a ``width - w`` ternion version prefix."""
    v, c = scheme.signature_planes(X / scale)
    p = width - scheme.w
    if p == 0:
        return v, c
    vp, cp = _version_planes(version, p, width)
    return _shift_planes(v, p, width) | vp, _shift_planes(c, p, width) | cp


def _version_planes(version: int, prefix: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    value = np.zeros(n_chunks(width), np.uint64)
    care = np.zeros(n_chunks(width), np.uint64)
    if prefix:
        care[0] = np.uint64((1 << prefix) - 1)
        value[0] = np.uint64(version)
    return value, care


@dataclass(eq=False)
class NNIndex:
    """Hashed database plus the TCAM holding one entry per (version, point).

    ``schemes[r]`` keys version ``r``; versions occupy consecutive address
    blocks of ``len(points)`` entries.  A single-lookup plan has one version.
    """

    plan: Plan
    schemes: list[SignatureScheme]
    table: TcamTable
    points: np.ndarray
    scale: float = 1.0
    seed: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def scheme(self) -> SignatureScheme:
        return self.schemes[0]

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def prefix_width(self) -> int:
        return self.table.width - self.scheme.w

    def query_planes(self, Q, version: int = 0) -> tuple[np.ndarray, np.ndarray]:
        """Packed query words (version prefix included) for each row of ``Q``."""
        Q = as_matrix(Q, self.d)
        return encode_planes(self.schemes[version], Q, self.scale, version, self.table.width)

    def query_word(self, q, version: int = 0) -> TernaryWord:
        v, c = self.query_planes(q, version)
        return TernaryWord.from_planes(self.table.width, v[0], c[0])

    def distance(self, pid: int, q: np.ndarray) -> float:
        return float(np.linalg.norm(self.points[pid] - q))

    def radius(self) -> float:
        return self.plan.c * self.scale

    # --- persistence -------------------------------------------------------------

    def save(self, directory) -> Path:
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        (out / "plan.json").write_text(self.plan.to_json() + "\n")
        record = {
            "format": "tcamlsh-index",
            "version": INDEX_FORMAT_VERSION,
            "scale": self.scale,
            "seed": self.seed,
            "schemes": [s.to_record() for s in self.schemes],
            "meta": self.meta,
        }
        (out / "schemes.json").write_text(json.dumps(record, sort_keys=True, indent=1) + "\n")
        self.table.save(out / "table.bin")
        save_matrix(out / "points.bin", self.points)
        return out

    @classmethod
    def load(cls, directory) -> NNIndex:
        src = Path(directory)
        plan = Plan.from_record(json.loads((src / "plan.json").read_text()))
        record = json.loads((src / "schemes.json").read_text())
        if record.get("format") != "tcamlsh-index" or record.get("version") != INDEX_FORMAT_VERSION:
            raise ValueError(f"{src} is not a version-{INDEX_FORMAT_VERSION} index directory")
        schemes = [SignatureScheme.from_record(r) for r in record["schemes"]]
        table = TcamTable.load(src / "table.bin")
        points = load_matrix(src / "points.bin")
        if len(table) != len(schemes) * points.shape[0]:
            raise ValueError(f"table has {len(table)} entries for {len(schemes)} x {points.shape[0]} points")
        return cls(plan, schemes, table.freeze(), points, float(record["scale"]), int(record["seed"]), record["meta"])


def build_index(points, plan: Plan, seed: int, scale: float = 1.0, d: Optional[int] = None) -> NNIndex:
    """Hash and program every point; address order is (version, point order).

    Width 0 is accepted (every entry then matches every query), which is
    useful as a degenerate baseline.
    """
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale}")
    X = np.asarray(points, dtype=np.float64)
    if X.size == 0:
        if d is None:
            d = X.shape[1] if X.ndim == 2 else 0
        if d < 1:
            raise ValueError("an empty database needs an explicit dimension")
        X = np.zeros((0, d))
    X = as_matrix(X, d)
    d = X.shape[1]
    repeats = max(1, plan.repeats)
    schemes = [
        SignatureScheme(d, plan.w, plan.delta, seed if repeats == 1 else derive_seed(seed, "version", r))
        for r in range(repeats)
    ]
    width = plan.w + plan.prefix_width
    table = TcamTable(width)
    n = X.shape[0]
    for r, scheme in enumerate(schemes):
        if n:
            v, c = encode_planes(scheme, X, scale, r, width)
            table.program_planes(v, c, np.arange(n))
    table.freeze()
    return NNIndex(plan, schemes, table, X, float(scale), int(seed))


def query_nn(index: NNIndex, q) -> Optional[Neighbor]:
    """Decision query: a stored point within ``c * scale`` or None.

    Each version costs one lookup and at most one distance computation; the
    first verified hit ends the query.
    """
    q = as_matrix(q, index.d)[0]
    limit = index.radius() * (1 + DIST_RTOL)
    for r in range(len(index.schemes)):
        hit = index.table.lookup_first(index.query_word(q, r))
        if hit is None:
            continue
        dist = index.distance(hit.payload, q)
        if dist <= limit:
            return Neighbor(hit.payload, dist)
    return None


def query_ss(index: NNIndex, q) -> tuple[list[int], list[int]]:
    """``(raw, verified)`` point ids; raw is every TCAM match across versions."""
    q = as_matrix(q, index.d)[0]
    raw: set[int] = set()
    for r in range(len(index.schemes)):
        raw.update(m.payload for m in index.table.lookup_all(index.query_word(q, r)))
    raw_ids = sorted(raw)
    limit = index.radius() * (1 + DIST_RTOL)
    verified = [p for p in raw_ids if index.distance(p, q) <= limit]
    return raw_ids, verified


def raw_matches_batch(index: NNIndex, Q) -> list[np.ndarray]:
    """Raw match ids per query row, one counted lookup per (query, version)."""
    Q = as_matrix(Q, index.d)
    per_version = [index.query_planes(Q, r) for r in range(len(index.schemes))]
    out = []
    width = index.table.width
    for i in range(Q.shape[0]):
        ids = [index.table.lookup_all_array(TernaryWord.from_planes(width, v[i], c[i]))[1] for v, c in per_version]
        out.append(ids[0].astype(np.int64) if len(ids) == 1 else np.unique(np.concatenate(ids)).astype(np.int64))
    return out


def brute_force_nn(points, q) -> Neighbor:
    """Exact Euclidean nearest neighbor; ties go to the lowest index."""
    X = np.asarray(points, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("brute_force_nn needs a non-empty 2-D point set")
    q = as_matrix(q, X.shape[1])[0]
    d2 = np.einsum("ij,ij->i", X - q, X - q)
    i = int(np.argmin(d2))
    return Neighbor(i, math.sqrt(float(d2[i])))
