"""Distance ladder for c-approximate nearest neighbor search in one TCAM.

Level ``i`` (1-based) covers radius ``l_i = r0 * c**((i-1)/2)`` with a
``(1, sqrt(c))`` plan on coordinates divided by ``l_i``.  Levels are stored
in increasing ``i``, so the first match over the whole table comes from the
smallest radius that has one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .hashing import SignatureScheme
from .index import Neighbor, as_matrix
from .planner import Plan, plan_single_lookup
from .seeds import derive_seed
from .tcam import TcamTable
from .ternary import TernaryWord


@dataclass(frozen=True)
class Level:
    lower: float
    upper: float
    scheme: SignatureScheme
    start: int
    stop: int


def ladder_levels(r0: float, rmax: float, c: float) -> int:
    """Level count whose top radius reaches ``rmax``: ``ceil(2 log_c(rmax/r0)) + 1``."""
    if not 0 < r0 <= rmax:
        raise ValueError(f"need 0 < r0 <= rmax, got r0={r0}, rmax={rmax}")
    if not c > 1:
        raise ValueError(f"c must exceed 1, got {c}")
    # the 1e-12 guards against log ratios like 2.0000000000000004
    return max(0, math.ceil(2 * math.log(rmax / r0) / math.log(c) - 1e-12)) + 1


@dataclass(eq=False)
class LadderIndex:
    levels: list[Level]
    table: TcamTable
    points: np.ndarray
    r0: float
    rmax: float
    c: float
    plan: Plan

    @property
    def m(self) -> int:
        return len(self.levels)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def decode(self, payload: int) -> tuple[int, int]:
        """``(level, point id)`` with 1-based level."""
        level, pid = divmod(payload, max(self.n, 1))
        return level + 1, pid

    def query_words(self, Q) -> list[list[TernaryWord]]:
        """Per-query list of one word per level."""
        Q = as_matrix(Q, self.points.shape[1])
        per_level = [lv.scheme.signature_planes(Q / lv.lower) for lv in self.levels]
        w = self.table.width
        return [[TernaryWord.from_planes(w, v[i], c[i]) for v, c in per_level] for i in range(Q.shape[0])]


def build_ladder(
    points,
    r0: float,
    rmax: float,
    c: float,
    epsilon: float,
    seed: int,
    bound_mode: str = "tight",
    plan: Optional[Plan] = None,
) -> LadderIndex:
    """One table, ``m`` levels, each planned for ``(1, sqrt(c))`` at error ``epsilon / m``.

    ``plan`` overrides the per-level planner (all levels share its width).
    """
    m = ladder_levels(r0, rmax, c)
    X = as_matrix(points)
    n, d = X.shape
    if plan is None:
        plan = plan_single_lookup(max(n, 1), math.sqrt(c), epsilon / m, bound_mode)
    table = TcamTable(plan.w)
    levels = []
    for i in range(1, m + 1):
        lower = r0 * c ** ((i - 1) / 2)
        scheme = SignatureScheme(d, plan.w, plan.delta, derive_seed(seed, "level", i))
        start = len(table)
        if n:
            v, cp = scheme.signature_planes(X / lower)
            table.program_planes(v, cp, (i - 1) * n + np.arange(n))
        levels.append(Level(lower, r0 * c ** (i / 2), scheme, start, len(table)))
    table.freeze()
    return LadderIndex(levels, table, X, float(r0), float(rmax), float(c), plan)


def query_anns(ladder: LadderIndex, q, words: Optional[list[TernaryWord]] = None) -> Optional[Neighbor]:
    """Single segmented lookup; the lowest-address hit names the answer.

    ``words`` may carry precomputed per-level query words.
    """
    q = as_matrix(q, ladder.points.shape[1])[0]
    if words is None:
        words = ladder.query_words(q)[0]
    segments = [(lv.start, lv.stop, word) for lv, word in zip(ladder.levels, words)]
    hit = ladder.table.lookup_first_segmented(segments)
    if hit is None:
        return None
    _, pid = ladder.decode(hit.payload)
    return Neighbor(pid, float(np.linalg.norm(ladder.points[pid] - q)))
