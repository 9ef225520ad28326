"""Width/cell-size planning for single-lookup, multi-lookup and log-width TCAMs.

All three planners pick ``delta`` and ``w`` so that, with error budget
``eps``, a near point (distance <= 1) misses on no ternion with probability
>= 1 - eps and the expected number of far points (distance >= c) matching
the query is <= eps.  Logarithms in width expressions default to base 2;
pass ``log_base=math.e`` for natural logs.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

from .hashing import log_miss1, log_miss2, miss2_simple

BOUND_MODES = ("simple", "tight")

# bisection stops when the bracket is this narrow relative to delta
_DELTA_RTOL = 1e-13
_MAX_RESIDUAL = 1e-9


class InfeasiblePlanError(ValueError):
    pass


@dataclass(frozen=True)
class Plan:
    """Solved parameter bundle for one TCAM configuration.

    ``w`` is the number of hash ternions per lookup; multi-lookup plans add
    ``prefix_width`` always-cared ternions carrying the version number.
    ``k`` is the factor in ``w = k * log(n / eps')``.
    """

    mode: str
    delta: float
    w: int
    k: float
    repeats: int
    c: float
    epsilon: float
    n: int
    bound_mode: str
    feasible: bool
    prefix_width: int = 0
    log_base: float = 2.0
    residual: float = 0.0
    clamped: bool = False
    notes: dict = field(default_factory=dict)

    @property
    def total_width(self) -> int:
        return self.w + self.prefix_width

    def to_record(self) -> dict:
        """Plain dict; NaN fields of fixed plans become None so the JSON stays strict."""
        return {k: None if isinstance(v, float) and math.isnan(v) else v for k, v in asdict(self).items()}

    @classmethod
    def from_record(cls, rec: dict) -> Plan:
        rec = dict(rec)
        for key in ("k", "epsilon"):
            if rec.get(key) is None:
                rec[key] = math.nan
        return cls(**rec)

    def to_json(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True)

    @classmethod
    def fixed(cls, delta: float, w: int, c: float = 2.0, n: int = 0) -> Plan:
        """A hand-picked ``(delta, w)`` with no error guarantee attached."""
        if not delta > 0:
            raise ValueError(f"delta must be positive, got {delta}")
        if w < 0:
            raise ValueError(f"w must be non-negative, got {w}")
        return cls("fixed", float(delta), int(w), math.nan, 1, float(c), math.nan, int(n), "none", False)


def _log(x: float, base: float) -> float:
    return math.log(x) / math.log(base)


def _check_args(n: int, c: float, epsilon: float) -> None:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not c > 1:
        raise ValueError(f"c must exceed 1, got {c}")
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")


def solve_delta(n: int, c: float, eps: float, bound_mode: str, log_base: float = 2.0) -> tuple[float, float, bool]:
    """Solve ``miss2(delta/c) / miss1(delta) = log(n/eps) / eps`` for ``delta``.

    ``eps`` is the per-property budget (already halved by the caller).  The
    bracket is ``[2c, 50c]`` for simple bounds, which are only proven there,
    and ``[c, 50c]`` for tight bounds, which hold for every ``delta``.  When
    the ratio already exceeds the target at the lower end the lower end is
    returned with ``clamped=True``: both error conditions then hold with slack.

    Returns ``(delta, relative_residual, clamped)``.
    """
    if bound_mode not in BOUND_MODES:
        raise ValueError(f"bound_mode must be one of {BOUND_MODES}, got {bound_mode!r}")
    log_target = math.log(_log(n / eps, log_base) / eps)

    def f(d: float) -> float:
        return log_miss2(d / c, bound_mode) - log_miss1(d, bound_mode) - log_target

    lo = (2.0 if bound_mode == "simple" else 1.0) * c
    hi = 50.0 * c
    f_lo = f(lo)
    if f_lo >= 0:
        return lo, math.expm1(f_lo), True
    if f(hi) < 0:
        raise InfeasiblePlanError(f"no delta in [{lo:g}, {hi:g}] satisfies the width equation")
    while hi - lo > _DELTA_RTOL * hi:
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    delta = 0.5 * (lo + hi)
    residual = abs(math.expm1(f(delta)))
    if residual > _MAX_RESIDUAL:
        raise InfeasiblePlanError(f"bisection residual {residual:.3g} above {_MAX_RESIDUAL}")
    return delta, residual, False


def _single(n, c, eps_eff, bound_mode, log_base):
    delta, residual, clamped = solve_delta(n, c, eps_eff, bound_mode, log_base)
    k = math.exp(-log_miss2(delta / c, bound_mode))
    w = max(1, math.ceil(k * _log(n / eps_eff, log_base)))
    return delta, k, w, residual, clamped


def plan_single_lookup(
    n: int, c: float, epsilon: float, bound_mode: str = "tight", log_base: float = 2.0
) -> Plan:
    """One lookup, one distance computation, error probability <= ``epsilon``.

    The false-negative and false-positive events each get ``epsilon / 2``.
    """
    _check_args(n, c, epsilon)
    delta, k, w, residual, clamped = _single(n, c, epsilon / 2, bound_mode, log_base)
    return Plan("single", delta, w, k, 1, c, epsilon, n, bound_mode, True,
                log_base=log_base, residual=residual, clamped=clamped)


def plan_multi_lookup(
    n: int, c: float, epsilon: float, bound_mode: str = "tight", log_base: float = 2.0
) -> Plan:
    """``ceil(log2(1/epsilon))`` independent tables, each failing w.p. <= 1/2.

    Each trial is planned with total error 1/4 (1/8 per property).  The
    repeats share one table; a prefix of ``ceil(log2(repeats))`` cared
    ternions selects the version.
    """
    _check_args(n, c, epsilon)
    delta, k, w, residual, clamped = _single(n, c, 1 / 8, bound_mode, log_base)
    repeats = max(1, math.ceil(math.log2(1 / epsilon) - 1e-12))
    prefix = math.ceil(math.log2(repeats)) if repeats > 1 else 0
    return Plan("multi", delta, w, k, repeats, c, epsilon, n, bound_mode, True,
                prefix_width=prefix, log_base=log_base, residual=residual, clamped=clamped,
                notes={"trial_error": 0.25})


def min_log_width_k() -> float:
    return 1.0 / miss2_simple(2.0)


def plan_log_width(n: int, c: float, epsilon: float, k: float, log_base: float = 2.0) -> Plan:
    """Width ``k log(n/eps)`` with ``delta = alpha c`` where ``k = 1/(1 - p2(alpha))``.

    ``feasible`` reports whether ``c^2 >= ln((k/eps) log(n/eps))``, the
    regime in which the near-point guarantee holds.
    """
    _check_args(n, c, epsilon)
    kmin = min_log_width_k()
    if k < kmin:
        raise ValueError(f"k={k:g} below the minimum {kmin:.6g} (needs alpha >= 2)")
    target = -math.log(k)
    lo, hi = 2.0, 2.0
    while math.log(miss2_simple(hi)) > target:
        hi *= 2
    while hi - lo > _DELTA_RTOL * hi:
        mid = 0.5 * (lo + hi)
        if math.log(miss2_simple(mid)) > target:
            lo = mid
        else:
            hi = mid
    alpha = 0.5 * (lo + hi)
    log_term = _log(n / epsilon, log_base)
    w = max(1, math.ceil(k * log_term))
    feasible = c * c >= math.log((k / epsilon) * log_term)
    return Plan("logwidth", alpha * c, w, k, 1, c, epsilon, n, "simple", feasible,
                log_base=log_base, notes={"alpha": alpha})
