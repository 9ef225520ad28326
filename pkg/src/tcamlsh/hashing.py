"""Ternary hash family over Euclidean space and its collision probabilities.

Each function projects a point on a Gaussian direction ``a``, shifts by an
offset ``b`` drawn from ``U(0, 2*delta)`` and cuts the line into cells of
width ``delta`` labelled ``0, *, 1, *, 0, ...``.  Two points collide when
their labels match under the TCAM relation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import erfc, erfcx

from . import _kernels
from .ternary import Ternion, TernaryWord, n_chunks

SQRT_2PI = math.sqrt(2.0 * math.pi)
SCHEME_FORMAT_VERSION = 1

# phi(y) underflows past this argument
_PHI_CUTOFF = 40.0
_SERIES_FROM = 10.0
_ROW_BLOCK = 8192
# bound on projection elements held at once while hashing a batch
_BLOCK_ELEMS = 1 << 22


@dataclass(frozen=True, eq=False)
class TernaryHashFunction:
    """One member ``g_{a,b}`` of the family with cell width ``delta``."""

    a: np.ndarray
    b: float
    delta: float

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.float64).reshape(-1)
        if a.size < 1:
            raise ValueError("projection vector must have dimension >= 1")
        if not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if not 0 < self.b < 2 * self.delta:
            raise ValueError(f"offset b={self.b} outside (0, 2*delta)")
        a.flags.writeable = False
        object.__setattr__(self, "a", a)

    @property
    def d(self) -> int:
        return self.a.size

    def __call__(self, x) -> Ternion:
        return hash_point(self, x)


def _open_uniform(rng: np.random.Generator, high: float, size=None):
    # Generator.uniform draws from [0, high); zero is rejected so b stays interior.
    u = rng.uniform(0.0, high, size)
    if size is None:
        while u <= 0.0:
            u = rng.uniform(0.0, high)
        return u
    bad = u <= 0.0
    while bad.any():
        u[bad] = rng.uniform(0.0, high, int(bad.sum()))
        bad = u <= 0.0
    return u


def sample_hash_function(d: int, delta: float, rng: np.random.Generator) -> TernaryHashFunction:
    """Draw ``a ~ N(0, I_d)`` and ``b ~ U(0, 2*delta)`` from ``rng``."""
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    a = rng.standard_normal(d)
    b = _open_uniform(rng, 2.0 * delta)
    return TernaryHashFunction(a=a, b=float(b), delta=float(delta))


def cell_codes(shifted: np.ndarray, delta: float) -> np.ndarray:
    """Map ``x.a + b`` values to ternion codes (0, 1, 2 for ``*``)."""
    j = np.floor(np.asarray(shifted, dtype=np.float64) / delta).astype(np.int64) & 3
    codes = np.full(j.shape, Ternion.STAR, dtype=np.int8)
    codes[j == 0] = Ternion.ZERO
    codes[j == 2] = Ternion.ONE
    return codes


def hash_point(g: TernaryHashFunction, x) -> Ternion:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size != g.d:
        raise ValueError(f"dimension mismatch: point has {x.size}, function expects {g.d}")
    # floor then & 3 is the non-negative modulus, also for negative projections
    return Ternion(int(cell_codes(float(x @ g.a) + g.b, g.delta)))


@dataclass(frozen=True, eq=False)
class SignatureScheme:
    """``w`` independent hash functions sharing ``d`` and ``delta``.

    The functions are a deterministic function of ``(d, w, delta, seed)``:
    directions come from one child stream of ``SeedSequence(seed)`` and
    offsets from another, with ``b_i = delta * beta_i`` and
    ``beta_i ~ U(0, 2)``.  Directions use numpy's PCG64 ``standard_normal``
    (ziggurat).  Consequences worth relying on: the first ``w'`` functions of
    a width-``w`` scheme are the width-``w'`` scheme, and changing ``delta``
    rescales the offsets without redrawing anything.
    """

    d: int
    w: int
    delta: float
    seed: int
    directions: np.ndarray = field(init=False, repr=False)
    unit_offsets: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"dimension must be >= 1, got {self.d}")
        if self.w < 0:
            raise ValueError(f"width must be >= 0, got {self.w}")
        if not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        a_seq, b_seq = np.random.SeedSequence(int(self.seed)).spawn(2)
        A = np.random.default_rng(a_seq).standard_normal((self.w, self.d))
        beta = _open_uniform(np.random.default_rng(b_seq), 2.0, self.w)
        A.flags.writeable = False
        beta.flags.writeable = False
        object.__setattr__(self, "directions", A)
        object.__setattr__(self, "unit_offsets", beta)

    @property
    def offsets(self) -> np.ndarray:
        return self.delta * self.unit_offsets

    @property
    def functions(self) -> list[TernaryHashFunction]:
        return [
            TernaryHashFunction(a=self.directions[i], b=float(self.offsets[i]), delta=self.delta)
            for i in range(self.w)
        ]

    def with_delta(self, delta: float) -> SignatureScheme:
        return SignatureScheme(self.d, self.w, delta, self.seed)

    def _check(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.d:
            raise ValueError(f"dimension mismatch: points have {X.shape[1]}, scheme expects {self.d}")
        return X

    def project(self, X) -> np.ndarray:
        """Raw projections ``X @ A.T`` (no offset), shape ``(n, w)``."""
        return self._check(X) @ self.directions.T

    def codes_from_projections(self, P: np.ndarray) -> np.ndarray:
        return cell_codes(P + self.offsets, self.delta)

    def planes_from_projections(self, P: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        P = np.ascontiguousarray(P, dtype=np.float64)
        if P.ndim != 2 or P.shape[1] != self.w:
            raise ValueError(f"projections must have shape (n, {self.w})")
        return _kernels.planes_from_projections(P, np.ascontiguousarray(self.offsets), float(self.delta))

    def signature_planes(self, X) -> tuple[np.ndarray, np.ndarray]:
        """Packed ``(value, care)`` planes for every row of ``X``."""
        X = self._check(X)
        nc = n_chunks(self.w)
        value = np.empty((len(X), nc), np.uint64)
        care = np.empty((len(X), nc), np.uint64)
        block = max(1, min(_ROW_BLOCK, _BLOCK_ELEMS // max(self.w, 1)))
        for lo in range(0, len(X), block):
            hi = lo + block
            value[lo:hi], care[lo:hi] = self.planes_from_projections(X[lo:hi] @ self.directions.T)
        return value, care

    def signature(self, x) -> TernaryWord:
        value, care = self.signature_planes(x)
        if value.shape[0] != 1:
            raise ValueError("signature() takes a single point; use signature_planes for batches")
        return TernaryWord.from_planes(self.w, value[0], care[0])

    def to_record(self) -> dict:
        return {
            "format": "tcamlsh-scheme",
            "version": SCHEME_FORMAT_VERSION,
            "d": self.d,
            "w": self.w,
            "delta": self.delta,
            "seed": int(self.seed),
        }

    @classmethod
    def from_record(cls, record: dict) -> SignatureScheme:
        if record.get("version") != SCHEME_FORMAT_VERSION:
            raise ValueError(f"unsupported scheme record version {record.get('version')!r}")
        return cls(int(record["d"]), int(record["w"]), float(record["delta"]), int(record["seed"]))

    def to_json(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> SignatureScheme:
        return cls.from_record(json.loads(text))


def signature(scheme: SignatureScheme, x) -> TernaryWord:
    return scheme.signature(x)


# --- probabilities -----------------------------------------------------------


def psi_bar(t, delta: float):
    """Mismatch probability of two points whose projections differ by ``t``.

    Piecewise linear with period ``4*delta``: zero up to ``delta``, rising
    to 1/2 at ``2*delta``, back to zero at ``3*delta``, zero to ``4*delta``.
    """
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0):
        raise ValueError("projection gap must be non-negative")
    s = np.mod(t, 4.0 * delta) / delta
    out = np.where(s <= 1, 0.0, np.where(s <= 2, (s - 1) / 2, np.where(s <= 3, (3 - s) / 2, 0.0)))
    return float(out) if out.ndim == 0 else out


def _phi_array(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    out = np.zeros_like(y)
    mid = y < _SERIES_FROM
    ym = y[mid]
    out[mid] = np.exp(-ym * ym / 2) * (1.0 / (ym * SQRT_2PI) - 0.5 * erfcx(ym / math.sqrt(2.0)))
    big = (~mid) & (y < _PHI_CUTOFF)
    if big.any():
        yb = y[big]
        inv = 1.0 / (yb * yb)
        term = inv.copy()
        acc = term.copy()
        for k in range(2, 30):
            term = -term * (2 * k - 1) * inv
            acc += term
        out[big] = np.exp(-yb * yb / 2) / (yb * SQRT_2PI) * acc
    return out


def phi(y):
    """``exp(-y^2/2) / (y sqrt(2 pi)) - Fbar(y)`` for ``y > 0``.

    ``Fbar`` is the standard normal upper tail.  Below ``y = 10`` the
    difference is taken through the scaled complementary error function;
    above it the asymptotic expansion is summed, which avoids cancelling two
    nearly equal tails.
    """
    y_arr = np.asarray(y, dtype=np.float64)
    if np.any(~(y_arr > 0)):
        raise ValueError("phi is defined for y > 0")
    out = _phi_array(np.atleast_1d(y_arr))
    return float(out[0]) if y_arr.ndim == 0 else out.reshape(y_arr.shape)


def normal_sf(y):
    return 0.5 * erfc(np.asarray(y, dtype=np.float64) / math.sqrt(2.0))


def phi_simple_bounds(y: float) -> tuple[float, float]:
    """Lower/upper bounds ``e^{-y^2/2} / (c y^3 sqrt(2 pi))`` with c = 4, 1.

    The lower bound is only valid for ``y >= 2``.
    """
    base = math.exp(-y * y / 2) / (y**3 * SQRT_2PI)
    return base / 4.0, base


def _tight_lo_ratio(y: float) -> float:
    return (4 / math.pi) / (y * y + y * math.sqrt(y * y + 8 / math.pi) + 4 / math.pi)


def _tight_hi_ratio(y: float) -> float:
    return 2.0 / (y * y + y * math.sqrt(y * y + 4) + 2)


def phi_tight_bounds(y: float) -> tuple[float, float]:
    """Bounds on ``phi`` from the rational tail bounds on the normal CDF."""
    g = math.exp(-y * y / 2) / (y * SQRT_2PI)
    return _tight_lo_ratio(y) * g, _tight_hi_ratio(y) * g


def _mismatch_scalar(x: float, delta: float) -> float:
    if x == 0.0:
        return 0.0
    r = delta / x
    # ramp decomposition of psi_bar: sum_k G(4k+1) - 2 G(4k+2) + G(4k+3), G(m) = m phi(m r)
    kmax = int(math.ceil(_PHI_CUTOFF / (4 * r))) + 1
    k = np.arange(kmax, dtype=np.float64)
    m1, m2, m3 = 4 * k + 1, 4 * k + 2, 4 * k + 3
    g1 = m1 * _phi_array(m1 * r)
    g2 = m2 * _phi_array(m2 * r)
    g3 = m3 * _phi_array(m3 * r)
    total = float(np.sum((g1 - g2) + (g3 - g2)))
    return min(max(total, 0.0), 0.5)


def mismatch_prob(x, delta: float):
    """``1 - collision_prob(x, delta)``, computed without the subtraction."""
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    x_arr = np.asarray(x, dtype=np.float64)
    if np.any(x_arr < 0):
        raise ValueError("distance must be non-negative")
    out = np.array([_mismatch_scalar(float(v), float(delta)) for v in x_arr.reshape(-1)])
    return float(out[0]) if x_arr.ndim == 0 else out.reshape(x_arr.shape)


def collision_prob(x, delta: float):
    """Probability that one random hash function matches two points ``x`` apart.

    Integrates ``1 - psi_bar(t)`` against the density of ``x * |N(0, 1)|``.
    Because ``psi_bar`` is a sum of ramps, the integral is a finite sum of
    ``phi`` terms and is evaluated in closed form.
    """
    return 1.0 - mismatch_prob(x, delta)


# --- closed-form per-ternion bounds -----------------------------------------


def miss1_simple(z: float) -> float:
    return math.exp(-z * z / 2) / (z**3 * SQRT_2PI)


def miss2_simple(z: float) -> float:
    return math.exp(-z * z / 2) / (5 * z**3 * SQRT_2PI)


def p1(z: float) -> float:
    """Lower bound on the match probability at distance <= 1 for ``delta = z``."""
    if not z > 0:
        raise ValueError(f"p1 requires z > 0, got {z}")
    return 1.0 - miss1_simple(z)


def p2(z: float) -> float:
    """Upper bound on the match probability at distance >= c for ``z = delta / c``."""
    if not z > 0:
        raise ValueError(f"p2 requires z > 0, got {z}")
    return 1.0 - miss2_simple(z)


def log_miss1(delta: float, mode: str = "simple") -> float:
    """log of an upper bound on the per-ternion miss probability at distance 1."""
    lg = -delta * delta / 2 - math.log(delta * SQRT_2PI)
    if mode == "simple":
        return lg - 2 * math.log(delta)
    if mode == "tight":
        return lg + math.log(_tight_hi_ratio(delta))
    raise ValueError(f"unknown bound mode {mode!r}")


def log_miss2(z: float, mode: str = "simple") -> float:
    """log of a lower bound on the per-ternion miss probability at distance ``c``.

    ``z = delta / c``.  The tight form integrates only the first triangle of
    ``psi_bar``, ``phi(z) - 4 phi(2z) + 3 phi(3z)``, with each ``phi`` replaced
    by the matching side of its rational bound.  The common ``exp(-z^2/2)``
    factor is pulled out so the value stays finite for large ``z``.
    """
    lg = -z * z / 2 - math.log(z * SQRT_2PI)
    if mode == "simple":
        return lg - math.log(5.0) - 2 * math.log(z)
    if mode == "tight":
        inner = (_tight_lo_ratio(z)
                 - 2.0 * _tight_hi_ratio(2 * z) * math.exp(-1.5 * z * z)
                 + _tight_lo_ratio(3 * z) * math.exp(-4.0 * z * z))
        if inner <= 0:
            return -math.inf
        return lg + math.log(inner)
    raise ValueError(f"unknown bound mode {mode!r}")


class MatchBounds(NamedTuple):
    p_near: float
    p_far: float
    guaranteed: bool


def match_bounds(delta: float, c: float, mode: str = "simple") -> MatchBounds:
    """Per-ternion bounds ``(p1(delta), p2(delta/c))`` under ``mode``.

    ``guaranteed`` is False for simple bounds outside ``delta >= 2c``, where
    the closed forms are still evaluated but no longer proven.
    """
    m1 = math.exp(log_miss1(delta, mode))
    m2 = math.exp(log_miss2(delta / c, mode))
    guaranteed = mode == "tight" or delta >= 2 * c
    return MatchBounds(1.0 - m1, 1.0 - m2, guaranteed)


class RhoEstimate(NamedTuple):
    approx: float
    exact: float


def rho_estimate(delta: float, c: float) -> RhoEstimate:
    """Large-delta approximation of ``log p1(delta) / log p2(delta/c)`` and the exact ratio."""
    if not c > 1:
        raise ValueError(f"c must exceed 1, got {c}")
    if delta < 2 * c:
        raise ValueError(f"delta={delta} below 2c={2 * c}")
    approx = c**-3 * math.exp(-delta * delta * (c * c - 1) / (2 * c * c))
    exact = math.log1p(-miss1_simple(delta)) / math.log1p(-miss2_simple(delta / c))
    return RhoEstimate(approx, exact)
