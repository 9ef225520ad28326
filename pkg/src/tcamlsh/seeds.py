"""Seed plumbing: one root seed, deterministic child seeds per purpose."""

from __future__ import annotations

import os
import zlib

import numpy as np

SEED_ENV = "TCAMLSH_SEED"
DEFAULT_SEED = 20170602


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw.strip() == "":
        return DEFAULT_SEED
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _key(k) -> int:
    if isinstance(k, str):
        return zlib.crc32(k.encode())
    k = int(k)
    if k < 0:
        raise ValueError(f"seed keys must be non-negative, got {k}")
    return k


def derive_seed(seed: int, *keys) -> int:
    """A 63-bit child seed that depends on ``seed`` and every key, in order."""
    ss = np.random.SeedSequence([_key(seed), *(_key(k) for k in keys)])
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def rng_for(seed: int, *keys) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *keys))
