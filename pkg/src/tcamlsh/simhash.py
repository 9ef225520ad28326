"""Signed-random-projection document signatures embedded as +-scale/sqrt(bits) vectors."""

from __future__ import annotations

import math
import zlib
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .datagen import PointSet, QuerySet
from .seeds import derive_seed, rng_for

Token = Union[int, str]

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def _mix64(x: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer, vectorized."""
    with np.errstate(over="ignore"):
        x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return x ^ (x >> np.uint64(31))


def token_id(token: Token) -> int:
    if isinstance(token, str):
        return zlib.crc32(token.encode())
    return int(token)


def token_signs(token: Token, bits: int, seed: int) -> np.ndarray:
    """``h_j(token)`` in {-1, +1} for ``j < bits``."""
    base = np.uint64(derive_seed(seed, "simhash", token_id(token) & 0xFFFFFFFFFFFF))
    with np.errstate(over="ignore"):
        h = _mix64(base + _GOLDEN * np.arange(1, bits + 1, dtype=np.uint64))
    return np.where(h >> np.uint64(63), 1.0, -1.0)


def simhash_signature(features: Iterable[tuple[Token, float]], bits: int, seed: int) -> np.ndarray:
    """Boolean signature: bit ``j`` set iff ``sum(weight * h_j(token)) > 0``."""
    if bits < 1:
        raise ValueError(f"bits must be >= 1, got {bits}")
    acc = np.zeros(bits)
    empty = True
    for token, weight in features:
        acc += float(weight) * token_signs(token, bits, seed)
        empty = False
    if empty:
        raise ValueError("a document needs at least one feature")
    return acc > 0


def embed_signature(sig: np.ndarray, scale: float) -> np.ndarray:
    sig = np.asarray(sig, dtype=bool)
    return np.where(sig, 1.0, -1.0) * (scale / math.sqrt(sig.shape[-1]))


def simhash_embed(features: Iterable[tuple[Token, float]], bits: int, scale: float, seed: int) -> np.ndarray:
    return embed_signature(simhash_signature(features, bits, seed), scale)


def flip_distance(k: int, bits: int, scale: float) -> float:
    """Euclidean distance between embeddings differing in ``k`` bits."""
    return 2.0 * scale * math.sqrt(k / bits)


def default_scale(bits: int, max_flips: int = 3, l: float = 1.0) -> float:
    """Scale placing ``max_flips`` flipped bits exactly at distance ``l``."""
    return l * math.sqrt(bits) / (2.0 * math.sqrt(max_flips))


def flip_bits(sig: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    sig = np.array(sig, dtype=bool)
    if not 0 <= k <= sig.shape[-1]:
        raise ValueError(f"cannot flip {k} of {sig.shape[-1]} bits")
    idx = rng.choice(sig.shape[-1], k, replace=False)
    sig[idx] = ~sig[idx]
    return sig


def read_feature_file(path) -> list[list[tuple[str, float]]]:
    """One document per line of whitespace-separated ``token:weight`` pairs."""
    docs = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        feats = []
        for item in line.split():
            token, sep, weight = item.rpartition(":")
            if not sep or not token:
                raise ValueError(f"{path}:{lineno}: expected token:weight, got {item!r}")
            try:
                feats.append((token, float(weight)))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: bad weight in {item!r}") from None
        docs.append(feats)
    return docs


def gen_simhash_dataset(
    docs: Sequence[Sequence[tuple[Token, float]]],
    bits: int,
    count: int,
    seed: int,
    scale: Optional[float] = None,
    max_flips: int = 3,
) -> tuple[PointSet, QuerySet]:
    """Embed every document; queries flip 1..``max_flips`` bits of random documents."""
    if not docs:
        raise ValueError("no documents")
    scale = default_scale(bits, max_flips) if scale is None else scale
    sigs = np.array([simhash_signature(f, bits, seed) for f in docs])
    rng = rng_for(seed, "simhash-queries")
    ids = rng.integers(0, len(docs), count)
    flips = rng.integers(1, max_flips + 1, count)
    Q = np.array([embed_signature(flip_bits(sigs[i], k, rng), scale) for i, k in zip(ids, flips)])
    dist = np.array([flip_distance(k, bits, scale) for k in flips])
    meta = {"generator": "simhash", "bits": bits, "scale": scale, "seed": seed, "max_flips": max_flips}
    return PointSet(embed_signature(sigs, scale), meta), QuerySet(Q, ids, dist, dict(meta, count=count))
