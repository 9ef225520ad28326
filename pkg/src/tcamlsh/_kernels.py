"""Compiled hash-and-pack loop; equivalent to the numpy path in hashing.py."""

from __future__ import annotations

import math

import numba
import numpy as np


@numba.njit(cache=True, nogil=True, boundscheck=False)
def planes_from_projections(P, offsets, delta):
    n, w = P.shape
    nc = (w + 63) // 64
    value = np.zeros((n, nc), np.uint64)
    care = np.zeros((n, nc), np.uint64)
    for r in range(n):
        for k in range(nc):
            lo = k * 64
            hi = min(w, lo + 64)
            cv = np.uint64(0)
            vv = np.uint64(0)
            for i in range(lo, hi):
                j = np.int64(math.floor((P[r, i] + offsets[i]) / delta)) & 3
                sh = np.uint64(i - lo)
                cv |= np.uint64(1 - (j & 1)) << sh
                vv |= np.uint64(j >> 1 & ~j & 1) << sh
            care[r, k] = cv
            value[r, k] = vv
    return value, care
