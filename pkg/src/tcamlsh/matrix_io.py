"""Dense float matrix files: ``(n, d)`` as two uint64 LE, then row-major float64 LE."""

from __future__ import annotations

from pathlib import Path

import numpy as np

_HEADER = np.dtype("<u8")
_BODY = np.dtype("<f8")


def matrix_to_bytes(X: np.ndarray) -> bytes:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {X.shape}")
    return np.array(X.shape, _HEADER).tobytes() + np.ascontiguousarray(X, _BODY).tobytes()


def matrix_from_bytes(data: bytes) -> np.ndarray:
    if len(data) < 16:
        raise ValueError("truncated matrix header")
    n, d = (int(v) for v in np.frombuffer(data, _HEADER, 2))
    expected = 16 + 8 * n * d
    if len(data) != expected:
        raise ValueError(f"matrix body is {len(data) - 16} bytes, header ({n}, {d}) needs {expected - 16}")
    return np.frombuffer(data, _BODY, n * d, 16).reshape(n, d).astype(np.float64)


def save_matrix(path, X: np.ndarray) -> None:
    Path(path).write_bytes(matrix_to_bytes(X))


def load_matrix(path) -> np.ndarray:
    return matrix_from_bytes(Path(path).read_bytes())
