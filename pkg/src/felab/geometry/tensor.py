"""Small dimension-generic points and tensors.

Points and tensors are plain read-only numpy arrays; the dimension is the
array length and is validated by every operation that combines two of them.
"""
from __future__ import annotations

import numpy as np

from ..errors import SingularTensor

SUPPORTED_DIMS = (1, 2, 3)


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def point(coords, dim: int | None = None) -> np.ndarray:
    """Return a validated, immutable point."""
    p = np.array(coords, dtype=float).reshape(-1)
    if dim is not None and p.size != dim:
        raise ValueError(f"expected a {dim}-dimensional point, got {p.size} coordinates")
    if p.size not in SUPPORTED_DIMS:
        raise ValueError(f"dimension {p.size} not supported")
    if not np.all(np.isfinite(p)):
        raise ValueError("point coordinates must be finite")
    return _frozen(p)


def tensor1(components, dim: int | None = None) -> np.ndarray:
    return point(components, dim)


def tensor2(entries, dim: int | None = None) -> np.ndarray:
    t = np.array(entries, dtype=float)
    if t.ndim != 2 or t.shape[0] != t.shape[1]:
        raise ValueError("rank-2 tensor must be square")
    if dim is not None and t.shape[0] != dim:
        raise ValueError(f"expected a {dim}x{dim} tensor")
    if not np.all(np.isfinite(t)):
        raise ValueError("tensor entries must be finite")
    return _frozen(t)


def contract(t, v) -> np.ndarray:
    """Single contraction ``(t.v)_i = sum_j t_ij v_j``."""
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    if t.shape != (v.size, v.size):
        raise ValueError(f"cannot contract {t.shape} tensor with length-{v.size} vector")
    return _frozen(t @ v)


def is_invertible(t, rtol: float = 1e-12) -> bool:
    t = np.asarray(t, dtype=float)
    d = t.shape[0]
    scale = np.linalg.norm(t)
    return abs(np.linalg.det(t)) > rtol * scale**d


def invert(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if not is_invertible(t):
        raise SingularTensor(f"tensor is singular (det={np.linalg.det(t):.3e})")
    return _frozen(np.linalg.inv(t))
