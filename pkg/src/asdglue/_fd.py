"""Uniform-grid finite-difference stencils shared by the curvature pipelines."""

from __future__ import annotations

from functools import lru_cache
from math import factorial

import numpy as np


@lru_cache(maxsize=None)
def stencil_weights(offsets: tuple, deriv: int) -> np.ndarray:
    """Weights ``c`` with ``sum_j c_j f(x + o_j h) ~ h**deriv f^(deriv)(x)``."""
    off = np.asarray(offsets, dtype=float)
    k = np.arange(len(off))[:, None]
    vander = off[None, :] ** k
    rhs = np.zeros(len(off))
    rhs[deriv] = factorial(deriv)
    return np.linalg.solve(vander, rhs)


def _sizes(deriv: int, order: int) -> tuple[int, int]:
    if order % 2 or order < 2:
        raise ValueError("order must be a positive even integer")
    half = (deriv + 1) // 2 + order // 2 - 1
    return half, deriv + order


def min_nodes(deriv: int, order: int) -> int:
    """Smallest axis length on which :func:`diff` is defined."""
    half, nb = _sizes(deriv, order)
    return max(2 * half + 1, nb)


def diff(f: np.ndarray, h: float, axis: int = 0, deriv: int = 1, order: int = 4) -> np.ndarray:
    """Derivative along ``axis``: central stencils inside, one-sided stencils near the ends.

    An axis of length one is treated as an inactive direction and yields zeros.
    """
    f = np.asarray(f, dtype=float)
    n = f.shape[axis]
    if n == 1:
        return np.zeros_like(f)
    if n < min_nodes(deriv, order):
        raise ValueError(f"need at least {min_nodes(deriv, order)} nodes, got {n}")
    a = np.moveaxis(f, axis, 0)
    out = np.zeros_like(a)
    half, nb = _sizes(deriv, order)
    w = stencil_weights(tuple(range(-half, half + 1)), deriv)
    for j, c in enumerate(w):
        out[half:n - half] += c * a[j:n - 2 * half + j]
    for i in list(range(half)) + list(range(n - half, n)):
        start = 0 if i < half else n - nb
        offs = tuple(range(start - i, start - i + nb))
        wb = stencil_weights(offs, deriv)
        out[i] = np.tensordot(wb, a[start:start + nb], axes=(0, 0))
    return np.moveaxis(out, 0, axis) / h**deriv


def diff_matrix(n: int, h: float, deriv: int = 1, order: int = 4) -> np.ndarray:
    """Dense matrix of :func:`diff` acting on a length-``n`` vector."""
    return diff(np.eye(n), h, axis=0, deriv=deriv, order=order)


def midpoint_matrix(n: int, h: float, deriv: int = 0, order: int = 4) -> np.ndarray:
    """Map nodal values to derivative values at the n - 1 midpoints.

    Staggered stencils avoid the odd-even null mode of central first differences.
    """
    nb = order + deriv - deriv % 2
    if n < nb:
        raise ValueError(f"need at least {nb} nodes, got {n}")
    out = np.zeros((n - 1, n))
    for i in range(n - 1):
        start = min(max(i + 1 - nb // 2, 0), n - nb)
        offs = tuple(start + j - i - 0.5 for j in range(nb))
        out[i, start:start + nb] = stencil_weights(offs, deriv)
    return out / h**deriv
