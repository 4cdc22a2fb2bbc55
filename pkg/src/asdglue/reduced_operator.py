"""Discrete gauge-fixed operator (D_g, L*_g) for diagonal perturbations.

A perturbation is h = diag(h0, h1, h2, h3) in the orthonormal Cartan frame with
h0 = -(h1 + h2 + h3); only (h1, h2, h3) are stored, component-major. The
perturbed profile is q(1 + h0) dt^2 + sum a_i^2 (1 + h_i) sigma_i^2. Gauge
vector fields f(t) d_t are sampled at grid midpoints.
"""

from __future__ import annotations

import numpy as np

from ._fd import diff, midpoint_matrix
from .cohom_one import CoframeProfile, wplus_reduced
from .cyl_spectral import EndCondition, TruncatedOperator, reduced_asd_model
from .errors import ValidationError

TRACEFREE = np.array([[1.0, -1.0, 0.0], [1.0, 1.0, -2.0]]) / np.array([[np.sqrt(2.0)], [np.sqrt(6.0)]])
FD_ORDER = 4
DEPENDENCE = 13  # columns further apart than this never share a W+ row


def split(h: np.ndarray, n: int) -> np.ndarray:
    """Reshape a flat perturbation to (3, n)."""
    h = np.asarray(h, dtype=float)
    if h.size != 3 * n:
        raise ValidationError(f"perturbation has {h.size} entries, expected {3 * n}")
    return h.reshape(3, n)


def full_diagonal(h: np.ndarray) -> np.ndarray:
    """(h0, h1, h2, h3) from (h1, h2, h3)."""
    return np.vstack([-h.sum(axis=0, keepdims=True), h])


def positivity_margin(h: np.ndarray) -> float:
    """Smallest eigenvalue of 1 + h over the grid."""
    return float(1.0 + full_diagonal(h).min())


def perturb(p: CoframeProfile, h) -> CoframeProfile:
    """g(1 + h) with derivatives from the background plus differences of h."""
    h = split(h, p.n)
    if positivity_margin(h) <= 0:
        raise ValidationError("1 + h is not positive definite")
    dq, da, d2a = p.derivatives()
    step = p.dt
    h0 = -h.sum(axis=0)
    h0t = diff(h0, step, 0, 1, FD_ORDER)
    ht = diff(h, step, 1, 1, FD_ORDER)
    htt = diff(h, step, 1, 2, FD_ORDER)
    s = np.sqrt(1.0 + h)
    st = ht / (2 * s)
    stt = htt / (2 * s) - ht**2 / (4 * s**3)
    q = p.q * (1 + h0)
    return CoframeProfile(p.t, q, p.a * s, p.quotient_k, p.orientation,
                          dq * (1 + h0) + p.q * h0t,
                          da * s + p.a * st,
                          d2a * s + 2 * da * st + p.a * stt, p.fd_order)


def wplus_rows(p: CoframeProfile, h=None) -> np.ndarray:
    """Trace-free reduced W+ components (2, n) of g(1 + h)."""
    g = p if h is None else perturb(p, h)
    return TRACEFREE @ wplus_reduced(g).W


def volume_density(p: CoframeProfile) -> np.ndarray:
    """sqrt(q) a1 a2 a3 times the volume of the cross-section coframe."""
    return np.sqrt(p.q) * np.prod(p.a, axis=0) * 16 * np.pi**2 / p.quotient_k


def w_jacobian(p: CoframeProfile, h=None, eps: float = 1e-6) -> np.ndarray:
    """d/ds of wplus_rows(p, h + s e_j) by coloured central differences, shape (2n, 3n)."""
    n = p.n
    h = np.zeros(3 * n) if h is None else np.asarray(h, dtype=float).ravel()
    step = eps * max(1.0, np.abs(h).max())
    J = np.zeros((2 * n, 3 * n))
    for c in range(3):
        for color in range(DEPENDENCE):
            cols = np.arange(color, n, DEPENDENCE)
            if cols.size == 0:
                continue
            e = np.zeros((3, n))
            e[c, cols] = 1.0
            e = e.ravel()
            dW = (wplus_rows(p, h + step * e) - wplus_rows(p, h - step * e)) / (2 * step)
            for j in cols:
                lo, hi = max(0, j - DEPENDENCE // 2), min(n, j + DEPENDENCE // 2 + 1)
                for r in range(2):
                    J[r * n + lo:r * n + hi, c * n + j] = dW[r, lo:hi]
    return J


def _log_derivative(w, step):
    return diff(np.log(w), step, 0, 1, FD_ORDER)


def lstar_matrix(p: CoframeProfile, weight=None, weighted: bool = False) -> np.ndarray:
    """Formal adjoint of L at the midpoints, shape (n - 1, 3n).

    L* h = [2 sum h_i' + 2 S sum h_i + 2 sum c_i h_i] / q with c_i = a_i'/a_i,
    S = sum c_i (metric inner products). With ``weighted`` the adjoint is taken
    in the w^2-weighted inner products, adding 4 (w'/w) sum h_i / q.
    """
    n, step = p.n, p.dt
    _, da, _ = p.derivatives()
    c = da / p.a
    S = c.sum(axis=0)
    P0 = midpoint_matrix(n, step, 0, FD_ORDER)
    P1 = midpoint_matrix(n, step, 1, FD_ORDER)
    qm = P0 @ p.q
    cm = c @ P0.T
    Sm = P0 @ S
    extra = np.zeros(n - 1)
    if weighted:
        if weight is None:
            raise ValidationError("weighted adjoint needs a weight")
        extra = 4 * (P0 @ _log_derivative(np.asarray(weight, float), step))
    blocks = []
    for i in range(3):
        blocks.append((2 * P1 + (2 * Sm + 2 * cm[i] + extra)[:, None] * P0) / qm[:, None])
    return np.hstack(blocks)


def mass_matrices(p: CoframeProfile, weight=None) -> tuple[np.ndarray, np.ndarray]:
    """Discrete inner products on perturbations (3n) and on gauge fields (n - 1)."""
    n, step = p.n, p.dt
    w2 = np.ones(n) if weight is None else np.asarray(weight, float) ** 2
    mu = volume_density(p) * w2 * step
    G = np.eye(3) + np.ones((3, 3))
    Mh = np.kron(G, np.diag(mu))
    P0 = midpoint_matrix(n, step, 0, FD_ORDER)
    Mx = np.diag(P0 @ (p.q * volume_density(p) * w2) * step)
    return Mh, Mx


def l_matrix(p: CoframeProfile, weight=None, weighted: bool = False) -> np.ndarray:
    """Exact discrete adjoint of :func:`lstar_matrix` in the matching inner products, (3n, n - 1)."""
    Ls = lstar_matrix(p, weight, weighted)
    Mh, Mx = mass_matrices(p, weight if weighted else None)
    return np.linalg.solve(Mh, Ls.T @ Mx)


def l_apply(p: CoframeProfile, f, df) -> np.ndarray:
    """Continuum L(f d_t) at the nodes: trace-free part of the Lie derivative, (3, n)."""
    dq, da, _ = p.derivatives()
    v = np.vstack([f * dq / p.q + 2 * df, 2 * f * da / p.a])
    v = v - v.mean(axis=0)
    return v[1:]


def kept_nodes(n: int) -> np.ndarray:
    return np.arange(1, n - 1)


def operator(p: CoframeProfile, h=None, weight=None, left: EndCondition | None = None,
             right: EndCondition | None = None, weighted_adjoint: bool = False,
             J: np.ndarray | None = None) -> TruncatedOperator:
    """Linearized (D, L*) at g(1 + h) as a truncated operator with end functionals."""
    n = p.n
    J = w_jacobian(p, h) if J is None else J
    keep = kept_nodes(n)
    rows = np.concatenate([keep, n + keep])
    Ls = lstar_matrix(p, weight, weighted_adjoint)
    A = np.vstack([J[rows], Ls])
    tm = 0.5 * (p.t[1:] + p.t[:-1])
    row_t = np.concatenate([p.t[keep], p.t[keep], tm])
    w = np.ones(n) if weight is None else np.asarray(weight, float)
    block = reduced_asd_model(p.orientation).modes[0]
    left = EndCondition("cap") if left is None else left
    right = EndCondition("cap") if right is None else right
    return TruncatedOperator(p.t, A, row_t, [p.t, p.t, p.t], left, right, block, block, w,
                             row_stagger=[False, False, True])


def residual_vector(p: CoframeProfile, h, Ls: np.ndarray, B: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Nonlinear residual pieces (W rows at kept nodes, gauge rows, end rows)."""
    n = p.n
    keep = kept_nodes(n)
    W = wplus_rows(p, h)[:, keep].ravel()
    hv = np.asarray(h, float).ravel()
    return W, Ls @ hv, B @ hv
