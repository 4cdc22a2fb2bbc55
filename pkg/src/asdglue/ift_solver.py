"""Gauge-fixed Newton solve of W+[g(l)(1 + h)] = 0, L*_{g(l)} h = 0.

Corrections are sought in the constrained subspace U_perp(l) and computed as
weighted least-squares Gauss-Newton steps with backtracking.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import reduced_operator as ro
from .cohom_one import CoframeProfile, hopf_chart
from .cyl_spectral import EndCondition
from .errors import DivergenceError, HypothesisError, ValidationError
from .frame_curvature import wplus_chart
from .neck_glue import GluedConfig, TransversalSpec, build_transversal, kernel_bases, weight_profile

LOG_COLUMNS = ["iter", "step_norm", "residual_W", "residual_gauge", "damping", "positivity_margin"]


@dataclass
class ReducedPerturbation:
    """Diagonal trace-free perturbation stored as (h1, h2, h3); h0 = -(h1 + h2 + h3)."""

    h: np.ndarray

    def __post_init__(self):
        self.h = np.atleast_2d(np.asarray(self.h, dtype=float))
        if self.h.shape[0] != 3:
            raise ValidationError("perturbation must have shape (3, n)")
        if not np.all(np.isfinite(self.h)):
            raise ValidationError("perturbation must be finite")

    @classmethod
    def zeros(cls, n: int) -> "ReducedPerturbation":
        return cls(np.zeros((3, n)))

    @classmethod
    def from_diagonal(cls, d, tol: float = 1e-12) -> "ReducedPerturbation":
        d = np.asarray(d, dtype=float)
        if d.shape[0] != 4:
            raise ValidationError("diagonal must have shape (4, n)")
        if np.abs(d.sum(axis=0)).max() > tol * max(1.0, np.abs(d).max()):
            raise ValidationError("h0 + h1 + h2 + h3 must vanish nodewise")
        return cls(d[1:])

    @property
    def diagonal(self) -> np.ndarray:
        return ro.full_diagonal(self.h)

    @property
    def flat(self) -> np.ndarray:
        return self.h.ravel()


@dataclass
class LinearizedSystem:
    D_mat: np.ndarray  # (2 n, 3 n): W+ rows at every node
    L_mat: np.ndarray  # (3 n, n - 1)
    Lstar_mat: np.ndarray  # (n - 1, 3 n)
    B: np.ndarray  # end functionals
    constraints: TransversalSpec | None
    weight: np.ndarray
    profile: CoframeProfile
    rows_W: np.ndarray  # node indices carrying W+ equations

    def stacked(self) -> np.ndarray:
        n = self.profile.n
        rows = np.concatenate([self.rows_W, n + self.rows_W])
        return np.vstack([self.D_mat[rows], self.Lstar_mat, self.B])


@dataclass
class SolverState:
    h: ReducedPerturbation
    residual_W: float = np.inf
    residual_gauge: float = np.inf
    iterates: list = field(default_factory=list)
    positivity_margin: float = 1.0
    converged: bool = False
    message: str = ""


def linearize(g: CoframeProfile, w, h=None, constraints: TransversalSpec | None = None,
              left: EndCondition | None = None, right: EndCondition | None = None,
              weighted_adjoint: bool = False, eps: float = 1e-6) -> LinearizedSystem:
    """Assemble D (numerical directional derivatives), L and L* (exact discrete adjoints)."""
    weight = np.asarray(getattr(w, "w", w), dtype=float)
    if weight.shape != (g.n,) or np.any(weight <= 0):
        raise ValidationError("weight must be positive samples on the profile grid")
    hv = None if h is None else np.asarray(getattr(h, "flat", h), dtype=float)
    D = ro.w_jacobian(g, hv, eps)
    if not np.all(np.isfinite(D)):
        raise ValidationError("non-finite directional derivatives: reduce the perturbation or step")
    op = ro.operator(g, hv, weight, left, right, weighted_adjoint, J=D)
    Ls = ro.lstar_matrix(g, weight, weighted_adjoint)
    Lm = ro.l_matrix(g, weight, weighted_adjoint)
    return LinearizedSystem(D, Lm, Ls, op.bc_rows(), constraints, weight, g, ro.kept_nodes(g.n))


def _norms(sys: LinearizedSystem, h: np.ndarray) -> tuple[float, float, np.ndarray]:
    """Weighted residual norms and the conjugated stacked residual."""
    g = sys.profile
    n = g.n
    rows = sys.rows_W
    W = ro.wplus_rows(g, h)[:, rows]
    G = sys.Lstar_mat @ h
    vol = ro.volume_density(g)
    step = g.dt
    w = sys.weight
    tm = 0.5 * (g.t[1:] + g.t[:-1])
    wm = np.exp(np.interp(tm, g.t, np.log(w)))
    volm = np.interp(tm, g.t, vol)
    rW = float(np.sqrt(np.sum((w[rows] * W) ** 2 * vol[rows]) * step))
    rG = float(np.sqrt(np.sum((wm * G) ** 2 * volm) * step))
    F = np.concatenate([(w[rows] * W).ravel(), wm * G, sys.B @ h])
    return rW, rG, F


def _conjugated(sys: LinearizedSystem) -> np.ndarray:
    g = sys.profile
    w = sys.weight
    tm = 0.5 * (g.t[1:] + g.t[:-1])
    wm = np.exp(np.interp(tm, g.t, np.log(w)))
    rw = np.concatenate([w[sys.rows_W], w[sys.rows_W], wm, np.ones(sys.B.shape[0])])
    wc = np.tile(w, 3)
    return (rw[:, None] * sys.stacked()) / wc[None, :]


def newton_step(sys: LinearizedSystem, state: SolverState, min_damping: float = 2.0**-10,
                sigma_floor: float = 1e-10) -> SolverState:
    """One damped Gauss-Newton step on U_perp for the stacked (W+, gauge, end) system."""
    g = sys.profile
    h = state.h.flat
    rW, rG, F = _norms(sys, h)
    wc = np.tile(sys.weight, 3)
    A = _conjugated(sys)
    if sys.constraints is not None and sys.constraints.count:
        Z = linalg.null_space(sys.constraints.constraints / wc[None, :])
    else:
        Z = np.eye(A.shape[1])
    AZ = A @ Z
    U, s, Vh = linalg.svd(AZ, full_matrices=False)
    if s[-1] < sigma_floor * s[0]:
        raise ValidationError(f"restricted operator is singular (sigma_min/sigma_max = {s[-1] / s[0]:.3g})")
    dy = -(Vh.T @ ((U.T @ F) / s))
    dh = (Z @ dy) / wc
    merit0 = np.linalg.norm(F)
    damping = 1.0
    while True:
        trial = h + damping * dh
        margin = ro.positivity_margin(trial.reshape(3, -1))
        if margin > 0:
            tW, tG, tF = _norms(sys, trial)
            if np.linalg.norm(tF) < merit0 or merit0 == 0:
                break
        damping *= 0.5
        if damping < min_damping:
            raise DivergenceError("damping floor reached without decrease of the residual", state.iterates)
    it = {"iter": len(state.iterates) + 1, "step_norm": float(np.linalg.norm(damping * dh * wc) * np.sqrt(g.dt)),
          "residual_W": tW, "residual_gauge": tG, "damping": damping, "positivity_margin": margin}
    return SolverState(ReducedPerturbation(trial.reshape(3, -1)), tW, tG, state.iterates + [it], margin)


def solve_asd(cfg: GluedConfig, tol: float = 1e-9, max_iter: int = 25, L: float = 1.0, eps: float = 1.0,
              weighted_adjoint: bool = False, log_path=None, h_init=None) -> SolverState:
    """Newton/IFT loop for the glued configuration, starting from h = 0 unless ``h_init`` is given."""
    bases = kernel_bases(cfg, require_unobstructed=False)
    for i, b in enumerate(cfg.bodies):
        if b.J > 0:
            raise HypothesisError(f"body {i + 1} is obstructed (J = {b.J})")
    tspec = build_transversal(cfg, bases, L, eps)
    w = weight_profile(cfg).w
    g = cfg.metric
    if h_init is None:
        h0 = ReducedPerturbation.zeros(g.n)
    else:
        # start inside U_perp so that every iterate satisfies the constraints
        hv = np.asarray(h_init, dtype=float).ravel()
        C = tspec.constraints
        if tspec.count:
            hv = hv - C.T @ np.linalg.lstsq(C @ C.T, C @ hv, rcond=None)[0]
        h0 = ReducedPerturbation(hv.reshape(3, g.n))
    state = SolverState(h0, positivity_margin=ro.positivity_margin(h0.h))
    sys = linearize(g, w, None, tspec, cfg.left, cfg.right, weighted_adjoint)
    rW, rG, _ = _norms(sys, state.h.flat)
    state.residual_W, state.residual_gauge = rW, rG
    state.iterates.append({"iter": 0, "step_norm": 0.0, "residual_W": rW, "residual_gauge": rG,
                           "damping": 0.0, "positivity_margin": state.positivity_margin})
    for _ in range(max_iter):
        if state.residual_W <= tol and state.residual_gauge <= tol:
            state.converged = True
            break
        sys = linearize(g, w, state.h.flat, tspec, cfg.left, cfg.right, weighted_adjoint)
        try:
            state = newton_step(sys, state)
        except DivergenceError as exc:
            exc.log = state.iterates
            if log_path is not None:
                write_log(state, log_path)
            raise
        if len(state.iterates) > 3 and state.iterates[-1]["residual_W"] > 0.999 * state.iterates[-2]["residual_W"] \
                and state.residual_W > tol:
            break
    state.converged = state.residual_W <= tol and state.residual_gauge <= tol
    state.message = "converged" if state.converged else "stalled above tolerance"
    if log_path is not None:
        write_log(state, log_path)
    if not state.converged:
        raise DivergenceError(f"Newton iteration {state.message} (residual_W = {state.residual_W:.3e})",
                              state.iterates)
    return state


def write_log(state: SolverState, path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=LOG_COLUMNS)
        wr.writeheader()
        for it in state.iterates:
            wr.writerow({k: (repr(float(v)) if k != "iter" else int(v)) for k, v in it.items()})


def quadratic_tail(state: SolverState, floor: float = 1e-14) -> list[float]:
    """Ratios kappa_n = r_{n+1} / r_n^2 over iterations above the round-off floor."""
    r = [it["residual_W"] for it in state.iterates]
    return [r[i + 1] / r[i] ** 2 for i in range(len(r) - 1) if r[i + 1] > floor and r[i] > 0]


def nondegeneracy_check(state: SolverState, weight=None, dt: float = 1.0) -> dict:
    """Positivity of 1 + h, sup |h| and the weighted norm of h."""
    d = state.h.diagonal
    sup = float(np.abs(d).max())
    w = np.ones(d.shape[1]) if weight is None else np.asarray(weight, dtype=float)
    unorm = float(np.sqrt(np.sum((w * d) ** 2) * dt))
    margin = float(1.0 + d.min())
    return {"min_eigenvalue": margin, "sup_h": sup, "weighted_norm": unorm, "ok": bool(sup < 1.0 and margin > 0)}


def final_metric(cfg: GluedConfig, state: SolverState) -> CoframeProfile:
    return ro.perturb(cfg.metric, state.h.flat)


def chart_verification(p: CoframeProfile, resolutions=((9, 9), (17, 17)), t_slice=None, order: int = 4) -> dict:
    """sup |W+| of the profile in the Hopf-chart pipeline at increasing angular resolution.

    The t-axis is the profile grid itself; the reported order is measured from
    the angular refinement.
    """
    if t_slice is None:
        mid = p.n // 2
        t_slice = slice(max(0, mid - 12), min(p.n, mid + 13))
    sups = []
    for nth, nps in resolutions:
        th = np.linspace(np.pi / 3, 2 * np.pi / 3, nth)
        ps = np.linspace(0.0, np.pi / 3, nps)
        chart = hopf_chart(p, th, ps, t_slice)
        wp, _ = wplus_chart(chart, order)
        inner = (slice(order, -order), slice(order, -order), slice(None), slice(order, -order))
        sups.append(float(np.abs(wp.matrix[inner]).max()))
    out = {"sup": sups}
    if len(sups) > 1 and sups[-1] > 0 and sups[0] > 0:
        out["order"] = float(np.log(sups[0] / sups[1]) / np.log((resolutions[1][0] - 1) / (resolutions[0][0] - 1)))
    return out
