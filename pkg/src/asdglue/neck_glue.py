"""Glued configurations X(l) built from two cylindrical-end bodies.

Bodies are reduced profiles on t in [0, T] with the compact side at t = 0 and
the cylindrical end at large t. Gluing at neck parameter l identifies body 2
through t2 = 2l - t1; the glued profile lives on t1 in [0, 2l] with
tau = t1 - l. Metrics are cut off at the level of g (q and a_i^2), so analytic
derivatives survive the construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import reduced_operator as ro
from .cohom_one import CEProfile, CoframeProfile, compactified_eh_body, cylindrified_s4, round_cylinder_profile, wplus_reduced
from .cyl_spectral import EndCondition, IndexReport, bump, discrete_index, indicial_spectrum, delta0, reduced_asd_model
from .errors import ComplementarityError, HypothesisError, InconclusiveRankError, UnmeasurableError, ValidationError

P_DEFAULT = 3.0
FLAT_TOL = 1e-12


def smoothstep(s):
    """Quintic smoothstep: 0 for s <= 0, 1 for s >= 1, C^2 at both junctions."""
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    return s**3 * (10 - 15 * s + 6 * s**2)


def alpha(s, deriv: int = 0):
    """Cut-off equal to 1 for s <= 0 and 0 for s >= 1, with derivatives."""
    s = np.asarray(s, dtype=float)
    inside = (s > 0) & (s < 1)
    x = np.clip(s, 0.0, 1.0)
    if deriv == 0:
        return 1.0 - smoothstep(s)
    if deriv == 1:
        return np.where(inside, -30 * x**2 * (1 - x) ** 2, 0.0)
    if deriv == 2:
        return np.where(inside, -60 * x * (1 - x) * (1 - 2 * x), 0.0)
    raise ValueError("deriv must be 0, 1 or 2")


# ------------------------------------------------------------------- bodies


@dataclass
class Body:
    """A cylindrical-end body with its discrete deformation data."""

    ce: CEProfile
    side: int = 1
    kernel_basis: list = field(default_factory=list)
    J: int = 0
    K: int = 0
    name: str = ""
    factory: object = None  # t-grid -> CEProfile, used for grid refinement

    @property
    def profile(self) -> CoframeProfile:
        return self.ce.base

    @property
    def conformally_flat(self) -> bool:
        """Round cross-sections throughout: ASD for both orientations."""
        a = self.profile.a
        return bool(np.all(np.abs(a - a[0]) <= FLAT_TOL * np.abs(a[0])))


def half_cylinder_body(t, k: int = 1, orientation: int = 1) -> Body:
    def make(tt):
        return CEProfile(round_cylinder_profile(tt, k, orientation), np.full(3, 0.5), eta=np.inf)

    return Body(make(t), name=f"half_cylinder[k={k}]", factory=make)


def s4_body(t, r0: float = 1.0) -> Body:
    def make(tt):
        return cylindrified_s4(tt, r0)

    return Body(make(t), name="s4", factory=make)


def eh_body(t, a: float = 1.0, r_start: float = 1.5) -> Body:
    def make(tt):
        return compactified_eh_body(tt, a, r_start)

    return Body(make(t), name="eguchi_hanson", factory=make)


# ------------------------------------------------------------------ cut-offs


def _grid_check(p: CoframeProfile):
    if not p.uniform:
        raise ValidationError("body profiles must be sampled on a uniform t-grid")


def cutoff_metric(b: Body, l: float) -> CoframeProfile:
    """g_i(l) = g0 + alpha(t - l + 1)(g_i - g0) on the body grid, with analytic derivatives."""
    p = b.profile
    _grid_check(p)
    if l < 2:
        raise ValidationError("neck parameter l must be at least 2")
    if p.t[-1] < l:
        raise ValidationError(f"body sampled up to t = {p.t[-1]:g}, shorter than l = {l:g}")
    L = np.asarray(b.ce.limit_h0, dtype=float).reshape(3, 1)
    s = p.t - l + 1
    be, be1, be2 = alpha(s), alpha(s, 1), alpha(s, 2)
    dq, da, d2a = p.derivatives()
    q = 1.0 + be * (p.q - 1.0)
    dq_new = be1 * (p.q - 1.0) + be * dq
    A2 = L**2 + be * (p.a**2 - L**2)
    A2t = be1 * (p.a**2 - L**2) + be * 2 * p.a * da
    A2tt = be2 * (p.a**2 - L**2) + 2 * be1 * 2 * p.a * da + be * 2 * (da**2 + p.a * d2a)
    a = np.sqrt(A2)
    at = A2t / (2 * a)
    att = (A2tt - 2 * at**2) / (2 * a)
    return CoframeProfile(p.t, q, a, p.quotient_k, p.orientation, dq_new, at, att, p.fd_order)


# ------------------------------------------------------------------- gluing


@dataclass
class GluedConfig:
    bodies: tuple
    l: float
    delta: float
    tau: np.ndarray
    metric: CoframeProfile
    split: int
    left: EndCondition = field(default_factory=lambda: EndCondition("cap"))
    right: EndCondition = field(default_factory=lambda: EndCondition("cap"))
    alpha: str = "quintic smoothstep"

    @property
    def t(self) -> np.ndarray:
        return self.metric.t


def default_delta(bodies=(), p: float = P_DEFAULT) -> float:
    """delta = 2 - 4/p, clamped below min(eta, delta_0)."""
    d = 2.0 - 4.0 / p
    d0 = delta0(indicial_spectrum(reduced_asd_model(), (-5.0, 5.0)))
    cap = min([d0] + [b.ce.eta for b in bodies])
    return d if d < cap else 0.9 * cap


def _effective_orientation(b1: Body, b2: Body) -> int:
    o1, o2 = b1.profile.orientation, b2.profile.orientation
    if b1.conformally_flat and b2.conformally_flat:
        return o1
    if b1.conformally_flat:
        return -o2
    if b2.conformally_flat:
        return o1
    if o2 != -o1:
        raise ComplementarityError(
            "no orientation-reversing cross-section isometry preserves the left-invariant diagonal ansatz; "
            "body 2 must be anti-self-dual for the opposite orientation flag"
        )
    return o1


def attach_bodies(b1: Body, b2: Body, l: float, delta: float | None = None,
                  left: EndCondition | None = None, right: EndCondition | None = None) -> GluedConfig:
    """Glue two bodies along the neck of half-length l."""
    p1, p2 = b1.profile, b2.profile
    if p1.quotient_k != p2.quotient_k:
        raise ComplementarityError(f"cross-section quotients differ (k = {p1.quotient_k} vs {p2.quotient_k})")
    if not np.allclose(b1.ce.limit_h0, b2.ce.limit_h0, rtol=1e-9, atol=0):
        raise ComplementarityError("asymptotic cross-sections are not isometric")
    orientation = _effective_orientation(b1, b2)
    _grid_check(p1)
    _grid_check(p2)
    h = p1.dt
    if abs(p2.dt - h) > 1e-12 * h:
        raise ValidationError("bodies must share the grid spacing")
    n1 = (l - p1.t[0]) / h
    n2 = (l - p2.t[0]) / h
    if abs(n1 - round(n1)) > 1e-8 or abs(n2 - round(n2)) > 1e-8:
        raise ValidationError("l must lie on both body grids")
    n1, n2 = int(round(n1)), int(round(n2))
    g1, g2 = cutoff_metric(b1, l), cutoff_metric(b2, l)
    for g, nn, b in ((g1, n1, b1), (g2, n2, b2)):
        if np.abs(g.q[nn] - 1) > 1e-12 or np.abs(g.a[:, nn] - b.ce.limit_h0).max() > 1e-12:
            raise ValidationError("overlap mismatch above round-off at tau = 0")
    dq1, da1, d2a1 = g1.derivatives()
    dq2, da2, d2a2 = g2.derivatives()
    idx2 = np.arange(n2 - 1, -1, -1)
    t = np.concatenate([g1.t[:n1 + 1], 2 * l - g2.t[idx2]])
    q = np.concatenate([g1.q[:n1 + 1], g2.q[idx2]])
    a = np.hstack([g1.a[:, :n1 + 1], g2.a[:, idx2]])
    dq = np.concatenate([dq1[:n1 + 1], -dq2[idx2]])
    da = np.hstack([da1[:, :n1 + 1], -da2[:, idx2]])
    d2a = np.hstack([d2a1[:, :n1 + 1], d2a2[:, idx2]])
    t = p1.t[0] + h * np.arange(len(t))  # exact uniform spacing
    metric = CoframeProfile(t, q, a, p1.quotient_k, orientation, dq, da, d2a, p1.fd_order)
    if delta is None:
        delta = default_delta((b1, b2))
    if delta < 0:
        raise ValidationError("delta must be non-negative")
    return GluedConfig((b1, b2), float(l), float(delta), t - (p1.t[0] + n1 * h), metric, n1,
                       left or EndCondition("cap"), right or EndCondition("cap"))


# ------------------------------------------------------------------- weights


@dataclass
class WeightProfile:
    w: np.ndarray
    peak: float

    @property
    def max_relative_error(self) -> float:
        return float(abs(self.w.max() / self.peak - 1.0))


def smooth_abs(x, eps: float = 0.5):
    """Smooth |x| with value 0 at 0 and exponentially small error away from 0."""
    x = np.asarray(x, dtype=float)
    return x * np.tanh(x / eps)


def weight_profile(cfg: GluedConfig) -> WeightProfile:
    """Smoothed exp(delta (l - |tau|)), equal to 1 where |tau| >= l."""
    f = cfg.l - smooth_abs(cfg.tau)
    rho = (1.0 - alpha(f)) * f
    return WeightProfile(np.exp(cfg.delta * rho), float(np.exp(cfg.delta * cfg.l)))


# ---------------------------------------------------------------- residuals


def residual_norms(cfg: GluedConfig, p: float = 2.0, h=None) -> tuple[float, float]:
    """(unweighted, weighted) L^p norms of W+ of g(l)(1 + h) over the glued range."""
    g = cfg.metric if h is None else ro.perturb(cfg.metric, h)
    W = wplus_reduced(g).W
    pt = np.sqrt(np.sum(W**2, axis=0))
    vol = ro.volume_density(g)
    w = weight_profile(cfg).w
    un = np.trapezoid(pt**p * vol, g.t) ** (1 / p)
    we = np.trapezoid((w * pt) ** p * vol, g.t) ** (1 / p)
    return float(un), float(we)


def residual_report(b1: Body, b2: Body, sweep, delta: float | None = None, p: float = 2.0,
                    floor: float = 1e-12) -> dict:
    """Residual norms over an l-sweep with least-squares slopes in l."""
    sweep = [float(x) for x in sweep]
    if len(sweep) < 4 or np.any(np.diff(sweep) <= 0):
        raise ValidationError("sweep must be increasing with at least 4 values")
    rows = []
    for l in sweep:
        cfg = attach_bodies(b1, b2, l, delta)
        un, we = residual_norms(cfg, p)
        rows.append({"l": l, "delta": cfg.delta, "residual_unweighted": un, "residual_weighted": we})
    un = np.array([r["residual_unweighted"] for r in rows])
    we = np.array([r["residual_weighted"] for r in rows])
    out = {"rows": rows, "slope_unweighted": float("nan"), "slope_weighted": float("nan"), "measurable": False}
    if np.all(un > floor) and np.all(we > floor):
        out["slope_unweighted"] = float(np.polyfit(sweep, np.log(un), 1)[0])
        out["slope_weighted"] = float(np.polyfit(sweep, np.log(we), 1)[0])
        out["measurable"] = True
    return out


def residual_slopes(b1: Body, b2: Body, sweep, delta: float | None = None, p: float = 2.0) -> tuple[float, float]:
    """Slopes from :func:`residual_report`, raising when residuals sit at the floor."""
    rep = residual_report(b1, b2, sweep, delta, p)
    if not rep["measurable"]:
        raise UnmeasurableError("residual at the round-off floor: slopes are unmeasurable")
    return rep["slope_unweighted"], rep["slope_weighted"]


# ------------------------------------------------------------- kernel bases


@dataclass
class KernelBases:
    H0: np.ndarray  # (d0, 3) tau-independent neck fields
    H1: list
    H2: list
    body_reports: list


def body_operator(b: Body, delta: float, orientation: int | None = None):
    """Discrete reduced operator of a body on its own grid (cap at 0, weight e^{delta t})."""
    p = b.profile
    if orientation is not None and orientation != p.orientation:
        p = p.flipped()
    w = np.exp(delta * (p.t - p.t[0]))
    return ro.operator(p, None, w, EndCondition("cap"), EndCondition("end", delta))


def body_deformations(b: Body, delta: float, orientation: int | None = None) -> IndexReport:
    """Kernel of the body operator and the split of its cokernel into J (W+ rows) and K (gauge rows)."""
    op = body_operator(b, delta, orientation)
    rep = discrete_index(op, bases=True)
    n = b.profile.n
    nW = 2 * (n - 2)
    nG = n - 1
    C = rep.cokernel_basis
    J = K = 0
    if C.shape[1]:
        wpart = np.linalg.norm(C[:nW], axis=0)
        gpart = np.linalg.norm(C[nW:nW + nG], axis=0)
        J = int(np.sum(wpart >= gpart))
        K = C.shape[1] - J
    b.J, b.K = J, K
    b.kernel_basis = [rep.kernel_basis[:, j].reshape(3, n) for j in range(rep.dim_ker)]
    return rep


def neck_h0(tol: float = 1e-8) -> np.ndarray:
    """tau-independent null vectors of the lambda = 0 block of the reduced neck operator."""
    blk = reduced_asd_model().modes[0]
    P0 = blk.pencil(0.0).real
    _, s, vh = linalg.svd(P0)
    rank = int(np.sum(s > tol * s[0]))
    return vh[rank:]


def kernel_bases(cfg: GluedConfig, require_unobstructed: bool = True) -> KernelBases:
    """H0 from the neck model, H1 and H2 from the body operators at weight delta."""
    o = cfg.metric.orientation
    reps = []
    for i, b in enumerate(cfg.bodies):
        reps.append(body_deformations(b, cfg.delta, o if i == 0 else -o))
        if require_unobstructed and b.J > 0:
            raise HypothesisError(f"body {i + 1} has an obstruction space of dimension {b.J}")
    return KernelBases(neck_h0(), cfg.bodies[0].kernel_basis, cfg.bodies[1].kernel_basis, reps)


# ------------------------------------------------------------- transversal


@dataclass
class TransversalSpec:
    constraints: np.ndarray  # rows act on the flat (3n) perturbation
    kinds: list
    L: float = 1.0
    eps: float = 1.0
    gram_condition: float = 1.0

    @property
    def count(self) -> int:
        return self.constraints.shape[0]


def _glue_field(cfg: GluedConfig, e: np.ndarray, body: int) -> np.ndarray:
    """Place a body field (3, n_body) on the glued grid (zero beyond the body's range)."""
    n = cfg.metric.n
    out = np.zeros((3, n))
    if body == 0:
        m = min(n, e.shape[1])
        out[:, :m] = e[:, :m]
    else:
        t2 = 2 * cfg.l - cfg.t
        idx = np.rint((t2 - cfg.bodies[1].profile.t[0]) / cfg.metric.dt).astype(int)
        ok = (idx >= 0) & (idx < e.shape[1])
        out[:, ok] = e[:, idx[ok]]
    return out


def build_transversal(cfg: GluedConfig, bases: KernelBases, L: float = 1.0, eps: float = 1.0,
                      max_condition: float = 1e3) -> TransversalSpec:
    """Constraint functionals h -> <h, h~>_w for the truncated bases."""
    if cfg.l < L + 1:
        raise ValidationError("need l >= L + 1")
    if not 0 < eps < cfg.l:
        raise ValidationError("eps must lie in (0, l)")
    w = weight_profile(cfg).w
    Mh, _ = ro.mass_matrices(cfg.metric, w)
    trunc, true, kinds = [], [], []
    for i, basis in enumerate((bases.H1, bases.H2)):
        tb = cfg.bodies[i].profile.t
        for e in basis:
            cut = alpha(tb - L)[None, :] * e
            trunc.append(_glue_field(cfg, cut, i).ravel())
            true.append(_glue_field(cfg, e, i).ravel())
            kinds.append(f"H{i + 1}")
    chi = bump((cfg.tau + eps) / (2 * eps))
    for v in bases.H0:
        trunc.append((v[:, None] * chi[None, :]).ravel())
        true.append((v[:, None] * np.ones_like(cfg.tau)[None, :]).ravel())
        kinds.append("H0")
    if not trunc:
        return TransversalSpec(np.zeros((0, 3 * cfg.metric.n)), [], L, eps, 1.0)
    T = np.array(trunc)
    E = np.array(true)
    G = T @ Mh @ E.T
    nt = np.sqrt(np.einsum("ij,jk,ik->i", T, Mh, T))
    ne = np.sqrt(np.einsum("ij,jk,ik->i", E, Mh, E))
    G = G / np.outer(nt, ne)
    cond = float(np.linalg.cond(G))
    if cond > max_condition:
        raise ValidationError(f"Gram matrix condition {cond:.3g} exceeds {max_condition:g}: increase L or eps")
    C = (T @ Mh) / nt[:, None]
    return TransversalSpec(C, kinds, L, eps, cond)


# ------------------------------------------------------------ sigma_min probe


def glued_operator(cfg: GluedConfig, weighted_adjoint: bool = False):
    w = weight_profile(cfg).w
    return ro.operator(cfg.metric, None, w, cfg.left, cfg.right, weighted_adjoint)


def sigma_min(cfg: GluedConfig, tspec: TransversalSpec | None = None, op=None) -> tuple[float, float]:
    """(restricted, unrestricted) smallest singular values of the weighted glued operator."""
    op = glued_operator(cfg) if op is None else op
    M, _ = op.matrix(weighted=True)
    s_un = linalg.svdvals(M)[min(M.shape) - 1]
    if tspec is None or tspec.count == 0:
        return float(s_un), float(s_un)
    Cw = tspec.constraints / op.col_weight()[None, :]
    Z = linalg.null_space(Cw)
    s_re = linalg.svdvals(M @ Z)[min(M.shape[0], Z.shape[1]) - 1]
    return float(s_re), float(s_un)


def min_sv_probe(b1: Body, b2: Body, sweep, delta: float | None = None, L: float = 1.0,
                 eps: float = 1.0, refine_check: bool = False) -> list[dict]:
    """Restricted and unrestricted sigma_min of the glued operator over an l-sweep."""
    rows = []
    for l in sweep:
        cfg = attach_bodies(b1, b2, float(l), delta)
        bases = kernel_bases(cfg)
        tspec = build_transversal(cfg, bases, L, eps)
        s_re, s_un = sigma_min(cfg, tspec)
        rows.append({"l": float(l), "delta": cfg.delta, "sigma_min_restricted": s_re,
                     "sigma_min_unrestricted": s_un, "constraints": tspec.count})
    if refine_check:
        _refinement_check(b1, b2, sweep[0], delta, L, eps, rows[0]["sigma_min_restricted"])
    return rows


def _refinement_check(b1, b2, l, delta, L, eps, value, tol: float = 0.25):
    def refine(b):
        if b.factory is None:
            raise ValidationError(f"body {b.name!r} cannot be resampled")
        p = b.profile
        t = np.linspace(p.t[0], p.t[-1], 2 * p.n - 1)
        return Body(b.factory(t), b.side, name=b.name, factory=b.factory)

    cfg = attach_bodies(refine(b1), refine(b2), float(l), delta)
    s_re, _ = sigma_min(cfg, build_transversal(cfg, kernel_bases(cfg), L, eps))
    if abs(s_re / value - 1) > tol:
        raise InconclusiveRankError(f"sigma_min not converged under refinement ({value:.4g} vs {s_re:.4g})",
                                    np.array([value, s_re]))
