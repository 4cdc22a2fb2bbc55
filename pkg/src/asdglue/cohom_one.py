"""Diagonal cohomogeneity-one metrics q dt^2 + sum a_i^2 sigma_i^2 on Y x I, Y = S^3/Z_k.

The left-invariant coframe obeys d sigma_i = -sigma_j ^ sigma_k (cyclic) and the
orthonormal coframe is (sqrt(q) dt, a_1 sigma_1, a_2 sigma_2, a_3 sigma_3).
Curvature is obtained from the structure constants of the dual frame and the
Koszul formula, so exact profiles with analytic derivatives give curvature at
round-off level.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.interpolate import CubicSpline

from ._fd import diff
from .errors import UnmeasurableError, ValidationError
from .frame_curvature import ChartMetric4, lambda_basis, self_dual_blocks

_CYCLIC = ((1, 2, 3), (2, 3, 1), (3, 1, 2))


@dataclass
class CoframeProfile:
    """Samples of (q, a_1, a_2, a_3) on a t-grid.

    The grid must be uniform unless all analytic derivatives are supplied
    (compact-side profiles sampled on geometric radii).

    ``dq``, ``da`` and ``d2a`` optionally carry analytic t-derivatives; when
    absent, finite differences of order ``fd_order`` are used.
    """

    t: np.ndarray
    q: np.ndarray
    a: np.ndarray
    quotient_k: int = 1
    orientation: int = 1
    dq: np.ndarray | None = None
    da: np.ndarray | None = None
    d2a: np.ndarray | None = None
    fd_order: int = 4

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.q = np.asarray(self.q, dtype=float) * np.ones_like(self.t)
        self.a = np.asarray(self.a, dtype=float) * np.ones((3, len(self.t)))
        if self.t.ndim != 1 or len(self.t) < 2:
            raise ValidationError("t grid must be one-dimensional")
        d = np.diff(self.t)
        if np.any(d <= 0):
            raise ValidationError("t grid must be increasing")
        analytic = self.dq is not None and self.da is not None and self.d2a is not None
        if not analytic and not np.allclose(d, d[0], rtol=1e-8, atol=0):
            raise ValidationError("t grid must be uniform unless analytic derivatives are supplied")
        if np.any(self.q <= 0) or np.any(self.a <= 0):
            raise ValidationError("q and a_i must be positive")
        if int(self.quotient_k) < 1:
            raise ValidationError("quotient_k must be a positive integer")
        if self.orientation not in (1, -1):
            raise ValidationError("orientation must be +1 or -1")

    @property
    def n(self) -> int:
        return len(self.t)

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    @property
    def uniform(self) -> bool:
        d = np.diff(self.t)
        return bool(np.allclose(d, d[0], rtol=1e-8, atol=0))

    def derivatives(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(q_t, a_t, a_tt), analytic when supplied."""
        h, o = self.dt, self.fd_order
        dq = self.dq if self.dq is not None else diff(self.q, h, 0, 1, o)
        da = self.da if self.da is not None else diff(self.a, h, 1, 1, o)
        d2a = self.d2a if self.d2a is not None else diff(self.a, h, 1, 2, o)
        return dq, da, d2a

    def numeric(self) -> "CoframeProfile":
        """Copy that ignores analytic derivatives."""
        if not self.uniform:
            raise ValidationError("finite differences need a uniform grid")
        return replace(self, dq=None, da=None, d2a=None)

    def flipped(self) -> "CoframeProfile":
        return replace(self, orientation=-self.orientation)

    def metric_deviation(self, limit) -> np.ndarray:
        """Pointwise |g - g0|_{g0} against the product metric dt^2 + sum L_i^2 sigma_i^2."""
        lim = np.asarray(limit, dtype=float).reshape(3, 1)
        rel = (self.a**2 - lim**2) / lim**2
        return np.sqrt((self.q - 1.0) ** 2 + np.sum(rel**2, axis=0))


@dataclass
class FrameCurvature:
    """Orthonormal-frame curvature of a profile; ``riemann[n, a, b, c, d]`` all lower."""

    riemann: np.ndarray
    ricci: np.ndarray
    scalar: np.ndarray
    weyl: np.ndarray
    wplus: np.ndarray
    wminus: np.ndarray


@dataclass
class ReducedWplus:
    """Diagonal entries W1, W2, W3 of W+ on the t-grid, shape (3, n)."""

    W: np.ndarray

    @property
    def trace(self) -> np.ndarray:
        return self.W.sum(axis=0)

    def sup_norm(self) -> float:
        return float(np.abs(self.W).max())


@dataclass
class CEProfile:
    """Cylindrical-end profile together with its asymptotic data."""

    base: CoframeProfile
    limit_h0: np.ndarray
    eta: float = 2.0
    decay_constants: dict = field(default_factory=dict)

    def deviation(self) -> np.ndarray:
        return self.base.metric_deviation(self.limit_h0)


def structure_constants(q, a, dq, da, d2a):
    """Frame structure constants C[c, a, b] = c^c_ab and their e_0-derivatives.

    Arrays carry the node index first: shapes (n, 4, 4, 4).
    """
    n = q.shape[0]
    s = np.sqrt(q)
    lg = da / (s * a)  # a_i'/a_i with ' = d/ds, s arc length
    dlg = (d2a / (s * a) - da * dq / (2 * s**3 * a) - da**2 / (s * a**2)) / s
    C = np.zeros((n, 4, 4, 4))
    dC = np.zeros((n, 4, 4, 4))
    for i, j, k in _CYCLIC:
        C[:, i, 0, i], C[:, i, i, 0] = -lg[i - 1], lg[i - 1]
        dC[:, i, 0, i], dC[:, i, i, 0] = -dlg[i - 1], dlg[i - 1]
        b = a[i - 1] / (a[j - 1] * a[k - 1])
        db = b * (lg[i - 1] - lg[j - 1] - lg[k - 1])
        C[:, i, j, k], C[:, i, k, j] = b, -b
        dC[:, i, j, k], dC[:, i, k, j] = db, -db
    return C, dC


def _koszul(C):
    """Gamma[a, b, c] = g(nabla_{e_a} e_b, e_c)."""
    return 0.5 * (np.einsum("ncab->nabc", C) - C + np.einsum("nbca->nabc", C))


def _orient(tensor4: np.ndarray, orientation) -> np.ndarray:
    o = np.asarray(orientation, dtype=float) * np.ones(tensor4.shape[0])
    f = np.ones((tensor4.shape[0], 4))
    f[:, 0] = o
    return np.einsum("nabcd,na,nb,nc,nd->nabcd", tensor4, f, f, f, f)


def cartan_curvature(p: CoframeProfile) -> FrameCurvature:
    """Frame-component curvature of a profile via the structure equations."""
    if p.n < 9:
        raise ValidationError("cartan_curvature needs at least 9 t-nodes")
    dq, da, d2a = p.derivatives()
    C, dC = structure_constants(p.q, p.a, dq, da, d2a)
    G = _koszul(C)
    dG = _koszul(dC)
    n = p.n
    R = np.zeros((n, 4, 4, 4, 4))  # R[A,B,C,D] = g(R(e_A,e_B)e_C, e_D)
    R[:, 0] += dG
    R[:, :, 0] -= dG
    R += np.einsum("nbcf,nafd->nabcd", G, G) - np.einsum("nacf,nbfd->nabcd", G, G)
    R -= np.einsum("nfab,nfcd->nabcd", C, G)
    rstd = np.einsum("ncdba->nabcd", R)  # rstd[a,b,c,d] = g(R(e_c,e_d)e_b, e_a)
    rstd = _orient(rstd, p.orientation)
    ricci = np.einsum("nabad->nbd", rstd)
    scalar = np.einsum("nbb->n", ricci)
    g = np.eye(4)
    P = 0.5 * (ricci - scalar[:, None, None] / 6.0 * g)
    kn = (
        np.einsum("nac,bd->nabcd", P, g)
        - np.einsum("nad,bc->nabcd", P, g)
        + np.einsum("nbd,ac->nabcd", P, g)
        - np.einsum("nbc,ad->nabcd", P, g)
    )
    weyl = rstd - kn
    wp, wm = self_dual_blocks(weyl)
    return FrameCurvature(rstd, ricci, scalar, weyl, wp, wm)


def wplus_reduced(p: CoframeProfile) -> ReducedWplus:
    """Diagonal W+ entries in the basis (e01+e23, e02+e31, e03+e12)/sqrt(2)."""
    fc = cartan_curvature(p)
    return ReducedWplus(np.stack([fc.wplus[:, i, i] for i in range(3)]))


# ----------------------------------------------------------------- exact profiles


def round_cylinder_profile(t, k: int = 1, orientation: int = 1) -> CoframeProfile:
    """dt^2 + (1/4) sum sigma_i^2, i.e. (unit round S^3/Z_k) x R."""
    t = np.asarray(t, dtype=float)
    z = np.zeros((3, len(t)))
    return CoframeProfile(t, 1.0, 0.5, k, orientation, np.zeros_like(t), z, z.copy())


def flat_cone_profile(r, orientation: int = 1) -> CoframeProfile:
    """Flat R^4 as dr^2 + (r^2/4) sum sigma_i^2."""
    r = np.asarray(r, dtype=float)
    one = np.ones((3, len(r)))
    return CoframeProfile(r, 1.0, 0.5 * r * one, 1, orientation, np.zeros_like(r), 0.5 * one, 0.0 * one)


def berger_profile(t, a3: float = 0.25, orientation: int = 1) -> CoframeProfile:
    """Product of a line with a Berger sphere a_1 = a_2 = 1/2."""
    t = np.asarray(t, dtype=float)
    a = np.array([[0.5], [0.5], [a3]]) * np.ones((3, len(t)))
    z = np.zeros((3, len(t)))
    return CoframeProfile(t, 1.0, a, 1, orientation, np.zeros_like(t), z, z.copy())


def _chain(kappa, kappa_r, f_r, f_rr):
    """First and second derivatives along D = kappa(r) d/dr."""
    return kappa * f_r, kappa * (kappa_r * f_r + kappa * f_rr)


def _eh_coefficients(r, a):
    """EH coframe coefficients and their r-derivatives, shape (3, n) each."""
    u = a**4 / r**4
    F = r**2 - a**4 / r**2
    Fr = 2 * r + 2 * a**4 / r**3
    Frr = 2 - 6 * a**4 / r**4
    sf = np.sqrt(F)
    c = np.stack([r / 2, r / 2, sf / 2])
    c_r = np.stack([0.5 + 0 * r, 0.5 + 0 * r, Fr / (4 * sf)])
    c_rr = np.stack([0 * r, 0 * r, Frr / (4 * sf) - Fr**2 / (8 * sf**3)])
    root = np.sqrt(1 - u)
    root_r = 2 * a**4 / r**5 / root
    return c, c_r, c_rr, root, root_r


def eguchi_hanson_radius(s, a: float) -> np.ndarray:
    """Radius r at arc length s from the bolt r = a.

    With r = a sqrt(cosh v) the arc length is (a/2) int_0^v sqrt(cosh), which is
    smooth in v, so the inversion is an ordinary ODE solve.
    """
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ValidationError("arc length must be non-negative")
    order = np.argsort(s)
    sol = solve_ivp(lambda _s, v: 2.0 / (a * np.sqrt(np.cosh(v))), (0.0, float(s.max()) + 1e-12), [0.0],
                    t_eval=s[order], rtol=1e-13, atol=1e-14, method="DOP853")
    v = np.empty_like(s)
    v[order] = sol.y[0]
    return a * np.sqrt(np.cosh(v))


def eguchi_hanson_arclength(r, a: float) -> np.ndarray:
    r = np.atleast_1d(np.asarray(r, dtype=float))
    v = np.arccosh((r / a) ** 2)
    return np.array([0.5 * a * quad(lambda x: np.sqrt(np.cosh(x)), 0.0, vi, epsabs=1e-14, epsrel=1e-13)[0] for vi in v])


def eguchi_hanson_profile(a: float, r_max: float, n: int, r_min: float | None = None,
                          quotient_k: int = 2) -> CoframeProfile:
    """Eguchi-Hanson metric dr^2/(1-u) + (r^2/4)(s1^2+s2^2) + (r^2/4)(1-u) s3^2, u = (a/r)^4.

    Returned in arc length (q = 1) with analytic derivatives. The orientation
    flag is the one in which the metric is anti-self-dual (-1 in the Cartan
    coframe convention of this module).
    """
    if quotient_k != 2:
        raise ValidationError("the Eguchi-Hanson cross-section is RP^3: quotient_k must be 2")
    r_min = 1.05 * a if r_min is None else r_min
    if not (0 < a < r_min < r_max):
        raise ValidationError("need 0 < a < r_min < r_max")
    s0, s1 = eguchi_hanson_arclength([r_min, r_max], a)
    s = np.linspace(s0, s1, n)
    r = eguchi_hanson_radius(s, a)
    c, c_r, c_rr, root, root_r = _eh_coefficients(r, a)
    da, d2a = _chain(root, root_r, c_r, c_rr)
    return CoframeProfile(s, 1.0, c, 2, -1, np.zeros_like(s), da, d2a)


# ------------------------------------------------------------ cylindrification


def geometric_radii(r0: float, t) -> np.ndarray:
    """Radii r = r0 exp(-t) matching a uniform cylinder grid."""
    return r0 * np.exp(-np.asarray(t, dtype=float))


def _limit_fit(r, ratio, m: int = 8):
    """Fit ratio = c0 + c2 r^2 + c4 r^4 on the smallest radii.

    Returns c0 and whether the fit explains the samples: the residual must be
    below 1e-5 of the sampled variation, or at the round-off level of c0.
    """
    idx = np.argsort(r)[:m]
    rr = r[idx]
    y = ratio[idx]
    A = np.stack([np.ones_like(rr), rr**2, rr**4], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    res = np.abs(A @ coef - y).max()
    ok = bool(np.all(np.isfinite(y)) and res <= 1e-5 * np.ptp(y) + 1e3 * np.finfo(float).eps * abs(coef[0]))
    return coef[0], ok


def cylindrify(p: CoframeProfile, r0: float, n: int | None = None) -> CEProfile:
    """Conformal cylindrification r^-2 g with r / r0 = exp(-t).

    ``p`` is a compact-side profile whose grid variable is the geodesic distance r
    from the marked point (so q = 1). A geometric r-grid maps to a uniform t-grid;
    otherwise the result is resampled by cubic splines onto ``n`` uniform nodes.
    """
    r = p.t
    if np.any(r <= 0):
        raise ValidationError("radii must be positive (the marked point itself is excluded)")
    if not np.allclose(p.q, 1.0, atol=1e-10):
        raise ValidationError("profile must be parametrized by geodesic distance (q = 1)")
    ratio = p.a / r
    lim = np.zeros(3)
    for i in range(3):
        lim[i], ok = _limit_fit(r, ratio[i])
        if not ok:
            raise ValidationError("profile is not of the form dr^2 + r^2 (h0 + r^2 h2) near r = 0")
    if not np.allclose(lim, lim[0], rtol=1e-6):
        raise ValidationError("cross-section at the marked point is not round")
    _, da_r, d2a_r = p.derivatives()
    t = -np.log(r / r0)
    A = p.a / r
    A_t = p.a / r - da_r
    A_tt = -da_r + p.a / r + r * d2a_r
    order = np.argsort(t)
    t, A, A_t, A_tt = t[order], A[:, order], A_t[:, order], A_tt[:, order]
    dt = np.diff(t)
    if np.allclose(dt, dt[0], rtol=1e-8):
        base = CoframeProfile(t, 1.0, A, p.quotient_k, p.orientation, np.zeros_like(t), A_t, A_tt)
    else:
        n = n or len(t)
        tu = np.linspace(t[0], t[-1], n)
        spl = [CubicSpline(t, A[i]) for i in range(3)]
        base = CoframeProfile(tu, 1.0, np.stack([s(tu) for s in spl]), p.quotient_k, p.orientation,
                              np.zeros_like(tu), np.stack([s(tu, 1) for s in spl]), np.stack([s(tu, 2) for s in spl]))
    return CEProfile(base, np.full(3, lim.mean()), eta=2.0)


def round_s4_radial_profile(r, orientation: int = 1) -> CoframeProfile:
    """Unit round S^4 about a point: dr^2 + sin(r)^2 (1/4) sum sigma_i^2."""
    r = np.sort(np.asarray(r, dtype=float))
    one = np.ones((3, len(r)))
    return CoframeProfile(r, 1.0, 0.5 * np.sin(r) * one, 1, orientation, np.zeros_like(r),
                          0.5 * np.cos(r) * one, -0.5 * np.sin(r) * one)


def cylindrified_s4(t, r0: float = 1.0, orientation: int = 1) -> CEProfile:
    """Closed-form cylindrification of the round S^4 about a point, on a uniform t-grid."""
    t = np.asarray(t, dtype=float)
    r = geometric_radii(r0, t)
    if r.max() >= np.pi:
        raise ValidationError("t-grid reaches the antipodal point")
    A = np.sin(r) / (2 * r)
    A_r = (r * np.cos(r) - np.sin(r)) / (2 * r**2)
    A_rr = (-(r**2) * np.sin(r) - 2 * (r * np.cos(r) - np.sin(r))) / (2 * r**3)
    A_t = -r * A_r
    A_tt = r * A_r + r**2 * A_rr
    one = np.ones((3, 1))
    base = CoframeProfile(t, 1.0, A * one, 1, orientation, np.zeros_like(t), A_t * one, A_tt * one)
    return CEProfile(base, np.full(3, 0.5), eta=2.0)


def _omega(r):
    w = 2.0 / (1.0 + r**2)
    w_r = -4.0 * r / (1.0 + r**2) ** 2
    w_rr = -4.0 / (1.0 + r**2) ** 2 + 16.0 * r**2 / (1.0 + r**2) ** 3
    return w, w_r, w_rr


def eh_compact_distance(r, a: float) -> np.ndarray:
    """Geodesic distance from the added point in Omega^2 g_EH, Omega = 2 / (1 + r^2).

    With u = 1/r the integrand 2 / ((1 + u^2) sqrt(1 - a^4 u^4)) is regular at u = 0.
    """
    f = lambda u: 2.0 / ((1.0 + u**2) * np.sqrt(1.0 - (a * u) ** 4))
    r = np.atleast_1d(np.asarray(r, dtype=float))
    return np.array([quad(f, 0.0, 1.0 / ri, epsabs=1e-15, epsrel=1e-13, limit=200)[0] for ri in r])


def compactified_eguchi_hanson(a: float, rho) -> CoframeProfile:
    """Omega^2 g_EH written as d rho^2 + sum (Omega a_i)^2 sigma_i^2 over the given distances rho.

    The compactification adds one Z_2-orbifold point at rho = 0 (r = infinity);
    u = 1/r solves du/drho = (1 + u^2) sqrt(1 - a^4 u^4) / 2 with u(0) = 0.
    """
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0):
        raise ValidationError("distances must be positive")

    def rhs(x, y):
        u = y[0]
        return [0.5 * (1.0 + u**2) * np.sqrt(max(1.0 - (a * u) ** 4, 0.0))]

    order = np.argsort(rho)
    rs = rho[order]
    sol = solve_ivp(rhs, (0.0, rs[-1]), [0.0], t_eval=rs, rtol=1e-13, atol=1e-15, method="DOP853")
    if not sol.success or sol.y.shape[1] != len(rs):
        raise ValidationError("distance range reaches the bolt")
    u = np.empty_like(rs)
    u[order] = sol.y[0]
    if np.any(u * a >= 1 - 1e-9):
        raise ValidationError("distance range reaches the bolt")
    rr = 1.0 / u
    c, c_r, c_rr, root, root_r = _eh_coefficients(rr, a)
    w, w_r, w_rr = _omega(rr)
    f = w * c
    f_r = w_r * c + w * c_r
    f_rr = w_rr * c + 2 * w_r * c_r + w * c_rr
    kappa = -root / w
    kappa_r = -(root_r * w - root * w_r) / w**2
    d1, d2 = _chain(kappa, kappa_r, f_r, f_rr)
    return CoframeProfile(rho, 1.0, f, 2, -1, np.zeros_like(rho), d1, d2)


def compactified_eh_body(t, a: float = 1.0, r_start: float = 1.5) -> CEProfile:
    """Cylindrified compactified Eguchi-Hanson with t = 0 at EH radius ``r_start`` (units of a)."""
    t = np.asarray(t, dtype=float)
    rho0 = float(eh_compact_distance(r_start * a, a)[0])
    rho = geometric_radii(rho0, t)[::-1]
    p = compactified_eguchi_hanson(a, rho)
    return cylindrify(p, rho0)


def decay_rate_fit(c: CEProfile, t_min: float | None = None, floor: float = 1e-13) -> tuple[float, float]:
    """Least-squares fit of log |g - g0| = log C - eta t over the asymptotic window.

    The window starts at ``t_min`` (default: 30 percent into the grid) and drops
    samples at or below ``floor``.
    """
    t = c.base.t
    dev = c.deviation()
    t_min = t[0] + 0.3 * (t[-1] - t[0]) if t_min is None else t_min
    mask = (t >= t_min) & (dev > floor)
    if mask.sum() < 4:
        raise UnmeasurableError("deviation below the floating-point floor over the window")
    y = np.log(dev[mask])
    if y.max() - y.min() < np.log(10.0):
        raise UnmeasurableError("less than one decade of decay in the window")
    slope, icpt = np.polyfit(t[mask], y, 1)
    c.decay_constants = {"C": float(np.exp(icpt)), "eta_hat": float(-slope)}
    return float(-slope), float(np.exp(icpt))


# ------------------------------------------------------------------ Hopf charts


def hopf_coframe(theta, psi):
    """Coefficients of sigma_i in (d theta, d phi, d psi); shape (..., 3, 3)."""
    st, ct = np.sin(theta), np.cos(theta)
    sp_, cp = np.sin(psi), np.cos(psi)
    S = np.zeros(np.shape(theta) + (3, 3))
    S[..., 0, 0], S[..., 0, 1] = sp_, -cp * st
    S[..., 1, 0], S[..., 1, 1] = cp, sp_ * st
    S[..., 2, 1], S[..., 2, 2] = ct, 1.0
    return S


def hopf_chart(p: CoframeProfile, theta_axis, psi_axis, t_slice=slice(None)) -> ChartMetric4:
    """Chart (t, theta, phi, psi) for a profile; phi is inactive (single node).

    The coordinate order has the orientation of dt ^ sigma_1 ^ sigma_2 ^ sigma_3
    for 0 < theta < pi.
    """
    t = p.t[t_slice]
    q = p.q[t_slice]
    a = p.a[:, t_slice]
    T, TH, PH, PS = np.meshgrid(t, theta_axis, [0.0], psi_axis, indexing="ij")
    S = hopf_coframe(TH, PS)
    qq = q[np.searchsorted(t, T)]
    aa = np.moveaxis(a[:, np.searchsorted(t, T)], 0, -1)
    g = np.zeros(T.shape + (4, 4))
    g[..., 0, 0] = qq
    g[..., 1:, 1:] = np.einsum("...i,...ia,...ib->...ab", aa**2, S, S)
    return ChartMetric4((t, np.asarray(theta_axis), np.array([0.0]), np.asarray(psi_axis)), g, p.orientation)


def hopf_cartan_frame(chart: ChartMetric4, p: CoframeProfile, t_slice=slice(None)) -> np.ndarray:
    """Cartan frame (e_0, e_i) of ``p`` expressed on ``chart`` nodes as ``E[..., a, mu]``."""
    T, TH, PH, PS = np.meshgrid(*chart.axes, indexing="ij")
    S = hopf_coframe(TH, PS)
    X = np.linalg.inv(S)  # columns are the vector fields dual to sigma_i
    t = p.t[t_slice]
    idx = np.searchsorted(t, T)
    q = p.q[t_slice][idx]
    a = np.moveaxis(p.a[:, t_slice][:, idx], 0, -1)
    E = np.zeros(T.shape + (4, 4))
    E[..., 0, 0] = 1.0 / np.sqrt(q)
    for i in range(3):
        E[..., i + 1, 1:] = X[..., :, i] / a[..., i, None]
    if chart.orientation == -1:
        E[..., 0, :] *= -1.0
    return E


def eguchi_hanson_chart(axes, a: float, orientation: int = 1) -> ChartMetric4:
    """Eguchi-Hanson in Cartesian coordinates on a box avoiding r <= a.

    g = delta + u/(1-u) (x.dx)^2/r^2 - u theta^2/r^2 with u = (a/r)^4 and
    theta = x0 dx1 - x1 dx0 + x2 dx3 - x3 dx2. With ``orientation=1`` this is
    anti-self-dual for the order (x0, x1, x2, x3).
    """
    x = np.meshgrid(*axes, indexing="ij")
    r2 = sum(xi**2 for xi in x)
    if np.any(r2 <= a**2 * (1 + 1e-9)):
        raise ValidationError("chart must avoid the bolt r <= a")
    u = a**4 / r2**2
    X = np.stack(x, axis=-1)
    th = np.stack([-x[1], x[0], -x[3], x[2]], axis=-1)
    g = np.broadcast_to(np.eye(4), X.shape[:-1] + (4, 4)).copy()
    g += (u / (1 - u) / r2)[..., None, None] * np.einsum("...a,...b->...ab", X, X)
    g -= (u / r2)[..., None, None] * np.einsum("...a,...b->...ab", th, th)
    return ChartMetric4(axes, g, orientation)


def hopf_wplus_blocks(p: CoframeProfile) -> tuple[np.ndarray, np.ndarray]:
    """Full 3x3 (W+, W-) blocks from the Cartan pipeline, for chart comparison."""
    fc = cartan_curvature(p)
    return fc.wplus, fc.wminus


__all__ = [
    "CoframeProfile", "FrameCurvature", "ReducedWplus", "CEProfile", "cartan_curvature", "wplus_reduced",
    "round_cylinder_profile", "flat_cone_profile", "berger_profile", "eguchi_hanson_profile",
    "eguchi_hanson_radius", "cylindrify", "cylindrified_s4", "compactified_eguchi_hanson",
    "compactified_eh_body", "decay_rate_fit", "hopf_chart", "hopf_cartan_frame", "eguchi_hanson_chart",
    "round_s4_radial_profile", "geometric_radii", "lambda_basis",
]
