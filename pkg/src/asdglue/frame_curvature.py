"""Coordinate-chart curvature pipeline in four dimensions.

Metric samples on a rectilinear box are pushed through

    metric -> Christoffel -> Riemann -> Weyl -> self-dual block W+

using finite differences. Index conventions:

* ``christoffel[..., k, i, j]`` is Gamma^k_ij.
* ``riemann[..., a, b, c, d]`` is R^a_bcd with R(d_c, d_d) d_b = R^a_bcd d_a,
  so the lowered tensor of a space of constant curvature K is
  K (g_ac g_bd - g_ad g_bc).
* Lambda^+ is spanned by (e01 + e23, e02 + e31, e03 + e12)/sqrt(2) in an
  oriented orthonormal frame; Lambda^- uses the opposite signs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._fd import diff, min_nodes
from .errors import FrameDegeneracyError, GridMismatchError, SingularMetricError, ValidationError

# pairs (a, b), (c, d) with omega_i = (e_a^e_b +- e_c^e_d)/sqrt(2)
_LAMBDA_PAIRS = (((0, 1), (2, 3)), ((0, 2), (3, 1)), ((0, 3), (1, 2)))


def lambda_basis(sign: int = 1) -> np.ndarray:
    """Orthonormal basis of Lambda^+ (``sign=1``) or Lambda^- as a (3, 4, 4) array."""
    om = np.zeros((3, 4, 4))
    for i, ((a, b), (c, d)) in enumerate(_LAMBDA_PAIRS):
        om[i, a, b], om[i, b, a] = 1.0, -1.0
        om[i, c, d], om[i, d, c] = sign, -sign
    return om / np.sqrt(2.0)


@dataclass
class ChartMetric4:
    """Metric components on a rectilinear grid over a 4-D coordinate box.

    Parameters
    ----------
    axes : sequence of four 1-D arrays
        Uniform node coordinates per direction. A direction with a single node
        is inactive: the metric does not depend on it.
    g : ndarray, shape (n0, n1, n2, n3, 4, 4)
        Symmetric positive definite metric components.
    orientation : {1, -1}
        Sign of the volume form relative to dx0^dx1^dx2^dx3.
    """

    axes: tuple
    g: np.ndarray
    orientation: int = 1

    def __post_init__(self):
        self.axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        self.g = np.asarray(self.g, dtype=float)
        if len(self.axes) != 4:
            raise ValidationError("need exactly four coordinate axes")
        shape = tuple(len(a) for a in self.axes)
        if self.g.shape != shape + (4, 4):
            raise ValidationError(f"metric shape {self.g.shape} does not match grid {shape}")
        if self.orientation not in (1, -1):
            raise ValidationError("orientation must be +1 or -1")
        for a in self.axes:
            if len(a) > 1:
                d = np.diff(a)
                if np.any(d <= 0) or not np.allclose(d, d[0], rtol=1e-9, atol=0):
                    raise ValidationError("grid spacings must be uniform and positive")
        if not np.allclose(self.g, np.swapaxes(self.g, -1, -2), rtol=0, atol=1e-12 * np.abs(self.g).max()):
            raise ValidationError("metric is not symmetric")
        ev = np.linalg.eigvalsh(self.g)
        if np.any(ev[..., 0] <= 0):
            idx = np.unravel_index(np.argmin(ev[..., 0]), ev.shape[:-1])
            raise SingularMetricError(f"metric not positive definite at node {idx}", node=idx)

    @property
    def shape(self) -> tuple:
        return self.g.shape[:4]

    @property
    def spacing(self) -> tuple:
        return tuple(a[1] - a[0] if len(a) > 1 else 1.0 for a in self.axes)

    def with_metric(self, g: np.ndarray, orientation: int | None = None) -> "ChartMetric4":
        o = self.orientation if orientation is None else orientation
        return ChartMetric4(self.axes, g, o)

    def flipped(self) -> "ChartMetric4":
        """Same metric with the opposite orientation."""
        return self.with_metric(self.g, -self.orientation)

    def sub_box(self, sl: slice, axis: int = 0) -> "ChartMetric4":
        axes = list(self.axes)
        axes[axis] = axes[axis][sl]
        idx = [slice(None)] * 4
        idx[axis] = sl
        return ChartMetric4(tuple(axes), self.g[tuple(idx)], self.orientation)


@dataclass
class CurvatureBundle:
    """Curvature chain of a chart metric (see module docstring for index order)."""

    christoffel: np.ndarray
    riemann: np.ndarray
    ricci: np.ndarray
    scalar: np.ndarray
    weyl: np.ndarray | None = None
    bianchi_residual: float = field(default=np.nan)


def _check_nodes(m: ChartMetric4, order: int):
    need = min_nodes(1, order)
    for a in m.axes:
        if 1 < len(a) < need:
            raise ValidationError(f"active directions need >= {need} nodes for order {order}")


def _grad(field: np.ndarray, m: ChartMetric4, order: int) -> np.ndarray:
    """Stack of partial derivatives along the four grid axes, new axis right after the grid."""
    return np.stack([diff(field, h, axis=c, deriv=1, order=order) for c, h in enumerate(m.spacing)], axis=4)


def inverse_metric(m: ChartMetric4) -> np.ndarray:
    det = np.linalg.det(m.g)
    scale = np.abs(m.g).max(axis=(-1, -2)) ** 4
    bad = np.abs(det) <= 1e-14 * scale
    if np.any(bad):
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise SingularMetricError(f"metric not invertible at node {idx}", node=idx)
    return np.linalg.inv(m.g)


def christoffel(m: ChartMetric4, order: int = 4) -> np.ndarray:
    """Levi-Civita symbols Gamma^k_ij with shape grid + (4, 4, 4)."""
    _check_nodes(m, order)
    ginv = inverse_metric(m)
    dg = _grad(m.g, m, order)  # [..., c, a, b] = d_c g_ab
    low = 0.5 * (np.einsum("...ijl->...ijl", dg) + np.einsum("...jil->...ijl", dg) - np.einsum("...lij->...ijl", dg))
    return np.einsum("...kl,...ijl->...kij", ginv, low)


def riemann_from_christoffel(m: ChartMetric4, gamma: np.ndarray, order: int = 4) -> CurvatureBundle:
    """Riemann, Ricci and scalar curvature from Christoffel symbols on the same grid."""
    if gamma.shape != m.shape + (4, 4, 4):
        raise GridMismatchError("Christoffel field does not live on the metric grid")
    dgam = _grad(gamma, m, order)  # [..., c, a, d, b] = d_c Gamma^a_db
    riem = (
        np.einsum("...cadb->...abcd", dgam)
        - np.einsum("...dacb->...abcd", dgam)
        + np.einsum("...ace,...edb->...abcd", gamma, gamma)
        - np.einsum("...ade,...ecb->...abcd", gamma, gamma)
    )
    ricci = np.einsum("...abad->...bd", riem)
    ginv = inverse_metric(m)
    scalar = np.einsum("...bd,...bd->...", ginv, ricci)
    cyc = riem + np.einsum("...abcd->...acdb", riem) + np.einsum("...abcd->...adbc", riem)
    scale = max(1.0, float(np.abs(riem).max()))
    return CurvatureBundle(gamma, riem, ricci, scalar, bianchi_residual=float(np.abs(cyc).max() / scale))


def lower_riemann(m: ChartMetric4, riem: np.ndarray) -> np.ndarray:
    return np.einsum("...ax,...xbcd->...abcd", m.g, riem)


def weyl_decompose(cb: CurvatureBundle, m: ChartMetric4) -> np.ndarray:
    """Weyl tensor W^a_bcd (same index placement as ``riemann``)."""
    g = m.g
    rlow = lower_riemann(m, cb.riemann)
    schouten = 0.5 * (cb.ricci - cb.scalar[..., None, None] / 6.0 * g)
    kn = (
        np.einsum("...ac,...bd->...abcd", schouten, g)
        - np.einsum("...ad,...bc->...abcd", schouten, g)
        + np.einsum("...bd,...ac->...abcd", schouten, g)
        - np.einsum("...bc,...ad->...abcd", schouten, g)
    )
    wlow = rlow - kn
    weyl = np.einsum("...ax,...xbcd->...abcd", inverse_metric(m), wlow)
    cb.weyl = weyl
    return weyl


def orthonormal_frame(m: ChartMetric4) -> np.ndarray:
    """Gram-Schmidt frame ``E[..., a, mu]`` on the coordinate basis, oriented by ``m.orientation``."""
    g = m.g
    frame = np.zeros(g.shape)
    for a in range(4):
        v = np.zeros(g.shape[:-1])
        v[..., a] = 1.0
        for b in range(a):
            proj = np.einsum("...i,...ij,...j->...", v, g, frame[..., b, :])
            v = v - proj[..., None] * frame[..., b, :]
        nrm2 = np.einsum("...i,...ij,...j->...", v, g, v)
        if np.any(nrm2 <= 1e-14 * np.abs(g).max()):
            raise FrameDegeneracyError("Gram-Schmidt frame degenerates (metric nearly singular)")
        frame[..., a, :] = v / np.sqrt(nrm2)[..., None]
    if m.orientation == -1:
        frame[..., 0, :] *= -1.0
    return frame


def frame_components(tensor_low: np.ndarray, frame: np.ndarray) -> np.ndarray:
    """All-lower rank-4 tensor expressed in the frame ``frame[..., a, mu]``."""
    return np.einsum("...ijkl,...ai,...bj,...ck,...dl->...abcd", tensor_low, frame, frame, frame, frame, optimize=True)


def self_dual_blocks(w_frame: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(W+, W-) 3x3 blocks from frame components of an all-lower Weyl tensor."""
    out = []
    for s in (1, -1):
        om = lambda_basis(s)
        out.append(0.25 * np.einsum("iab,...abcd,jcd->...ij", om, w_frame, om, optimize=True))
    return out[0], out[1]


@dataclass
class WplusField:
    """W+ as a symmetric trace-free 3x3 matrix field on Lambda^+."""

    matrix: np.ndarray

    @property
    def components(self) -> np.ndarray:
        """Five independent entries (W11, W22, W12, W13, W23)."""
        w = self.matrix
        return np.stack([w[..., 0, 0], w[..., 1, 1], w[..., 0, 1], w[..., 0, 2], w[..., 1, 2]], axis=-1)

    @property
    def trace(self) -> np.ndarray:
        return np.trace(self.matrix, axis1=-2, axis2=-1)

    def sup_norm(self) -> float:
        return float(np.abs(self.matrix).max())


def wplus_wminus(weyl: np.ndarray, m: ChartMetric4) -> tuple[WplusField, WplusField]:
    """Both self-dual and anti-self-dual Weyl blocks in the oriented Gram-Schmidt frame."""
    wlow = np.einsum("...ax,...xbcd->...abcd", m.g, weyl)
    wf = frame_components(wlow, orthonormal_frame(m))
    wp, wm = self_dual_blocks(wf)
    return WplusField(wp), WplusField(wm)


def wplus_project(weyl: np.ndarray, m: ChartMetric4) -> WplusField:
    """Lambda^+ block of the Weyl tensor."""
    return wplus_wminus(weyl, m)[0]


def curvature(m: ChartMetric4, order: int = 4) -> CurvatureBundle:
    """Full chain including the Weyl tensor."""
    cb = riemann_from_christoffel(m, christoffel(m, order), order)
    weyl_decompose(cb, m)
    return cb


def wplus_chart(m: ChartMetric4, order: int = 4, block: int | None = None) -> tuple[WplusField, WplusField]:
    """W+ and W- on the whole chart, processed in slabs along axis 0.

    Each slab carries a halo of ``order`` nodes so that every returned node sees
    exactly the stencils of a whole-grid computation.
    """
    n0 = m.shape[0]
    if block is None or block >= n0 or n0 == 1:
        cb = curvature(m, order)
        return wplus_wminus(cb.weyl, m)
    halo = order
    wp = np.zeros(m.shape + (3, 3))
    wm = np.zeros(m.shape + (3, 3))
    for i0 in range(0, n0, block):
        i1 = min(n0, i0 + block)
        lo, hi = max(0, i0 - halo), min(n0, i1 + halo)
        if hi - lo < min_nodes(1, order):
            hi = min(n0, lo + min_nodes(1, order))
            lo = max(0, hi - min_nodes(1, order))
        sub = m.sub_box(slice(lo, hi))
        cb = curvature(sub, order)
        p, q = wplus_wminus(cb.weyl, sub)
        wp[i0:i1] = p.matrix[i0 - lo:i1 - lo]
        wm[i0:i1] = q.matrix[i0 - lo:i1 - lo]
    return WplusField(wp), WplusField(wm)


def conformal_rescale(m: ChartMetric4, f: np.ndarray) -> ChartMetric4:
    """The metric e^f g with the same orientation."""
    f = np.broadcast_to(np.asarray(f, dtype=float), m.shape)
    if not np.all(np.isfinite(f)) or np.abs(f).max() > 300:
        raise ValidationError("conformal factor must be finite with |f| <= 300")
    return m.with_metric(np.exp(f)[..., None, None] * m.g)


def pointwise_norm(s: np.ndarray, m: ChartMetric4, kind: str) -> np.ndarray:
    """g-norm of a sampled tensor field.

    ``kind`` is one of ``scalar``, ``vector`` (upper index), ``covector``,
    ``endomorphism`` (type (1,1)), ``bilinear`` (type (0,2)), ``riemann``
    (type (1,3) as stored in :class:`CurvatureBundle`) or ``frame`` (components
    already in an orthonormal frame, including W+ matrices).
    """
    g = m.g
    gi = inverse_metric(m)
    if kind == "scalar":
        n2 = s**2
    elif kind == "vector":
        n2 = np.einsum("...a,...ab,...b->...", s, g, s)
    elif kind == "covector":
        n2 = np.einsum("...a,...ab,...b->...", s, gi, s)
    elif kind == "endomorphism":
        n2 = np.einsum("...ac,...bd,...ab,...cd->...", g, gi, s, s)
    elif kind == "bilinear":
        n2 = np.einsum("...ac,...bd,...ab,...cd->...", gi, gi, s, s)
    elif kind == "riemann":
        n2 = np.einsum("...ae,...bf,...cg,...dh,...abcd,...efgh->...", g, gi, gi, gi, s, s, optimize=True)
    elif kind == "frame":
        axes = tuple(range(m.g.ndim - 2, s.ndim))
        n2 = np.sum(s**2, axis=axes)
    else:
        raise ValidationError(f"unknown tensor kind {kind!r}")
    return np.sqrt(np.maximum(n2, 0.0))


# ---------------------------------------------------------------- sample charts


def grid_axes(boxes, counts) -> tuple:
    """Uniform axes from (lo, hi) pairs and node counts (count 1 uses ``lo``)."""
    return tuple(np.linspace(lo, hi, n) if n > 1 else np.array([lo], dtype=float) for (lo, hi), n in zip(boxes, counts))


def mesh(axes) -> list[np.ndarray]:
    return np.meshgrid(*axes, indexing="ij")


def euclidean_chart(axes, orientation: int = 1) -> ChartMetric4:
    shape = tuple(len(a) for a in axes)
    return ChartMetric4(axes, np.broadcast_to(np.eye(4), shape + (4, 4)).copy(), orientation)


def conformally_flat_chart(axes, phi, orientation: int = 1) -> ChartMetric4:
    """Metric e^{2 phi} delta for a callable ``phi(x0, x1, x2, x3)``."""
    x = mesh(axes)
    e = np.exp(2.0 * phi(*x))
    return ChartMetric4(axes, e[..., None, None] * np.eye(4), orientation)


def stereographic_s4_chart(axes, orientation: int = 1) -> ChartMetric4:
    """Round unit S^4 as 4 delta / (1 + |x|^2)^2."""
    return conformally_flat_chart(axes, lambda *x: np.log(2.0 / (1.0 + sum(xi**2 for xi in x))), orientation)


def polar_chart(axes) -> ChartMetric4:
    """dr^2 + r^2 dtheta^2 + dz^2 + dw^2 in coordinates (r, theta, z, w)."""
    r = mesh(axes)[0]
    g = np.zeros(r.shape + (4, 4))
    g[..., 0, 0] = 1.0
    g[..., 1, 1] = r**2
    g[..., 2, 2] = 1.0
    g[..., 3, 3] = 1.0
    return ChartMetric4(axes, g)
