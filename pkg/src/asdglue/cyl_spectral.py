"""Translation-invariant model operators on cylinders Y x R.

A model operator B = sum_j B_j d_t^j (per cross-section mode) has indicial
pencil P(x) = sum_j B_j x^j with x = i lambda, so a kernel element
exp(i lambda t) u has growth rate Re x = -Im lambda. Exceptional weights are
the values Im lambda.

Truncated cylinders are discretized by finite differences. Ends are closed by
asymptotic projection conditions computed from the exact solution space of the
model ODE (QZ deflation of the companion pencil), so that dimensions of kernels
and cokernels are decided by singular values of a weighted matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np
from scipy import linalg
from scipy.integrate import trapezoid

from ._fd import diff, diff_matrix, midpoint_matrix
from .errors import InconclusiveRankError, SpectrumCutoffError, ValidationError

RANK_TOL = 1e-6
GAP_RATIO = 1e3


# ------------------------------------------------------------------- types


@dataclass
class ModeBlock:
    """Pencil coefficients for one cross-section mode.

    ``coeffs[j]`` multiplies d_t^j; ``multiplicity`` counts copies of the mode.
    """

    coeffs: list
    multiplicity: int = 1
    eigenvalue: float = 0.0

    def __post_init__(self):
        self.coeffs = [np.atleast_2d(np.asarray(c, dtype=complex if np.iscomplexobj(c) else float)) for c in self.coeffs]
        n = self.coeffs[0].shape[0]
        if any(c.shape != (n, n) for c in self.coeffs):
            raise ValidationError("pencil blocks must be square and of equal size")
        if not all(np.all(np.isfinite(c)) for c in self.coeffs):
            raise ValidationError("pencil blocks must be finite")

    @property
    def size(self) -> int:
        return self.coeffs[0].shape[0]

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def row_orders(self) -> list[int]:
        out = []
        for r in range(self.size):
            js = [j for j, c in enumerate(self.coeffs) if np.any(c[r] != 0)]
            out.append(max(js) if js else 0)
        return out

    def pencil(self, x) -> np.ndarray:
        return sum(c * x**j for j, c in enumerate(self.coeffs))

    def pencil_derivative(self, x, k: int) -> np.ndarray:
        """k-th derivative of P at x divided by k!."""
        from math import comb

        return sum(c * comb(j, k) * x ** (j - k) for j, c in enumerate(self.coeffs) if j >= k)

    def adjoint(self) -> "ModeBlock":
        """Formal L^2 adjoint sum_j B_j^T (-d_t)^j."""
        return ModeBlock([(-1) ** j * c.conj().T for j, c in enumerate(self.coeffs)], self.multiplicity, self.eigenvalue)


@dataclass
class ModelOperator:
    """Translation-invariant operator on Y x R, split into cross-section modes.

    ``cutoff_eigenvalue`` is the largest cross-section eigenvalue represented
    and ``growth`` describes how root heights grow with the eigenvalue
    (``"sqrt"``: |Im lambda| ~ sqrt(mu)); both feed the strip certification.
    """

    modes: list
    order: int = 2
    cutoff_eigenvalue: float | None = None
    growth: str | None = None
    name: str = ""

    def __post_init__(self):
        sizes = {m.size for m in self.modes}
        if len(sizes) != 1:
            raise ValidationError("all modes must have the same block size")


@dataclass
class SpectrumEntry:
    lam: complex
    d: int
    chains: list

    @property
    def weight(self) -> float:
        return float(self.lam.imag)


@dataclass
class AsymptoticSpectrum:
    entries: list
    strip: tuple

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)


@dataclass
class WeightSpec:
    """Weighted Sobolev norm data: sum_{r<=k} ||w d^r u||_p."""

    p: float = 2.0
    k: int = 0
    delta: float = 0.0
    profile: str = "uniform"

    def __post_init__(self):
        if self.p <= 1:
            raise ValidationError("p must exceed 1")
        if self.k < 0:
            raise ValidationError("k must be non-negative")
        if self.profile not in ("uniform", "decaying", "growing"):
            raise ValidationError(f"unknown weight profile {self.profile!r}")

    @classmethod
    def from_exponent(cls, p: float, k: int = 0) -> "WeightSpec":
        """The choice delta = 2 - 4/p, which needs 2 < p < 4."""
        if not 2 < p < 4:
            raise ValidationError("delta = 2 - 4/p requires 2 < p < 4")
        return cls(p=p, k=k, delta=2.0 - 4.0 / p)

    def values(self, t, center: float = 0.0) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.profile == "uniform":
            return np.exp(self.delta * t)
        s = -1.0 if self.profile == "decaying" else 1.0
        return np.exp(s * self.delta * np.abs(t - center))


@dataclass
class EndCondition:
    """How a truncated end is closed.

    ``kind="end"``: a cylindrical end continuing to infinity with local weight
    exp(delta t); ``kind="cap"``: a closed-off compact piece that admits only
    modes decaying into it (``strict`` keeps neutral modes, as used for
    adjoints).
    """

    kind: str = "end"
    delta: float = 0.0
    strict: bool = False

    def __post_init__(self):
        if self.kind not in ("end", "cap", "free"):
            raise ValidationError(f"unknown end kind {self.kind!r}")

    def adjoint(self) -> "EndCondition":
        if self.kind == "end":
            return EndCondition("end", -self.delta)
        if self.kind == "cap":
            return EndCondition("cap", 0.0, not self.strict)
        return EndCondition("free")


@dataclass
class IndexReport:
    dim_ker: int
    dim_coker: int
    index: int
    weight: object = None
    truncation: dict = field(default_factory=dict)
    singular_values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    gap_ratio: float = np.inf
    adjoint_kernel: int | None = None
    kernel_basis: np.ndarray | None = None
    cokernel_basis: np.ndarray | None = None


# --------------------------------------------------------- indicial spectrum


def _companion(block: ModeBlock):
    n, m = block.size, block.degree
    A = np.zeros((n * m, n * m), dtype=complex)
    B = np.eye(n * m, dtype=complex)
    for i in range(m - 1):
        A[i * n:(i + 1) * n, (i + 1) * n:(i + 2) * n] = np.eye(n)
    for j in range(m):
        A[(m - 1) * n:, j * n:(j + 1) * n] = -block.coeffs[j]
    B[(m - 1) * n:, (m - 1) * n:] = block.coeffs[m]
    return A, B


def finite_roots(block: ModeBlock, tol: float = 1e-10) -> np.ndarray:
    """Finite eigenvalues x of the pencil P(x) (infinite ones discarded)."""
    if block.degree == 0:
        return np.zeros(0, dtype=complex)
    A, B = _companion(block)
    w = linalg.eig(A, B, right=False, homogeneous_eigvals=True)
    alpha, beta = w
    scale = max(1.0, np.abs(alpha).max())
    fin = np.abs(beta) > tol * scale
    return alpha[fin] / beta[fin]


def _cluster(values, tol):
    vals = list(values)
    groups = []
    while vals:
        v = vals.pop(0)
        g = [v] + [u for u in vals if abs(u - v) < tol]
        vals = [u for u in vals if abs(u - v) >= tol]
        groups.append(g)
    return groups


def _nullity(M, tol=1e-8):
    s = linalg.svdvals(M)
    if s.size == 0:
        return M.shape[1]
    return int(M.shape[1] - np.sum(s > tol * max(1.0, s[0])))


def chain_lengths(block: ModeBlock, x0: complex, alg_mult: int) -> list[int]:
    """Jordan chain lengths at a root via ranks of block Toeplitz matrices."""
    n = block.size
    counts = []
    prev = 0
    for k in range(1, alg_mult + 1):
        T = np.zeros((k * n, k * n), dtype=complex)
        for i in range(k):
            for j in range(i + 1):
                T[i * n:(i + 1) * n, j * n:(j + 1) * n] = block.pencil_derivative(x0, i - j)
        nul = _nullity(T)
        counts.append(nul - prev)
        prev = nul
        if nul >= alg_mult:
            break
    # counts[k-1] = number of chains with length >= k
    lengths = []
    ge = counts + [0]
    for k in range(1, len(counts) + 1):
        lengths += [k] * (ge[k - 1] - ge[k])
    return sorted(lengths, reverse=True)


def indicial_spectrum(op: ModelOperator, strip: tuple, tol: float = 1e-6) -> AsymptoticSpectrum:
    """Roots lambda with Im lambda in the open strip, with d(lambda) and chain lengths."""
    d1, d2 = strip
    if not (np.isfinite(d1) and np.isfinite(d2) and d1 < d2):
        raise ValidationError("strip must be a finite interval")
    if op.growth == "sqrt" and op.cutoff_eigenvalue is not None:
        if op.cutoff_eigenvalue <= max(abs(d1), abs(d2)) ** 2:
            raise SpectrumCutoffError("mode cutoff below the strip height: widen the cutoff")
    found: dict = {}
    for mode in op.modes:
        xs = finite_roots(mode)
        lam = -1j * xs  # x = i lambda
        keep = [l for l in lam if d1 < l.imag < d2]
        for g in _cluster(keep, tol * 10):
            x0 = 1j * np.mean(g)
            lens = chain_lengths(mode, x0, len(g))
            key = None
            for k in found:
                if abs(k - np.mean(g)) < tol * 10:
                    key = k
            if key is None:
                key = complex(np.round(np.mean(g).real, 12), np.round(np.mean(g).imag, 12))
                found[key] = [0, []]
            found[key][0] += len(g) * mode.multiplicity
            found[key][1] += lens * mode.multiplicity
    entries = [SpectrumEntry(k, v[0], sorted(v[1], reverse=True)) for k, v in found.items()]
    entries.sort(key=lambda e: (e.lam.imag, e.lam.real))
    return AsymptoticSpectrum(entries, (d1, d2))


def exceptional_weights(s: AsymptoticSpectrum, tol: float = 1e-6) -> list[float]:
    """Sorted distinct values Im lambda."""
    out: list[float] = []
    for e in s:
        if not any(abs(e.weight - w) < tol for w in out):
            out.append(e.weight)
    return sorted(out)


def delta0(s: AsymptoticSpectrum, tol: float = 1e-9) -> float:
    """First strictly positive exceptional weight in the examined strip."""
    pos = [w for w in exceptional_weights(s) if w > tol]
    if not pos:
        raise ValidationError("no positive exceptional weight in the examined strip")
    return min(pos)


def jump_count(s: AsymptoticSpectrum, delta: float, delta_p: float, tol: float = 1e-6) -> int:
    """n(delta, delta') = sum of d(lambda) over delta < Im lambda < delta'."""
    if not delta < delta_p:
        raise ValidationError("need delta < delta'")
    lo, hi = s.strip
    if delta < lo or delta_p > hi:
        raise ValidationError("interval exceeds the examined strip")
    for w in exceptional_weights(s):
        if abs(w - delta) < tol or abs(w - delta_p) < tol:
            raise ValidationError("endpoint is an exceptional weight")
    return int(sum(e.d for e in s if delta < e.weight < delta_p))


# ------------------------------------------------------------ model library


def _sphere_quadrature(n: int = 24):
    """Nodes and weights on the unit S^3 (hyperspherical angles)."""
    xg, wg = np.polynomial.legendre.leggauss(n)
    chi = 0.5 * np.pi * (xg + 1)
    wchi = 0.5 * np.pi * wg * np.sin(chi) ** 2
    th = 0.5 * np.pi * (xg + 1)
    wth = 0.5 * np.pi * wg * np.sin(th)
    ph = 2 * np.pi * np.arange(2 * n) / (2 * n)
    wph = np.full(2 * n, 2 * np.pi / (2 * n))
    C, T, P = np.meshgrid(chi, th, ph, indexing="ij")
    W = (wchi[:, None, None] * wth[None, :, None] * wph[None, None, :]).ravel()
    X = np.stack([np.cos(C), np.sin(C) * np.cos(T), np.sin(C) * np.sin(T) * np.cos(P),
                  np.sin(C) * np.sin(T) * np.sin(P)], axis=-1).reshape(-1, 4)
    return X, W


def s3_laplacian_eigen(max_degree: int = 3, quad_nodes: int = 24) -> np.ndarray:
    """Eigenvalues of the Laplacian on the unit round S^3 by a Galerkin eigensolve.

    The trial space is the restriction of all polynomials of degree <= max_degree
    on R^4; stiffness and mass matrices come from a product Gauss rule.
    """
    X, W = _sphere_quadrature(quad_nodes)
    exps = []
    for d in range(max_degree + 1):
        for combo in combinations_with_replacement(range(4), d):
            e = np.zeros(4, dtype=int)
            for c in combo:
                e[c] += 1
            exps.append(e)
    exps = np.array(exps)
    F = np.prod(X[:, None, :] ** exps[None, :, :], axis=2)
    grad = np.zeros(F.shape + (4,))
    for c in range(4):
        e2 = exps.copy()
        e2[:, c] = np.maximum(e2[:, c] - 1, 0)
        grad[..., c] = exps[None, :, c] * np.prod(X[:, None, :] ** e2[None, :, :], axis=2)
    radial = np.einsum("qfc,qc->qf", grad, X)
    gt = grad - radial[..., None] * X[:, None, :]
    M = np.einsum("q,qf,qg->fg", W, F, F)
    K = np.einsum("q,qfc,qgc->fg", W, gt, gt)
    mu, V = linalg.eigh(M)
    keep = mu > 1e-10 * mu.max()
    S = V[:, keep] / np.sqrt(mu[keep])
    return np.sort(linalg.eigvalsh(S.T @ K @ S))


def group_eigenvalues(ev, tol: float = 1e-6) -> list[tuple[float, int]]:
    groups = _cluster(sorted(ev), tol)
    return [(float(np.mean(g)), len(g)) for g in groups]


def s3_scalar_model(max_degree: int = 3) -> ModelOperator:
    """B = -d_t^2 + Delta_{S^3} split over the discretized cross-section spectrum."""
    ev = s3_laplacian_eigen(max_degree)
    groups = group_eigenvalues(ev)
    modes = [ModeBlock([[[mu]], [[0.0]], [[-1.0]]], mult, mu) for mu, mult in groups]
    # the top degree is only partially resolved beyond max_degree, so it sets the cutoff
    return ModelOperator(modes, order=2, cutoff_eigenvalue=groups[-1][0], growth="sqrt", name="s3_scalar")


def point_model(mass: float = 1.0) -> ModelOperator:
    """B = -d_t^2 + mass on a cylinder over a point."""
    return ModelOperator([ModeBlock([[[mass]], [[0.0]], [[-1.0]]])], order=2, name="point")


def reduced_asd_model(orientation: int = -1) -> ModelOperator:
    """Pencil of (D_0, L_0^*) for diagonal perturbations of the round cylinder.

    Unknowns are (h_1, h_2, h_3) with h_0 = -(h_1 + h_2 + h_3); rows are the two
    trace-free W+ combinations (W1 - W2)/sqrt(2), (W1 + W2 - 2 W3)/sqrt(6) and
    the unweighted gauge adjoint L^* h = 2 (h_1 + h_2 + h_3)'. The W+ rows were
    obtained by linearizing the Cartan-frame W+ at q = 1, a_i = 1/2; the
    orientation flag reverses t.
    """
    s = float(orientation)
    diag = np.array([-4.0 / 3.0, s * 1.0, -1.0 / 6.0])
    off = np.array([2.0 / 3.0, -s * 0.5, 1.0 / 12.0])
    coeffs = []
    R = np.array([[1, -1, 0], [1, 1, -2]], dtype=float) / np.array([[np.sqrt(2)], [np.sqrt(6)]])
    for j in range(3):
        Wj = off[j] * np.ones((3, 3)) + (diag[j] - off[j]) * np.eye(3)
        gauge = np.full((1, 3), 2.0 if j == 1 else 0.0)
        coeffs.append(np.vstack([R @ Wj, gauge]))
    return ModelOperator([ModeBlock(coeffs)], order=2, name=f"reduced_asd[{orientation:+d}]")


# ------------------------------------------------------------ weighted norms


def weighted_norm(u, t, w: WeightSpec, weight_values=None, center: float = 0.0, cutoff=None) -> float:
    """Quadrature value of sum_{r<=k} || w d_t^r u ||_p on a uniform grid.

    ``u`` has shape (n,) or (c, n) (pointwise Euclidean norm over components).
    ``cutoff`` optionally multiplies the weight (smooth cut-off to the compact piece).
    """
    t = np.asarray(t, dtype=float)
    u = np.atleast_2d(np.asarray(u, dtype=float))
    wv = w.values(t, center) if weight_values is None else np.asarray(weight_values, dtype=float)
    if cutoff is not None:
        wv = wv * cutoff
    h = t[1] - t[0]
    total = 0.0
    deriv = u
    for r in range(w.k + 1):
        if r > 0:
            deriv = diff(u, h, axis=1, deriv=r, order=4)
        pt = np.sqrt(np.sum(deriv**2, axis=0))
        total += trapezoid((wv * pt) ** w.p, t) ** (1.0 / w.p)
    return float(total)


# --------------------------------------------------------- truncated cylinders


def solution_space(block: ModeBlock, tol: float = 1e-10):
    """Exact solutions of the model ODE: u(t) = U expm(G t) c.

    Returns (U, G) with U of shape (n, k) and k = deg det P, via QZ deflation of
    the companion pencil (handles singular leading coefficients and chains).
    """
    A, B = _companion(block)
    scale = max(1.0, np.abs(A).max())

    def finite(alpha, beta):
        return np.abs(beta) > tol * np.maximum(np.abs(alpha), scale * tol)

    AA, BB, _, _, Q, Z = linalg.ordqz(A, B, sort=finite, output="complex")
    k = int(np.sum(finite(np.diag(AA), np.diag(BB))))
    G = linalg.solve(BB[:k, :k], AA[:k, :k])
    return Z[:block.size, :k], G


def _kill_mask(xs, cond: EndCondition, side: str, tol: float = 1e-7) -> np.ndarray:
    re = np.real(xs)
    if cond.kind == "free":
        return np.zeros(len(xs), dtype=bool)
    if cond.kind == "cap":
        if side == "left":
            return re < -tol if cond.strict else re <= tol
        return re > tol if cond.strict else re >= -tol
    edge = -cond.delta
    if np.any(np.abs(re - edge) < tol):
        raise ValidationError("end weight is exceptional for the model operator")
    return re > edge if side == "right" else re < edge


def end_functionals(block: ModeBlock, positions: list, t_end: float, cond: EndCondition, side: str) -> np.ndarray:
    """Real functionals on end samples that remove the killed modes.

    ``positions[c]`` lists the sample locations of component ``c`` near the
    end; the returned rows act on the concatenated samples.
    """
    U, G = solution_space(block)
    xs_all = linalg.eigvals(G) if G.size else np.zeros(0)
    kill = _kill_mask(xs_all, cond, side)
    nk = int(kill.sum())
    sizes = [len(p) for p in positions]
    if nk == 0:
        return np.zeros((0, sum(sizes)))
    killed_vals = xs_all[kill]

    def is_killed(x):
        return np.min(np.abs(killed_vals - x)) < 1e-6 * max(1.0, abs(x))

    _, Us, sdim = linalg.schur(G, output="complex", sort=lambda x: not is_killed(x))
    rows = []
    for c, pos in enumerate(positions):
        for x in pos:
            rows.append((U @ linalg.expm(G * (x - t_end)))[c])
    Phi = np.array(rows)
    L = Us.conj().T[sdim:, :] @ np.linalg.pinv(Phi)
    stacked = np.vstack([L.real, L.imag])
    _, _, vh = linalg.svd(stacked, full_matrices=False)
    return vh[:nk]


@dataclass
class TruncatedOperator:
    """Discretized operator on a truncated cylinder or glued interval.

    Unknowns are stored component-major; component ``c`` is sampled at
    ``col_t[c]`` (grid nodes, or midpoints for staggered components). ``A``
    holds the retained ODE rows located at ``row_t``. End functionals built
    from the model pencils ``left_block``/``right_block`` complete the system.
    """

    t: np.ndarray
    A: np.ndarray
    row_t: np.ndarray
    col_t: list
    left: EndCondition
    right: EndCondition
    left_block: ModeBlock | None
    right_block: ModeBlock | None
    weight: np.ndarray
    multiplicity: int = 1
    end_nodes: int = 8
    row_stagger: list = field(default_factory=list)

    @property
    def ncomp(self) -> int:
        return len(self.col_t)

    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum([len(c) for c in self.col_t])])

    def weight_at(self, x) -> np.ndarray:
        return np.exp(np.interp(x, self.t, np.log(self.weight)))

    def col_weight(self) -> np.ndarray:
        return np.concatenate([self.weight_at(c) for c in self.col_t])

    def bc_rows(self) -> np.ndarray:
        off = self.offsets()
        rows = []
        for cond, block, side in ((self.left, self.left_block, "left"), (self.right, self.right_block, "right")):
            if cond.kind == "free" or block is None:
                continue
            k = self.end_nodes
            idx = [np.arange(k) if side == "left" else np.arange(len(c) - k, len(c)) for c in self.col_t]
            pos = [c[i] for c, i in zip(self.col_t, idx)]
            F = end_functionals(block, pos, self.t[0] if side == "left" else self.t[-1], cond, side)
            glob = np.concatenate([off[c] + idx[c] for c in range(self.ncomp)])
            for f in F:
                row = np.zeros(off[-1])
                row[glob] = f
                rows.append(row)
        return np.array(rows).reshape(-1, off[-1])

    def matrix(self, weighted: bool = True) -> tuple[np.ndarray, int]:
        """Assembled matrix (ODE rows then end rows) and the number of ODE rows.

        With ``weighted=True`` the matrix is conjugated by the weight so that the
        Euclidean norm realizes the weighted L^2 norms on both sides.
        """
        C = self.bc_rows()
        if not weighted:
            return np.vstack([self.A, C]), self.A.shape[0]
        wcol = self.col_weight()
        Aw = (self.weight_at(self.row_t)[:, None] * self.A) / wcol[None, :]
        Cw = C / wcol[None, :]
        if len(Cw):
            Cw = Cw / np.linalg.norm(Cw, axis=1, keepdims=True) * np.abs(Aw).max()
        return np.vstack([Aw, Cw]), self.A.shape[0]


def row_operators(N: int, h: float, m: int, order: int = 4, staggered_source: bool = False):
    """Derivative matrices for a row of order ``m`` and its row locations.

    Even-order rows live on nodes with m/2 end nodes dropped; odd-order rows
    live on midpoints with (m - 1)/2 dropped at each end. The matrices act on
    node samples, or on midpoint samples when ``staggered_source`` is set (only
    for even-order rows, whose nodes are then the midpoints of the midpoints).
    Returns (list of D_j for j <= m, row locations in grid units).
    """
    if m % 2 == 0:
        drop = m // 2
        rows = np.arange(drop, N - drop)
        if staggered_source:
            if drop < 1:
                raise ValidationError("a staggered unknown needs a row of order >= 1")
            mats = [midpoint_matrix(N - 1, h, j, order)[rows - 1] for j in range(m + 1)]
        else:
            mats = [np.eye(N)[rows]] + [diff_matrix(N, h, j, order)[rows] for j in range(1, m + 1)]
        return mats, rows.astype(float)
    if staggered_source:
        raise ValidationError("odd-order rows cannot act on staggered unknowns")
    drop = (m - 1) // 2
    rows = np.arange(drop, N - 1 - drop)
    mats = [midpoint_matrix(N, h, j, order)[rows] for j in range(m + 1)]
    return mats, rows + 0.5


def truncate_model(block: ModeBlock, t, left: EndCondition, right: EndCondition, weight=None,
                   order: int = 4, multiplicity: int = 1, stagger=None) -> TruncatedOperator:
    """Finite-difference discretization of a model block on the grid ``t``.

    ``stagger[c]`` places unknown ``c`` on midpoints (used for formal adjoints
    of odd-order rows).
    """
    t = np.asarray(t, dtype=float)
    N, h = len(t), t[1] - t[0]
    n = block.size
    stagger = [False] * n if stagger is None else list(stagger)
    tm = 0.5 * (t[1:] + t[:-1])
    col_t = [tm if s else t for s in stagger]
    off = np.concatenate([[0], np.cumsum([len(c) for c in col_t])])
    blocks, locs = [], []
    row_orders = block.row_orders()
    for r, m in enumerate(row_orders):
        cache = {}
        row = None
        for col in range(n):
            for j, c in enumerate(block.coeffs[:m + 1]):
                if c[r, col] == 0:
                    continue
                if stagger[col] not in cache:
                    cache[stagger[col]] = row_operators(N, h, m, order, stagger[col])
                mats, rows = cache[stagger[col]]
                if row is None:
                    row = np.zeros((len(rows), off[-1]))
                row[:, off[col]:off[col + 1]] += np.real(c[r, col]) * mats[j]
        if row is None:
            raise ValidationError(f"row {r} of the pencil is identically zero")
        blocks.append(row)
        locs.append(t[0] + h * rows)
    w = np.ones(N) if weight is None else np.asarray(weight, dtype=float)
    return TruncatedOperator(t, np.vstack(blocks), np.concatenate(locs), col_t, left, right, block, block, w,
                             multiplicity, row_stagger=[m % 2 == 1 for m in row_orders])


def _rank_decision(s: np.ndarray, n_rows: int, n_cols: int, tau_rel: float = RANK_TOL, gap: float = GAP_RATIO):
    if s.size == 0:
        return 0, np.inf
    tau = tau_rel * s[0]
    rank = int(np.sum(s > tau))
    if rank < s.size:
        ratio = s[rank - 1] / max(s[rank], np.finfo(float).tiny) if rank > 0 else np.inf
        if ratio < gap:
            raise InconclusiveRankError(f"singular-value gap {ratio:.3g} below {gap:g}", s)
    else:
        ratio = np.inf
    return rank, ratio


def discrete_index(opd: TruncatedOperator, w=None, with_adjoint: bool = False, bases: bool = False) -> IndexReport:
    """Kernel and cokernel dimensions of a truncated weighted operator."""
    M, n_ode = opd.matrix(weighted=True)
    U, s, Vh = linalg.svd(M)
    rank, ratio = _rank_decision(s, *M.shape)
    dim_ker = M.shape[1] - rank
    dim_coker = M.shape[0] - rank
    rep = IndexReport(
        dim_ker * opd.multiplicity,
        dim_coker * opd.multiplicity,
        (dim_ker - dim_coker) * opd.multiplicity,
        w,
        {"t0": float(opd.t[0]), "t1": float(opd.t[-1]), "nodes": len(opd.t), "left": opd.left.__dict__,
         "right": opd.right.__dict__, "rows": M.shape[0], "cols": M.shape[1]},
        s[-min(len(s), 8):],
        ratio,
    )
    if bases:
        wcol = np.tile(opd.weight, opd.ncomp)
        rep.kernel_basis = (Vh[rank:].T / wcol[:, None]) if dim_ker else np.zeros((M.shape[1], 0))
        rep.cokernel_basis = U[:, rank:]
    if with_adjoint:
        adj = adjoint_truncation(opd)
        rep.adjoint_kernel = discrete_index(adj).dim_ker
    return rep


def adjoint_truncation(opd: TruncatedOperator) -> TruncatedOperator:
    """Formal adjoint at the dual weight (delta -> -delta), same grid, adjoint end data."""
    if opd.left_block is None and opd.right_block is None:
        raise ValidationError("adjoint needs model pencils at the ends")
    blk = opd.left_block if opd.left_block is not None else opd.right_block
    adj = blk.adjoint()
    t = opd.t
    # discretize the formal adjoint directly: sum_j B_j^T (-d)^j
    out = truncate_model(adj, t, opd.left.adjoint(), opd.right.adjoint(), 1.0 / opd.weight,
                         multiplicity=opd.multiplicity, stagger=opd.row_stagger)
    out.left_block = opd.left_block.adjoint() if opd.left_block is not None else None
    out.right_block = opd.right_block.adjoint() if opd.right_block is not None else None
    return out


def model_index(op: ModelOperator, t, left: EndCondition, right: EndCondition, weight=None,
                order: int = 4, with_adjoint: bool = False, center: float = 0.0) -> IndexReport:
    """Sum of mode indices (times multiplicities) for a model operator on a truncated grid.

    ``weight`` is either an array of weight values on ``t`` or a
    :class:`WeightSpec` (evaluated about ``center``); in the latter case the
    spec is recorded on the report so that additivity checks can compare
    weights.
    """
    spec = weight if isinstance(weight, WeightSpec) else None
    if spec is not None:
        weight = spec.values(t, center)
    total = None
    for mode in op.modes:
        r = discrete_index(truncate_model(mode, t, left, right, weight, order, mode.multiplicity), spec,
                           with_adjoint=with_adjoint)
        if total is None:
            total = r
            total.truncation = dict(r.truncation, modes=len(op.modes))
        else:
            total.dim_ker += r.dim_ker
            total.dim_coker += r.dim_coker
            total.index += r.index
            total.singular_values = np.concatenate([total.singular_values, r.singular_values])
            total.gap_ratio = min(total.gap_ratio, r.gap_ratio)
            if with_adjoint:
                total.adjoint_kernel += r.adjoint_kernel
    return total


def index_additivity_check(bodies: list, glued: IndexReport, neck: IndexReport | None = None) -> int:
    """ind(glued) - (sum of body indices + neck index)."""
    deltas = {getattr(r.weight, "delta", None) for r in bodies + ([neck] if neck else []) + [glued]}
    deltas.discard(None)
    if len(deltas) > 1:
        raise ValidationError("index reports computed at different weights")
    total = sum(r.index for r in bodies) + (neck.index if neck is not None else 0)
    return int(glued.index - total)


# ------------------------------------------------------- norm equivalence probe


def bump(x):
    """Smooth bump supported in (0, 1)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    m = (x > 0) & (x < 1)
    out[m] = np.exp(-1.0 / (x[m] * (1 - x[m])))
    return out


def e2_section_family(levels: int = 6, r0: float = 1.0):
    """Radial E^2 test sections with support scale 2^-j near the marked point.

    Each entry provides the compact-side pointwise norm as a function of r and
    the cylinder-side pointwise norm as a function of t (E^2 sections scale by
    r^2 when passing from r^2 g to g).
    """
    fam = []
    for j in range(1, levels + 1):
        eps = r0 * 2.0 ** (-j)
        compact = lambda r, e=eps: bump((r - 0.5 * e) / (0.5 * e))
        cyl = lambda t, e=eps: (r0 * np.exp(-t)) ** 2 * bump((r0 * np.exp(-t) - 0.5 * e) / (0.5 * e))
        fam.append({"scale": eps, "compact": compact, "cylinder": cyl})
    return fam


def norm_equivalence_probe(test_sections, p: float, delta: float | None = None, r0: float = 1.0,
                           nodes: int = 4001) -> dict:
    """Ratios ||s||_{L^p(compact)} / ||e^{delta t} s||_{L^p(cylinder)} over a family.

    The compact side is integrated in r with volume r^3 dr, the cylinder side in
    t with volume dt (the cross-section volume is common to both).
    """
    if not 2 < p < 4:
        raise ValidationError("p must lie in (2, 4)")
    delta = 2.0 - 4.0 / p if delta is None else delta
    ratios = []
    for sec in test_sections:
        eps = sec["scale"]
        r = np.linspace(0.5 * eps, eps, nodes)
        comp = trapezoid(np.abs(sec["compact"](r)) ** p * r**3, r) ** (1 / p)
        t = np.linspace(-np.log(eps / r0), -np.log(0.5 * eps / r0), nodes)
        cyl = trapezoid((np.exp(delta * t) * np.abs(sec["cylinder"](t))) ** p, t) ** (1 / p)
        if cyl == 0 or comp == 0:
            raise ValidationError("zero section in the family")
        ratios.append(comp / cyl)
    ratios = np.array(ratios)
    return {"p": p, "delta": delta, "ratios": ratios, "min": float(ratios.min()), "max": float(ratios.max()),
            "spread": float(ratios.max() / ratios.min())}
