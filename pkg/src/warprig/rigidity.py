"""Rigidity experiments: linearised-operator kernels, integral functionals, sigma2 and space-form checks.

Deformations are expanded in a harmonic basis evaluated at the ambient
direction of each surface point (see :class:`geometry.HarmonicField`):

    scalar   a = Y_lm       l = 0..L    radial speed f(r) a
    gradient b = Y_lm       l = 1..L    tangential (f / r) grad b
    curl     c = Y_lm       l = 1..L    rotational omega x grad c

With this scaling the rotation generators (curl, l = 1) are exact Killing
fields in every warped product and the l = 1 scalar + gradient pairs are
exact translations (boosts) of Euclidean (hyperbolic) space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import jets as J
from .ambient import AmbientSpace, phi_sign
from .geometry import (
    HarmonicField,
    LinearResponse,
    PointGeometry,
    VariationGeometry,
    area_weights,
    eval_point,
    frame1,
    frame2,
    linear_response,
)
from .sphere import QuadratureGrid, harmonic_indices, harmonics_with_gradient
from .verify import variation_norms
from .weight import WeightSolution

__all__ = [
    "DeformationBasis",
    "OperatorLayout",
    "SpectrumReport",
    "PairReport",
    "HypothesisError",
    "assemble_operator",
    "kernel_spectrum",
    "weighted_variation_identity",
    "pair_identity",
    "sigma2_checks",
    "spaceform_checks",
    "translation_breaking",
    "inner_integral",
    "killing_vectors",
    "is_space_form",
]

CHUNK = 32


class HypothesisError(ValueError):
    """A theorem-mode check was requested on an input that violates its hypotheses."""


def _dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def _cross(a, b):
    return (a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0])


# -- deformation basis -------------------------------------------------------
@dataclass(frozen=True)
class DeformationBasis:
    degree: int

    def __post_init__(self):
        if self.degree < 1:
            raise ValueError("deformation degree must be >= 1")

    @property
    def columns(self):
        L = self.degree
        cols = [("scalar", l, m) for l, m in harmonic_indices(L)]
        cols += [("gradient", l, m) for l, m in harmonic_indices(L, 1)]
        cols += [("curl", l, m) for l, m in harmonic_indices(L, 1)]
        return cols

    @property
    def dimension(self) -> int:
        n = (self.degree + 1) ** 2
        return n + 2 * (n - 1)

    def index(self, kind: str, l: int, m: int) -> int:
        return self.columns.index((kind, l, m))

    def rotation_vectors(self) -> np.ndarray:
        """(D, 3) coefficient vectors of the rotation generators."""
        out = np.zeros((self.dimension, 3))
        for k, m in enumerate((-1, 0, 1)):
            out[self.index("curl", 1, m), k] = 1.0
        return out

    def translation_vectors(self) -> np.ndarray:
        """(D, 3) flat-space translations (hyperbolic boosts): scalar and gradient Y_1m together."""
        out = np.zeros((self.dimension, 3))
        for k, m in enumerate((-1, 0, 1)):
            out[self.index("scalar", 1, m), k] = 1.0
            out[self.index("gradient", 1, m), k] = 1.0
        return out

    def field(self, coeffs) -> HarmonicField:
        """HarmonicField with coefficients (D,) or (D, B)."""
        coeffs = np.asarray(coeffs, dtype=float)
        maps = {"scalar": {}, "gradient": {}, "curl": {}}
        for (kind, l, m), c in zip(self.columns, coeffs):
            if np.any(c != 0):
                maps[kind][(l, m)] = c
        return HarmonicField(maps["scalar"], maps["gradient"], maps["curl"])

    def to_json(self, coeffs) -> list:
        return [
            {"kind": kind, "l": l, "m": m, "c": float(c)}
            for (kind, l, m), c in zip(self.columns, np.asarray(coeffs, dtype=float))
            if c != 0
        ]

    # displacement jets, chunked over columns
    def _fields(self, space: AmbientSpace, x):
        r = J.sqrt(_dot(x, x))
        omega = tuple(c / r for c in x)
        Y, dY = harmonics_with_gradient(self.degree, *omega)
        f = space.f(r)
        tang = {}
        for k, v in dY.items():
            s = _dot(omega, v)
            tang[k] = tuple(v[i] - omega[i] * s for i in range(3))
        return x, omega, f, Y, tang

    def _column(self, pre, col):
        x, omega, f, Y, tang = pre
        kind, l, m = col
        if kind == "scalar":
            a = f * Y[(l, m)]
            return tuple(omega[i] * a for i in range(3))
        t = tang[(l, m)]
        if kind == "gradient":
            return tuple(t[i] * f for i in range(3))
        return _cross(x, t)

    def displacements(self, space: AmbientSpace, x, columns):
        """eps-blocks of the listed columns as chart jets of shape (N, len(columns))."""
        pre = self._fields(space, x)
        cols = [self._column(pre, self.columns[j]) for j in columns]
        return tuple(J.Jet(np.stack([c[i].c for c in cols], axis=-1)) for i in range(3))

    def combine(self, space: AmbientSpace, x, coeffs):
        """Displacement of coefficient matrix (D, B) as jets (N, B)."""
        coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float).T).T
        pre = self._fields(space, x)
        acc = None
        for j in np.flatnonzero(np.any(coeffs != 0, axis=1)):
            col = self._column(pre, self.columns[j])
            term = tuple(J.Jet(col[i].c[..., None] * coeffs[j]) for i in range(3))
            acc = term if acc is None else tuple(acc[i] + term[i] for i in range(3))
        if acc is None:
            zero = J.Jet(np.zeros(x[0].c.shape + (coeffs.shape[1],)))
            acc = (zero, zero, zero)
        return acc


# -- operator ------------------------------------------------------------------
@dataclass
class OperatorLayout:
    """Row layout and the context needed to turn coefficient vectors back into variations."""

    mode: str
    nodes: int
    row_scale: float
    column_scale: np.ndarray
    basis: DeformationBasis
    response: LinearResponse
    grid: QuadratureGrid

    @property
    def space(self):
        return self.response.space

    def variation(self, coeffs) -> VariationGeometry:
        """Variation of coefficient vector(s) in the original (unscaled) basis."""
        x = self.response.base_position()
        V = self.basis.combine(self.space, x, coeffs)
        return self.response.apply_displacement(V)


def _rows(var: VariationGeometry, sqrt_m, row_scale, mode):
    gf = var.g_dot_frame  # (N, B, 2, 2)
    s2 = math.sqrt(2.0)
    curv = var.H_dot if mode == "mean_curvature" else var.sigma2_dot
    blocks = [
        gf[..., 0, 0] * sqrt_m[:, None],
        gf[..., 0, 1] * (s2 * sqrt_m[:, None]),
        gf[..., 1, 1] * sqrt_m[:, None],
        curv * (row_scale * sqrt_m[:, None]),
    ]
    return np.concatenate(blocks, axis=0)


def assemble_operator(
    space: AmbientSpace,
    imm,
    basis: DeformationBasis,
    grid: QuadratureGrid,
    mode: str = "mean_curvature",
    row_scale: float | None = None,
    response: LinearResponse | None = None,
):
    """Columns: eps-derivatives of (frame g_dot, H_dot or sigma2_dot) per basis field.

    Rows are grouped as [g11 (N), sqrt2 g12 (N), g22 (N), curvature (N)], each
    scaled by sqrt of the area weight; the curvature block also by ``row_scale``
    (default: mean radius).  Returns (matrix, OperatorLayout).
    """
    if mode not in ("mean_curvature", "sigma2"):
        raise ValueError(f"unknown operator mode {mode!r}")
    if response is None:
        response = linear_response(space, imm, grid)
    geo = response.geometry
    w = area_weights(grid, geo)
    sqrt_m = np.sqrt(w)
    if row_scale is None:
        row_scale = float(math.fsum(w * geo.r) / math.fsum(w))
    x = response.base_position()
    D = basis.dimension
    A = np.empty((4 * grid.size, D))
    for start in range(0, D, CHUNK):
        cols = list(range(start, min(D, start + CHUNK)))
        V = basis.displacements(space, x, cols)
        var = response.apply_displacement(V)
        A[:, start : start + len(cols)] = _rows(var, sqrt_m, row_scale, mode)
    layout = OperatorLayout(mode, grid.size, row_scale, np.ones(D), basis, response, grid)
    return A, layout


# -- spectrum -----------------------------------------------------------------
@dataclass
class SpectrumReport:
    singular_values: np.ndarray
    kernel_dimension: int | None
    numerical_kernel: int
    gap: float
    ambiguous: bool
    tau_rel: float
    gap_min: float
    kernel_vectors: np.ndarray
    principal_angles_rotation: np.ndarray | None = None
    principal_angles_killing: np.ndarray | None = None
    killing_residual: float | None = None
    kernel_norms: list = field(default_factory=list)
    functional_terms: list = field(default_factory=list)

    def to_dict(self, include_vectors: bool = False) -> dict:
        out = {
            "kernel_dimension": self.kernel_dimension,
            "numerical_kernel": self.numerical_kernel,
            "ambiguous": self.ambiguous,
            "gap": self.gap,
            "tau_rel": self.tau_rel,
            "gap_min": self.gap_min,
            "sigma_max": float(self.singular_values[0]),
            "sigma_min": float(self.singular_values[-1]),
            "smallest": [float(s) for s in self.singular_values[-min(12, len(self.singular_values)) :]],
        }
        if self.principal_angles_rotation is not None:
            out["principal_angles_rotation"] = [float(a) for a in self.principal_angles_rotation]
        if self.principal_angles_killing is not None:
            out["principal_angles_killing"] = [float(a) for a in self.principal_angles_killing]
        if self.killing_residual is not None:
            out["killing_residual"] = self.killing_residual
        out["kernel_norms"] = self.kernel_norms
        if self.functional_terms:
            out["functional_terms"] = self.functional_terms
        if include_vectors:
            out["kernel_vectors"] = self.kernel_vectors.T.tolist()
        return out


def is_space_form(space: AmbientSpace) -> bool:
    """f^2 = 1 + kappa r^2 exactly (constant curvature -kappa)."""
    terms = dict(space.f2.terms)
    return terms.get(0) == 1.0 and set(terms) <= {0, 2}


def killing_vectors(space: AmbientSpace, basis: DeformationBasis) -> np.ndarray:
    """Coefficient vectors of the ambient Killing fields representable in the basis.

    Rotations always; in a space form also f Y_1m d/dr + (f/r) grad Y_1m, which
    are the translations (Euclidean) or their constant-curvature analogues.
    """
    rot = basis.rotation_vectors()
    if is_space_form(space):
        return np.hstack([rot, basis.translation_vectors()])
    return rot


def kernel_spectrum(
    A: np.ndarray,
    tau_rel: float = 1e-8,
    gap_min: float = 1e3,
    layout: OperatorLayout | None = None,
    weight: WeightSolution | None = None,
) -> SpectrumReport:
    """SVD kernel with a spectral-gap certificate; with ``layout`` also kernel diagnostics."""
    if not np.all(np.isfinite(A)):
        raise FloatingPointError("operator has non-finite entries")
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    smax = s[0]
    k = int(np.sum(s < tau_rel * smax))
    D = s.size
    if k == 0:
        gap = float(s[-1] / (tau_rel * smax))
        ambiguous = gap < gap_min
    elif k == D:
        gap, ambiguous = float("inf"), True
    else:
        gap = float(s[D - k - 1] / max(s[D - k], 1e-300))
        ambiguous = gap < gap_min
    kernel = Vt[D - k :].T  # (D, k)
    rep = SpectrumReport(s, None if ambiguous else k, k, gap, ambiguous, tau_rel, gap_min, kernel)
    if layout is None:
        return rep
    basis, space = layout.basis, layout.space
    rot = basis.rotation_vectors()
    kill = killing_vectors(space, basis)
    # rotation generators are kernel elements of every warped product
    rep.killing_residual = float(np.max(np.linalg.norm(A @ rot, axis=0)) / smax)
    if k:
        rep.principal_angles_rotation = scipy.linalg.subspace_angles(kernel, rot)
        rep.principal_angles_killing = scipy.linalg.subspace_angles(kernel, kill)
        var = layout.variation(kernel)
        geo = layout.response.geometry
        norms = variation_norms(layout.grid, geo, var)
        for j in range(k):
            rep.kernel_norms.append({key: float(val[j]) for key, val in norms.items()})
        if weight is not None:
            terms = weighted_variation_identity(space, geo, var, weight, layout.grid)
            for j in range(k):
                rep.functional_terms.append({key: float(np.ravel(val)[j]) for key, val in terms.items()})
    return rep


# -- integral functional on variations ---------------------------------------------
def _b(a, batched):
    return np.expand_dims(a, 1) if batched else a


def weighted_variation_identity(space: AmbientSpace, geo: PointGeometry, var: VariationGeometry, sol: WeightSolution, grid: QuadratureGrid) -> dict:
    """Terms of the weighted identity 0 = T1 + T2 + T3 for an isometric, H-preserving variation.

    T1 = int |h'|^2 phi w,  T2 = int (w_uu + (n-1) Phi w) u' u_i u_j h'_ij,
    T3 = n (n-1) int u'^2 phi Phi (w_u f - w f_u); frame components throughout.
    """
    n = space.n
    batched = var.u_dot.ndim == 2
    wA = _b(area_weights(grid, geo), batched)
    r = geo.r
    w, wu, wuu = sol.w(r), sol.w_u(r), sol.w_uu(r)
    E = _b(geo.frame, batched)
    hdf = frame2(var.h_dot, E)
    duf = frame1(_b(geo.du, batched), E)
    phi, Phi, f, fu = (_b(a, batched) for a in (geo.phi, geo.Phi, geo.f, geo.f_u))
    w, wu, wuu = (_b(a, batched) for a in (w, wu, wuu))
    ud = var.u_dot
    t1 = np.sum(hdf**2, axis=(-1, -2)) * phi * w
    t2 = (wuu + (n - 1) * Phi * w) * ud * np.einsum("...i,...ij,...j->...", duf, hdf, duf)
    t3 = n * (n - 1) * ud**2 * phi * Phi * (wu * f - w * fu)

    def integ(a):
        return _fsum_axis0(wA * a)

    T1, T2, T3 = integ(t1), integ(t2), integ(t3)
    norms = variation_norms(grid, geo, var)
    return {"T1": T1, "T2": T2, "T3": T3, "sum": T1 + T2 + T3, "g_dot_norm": norms["g_dot"], "H_dot_norm": norms["H_dot"], "scale": norms["scale"]}


def _fsum_axis0(a):
    a = np.asarray(a)
    if a.ndim == 1:
        return math.fsum(a)
    flat = a.reshape(a.shape[0], -1)
    return np.array([math.fsum(flat[:, k]) for k in range(flat.shape[1])]).reshape(a.shape[1:])


# -- pairs -------------------------------------------------------------------
_GL16 = np.polynomial.legendre.leggauss(16)


def inner_integral(space: AmbientSpace, F, r_a, r_b):
    """int_{u(r_a)}^{u(r_b)} F ds per node, over s = u, by 16-point Gauss in r (ds = r dr / f)."""
    x, wq = _GL16
    r_a = np.asarray(r_a, dtype=float)
    r_b = np.asarray(r_b, dtype=float)
    half = 0.5 * (r_b - r_a)
    mid = 0.5 * (r_b + r_a)
    rr = mid[..., None] + half[..., None] * x
    vals = F(rr) * rr / space.f(rr)
    return half * np.einsum("...k,k->...", vals, wq)


@dataclass
class PairReport:
    T1: float
    T2: float
    T3: float
    T4: float
    total: float
    metric_mismatch: float
    mean_curvature_mismatch: float
    sigma2_mismatch: float
    radial_mismatch: float
    sigma2_pair_residual: float
    trace_v_residual: float
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["sum"] = d.pop("total")
        return d


def _pair_geometry(space, immA, immB, grid):
    gA = eval_point(space, immA, grid)
    gB = eval_point(space, immB, grid)
    return gA, gB


def pair_identity(space: AmbientSpace, immA, immB, sol: WeightSolution, grid: QuadratureGrid, geoms=None) -> PairReport:
    """Terms of the global weighted identity for two immersions on a shared parametrisation.

    With v = h~ - h in the frame of the first surface and every inner integral over s = u:
      T1 = 1/2 int (w(u) phi~ + w(u~) phi) |v|^2
      T2 = int u_i u~_j v_ij int_u^u~ (w_ss + (n-1) Phi w) ds
      T3 = n(n-1) int phi~ [f(u) int wPhi - w(u) int fPhi]
      T4 = n(n-1) int phi  [w(u~) int fPhi - f(u~) int wPhi]
    The isometry and same-H hypotheses are not assumed; their mismatch norms are reported.
    """
    n = space.n
    gA, gB = geoms if geoms is not None else _pair_geometry(space, immA, immB, grid)
    wA = area_weights(grid, gA)
    E = gA.frame
    v = frame2(gB.h, E) - frame2(gA.h, E)
    du = frame1(gA.du, E)
    dut = frame1(gB.du, E)
    r, rt = gA.r, gB.r
    w_u, w_ut = sol.w(r), sol.w(rt)
    f_u, f_ut = space.f(r), space.f(rt)

    def ode_term(s):
        return sol.w_uu(s) + (n - 1) * space.Phi(s) * sol.w(s)

    I_ode = inner_integral(space, ode_term, r, rt)
    I_wPhi = inner_integral(space, lambda s: sol.w(s) * space.Phi(s), r, rt)
    I_fPhi = inner_integral(space, lambda s: space.f(s) * space.Phi(s), r, rt)
    vsq = np.sum(v**2, axis=(-1, -2))
    t1 = 0.5 * (w_u * gB.phi + w_ut * gA.phi) * vsq
    t2 = np.einsum("ni,nij,nj->n", du, v, dut) * I_ode
    t3 = n * (n - 1) * gB.phi * (f_u * I_wPhi - w_u * I_fPhi)
    t4 = n * (n - 1) * gA.phi * (w_ut * I_fPhi - f_ut * I_wPhi)
    T = [math.fsum(wA * t) for t in (t1, t2, t3, t4)]

    def l2(a):
        a = np.asarray(a)
        return math.sqrt(math.fsum(wA * np.sum(a.reshape(a.shape[0], -1) ** 2, axis=1)))

    dg = frame2(gB.g, E) - np.eye(2)
    flags = []
    mm_g, mm_H = l2(dg), l2(gB.H - gA.H)
    if mm_g > 1e-8:
        flags.append("metrics differ (isometry hypothesis not met)")
    if mm_H > 1e-8:
        flags.append("mean curvatures differ (hypothesis not met)")
    return PairReport(
        T1=T[0],
        T2=T[1],
        T3=T[2],
        T4=T[3],
        total=math.fsum(T),
        metric_mismatch=mm_g,
        mean_curvature_mismatch=mm_H,
        sigma2_mismatch=l2(gB.sigma2 - gA.sigma2),
        radial_mismatch=l2(rt - r),
        sigma2_pair_residual=float(np.max(np.abs(_sigma2_pair(space, gA, gB)))),
        trace_v_residual=float(np.max(np.abs(np.einsum("nii->n", v)))),
        flags=flags,
    )


def _sigma2_pair(space, gA, gB):
    """n int_u^u~ f Phi ds - Phi(u) grad(u - u~).grad(u + u~) + |grad u~|^2 (Phi(u~) - Phi(u))."""
    n = space.n
    gi = gA.g_inv
    d_minus = gA.du - gB.du
    d_plus = gA.du + gB.du
    lhs = n * inner_integral(space, lambda s: space.f(s) * space.Phi(s), gA.r, gB.r)
    cross = np.einsum("na,nab,nb->n", d_minus, gi, d_plus)
    grad_t = np.einsum("na,nab,nb->n", gB.du, gi, gB.du)
    PhiA, PhiB = space.Phi(gA.r), space.Phi(gB.r)
    return lhs - PhiA * cross + grad_t * (PhiB - PhiA)


# -- sigma2 --------------------------------------------------------------------
def sigma2_checks(space: AmbientSpace, grid: QuadratureGrid, geo: PointGeometry | None = None, var: VariationGeometry | None = None, pair=None) -> dict:
    """sigma2 diagnostics.

    Variation: the maximum-principle form  n f Phi u' + 2 Phi grad u . grad u' + |grad u|^2 Phi_u u'
    (zero for isometric, sigma2-preserving variations).  Pair (geoA, geoB): node-wise
    residual of the pair identity relating int_u^u~ f Phi ds to the gradients of u, u~.
    """
    out = {}
    hyp = {
        "phi_phi_u_positive": bool(np.min(space.Phi(_interval_samples(space)) * space.Phi_u(_interval_samples(space))) > 0),
    }
    out["hypotheses"] = hyp
    if var is not None:
        n = space.n
        batched = var.u_dot.ndim == 2
        gi = _b(geo.g_inv, batched)
        du = _b(geo.du, batched)
        f, Phi, Phi_u = (_b(a, batched) for a in (geo.f, geo.Phi, geo.Phi_u))
        gusq = _b(geo.grad_u_sq, batched)
        cross = np.einsum("...a,...ab,...b->...", du, gi, var.du_dot)
        terms = [n * f * Phi * var.u_dot, 2 * Phi * cross, gusq * Phi_u * var.u_dot]
        res = sum(terms)
        scale_terms = np.max(np.abs(np.stack(terms)), axis=0)
        out["pointwise_max"] = np.max(np.abs(res), axis=0)
        out["pointwise_rel"] = np.max(np.abs(res) / (1 + scale_terms), axis=0)
        norms = variation_norms(grid, geo, var)
        out["scale"] = norms["scale"]
        out["g_dot_norm"] = norms["g_dot"]
        out["sigma2_dot_norm"] = norms["sigma2_dot"]
    if pair is not None:
        gA, gB = pair
        res = _sigma2_pair(space, gA, gB)
        out["pair_max"] = float(np.max(np.abs(res)))
    return out


def _interval_samples(space, count=400):
    return np.linspace(*space.interval, count)


# -- space forms -----------------------------------------------------------------
def _require_space_form(space, geo):
    if phi_sign(space) != "zero":
        raise HypothesisError("space-form checks need Phi = 0 on the ambient interval")
    kmin = np.linalg.eigvalsh(geo.h_frame)[:, 0]
    if np.min(kmin) <= 0:
        raise HypothesisError(f"surface is not strictly convex (min principal curvature {np.min(kmin):.3g})")
    return kmin


def spaceform_checks(space: AmbientSpace, grid: QuadratureGrid, geo: PointGeometry, var: VariationGeometry | None = None, pair_geo: PointGeometry | None = None) -> dict:
    """Linearised-Gauss residual, the weighted integral of det h', and the sign field of det h'.

    The sign bound: in the frame diagonalising h, k1 h'22 + k2 h'11 = res gives
    det h' <= |res| |h'| / k_min, so any positive excess beyond it is reported.
    """
    kmin = _require_space_form(space, geo)
    wA = area_weights(grid, geo)
    out = {"min_principal_curvature": float(np.min(kmin))}
    hf = geo.h_frame
    if var is not None:
        batched = var.u_dot.ndim == 2
        hb = _b(hf, batched)
        hd = frame2(var.h_dot, _b(geo.frame, batched))
        res = hb[..., 0, 0] * hd[..., 1, 1] + hb[..., 1, 1] * hd[..., 0, 0] - 2 * hb[..., 0, 1] * hd[..., 0, 1]
        det = hd[..., 0, 0] * hd[..., 1, 1] - hd[..., 0, 1] ** 2
        hnorm = np.sqrt(np.sum(hd**2, axis=(-1, -2)))
        bound = np.abs(res) * hnorm / _b(kmin, batched)
        w = _b(wA, batched)
        out["lin_gauss_max"] = np.max(np.abs(res), axis=0)
        out["det_integral"] = _fsum_axis0(w * det * _b(geo.phi, batched))
        out["det_max"] = np.max(det, axis=0)
        out["sign_excess"] = np.max(det - bound, axis=0)
        out["h_dot_norm"] = variation_norms(grid, geo, var)["h_dot"]
        out["scale"] = variation_norms(grid, geo, var)["scale"]
    if pair_geo is not None:
        gB = pair_geo
        E = geo.frame
        hB = frame2(gB.h, E)
        v = hB - hf
        S = hf + hB
        comb = S[:, 0, 0] * v[:, 1, 1] + S[:, 1, 1] * v[:, 0, 0] - 2 * S[:, 0, 1] * v[:, 0, 1]
        det_v = v[:, 0, 0] * v[:, 1, 1] - v[:, 0, 1] ** 2
        weightf = space.f(gB.r) * geo.phi + space.f(geo.r) * gB.phi
        out["pair_gauss_max"] = float(np.max(np.abs(comb)))
        out["pair_det_integral"] = math.fsum(wA * det_v * weightf)
        out["pair_v_max"] = float(np.max(np.abs(v)))
    return out


def translation_breaking(A: np.ndarray, layout: OperatorLayout) -> dict:
    """Smallest operator image of a unit-scale flat translation field, relative to sigma_max.

    Zero in Euclidean space; bounded away from zero once the mass breaks translations.
    """
    T = layout.basis.translation_vectors()
    var = layout.variation(T)
    scale = variation_norms(layout.grid, layout.response.geometry, var)["scale"]
    AT = (A @ T) / scale
    s = np.linalg.svd(AT, compute_uv=False)
    smax = np.linalg.norm(A, 2)
    return {"min_image": float(s[-1]), "relative": float(s[-1] / smax), "sigma_max": float(smax)}
