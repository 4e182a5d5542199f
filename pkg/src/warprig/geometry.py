"""Pointwise geometry of immersed surfaces S^2 -> (I x S^2, f^-2 dr^2 + r^2 dsigma).

Immersions are evaluated in the Cartesian chart x = r * omega of the ambient
space, where the metric reads

    G(A, B) = A . B + q(r) (x . A)(x . B),      q = (f^-2 - 1) / r^2,

and its lowered Christoffel symbols are  Gamma_{k,ij} = x_k [q'/(2r) x_i x_j + q delta_ij].
The surface chart is (theta, phi) on the parameter sphere; positions are jets
in (theta, phi, eps), so every chart derivative and every first variation is
exact.

Conventions: nu is the unit normal with positive radial component,
D_{e_i} e_j = -h_ij nu, H = g^ab h_ab, and the support function is
phi = G(r f d/dr, nu) = (x . nu) / f.

Valid chart orders: position 3, tangents and metric 2, normal and support
function 2, second fundamental form 1, Christoffel symbols 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from . import jets as J
from .ambient import AmbientSpace
from .sphere import QuadratureGrid, SurfaceSpec, check_rotation, direction_jets, harmonics, harmonics_with_gradient

__all__ = [
    "DegenerateGeometry",
    "RadialGraph",
    "Rotated",
    "Deformed",
    "HarmonicField",
    "PointGeometry",
    "VariationGeometry",
    "eval_point",
    "eval_variation",
    "second_forms",
    "linear_response",
    "LinearResponse",
    "displacement_jets",
    "integrate",
    "area_weights",
    "frame2",
    "frame1",
    "frame3",
]


class DegenerateGeometry(ArithmeticError):
    """Not an immersion at some node (or the image left the ambient chart)."""


def _expand(j: J.Jet) -> J.Jet:
    return J.Jet(j.c[..., None])


def _dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def _cross(a, b):
    return (
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    )


def _matvec(R, v):
    return tuple(v[0] * R[i, 0] + v[1] * R[i, 1] + v[2] * R[i, 2] for i in range(3))


# -- immersions -----------------------------------------------------------
class RadialGraph:
    """Star-shaped surface parametrised by its body-frame direction.

    The parameter point xi lands at the ambient point R (r_body(xi) xi), so
    ``RadialGraph(rotate(spec, Q))`` is exactly ``Q`` composed with
    ``RadialGraph(spec)`` under a shared parametrisation.  ``modulation``
    multiplies the radial function by (1 + sum d_lm Y_lm(xi)).
    """

    def __init__(self, spec: SurfaceSpec, modulation=()):
        self.spec = spec
        self.modulation = tuple((int(l), int(m), float(c)) for l, m, c in modulation)

    def position(self, space, theta, phi):
        xi = direction_jets(theta, phi)
        r = self.spec.body_radius(*xi)
        if self.modulation:
            L = max(l for l, _, _ in self.modulation)
            Y = harmonics(L, *xi)
            mod = xi[0] * 0.0 + 1.0
            for l, m, c in self.modulation:
                mod = mod + Y[(l, m)] * c
            r = r * mod
        return _matvec(self.spec.rotation, tuple(r * e for e in xi))


class Rotated:
    """Ambient rotation applied after another immersion (same parametrisation)."""

    def __init__(self, base, R):
        self.base = base
        self.R = check_rotation(R)

    def position(self, space, theta, phi):
        return _matvec(self.R, self.base.position(space, theta, phi))


class HarmonicField:
    """First-order deformation built from harmonics at the ambient direction omega.

    The displaced point is (r + eps dr, omega + eps domega) with

        dr     = f(r) * a(omega)
        domega = (f(r) / r) * grad b(omega) + omega x grad c(omega)

    for scalar fields a, b, c given as coefficient maps {(l, m): coeff}.  The
    coefficient values may be arrays of shape (B,) to evaluate B deformations
    at once.  Rotations are exactly ``c = Y_1m``; translations of a space form
    are exactly ``a = b = Y_1m``.
    """

    def __init__(self, scalar=None, gradient=None, curl=None):
        self.scalar = dict(scalar or {})
        self.gradient = dict(gradient or {})
        self.curl = dict(curl or {})
        keys = list(self.scalar) + list(self.gradient) + list(self.curl)
        self.degree = max((l for l, _ in keys), default=0)
        sizes = {np.size(v) for v in list(self.scalar.values()) + list(self.gradient.values()) + list(self.curl.values())}
        self.batch = max(sizes) if sizes else 1
        self.batched = any(np.ndim(v) > 0 for v in list(self.scalar.values()) + list(self.gradient.values()) + list(self.curl.values()))

    def displacement(self, space: AmbientSpace, r: J.Jet, omega):
        Y, dY = harmonics_with_gradient(max(self.degree, 1), *omega)

        def tangential(v):
            s = _dot(omega, v)
            return tuple(v[i] - omega[i] * s for i in range(3))

        zero = r * 0.0
        a = zero
        for k, c in self.scalar.items():
            a = a + Y[k] * c
        grad_b = (zero, zero, zero)
        for k, c in self.gradient.items():
            t = tangential(dY[k])
            grad_b = tuple(grad_b[i] + t[i] * c for i in range(3))
        curl_c = (zero, zero, zero)
        for k, c in self.curl.items():
            t = _cross(omega, tangential(dY[k]))
            curl_c = tuple(curl_c[i] + t[i] * c for i in range(3))
        f = space.f(r)
        dr = f * a
        fr = f / r
        domega = tuple(grad_b[i] * fr + curl_c[i] for i in range(3))
        return dr, domega


class Deformed:
    """One-parameter family base + eps * field, eps carried by the jets."""

    def __init__(self, base, field: HarmonicField):
        self.base = base
        self.field = field

    def position(self, space, theta, phi):
        x = self.base.position(space, theta, phi)
        if self.field.batched:
            x = tuple(_expand(c) for c in x)
        V = displacement_jets(space, x, self.field)
        return tuple(x[i] + J.eps_shift(V[i]) for i in range(3))


def displacement_jets(space, x, field: HarmonicField):
    """Cartesian components of d/deps of the deformed position (chart jets)."""
    r = J.sqrt(_dot(x, x))
    omega = tuple(c / r for c in x)
    dr, domega = field.displacement(space, r, omega)
    return tuple(omega[i] * dr + domega[i] * r for i in range(3))


class _Probes:
    """Base immersion with eps attached to each of the 30 chart monomials of each coordinate."""

    COUNT = 3 * (J.NCOEF // 2)

    def __init__(self, base):
        self.base = base

    def position(self, space, theta, phi):
        x = self.base.position(space, theta, phi)
        out = []
        for i in range(3):
            c = np.repeat(x[i].c[..., None], self.COUNT, axis=-1)
            c[J.NCOEF // 2 :] = 0.0
            for k in range(J.NCOEF // 2):
                c[J.NCOEF // 2 + k, ..., i * (J.NCOEF // 2) + k] = 1.0
            out.append(J.Jet(c))
        return tuple(out)


# -- evaluated geometry ----------------------------------------------------
@dataclass
class PointGeometry:
    """Surface quantities at every node; tensor indices are trailing axes (chart components)."""

    theta: np.ndarray
    phi_angle: np.ndarray
    x: np.ndarray
    r: np.ndarray
    g: np.ndarray
    g_inv: np.ndarray
    sqrt_det_g: np.ndarray
    h: np.ndarray
    H: np.ndarray
    sigma2: np.ndarray
    K: np.ndarray
    nu: np.ndarray
    phi: np.ndarray
    u: np.ndarray
    du: np.ndarray
    grad_u_sq: np.ndarray
    hess_u: np.ndarray
    dh: np.ndarray
    dH: np.ndarray
    dphi: np.ndarray
    christoffel: np.ndarray
    frame: np.ndarray
    f: np.ndarray
    f_u: np.ndarray
    f_uu: np.ndarray
    Phi: np.ndarray
    Phi_u: np.ndarray

    @property
    def rho(self):
        return 0.5 * self.r**2

    @property
    def scalar_curvature(self):
        return 2.0 * self.K

    # frame components in a g-orthonormal frame
    @property
    def h_frame(self):
        return frame2(self.h, self.frame)

    @property
    def g_frame(self):
        return frame2(self.g, self.frame)

    @property
    def du_frame(self):
        return frame1(self.du, self.frame)

    @property
    def hess_u_frame(self):
        return frame2(self.hess_u, self.frame)

    @property
    def dh_frame(self):
        return frame3(self.dh, self.frame)

    @property
    def principal_curvatures(self):
        return np.linalg.eigvalsh(self.h_frame)


@dataclass
class VariationGeometry:
    """eps-derivatives at eps = 0; covariant derivatives use the base metric."""

    g_dot: np.ndarray
    h_dot: np.ndarray
    H_dot: np.ndarray
    sigma2_dot: np.ndarray
    u_dot: np.ndarray
    phi_dot: np.ndarray
    r_dot: np.ndarray
    du_dot: np.ndarray
    hess_u_dot: np.ndarray
    dh_dot: np.ndarray
    dH_dot: np.ndarray
    dphi_dot: np.ndarray
    displacement: np.ndarray
    displacement_sq: np.ndarray
    frame: np.ndarray

    @property
    def g_dot_frame(self):
        return frame2(self.g_dot, self.frame)

    @property
    def h_dot_frame(self):
        return frame2(self.h_dot, self.frame)

    @property
    def du_dot_frame(self):
        return frame1(self.du_dot, self.frame)

    @property
    def hess_u_dot_frame(self):
        return frame2(self.hess_u_dot, self.frame)

    @property
    def dh_dot_frame(self):
        return frame3(self.dh_dot, self.frame)


def frame1(v, E):
    return np.einsum("...ia,...a->...i", E, v)


def frame2(T, E):
    return np.einsum("...ia,...jb,...ab->...ij", E, E, T)


def frame3(T, E):
    return np.einsum("...ia,...jb,...kc,...abc->...ijk", E, E, E, T)


def _stack2(m):
    return np.stack([np.stack([m[0][0], m[0][1]], -1), np.stack([m[1][0], m[1][1]], -1)], -2)


def _christoffel(g, gi):
    dg = [[[J.derivative(g[a][b], d) for b in range(2)] for a in range(2)] for d in range(2)]
    # Gamma[c][a][b]
    low = [[[0.5 * (dg[a][d][b] + dg[b][d][a] - dg[d][a][b]) for b in range(2)] for a in range(2)] for d in range(2)]
    return [[[gi[c][0] * low[0][a][b] + gi[c][1] * low[1][a][b] for b in range(2)] for a in range(2)] for c in range(2)]


def _hessian(s, Gam):
    ds = [J.derivative(s, a) for a in range(2)]
    return ds, [
        [J.derivative(ds[a], b) - Gam[0][a][b] * ds[0] - Gam[1][a][b] * ds[1] for b in range(2)]
        for a in range(2)
    ]


def _cov_deriv2(T, Gam):
    """Components T_{ab;c} of the covariant derivative of a symmetric 2-tensor."""
    out = [[[None] * 2 for _ in range(2)] for _ in range(2)]
    for a in range(2):
        for b in range(2):
            for c in range(2):
                v = J.derivative(T[a][b], c)
                for d in range(2):
                    v = v - Gam[d][c][a] * T[d][b] - Gam[d][c][b] * T[a][d]
                out[a][b][c] = v
    return out


def _vals(x, part):
    return x.value if part == 0 else J.eps_part(x).value


def _evaluate(space: AmbientSpace, imm, theta, phi, want_variation: bool):
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    x = imm.position(space, theta, phi)
    R2 = _dot(x, x)
    if np.any(R2.value <= 0):
        raise DegenerateGeometry("surface passes through the origin")
    R = J.sqrt(R2)
    space.check_range(R)
    xa = [tuple(J.derivative(c, a) for c in x) for a in range(2)]
    xab = [[tuple(J.derivative(c, b) for c in xa[a]) for b in range(2)] for a in range(2)]
    P = space.f2(R)
    q = space.q(R)
    dq = space.dq(R)
    sA = [_dot(x, xa[a]) for a in range(2)]
    eab = [[_dot(xa[a], xa[b]) for b in range(2)] for a in range(2)]
    g = [[eab[a][b] + q * sA[a] * sA[b] for b in range(2)] for a in range(2)]
    detg = g[0][0] * g[1][1] - g[0][1] * g[1][0]
    if np.any(detg.value <= 0):
        bad = np.argmin(np.ravel(detg.value))
        raise DegenerateGeometry(
            f"det g <= 0 at node (theta, phi) = ({np.ravel(np.broadcast_to(theta, detg.value.shape))[bad]:.6g}, "
            f"{np.ravel(np.broadcast_to(phi, detg.value.shape))[bad]:.6g})"
        )
    inv_det = J.recip(detg)
    gi = [[g[1][1] * inv_det, -g[0][1] * inv_det], [-g[1][0] * inv_det, g[0][0] * inv_det]]

    n = _cross(xa[0], xa[1])
    xn = _dot(x, n)
    c = (P - 1.0) / R2
    s = J.sqrt(_dot(n, n) + c * xn * xn)
    if np.any(xn.value <= 0):
        # normal orientation would flip; the radial-graph class never does this
        raise DegenerateGeometry("normal has non-positive radial component")
    inv_s = J.recip(s)
    nu = tuple((n[i] + c * xn * x[i]) * inv_s for i in range(3))
    f = J.sqrt(P)
    x_nu = xn * P * inv_s
    support = xn * f * inv_s
    half_dq_r = dq * J.recip(R) * 0.5
    h = [
        [
            -(_dot(xab[a][b], n) * inv_s + x_nu * (half_dq_r * sA[a] * sA[b] + q * eab[a][b]))
            for b in range(2)
        ]
        for a in range(2)
    ]
    H = gi[0][0] * h[0][0] + gi[0][1] * h[0][1] + gi[1][0] * h[1][0] + gi[1][1] * h[1][1]
    sigma2 = (h[0][0] * h[1][1] - h[0][1] * h[1][0]) * inv_det

    Gam = _christoffel(g, gi)
    u = space.u(R)
    du, hess_u = _hessian(u, Gam)
    dh = _cov_deriv2(h, Gam)
    dH = [J.derivative(H, a) for a in range(2)]
    dphi = [J.derivative(support, a) for a in range(2)]

    # intrinsic curvature from the metric jets alone
    dGam = [[[[J.derivative(Gam[e][a][b], d) for d in range(2)] for b in range(2)] for a in range(2)] for e in range(2)]
    Riem = []  # R^e_{1 0 1}
    for e in range(2):
        v = dGam[e][1][1][0].value - dGam[e][0][1][1].value
        for k in range(2):
            v = v + Gam[e][0][k].value * Gam[k][1][1].value - Gam[e][1][k].value * Gam[k][0][1].value
        Riem.append(v)
    K = (g[0][0].value * Riem[0] + g[0][1].value * Riem[1]) / detg.value

    gv = _stack2([[g[a][b].value for b in range(2)] for a in range(2)])
    E = _frame(gv)
    r_val = R.value
    geo = PointGeometry(
        theta=np.broadcast_to(theta if theta.ndim == R.value.ndim else theta.reshape(theta.shape + (1,) * (R.value.ndim - theta.ndim)), r_val.shape),
        phi_angle=np.broadcast_to(phi if phi.ndim == R.value.ndim else phi.reshape(phi.shape + (1,) * (R.value.ndim - phi.ndim)), r_val.shape),
        x=np.stack([c.value for c in x], -1),
        r=r_val,
        g=gv,
        g_inv=_stack2([[gi[a][b].value for b in range(2)] for a in range(2)]),
        sqrt_det_g=np.sqrt(detg.value),
        h=_stack2([[h[a][b].value for b in range(2)] for a in range(2)]),
        H=H.value,
        sigma2=sigma2.value,
        K=K,
        nu=np.stack([c.value for c in nu], -1),
        phi=support.value,
        u=u.value,
        du=np.stack([d.value for d in du], -1),
        grad_u_sq=None,
        hess_u=_stack2([[hess_u[a][b].value for b in range(2)] for a in range(2)]),
        dh=np.stack([_stack2([[dh[a][b][cc].value for b in range(2)] for a in range(2)]) for cc in range(2)], -1),
        dH=np.stack([d.value for d in dH], -1),
        dphi=np.stack([d.value for d in dphi], -1),
        christoffel=np.stack(
            [_stack2([[Gam[cc][a][b].value for b in range(2)] for a in range(2)]) for cc in range(2)], -3
        ),
        frame=E,
        f=space.f(r_val),
        f_u=space.f_u(r_val),
        f_uu=space.f_uu(r_val),
        Phi=space.Phi(r_val),
        Phi_u=space.Phi_u(r_val),
    )
    geo.grad_u_sq = np.einsum("...a,...ab,...b->...", geo.du, geo.g_inv, geo.du)
    if not want_variation:
        return geo, None

    def ev(j):
        return J.eps_part(j).value

    udot = J.eps_part(u)
    du_dot, hess_u_dot = _hessian(udot, Gam_value_jets(Gam))
    hdot = [[J.eps_part(h[a][b]) for b in range(2)] for a in range(2)]
    dh_dot = _cov_deriv2(hdot, Gam_value_jets(Gam))
    disp = np.stack([ev(cmp) for cmp in x], -1)
    xv = np.einsum("...i,...i->...", geo.x, disp)
    disp_sq = np.einsum("...i,...i->...", disp, disp) + space.q(r_val) * xv**2
    var = VariationGeometry(
        g_dot=_stack2([[ev(g[a][b]) for b in range(2)] for a in range(2)]),
        h_dot=_stack2([[hdot[a][b].value for b in range(2)] for a in range(2)]),
        H_dot=ev(H),
        sigma2_dot=ev(sigma2),
        u_dot=udot.value,
        phi_dot=ev(support),
        r_dot=ev(R),
        du_dot=np.stack([d.value for d in du_dot], -1),
        hess_u_dot=_stack2([[hess_u_dot[a][b].value for b in range(2)] for a in range(2)]),
        dh_dot=np.stack([_stack2([[dh_dot[a][b][cc].value for b in range(2)] for a in range(2)]) for cc in range(2)], -1),
        dH_dot=np.stack([ev(d) for d in dH], -1),
        dphi_dot=np.stack([ev(d) for d in dphi], -1),
        displacement=disp,
        displacement_sq=disp_sq,
        frame=E,
    )
    return geo, var


def second_forms(space: AmbientSpace, imm, theta, phi) -> dict:
    """Metric, mean curvature and sigma2 (values and eps-parts) without the higher jets.

    A lean path for objectives that only need the first and second
    fundamental forms; the formulas are those of the full evaluation.
    """
    x = imm.position(space, np.asarray(theta, dtype=float), np.asarray(phi, dtype=float))
    R2 = _dot(x, x)
    R = J.sqrt(R2)
    space.check_range(R)
    xa = [tuple(J.derivative(c, a) for c in x) for a in range(2)]
    xab = [[tuple(J.derivative(c, b) for c in xa[a]) for b in range(2)] for a in range(2)]
    P = space.f2(R)
    q = space.q(R)
    sA = [_dot(x, xa[a]) for a in range(2)]
    eab = [[_dot(xa[a], xa[b]) for b in range(2)] for a in range(2)]
    g = [[eab[a][b] + q * sA[a] * sA[b] for b in range(2)] for a in range(2)]
    detg = g[0][0] * g[1][1] - g[0][1] * g[1][0]
    if np.any(detg.value <= 0):
        raise DegenerateGeometry("det g <= 0")
    inv_det = J.recip(detg)
    n = _cross(xa[0], xa[1])
    xn = _dot(x, n)
    if np.any(xn.value <= 0):
        raise DegenerateGeometry("normal has non-positive radial component")
    c = (P - 1.0) / R2
    inv_s = J.recip(J.sqrt(_dot(n, n) + c * xn * xn))
    x_nu = xn * P * inv_s
    half_dq_r = space.dq(R) * J.recip(R) * 0.5
    h = [[-(_dot(xab[a][b], n) * inv_s + x_nu * (half_dq_r * sA[a] * sA[b] + q * eab[a][b])) for b in range(2)] for a in range(2)]
    H = (g[1][1] * h[0][0] - g[0][1] * h[0][1] - g[1][0] * h[1][0] + g[0][0] * h[1][1]) * inv_det
    sigma2 = (h[0][0] * h[1][1] - h[0][1] * h[1][0]) * inv_det
    out = {"g": _stack2([[g[a][b].value for b in range(2)] for a in range(2)]), "H": H.value, "sigma2": sigma2.value}
    out["g_dot"] = _stack2([[J.eps_part(g[a][b]).value for b in range(2)] for a in range(2)])
    out["H_dot"] = J.eps_part(H).value
    out["sigma2_dot"] = J.eps_part(sigma2).value
    return out


def Gam_value_jets(Gam):
    """Christoffel symbols of the base metric (eps-block removed)."""
    return [[[J.drop_eps(Gam[c][a][b]) for b in range(2)] for a in range(2)] for c in range(2)]


def _frame(g):
    """Rows of E are a g-orthonormal frame: E g E^T = I (Cholesky-based)."""
    L11 = np.sqrt(g[..., 0, 0])
    L21 = g[..., 1, 0] / L11
    L22 = np.sqrt(g[..., 1, 1] - L21**2)
    E = np.zeros(g.shape)
    E[..., 0, 0] = 1 / L11
    E[..., 1, 0] = -L21 / (L11 * L22)
    E[..., 1, 1] = 1 / L22
    return E


def eval_point(space: AmbientSpace, imm, grid_or_theta, phi=None) -> PointGeometry:
    """Geometry at every node of a grid (or at explicit parameter angles)."""
    theta, phi = _nodes(grid_or_theta, phi)
    return _evaluate(space, imm, theta, phi, False)[0]


def eval_variation(space: AmbientSpace, family: Deformed, grid_or_theta, phi=None):
    """(PointGeometry, VariationGeometry) of a deformed family at eps = 0.

    With batched field coefficients the variation carries a batch axis after
    the node axis; the base geometry is returned without it.
    """
    theta, phi = _nodes(grid_or_theta, phi)
    geo, var = _evaluate(space, family, theta, phi, True)
    if var.u_dot.ndim == 2 and geo.phi.ndim == 2:
        # base values were broadcast over the batch; every column is the same
        for fld in fields(geo):
            a = getattr(geo, fld.name)
            if isinstance(a, np.ndarray) and a.ndim >= 2 and a.shape[:2] == var.u_dot.shape:
                setattr(geo, fld.name, a[:, 0])
    return geo, var


def _nodes(grid_or_theta, phi):
    if isinstance(grid_or_theta, QuadratureGrid):
        return grid_or_theta.theta, grid_or_theta.phi
    return np.asarray(grid_or_theta, dtype=float), np.asarray(phi, dtype=float)


def area_weights(grid: QuadratureGrid, geo: PointGeometry) -> np.ndarray:
    """Quadrature weights for int_Sigma dA at the nodes."""
    w = grid.weights / np.sin(grid.theta)
    w = w.reshape(w.shape + (1,) * (geo.sqrt_det_g.ndim - 1))
    return w * geo.sqrt_det_g


@dataclass
class LinearResponse:
    """Variation fields as linear functions of the position's eps-block.

    ``response`` holds the VariationGeometry of the 30 unit probes (trailing
    probe axis); any deformation is then a per-node contraction.
    """

    space: AmbientSpace
    imm: object
    theta: np.ndarray
    phi: np.ndarray
    geometry: PointGeometry
    response: VariationGeometry

    _FIELDS = ("g_dot", "h_dot", "H_dot", "sigma2_dot", "u_dot", "phi_dot", "r_dot", "du_dot", "hess_u_dot", "dh_dot", "dH_dot", "dphi_dot")

    def base_position(self, batched: bool = False):
        x = self.imm.position(self.space, self.theta, self.phi)
        return tuple(_expand(c) for c in x) if batched else x

    def apply(self, field: HarmonicField) -> VariationGeometry:
        V = displacement_jets(self.space, self.base_position(field.batched), field)
        return self.apply_displacement(V)

    def apply_displacement(self, V) -> VariationGeometry:
        """Variation for eps-blocks ``V`` (3 chart jets of shape (N,) or (N, B))."""
        batched = V[0].c.ndim == 3
        coeffs = np.concatenate([v.c[: J.NCOEF // 2] for v in V], axis=0)
        if not batched:
            coeffs = coeffs[..., None]
        out = {}
        for name in self._FIELDS:
            resp = getattr(self.response, name)  # (N, 30, *tensor)
            val = np.einsum("nk...,knb->nb...", resp, coeffs)
            out[name] = val if batched else val[:, 0]
        disp = np.stack([v.value for v in V], -1)
        geo = self.geometry
        x = geo.x[:, None, :] if batched else geo.x
        r = geo.r[:, None] if batched else geo.r
        xv = np.einsum("...i,...i->...", x, disp)
        disp_sq = np.einsum("...i,...i->...", disp, disp) + self.space.q(r) * xv**2
        E = geo.frame[:, None] if batched else geo.frame
        return VariationGeometry(
            displacement=disp,
            displacement_sq=disp_sq,
            frame=np.broadcast_to(E, disp.shape[:-1] + (2, 2)),
            **out,
        )


def linear_response(space: AmbientSpace, imm, grid_or_theta, phi=None) -> LinearResponse:
    theta, phi = _nodes(grid_or_theta, phi)
    geo, resp = _evaluate(space, _Probes(imm), theta, phi, True)
    base = eval_point(space, imm, theta, phi)
    return LinearResponse(space, imm, theta, phi, base, resp)


def integrate(space: AmbientSpace, imm, grid: QuadratureGrid, field, geo: PointGeometry | None = None):
    """int_Sigma F dA; ``field`` holds node values, trailing batch axes are integrated separately."""
    if geo is None:
        geo = eval_point(space, imm, grid)
    vals = area_weights(grid, geo) * np.asarray(field, dtype=float)
    if vals.ndim == 1:
        return math.fsum(vals)
    flat = vals.reshape(vals.shape[0], -1)
    return np.array([math.fsum(flat[:, k]) for k in range(flat.shape[1])]).reshape(vals.shape[1:])
