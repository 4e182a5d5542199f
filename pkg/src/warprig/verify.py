"""Residual suites: pointwise identities of a surface and of a first variation.

Each residual is reported as max |res|, max |res| / (1 + max |term|) (node-wise
normalisation by the largest term entering the identity), the area-weighted
L2 norm, and the (theta, phi) node of the worst relative violation.  Tensor
identities are evaluated in g-orthonormal frame components and the node
residual is the largest component.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ambient import AmbientSpace
from .geometry import PointGeometry, VariationGeometry, area_weights, eval_point, eval_variation, frame1, frame2, frame3
from .sphere import QuadratureGrid

__all__ = [
    "Residual",
    "IdentityReport",
    "SURFACE_IDENTITIES",
    "VARIATION_IDENTITIES",
    "surface_report",
    "variation_report",
    "surface_residuals",
    "variation_residuals",
]

# report name: what is checked
SURFACE_IDENTITIES = {
    "support_squared": "phi^2 = 2 rho - |grad u|^2",
    "hessian_u": "h_ij phi = -u_;ij + f g_ij",
    "support_gradient": "phi_i = h_ik u_k",
    "gauss": "sigma2 = R/2 + (n-1)[(n/2) f_u - (n-2) rho Phi - phi^2 Phi]",
    "codazzi": "sum_i h_ij;i - H_j = -(n-1) phi Phi u_j",
    "trace_hessian_u": "H phi = -Lap u + n f",
    "warp_identity": "f_uu - 4 Phi f - 2 rho Phi_u = 0",
    "static": "f_uu + (n-1) Phi f = 0 (static ambients only)",
    "super_static": "max(0, f_uu + (n-1) Phi f)",
    "ricci_gap": "Ric(E1,E1) - Ric(V,V) = -(n-1) 2 rho Phi",
}

VARIATION_IDENTITIES = {
    "lin_support": "phi phi' = f u' - grad u . grad u'",
    "lin_hessian_u": "h'_ij phi + h_ij phi' = -u'_;ij + f_u u' g_ij",
    "lin_gauss": "H H' - sigma2' = -(n-1)[(n/2) f_uu u' - (n-2)(f Phi + rho Phi_u) u' - 2 phi phi' Phi - phi^2 Phi_u u']",
    "lin_codazzi": "sum_i h'_ij;i - H'_j = -(n-1)(u'_j phi Phi + u_j phi' Phi + u_j phi Phi_u u')",
    "lin_sigma2": "(n/2) f_uu u' - (n-2)(f Phi + rho Phi_u) u' - 2 phi phi' Phi - phi^2 Phi_u u' = 0 (sigma2-preserving)",
}


@dataclass
class Residual:
    identity: str
    max_abs: float
    max_rel: float
    l2: float
    argmax: tuple
    applies: bool = True
    note: str = ""

    def to_dict(self) -> dict:
        out = {
            "identity": self.identity,
            "max_abs": self.max_abs,
            "max_rel": self.max_rel,
            "l2": self.l2,
            "argmax": [float(self.argmax[0]), float(self.argmax[1])],
        }
        if not self.applies:
            out["applies"] = False
        if self.note:
            out["note"] = self.note
        return out


@dataclass
class IdentityReport:
    residuals: list
    grid: dict
    flags: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> Residual:
        for r in self.residuals:
            if r.identity == name:
                return r
        raise KeyError(name)

    @property
    def names(self):
        return [r.identity for r in self.residuals]

    def worst(self, names=None, relative: bool = True) -> float:
        sel = [r for r in self.residuals if r.applies and (names is None or r.identity in names)]
        return max((r.max_rel if relative else r.max_abs) for r in sel)

    def to_dict(self) -> dict:
        return {
            "grid": self.grid,
            "flags": list(self.flags),
            "residuals": [r.to_dict() for r in self.residuals],
            **self.extra,
        }


def _summ(name, res, terms, weights, theta, phi, applies=True, note=""):
    """res: (N, ...) residual components; terms: list of arrays broadcastable to res."""
    N = res.shape[0]
    res = np.abs(res).reshape(N, -1)
    node_abs = res.max(axis=1)
    scale = np.zeros(N)
    for t in terms:
        t = np.abs(np.broadcast_to(t, (N,) + np.shape(t)[1:])).reshape(N, -1)
        scale = np.maximum(scale, t.max(axis=1))
    node_rel = node_abs / (1.0 + scale)
    k = int(np.argmax(node_rel))
    l2 = math.sqrt(math.fsum(weights * np.sum(res**2, axis=1)))
    return Residual(name, float(node_abs.max()), float(node_rel.max()), l2, (float(theta[k]), float(phi[k])), applies, note)


def surface_residuals(space: AmbientSpace, geo: PointGeometry) -> dict:
    """name -> (residual array, list of term arrays); frame components for tensors."""
    n = space.n
    E = geo.frame
    f, fu, fuu, Phi, Phi_u = geo.f, geo.f_u, geo.f_uu, geo.Phi, geo.Phi_u
    rho = geo.rho
    phi = geo.phi
    out = {}
    out["support_squared"] = (phi**2 - (2 * rho - geo.grad_u_sq), [phi**2, 2 * rho, geo.grad_u_sq])

    hf = geo.h_frame
    hess = geo.hess_u_frame
    eye = np.eye(2)
    t1 = hf * phi[:, None, None]
    t3 = f[:, None, None] * eye
    out["hessian_u"] = (t1 + hess - t3, [t1, hess, t3])

    duf = geo.du_frame
    dphif = frame1(geo.dphi, E)
    hu = np.einsum("nij,nj->ni", hf, duf)
    out["support_gradient"] = (dphif - hu, [dphif, hu])

    ambient = (n - 1) * (0.5 * n * fu - (n - 2) * rho * Phi - phi**2 * Phi)
    R2 = geo.K  # R/2 for surfaces
    out["gauss"] = (geo.sigma2 - R2 - ambient, [geo.sigma2, R2, ambient])

    dhf = geo.dh_frame
    div = np.einsum("niji->nj", dhf)
    dHf = frame1(geo.dH, E)
    ric = (n - 1) * (phi * Phi)[:, None] * duf
    out["codazzi"] = (div - dHf + ric, [div, dHf, ric])

    lap = np.einsum("nii->n", hess)
    out["trace_hessian_u"] = (geo.H * phi + lap - n * f, [geo.H * phi, lap, n * f])
    return out


def _ambient_residuals(space: AmbientSpace, r: np.ndarray) -> dict:
    n = space.n
    f = space.f(r)
    fr = space.f_r(r)
    fuu = space.f_uu(r)
    Phi = space.Phi(r)
    Phi_u = space.Phi_u(r)
    rho = 0.5 * r * r
    out = {}
    out["warp_identity"] = (fuu - 4 * Phi * f - 2 * rho * Phi_u, [fuu, 4 * Phi * f, 2 * rho * Phi_u])
    static = fuu + (n - 1) * Phi * f
    out["static"] = (static, [fuu, (n - 1) * Phi * f])
    out["super_static"] = (np.maximum(static, 0.0), [fuu, (n - 1) * Phi * f])
    # Ricci curvatures of ds^2 + r(s)^2 dsigma with r' = f, r'' = f f_r
    ric_radial = -n * f * fr / r
    ric_tangent = -f * fr / r + (n - 1) * (1 - f * f) / (r * r)
    gap = -(n - 1) * 2 * rho * Phi
    out["ricci_gap"] = ((ric_radial - ric_tangent) - gap, [ric_radial, ric_tangent, gap])
    return out


def surface_report(space: AmbientSpace, imm, grid: QuadratureGrid, geo: PointGeometry | None = None) -> IdentityReport:
    """All surface identities at every node plus ambient identities at the node radii."""
    if geo is None:
        geo = eval_point(space, imm, grid)
    w = area_weights(grid, geo)
    th, ph = grid.theta, grid.phi
    res = []
    for name, (r, terms) in surface_residuals(space, geo).items():
        res.append(_summ(name, r, terms, w, th, ph))
    for name, (r, terms) in _ambient_residuals(space, geo.r).items():
        applies = True
        note = ""
        if name == "static" and not space.static:
            applies, note = False, "ambient is not static; value is f_uu + (n-1) Phi f"
        res.append(_summ(name, r, terms, w, th, ph, applies, note))
    flags = []
    if np.min(geo.phi) <= 0:
        flags.append("support function not positive")
    return IdentityReport(res, grid.describe(), flags, {"radial_range": [float(geo.r.min()), float(geo.r.max())]})


def variation_residuals(space: AmbientSpace, geo: PointGeometry, var: VariationGeometry) -> dict:
    """Residuals of the linearised identities; var fields may carry a trailing batch axis."""
    n = space.n
    batched = var.u_dot.ndim == 2

    def b(a, extra=0):
        # node arrays of geo broadcast against (N, B, ...)
        if not batched:
            return a
        return np.expand_dims(a, 1)

    E = b(geo.frame)
    f, fu, fuu, Phi, Phi_u = (b(x) for x in (geo.f, geo.f_u, geo.f_uu, geo.Phi, geo.Phi_u))
    rho, phi = b(geo.rho), b(geo.phi)
    ud, phid = var.u_dot, var.phi_dot
    duf = frame1(b(geo.du), E)
    dudf = frame1(var.du_dot, E)
    out = {}
    grad_dot = np.einsum("...i,...i->...", duf, dudf)
    out["lin_support"] = (phi * phid - (f * ud - grad_dot), [phi * phid, f * ud, grad_dot])

    hf = frame2(b(geo.h), E)
    hdf = frame2(var.h_dot, E)
    hess_d = frame2(var.hess_u_dot, E)
    eye = np.eye(2)
    a1 = hdf * phi[..., None, None]
    a2 = hf * phid[..., None, None]
    a3 = (fu * ud)[..., None, None] * eye
    out["lin_hessian_u"] = (a1 + a2 + hess_d - a3, [a1, a2, hess_d, a3])

    bracket_terms = [
        0.5 * n * fuu * ud,
        -(n - 2) * (f * Phi + rho * Phi_u) * ud,
        -2 * phi * phid * Phi,
        -(phi**2) * Phi_u * ud,
    ]
    bracket = sum(bracket_terms)
    HHd = b(geo.H) * var.H_dot
    out["lin_gauss"] = (HHd - var.sigma2_dot + (n - 1) * bracket, [HHd, var.sigma2_dot] + [(n - 1) * t for t in bracket_terms])
    out["lin_sigma2"] = (bracket, bracket_terms)

    dhdf = frame3(var.dh_dot, E)
    div = np.einsum("...iji->...j", dhdf)
    dHdf = frame1(var.dH_dot, E)
    c1 = (n - 1) * (phi * Phi)[..., None] * dudf
    c2 = (n - 1) * (phid * Phi)[..., None] * duf
    c3 = (n - 1) * (phi * Phi_u * ud)[..., None] * duf
    out["lin_codazzi"] = (div - dHdf + c1 + c2 + c3, [div, dHdf, c1, c2, c3])
    return out


def variation_norms(grid: QuadratureGrid, geo: PointGeometry, var: VariationGeometry) -> dict:
    """L2 norms of the dotted fields and of the displacement (deformation scale)."""
    w = area_weights(grid, geo)
    batched = var.u_dot.ndim == 2
    if batched:
        w = w[:, None]

    def l2(a):
        a = np.asarray(a)
        sq = a.reshape(a.shape[: 1 + batched] + (-1,)) ** 2
        return np.sqrt(np.sum(w * sq.sum(axis=-1), axis=0))

    return {
        "scale": l2(np.sqrt(var.displacement_sq)),
        "g_dot": l2(var.g_dot_frame),
        "h_dot": l2(var.h_dot_frame),
        "H_dot": l2(var.H_dot),
        "sigma2_dot": l2(var.sigma2_dot),
        "u_dot": l2(var.u_dot),
    }


def variation_report(
    space: AmbientSpace,
    family,
    grid: QuadratureGrid,
    hypothesis_tol: float = 1e-6,
    geo: PointGeometry | None = None,
    var: VariationGeometry | None = None,
) -> IdentityReport:
    """Residual suite of a single (unbatched) variation; hypotheses are measured and flagged."""
    if var is None:
        geo, var = eval_variation(space, family, grid)
    w = area_weights(grid, geo)
    res = [
        _summ(name, r, terms, w, grid.theta, grid.phi)
        for name, (r, terms) in variation_residuals(space, geo, var).items()
    ]
    norms = {k: float(v) for k, v in variation_norms(grid, geo, var).items()}
    scale = max(norms["scale"], 1e-300)
    flags = []
    if norms["g_dot"] > hypothesis_tol * scale:
        flags.append("hypothesis g_dot=0 not met")
    if norms["H_dot"] > hypothesis_tol * scale:
        flags.append("hypothesis H_dot=0 not met")
    if norms["sigma2_dot"] > hypothesis_tol * scale:
        flags.append("hypothesis sigma2_dot=0 not met")
    return IdentityReport(res, grid.describe(), flags, {"norms": norms})
