"""Warped-product ambient spaces  ds^2 = f(r)^-2 dr^2 + r^2 dsigma  on I x S^n.

Every preset has ``f^2`` equal to a Laurent polynomial in ``r``, so f, the
radial coordinates rho = r^2/2 and u = int dr r / f, the curvature-gap
function Phi = 1/4 ((f^2 - 1)/rho)_rho and all their derivatives are exact
closed forms.  Only ``u`` itself needs quadrature.

All radial functions accept either numpy arrays or :class:`~warprig.jets.Jet`
values of ``r``.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np

from . import jets as J

__all__ = [
    "AmbientSpace",
    "RadialDiagnostics",
    "Laurent",
    "RangeError",
    "space_form",
    "schwarzschild",
    "ads_schwarzschild",
    "cubic_warp",
    "custom_radial",
    "from_config",
    "eval_radial",
    "static_residual",
    "super_static_residual",
    "phi_sign",
    "theorem_hypotheses",
    "ricci_gap",
    "static_operator_tangent",
]

HORIZON_FLOOR = 1e-10


class RangeError(ValueError):
    """A radius outside the ambient interval."""


def _sqrt(x):
    return J.sqrt(x) if isinstance(x, J.Jet) else np.sqrt(x)


def _power(r, p: int):
    if isinstance(r, J.Jet):
        if 0 <= p <= 4:
            return r**p
        return J.pow_real(r, float(p))
    return np.asarray(r, dtype=float) ** p


@dataclass(frozen=True)
class Laurent:
    """Finite Laurent polynomial  sum_p c_p r^p  with integer powers."""

    terms: tuple[tuple[int, float], ...]

    @classmethod
    def of(cls, mapping) -> "Laurent":
        merged: dict[int, float] = {}
        for p, c in dict(mapping).items():
            merged[int(p)] = merged.get(int(p), 0.0) + float(c)
        return cls(tuple(sorted((p, c) for p, c in merged.items() if c != 0.0)))

    def deriv(self) -> "Laurent":
        return Laurent.of({p - 1: p * c for p, c in self.terms if p != 0})

    def shift(self, k: int) -> "Laurent":
        """Multiply by r^k."""
        return Laurent.of({p + k: c for p, c in self.terms})

    def scale(self, s: float) -> "Laurent":
        return Laurent.of({p: s * c for p, c in self.terms})

    def __add__(self, other: "Laurent") -> "Laurent":
        d = dict(self.terms)
        for p, c in other.terms:
            d[p] = d.get(p, 0.0) + c
        return Laurent.of(d)

    def __call__(self, r):
        if not self.terms:
            return 0.0 * r
        out = None
        for p, c in self.terms:
            term = _power(r, p) * c
            out = term if out is None else out + term
        return out


@dataclass(frozen=True)
class RadialDiagnostics:
    r: np.ndarray
    rho: np.ndarray
    u: np.ndarray
    f: np.ndarray
    f_r: np.ndarray
    f_rho: np.ndarray
    f_u: np.ndarray
    f_uu: np.ndarray
    Phi: np.ndarray
    Phi_rho: np.ndarray
    Phi_u: np.ndarray


class _UTable:
    """Cumulative u(r) = int_{r_lo}^r s / f(s) ds on Gauss-Legendre panels.

    The panel count doubles until panel-edge values agree to ``tol``.
    """

    ORDER = 20

    def __init__(self, integrand, r_lo: float, r_hi: float, tol: float = 1e-14):
        self.integrand = integrand
        self.r_lo, self.r_hi = r_lo, r_hi
        self.tol = tol
        self.x, self.w = np.polynomial.legendre.leggauss(self.ORDER)
        panels = 16
        edges, cum = self._build(panels)
        while True:
            edges2, cum2 = self._build(2 * panels)
            err = np.max(np.abs(cum2[::2] - cum) / (1.0 + np.abs(cum)))
            edges, cum, panels = edges2, cum2, 2 * panels
            if err <= tol or panels >= 1 << 14:
                break
        self.edges, self.cum = edges, cum
        self.panels = panels
        self.refinement_error = err

    def _segment(self, a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        half = 0.5 * (b - a)
        mid = 0.5 * (b + a)
        s = mid[..., None] + half[..., None] * self.x
        return half * np.sum(self.w * self.integrand(s), axis=-1)

    def _build(self, panels):
        edges = np.linspace(self.r_lo, self.r_hi, panels + 1)
        pieces = self._segment(edges[:-1], edges[1:])
        cum = np.concatenate([[0.0], np.cumsum(pieces)])
        return edges, cum

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        k = np.clip(np.searchsorted(self.edges, r, side="right") - 1, 0, self.panels - 1)
        return self.cum[k] + self._segment(self.edges[k], r)


@dataclass(eq=False)
class AmbientSpace:
    """Warped product with ``f^2`` given as a Laurent polynomial in r.

    ``n`` is the dimension of the sphere factor; all formulas take it as a
    parameter, while the surface machinery elsewhere is specialised to n = 2.
    """

    preset: str
    params: dict
    f2: Laurent
    interval: tuple[float, float]
    n: int = 2
    static: bool = False
    u_tol: float = 1e-14
    _u: _UTable | None = field(default=None, repr=False)

    def __post_init__(self):
        r_lo, r_hi = map(float, self.interval)
        if not (0 < r_lo < r_hi):
            raise ValueError(f"interval must satisfy 0 < r_lo < r_hi, got {self.interval}")
        if self.n < 2:
            raise ValueError("sphere dimension n must be >= 2")
        self.interval = (r_lo, r_hi)
        sample = np.linspace(r_lo, r_hi, 4001)
        f2 = self.f2(sample)
        if np.min(f2) < HORIZON_FLOOR:
            bad = sample[np.argmin(f2)]
            raise ValueError(f"f^2 < {HORIZON_FLOOR:g} at r = {bad:.6g}; interval touches a horizon")
        root = self.largest_root()
        if root is not None and r_lo <= root <= r_hi:
            raise ValueError(f"interval [{r_lo}, {r_hi}] contains the horizon radius {root:.12g}")
        self._df2 = self.f2.deriv()
        self._fu = self._df2.shift(-1).scale(0.5)
        self._dfu = self._fu.deriv()
        # Phi = (1 / 2r) d/dr [ (f^2 - 1) r^-2 ]
        self._phi = (self.f2 + Laurent.of({0: -1.0})).shift(-2).deriv().shift(-1).scale(0.5)
        self._dphi = self._phi.deriv()
        self._u = _UTable(functools.partial(_du_dr, self.f2), r_lo, r_hi, self.u_tol)

    # -- construction helpers -------------------------------------------
    def largest_root(self):
        """Largest positive root of f^2 (None if f^2 has no positive root)."""
        return _largest_root(self.f2)

    def check_range(self, r):
        r = np.asarray(r.value if isinstance(r, J.Jet) else r, dtype=float)
        lo, hi = self.interval
        bad = (r < lo) | (r > hi) | ~np.isfinite(r)
        if np.any(bad):
            raise RangeError(
                f"radius {np.ravel(r[bad])[:3]} outside ambient interval [{lo}, {hi}]"
            )

    # -- radial functions (arrays or jets) --------------------------------
    def f(self, r):
        return _sqrt(self.f2(r))

    def f_r(self, r):
        return self._df2(r) / (2 * self.f(r))

    def f_u(self, r):
        return self._fu(r)

    def f_uu(self, r):
        return self.f(r) * self._dfu(r) / r

    def Phi(self, r):
        return self._phi(r)

    def Phi_rho(self, r):
        return self._dphi(r) / r

    def Phi_u(self, r):
        return self.f(r) * self._dphi(r) / r

    def q(self, r):
        """(f^-2 - 1) / r^2: the radial correction of the Cartesian-chart metric."""
        return (1.0 / self.f2(r) - 1.0) / (r * r)

    def dq(self, r):
        P = self.f2(r)
        return -self._df2(r) / (P * P * r * r) - 2.0 * (1.0 / P - 1.0) / (r * r * r)

    def u(self, r):
        """u(r) with u(r_lo) = 0; jets get the exact Taylor expansion."""
        if not isinstance(r, J.Jet):
            return self._u(r)
        r0 = r.value
        t = J.variable(r0, 0)
        slope = t / self.f(t)  # du/dr as a series in (r - r0)
        taylor = [self._u(r0)] + [slope.coef(k, 0) / (k + 1) for k in range(4)]
        return J.compose(r, taylor)

    def static_residual(self, r):
        return self.f_uu(r) + (self.n - 1) * self.Phi(r) * self.f(r)

    # -- config ---------------------------------------------------------
    def describe(self) -> dict:
        return {
            "preset": self.preset,
            **self.params,
            "n": self.n,
            "interval": list(self.interval),
        }


def _du_dr(f2: Laurent, s):
    return s / np.sqrt(f2(s))


def _largest_root(f2: Laurent):
    if not f2.terms:
        return None
    lo = min(0, min(p for p, _ in f2.terms))
    hi = max(p for p, _ in f2.terms) - lo
    coeffs = np.zeros(hi + 1)
    for p, c in f2.terms:
        coeffs[hi - (p - lo)] = c
    roots = np.roots(np.trim_zeros(coeffs, "f"))
    real = roots[(np.abs(roots.imag) < 1e-9) & (roots.real > 0)].real
    return float(real.max()) if real.size else None


def _default_interval(f2: Laurent, n: int, kappa: float = 0.0):
    root = _largest_root(f2)
    if kappa < 0:
        return (0.05, 0.95 / np.sqrt(-kappa))
    if root is None:
        return (0.1, 10.0)
    if f2(np.array([2.0 * root]))[0] <= 0:
        # f^2 closes off outside: stay inside the outer root
        return (min(0.1, 0.5 * root), 0.95 * root)
    return (max(0.1, 1.2 * root), 10.0)


def space_form(kappa: float = 0.0, n: int = 2, interval=None) -> AmbientSpace:
    """f^2 = 1 + kappa r^2: Euclidean (0), hyperbolic (kappa > 0, curvature -kappa), spherical (kappa < 0)."""
    f2 = Laurent.of({0: 1.0, 2: kappa})
    interval = interval or _default_interval(f2, n, kappa)
    return AmbientSpace("space_form", {"kappa": float(kappa)}, f2, interval, n, static=False)


def schwarzschild(m: float, n: int = 2, interval=None) -> AmbientSpace:
    f2 = Laurent.of({0: 1.0, 1 - n: -2.0 * m})
    interval = interval or _default_interval(f2, n)
    return AmbientSpace("schwarzschild", {"mass": float(m)}, f2, interval, n, static=True)


def ads_schwarzschild(m: float, kappa: float = 1.0, n: int = 2, interval=None) -> AmbientSpace:
    f2 = Laurent.of({0: 1.0, 1 - n: -2.0 * m, 2: kappa})
    interval = interval or _default_interval(f2, n)
    return AmbientSpace(
        "ads_schwarzschild", {"mass": float(m), "kappa": float(kappa)}, f2, interval, n, static=True
    )


def custom_radial(coefficients, n: int = 2, interval=None, name: str = "custom_radial") -> AmbientSpace:
    """f^2 = sum_k coefficients[k] rho^k with rho = r^2 / 2."""
    f2 = Laurent.of({2 * k: c / 2.0**k for k, c in enumerate(coefficients)})
    interval = interval or _default_interval(f2, n)
    params = {} if name == "cubic_warp" else {"coefficients": [float(c) for c in coefficients]}
    return AmbientSpace(name, params, f2, interval, n, static=False)


def cubic_warp(n: int = 2, interval=None) -> AmbientSpace:
    """f = sqrt(1 + rho^3): Phi = rho / 2 and Phi_u = f / 2, so Phi * Phi_u > 0."""
    return custom_radial([1.0, 0.0, 0.0, 1.0], n=n, interval=interval, name="cubic_warp")


def from_config(cfg: dict) -> AmbientSpace:
    preset = cfg["preset"]
    n = int(cfg.get("n", 2))
    interval = tuple(cfg["interval"]) if cfg.get("interval") else None
    if preset == "space_form":
        return space_form(cfg.get("kappa", 0.0), n, interval)
    if preset == "euclidean":
        return space_form(0.0, n, interval)
    if preset == "hyperbolic":
        return space_form(cfg.get("kappa", 1.0), n, interval)
    if preset == "schwarzschild":
        return schwarzschild(cfg["mass"], n, interval)
    if preset == "ads_schwarzschild":
        return ads_schwarzschild(cfg["mass"], cfg.get("kappa", 1.0), n, interval)
    if preset == "cubic_warp":
        return cubic_warp(n, interval)
    if preset == "custom_radial":
        return custom_radial(cfg["coefficients"], n, interval)
    raise ValueError(f"unknown ambient preset {preset!r}")


# -- diagnostics ----------------------------------------------------------
def eval_radial(space: AmbientSpace, r) -> RadialDiagnostics:
    r = np.asarray(r, dtype=float)
    space.check_range(r)
    f = space.f(r)
    f_r = space.f_r(r)
    return RadialDiagnostics(
        r=r,
        rho=0.5 * r * r,
        u=space.u(r),
        f=f,
        f_r=f_r,
        f_rho=f_r / r,
        f_u=space.f_u(r),
        f_uu=space.f_uu(r),
        Phi=space.Phi(r),
        Phi_rho=space.Phi_rho(r),
        Phi_u=space.Phi_u(r),
    )


def static_residual(space: AmbientSpace, r):
    r = np.asarray(r, dtype=float)
    space.check_range(r)
    return space.static_residual(r)


def warp_identity_residual(space: AmbientSpace, r):
    """f_uu - 4 Phi f - 2 rho Phi_u, which vanishes for every warp."""
    r = np.asarray(r, dtype=float)
    return space.f_uu(r) - 4 * space.Phi(r) * space.f(r) - r * r * space.Phi_u(r)


def _samples(space: AmbientSpace, count: int):
    return np.linspace(*space.interval, max(count, 200))


def super_static_residual(space: AmbientSpace, r=None):
    """f_uu + (n-1) Phi f on the given radii (default: 200+ samples of the interval)."""
    r = _samples(space, 200) if r is None else np.asarray(r, dtype=float)
    space.check_range(r)
    return space.static_residual(r)


def phi_sign(space: AmbientSpace, count: int = 400, atol: float = 1e-14) -> str:
    Phi = space.Phi(_samples(space, count))
    scale = atol * (1.0 + np.max(np.abs(Phi)))
    if np.max(np.abs(Phi)) <= scale:
        return "zero"
    if np.min(Phi) > 0:
        return "positive"
    if np.max(Phi) < 0:
        return "negative"
    if np.min(Phi) >= -scale:
        return "nonnegative"
    if np.max(Phi) <= scale:
        return "nonpositive"
    return "mixed"


def theorem_hypotheses(space: AmbientSpace, count: int = 400, tol: float = 1e-12) -> dict:
    """Super-static inequality and the sign condition on Phi over the interval."""
    r = _samples(space, count)
    res = space.static_residual(r)
    scale = 1.0 + np.max(np.abs(space.f_uu(r)))
    sign = phi_sign(space, count)
    super_static = bool(np.max(res) <= tol * scale)
    prod = space.Phi(r) * space.Phi_u(r)
    return {
        "super_static": super_static,
        "max_super_static_residual": float(np.max(res)),
        "phi_sign": sign,
        "super_static_theorem": super_static and sign != "mixed",
        "phi_phi_u_positive": bool(np.min(prod) > 0),
        "min_phi_phi_u": float(np.min(prod)),
    }


def ricci_gap(space: AmbientSpace, r):
    """Ric(E1, E1) - Ric(V, V) = -(n-1) 2 rho Phi."""
    r = np.asarray(r, dtype=float)
    space.check_range(r)
    return -(space.n - 1) * r * r * space.Phi(r)


def static_operator_tangent(space: AmbientSpace, r):
    """Tangential component of the static operator, 2 rho [f_uu + (n-1) Phi f]."""
    r = np.asarray(r, dtype=float)
    space.check_range(r)
    return r * r * space.static_residual(r)
