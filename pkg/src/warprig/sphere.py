"""Quadrature on S^2, real spherical harmonics, rotations and star-shaped surface specs.

Harmonics are real and orthonormal, ``int Y_lm^2 dsigma = 1``, without the
Condon-Shortley phase; ``m > 0`` carries cos(m phi) and ``m < 0`` carries
sin(|m| phi).  They are evaluated as polynomials in the Cartesian components of
a unit vector,

    Y_lm = N_lm * (d^|m| P_l / dz^|m|)(z) * Re / Im (x + i y)^|m|,

which is pole-free and works for floats and jets alike.  An angle-based route
(``sin^m theta`` times the same Legendre factor times cos/sin(m phi)) is kept as
an independent check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import jets as J

__all__ = [
    "QuadratureGrid",
    "SurfaceSpec",
    "build_grid",
    "harmonics",
    "harmonics_with_gradient",
    "harmonic_indices",
    "angle_harmonics",
    "axis_angle",
    "check_rotation",
    "rotate",
    "eval_radius",
    "direction_jets",
    "PoleProximityError",
]

POLE_GUARD = 1e-10


class PoleProximityError(ValueError):
    pass


# -- quadrature -----------------------------------------------------------
@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    """Gauss-Legendre in cos(theta) times uniform longitude, latitude-major order."""

    n_lat: int
    n_lon: int
    theta: np.ndarray
    phi: np.ndarray
    cos_theta: np.ndarray
    weights: np.ndarray

    @property
    def size(self) -> int:
        return self.theta.size

    @property
    def max_abs_cos(self) -> float:
        return float(np.max(np.abs(self.cos_theta)))

    def integrate(self, values) -> float:
        """int_{S^2} F dsigma for node values F (exactly rounded sum)."""
        return math.fsum(np.ravel(self.weights * np.asarray(values, dtype=float)))

    def describe(self) -> dict:
        return {"lat": self.n_lat, "lon": self.n_lon, "max_abs_cos_theta": self.max_abs_cos}


def build_grid(n_lat: int, n_lon: int) -> QuadratureGrid:
    if n_lat < 8 or n_lon < 16 or n_lon % 2:
        raise ValueError(f"grid needs n_lat >= 8 and even n_lon >= 16, got {n_lat} x {n_lon}")
    z, wz = np.polynomial.legendre.leggauss(n_lat)
    # north to south
    z, wz = z[::-1], wz[::-1]
    lon = 2 * np.pi * np.arange(n_lon) / n_lon
    zz, pp = np.meshgrid(z, lon, indexing="ij")
    ww = np.repeat(wz, n_lon) * (2 * np.pi / n_lon)
    return QuadratureGrid(
        n_lat=n_lat,
        n_lon=n_lon,
        theta=np.arccos(zz).ravel(),
        phi=pp.ravel(),
        cos_theta=zz.ravel(),
        weights=ww,
    )


# -- harmonics ------------------------------------------------------------
def harmonic_indices(L: int, l_min: int = 0):
    return [(l, m) for l in range(l_min, L + 1) for m in range(-l, l + 1)]


def _norm(l: int, m: int) -> float:
    am = abs(m)
    n = math.sqrt((2 * l + 1) / (4 * math.pi) * math.factorial(l - am) / math.factorial(l + am))
    return n * math.sqrt(2.0) if m else n


def _legendre_derivs(L: int, z, m_max: int):
    """Q[l][m] = d^m P_l / dz^m for 0 <= m <= min(l, m_max)."""
    one = z * 0.0 + 1.0
    Q = {}
    for m in range(0, min(L, m_max) + 1):
        dfact = 1.0
        for k in range(1, 2 * m, 2):
            dfact *= k
        Q[(m, m)] = one * dfact
        if m + 1 <= L:
            Q[(m + 1, m)] = z * ((2 * m + 1) * dfact)
        for l in range(m + 2, L + 1):
            Q[(l, m)] = (z * Q[(l - 1, m)] * (2 * l - 1) - Q[(l - 2, m)] * (l + m - 1)) * (1.0 / (l - m))
    return Q


def _complex_powers(L: int, x, y):
    one = x * 0.0 + 1.0
    re, im = [one], [x * 0.0]
    for m in range(1, L + 1):
        r0, i0 = re[-1], im[-1]
        re.append(x * r0 - y * i0)
        im.append(x * i0 + y * r0)
    return re, im


def harmonics(L: int, x, y, z) -> dict:
    """{(l, m): Y_lm} at unit vectors (x, y, z); inputs may be arrays or jets."""
    Q = _legendre_derivs(L, z, L)
    re, im = _complex_powers(L, x, y)
    out = {}
    for l, m in harmonic_indices(L):
        am = abs(m)
        azim = re[am] if m >= 0 else im[am]
        out[(l, m)] = Q[(l, am)] * azim * _norm(l, m)
    return out


def harmonics_with_gradient(L: int, x, y, z):
    """Values and Cartesian gradients of the polynomial extensions of Y_lm.

    Only the tangential part of the gradient is intrinsic; project with
    ``v - (xi . v) xi`` to get the surface gradient on S^2.
    """
    Q = _legendre_derivs(L, z, L + 1)
    re, im = _complex_powers(L, x, y)
    zero = x * 0.0
    vals, grads = {}, {}
    for l, m in harmonic_indices(L):
        am = abs(m)
        N = _norm(l, m)
        q = Q[(l, am)]
        dq = Q[(l, am + 1)] if am + 1 <= l else zero
        if m >= 0:
            a = re[am]
            ax = re[am - 1] * am if am else zero
            ay = -im[am - 1] * am if am else zero
        else:
            a = im[am]
            ax = im[am - 1] * am
            ay = re[am - 1] * am
        vals[(l, m)] = q * a * N
        grads[(l, m)] = (q * ax * N, q * ay * N, dq * a * N)
    return vals, grads


def angle_harmonics(L: int, theta, phi) -> dict:
    """Same basis through sin/cos of the angles (independent of the Cartesian route)."""
    if isinstance(theta, J.Jet):
        st, ct = J.sin(theta), J.cos(theta)
        trig = lambda k, f: (J.cos if f == "c" else J.sin)(phi * float(k))  # noqa: E731
    else:
        st, ct = np.sin(theta), np.cos(theta)
        trig = lambda k, f: (np.cos if f == "c" else np.sin)(k * phi)  # noqa: E731
    Q = _legendre_derivs(L, ct, L)
    out = {}
    for l, m in harmonic_indices(L):
        am = abs(m)
        s_pow = st**am if am else st * 0.0 + 1.0
        azim = trig(am, "c") if m >= 0 else trig(am, "s")
        out[(l, m)] = Q[(l, am)] * s_pow * azim * _norm(l, m)
    return out


# -- rotations ------------------------------------------------------------
def axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    nrm = np.linalg.norm(axis)
    if nrm == 0:
        if angle != 0:
            raise ValueError("rotation axis must be nonzero")
        return np.eye(3)
    k = axis / nrm
    K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + math.sin(angle) * K + (1 - math.cos(angle)) * (K @ K)


def check_rotation(R, tol: float = 1e-12) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        raise ValueError("rotation must be a 3x3 matrix")
    if np.max(np.abs(R.T @ R - np.eye(3))) > tol or abs(np.linalg.det(R) - 1) > tol:
        raise ValueError("matrix is not a proper rotation")
    return R


# -- surfaces -------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class SurfaceSpec:
    """Star-shaped surface r(xi) = b (1 + sum c_lm Y_lm(R^-1 xi))."""

    base_radius: float
    harmonics: tuple = ()
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        terms = tuple((int(l), int(m), float(c)) for l, m, c in self.harmonics)
        for l, m, _ in terms:
            if l < 0 or abs(m) > l:
                raise ValueError(f"invalid harmonic index (l={l}, m={m})")
        object.__setattr__(self, "harmonics", terms)
        object.__setattr__(self, "rotation", check_rotation(self.rotation))
        if self.base_radius <= 0:
            raise ValueError("base radius must be positive")

    @property
    def degree(self) -> int:
        return max((l for l, _, _ in self.harmonics), default=0)

    def body_radius(self, x, y, z):
        """Radius in body coordinates (before the rotation is applied)."""
        Y = harmonics(self.degree, x, y, z)
        out = x * 0.0 + 1.0
        for l, m, c in self.harmonics:
            out = out + Y[(l, m)] * c
        return out * self.base_radius

    def describe(self) -> dict:
        R = self.rotation
        angle = math.acos(max(-1.0, min(1.0, (np.trace(R) - 1) / 2)))
        axis = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
        return {
            "base_radius": self.base_radius,
            "harmonics": [{"l": l, "m": m, "c": c} for l, m, c in self.harmonics],
            "rotation": {"axis": (axis / np.linalg.norm(axis)).tolist() if angle else [0.0, 0.0, 1.0], "angle": angle},
        }


def rotate(spec: SurfaceSpec, R) -> SurfaceSpec:
    R = check_rotation(R)
    return SurfaceSpec(spec.base_radius, spec.harmonics, R @ spec.rotation)


def direction_jets(theta, phi):
    """Unit vector (sin t cos p, sin t sin p, cos t) as jets of the chart (t, p)."""
    th = J.variable(theta, 0) if not isinstance(theta, J.Jet) else theta
    ph = J.variable(phi, 1) if not isinstance(phi, J.Jet) else phi
    st, ct = J.sin(th), J.cos(th)
    return st * J.cos(ph), st * J.sin(ph), ct


def _pullback(spec: SurfaceSpec, x, y, z):
    Rt = spec.rotation.T
    return tuple(x * Rt[i, 0] + y * Rt[i, 1] + z * Rt[i, 2] for i in range(3))


def eval_radius(spec: SurfaceSpec, theta, phi, method: str = "cartesian"):
    """Ambient radial function at direction (theta, phi); jets in -> jet out.

    ``method="angles"`` maps the pulled-back direction to angles with acos/atan2
    and evaluates the angle form of the harmonics.
    """
    cos_t = np.cos(theta.value if isinstance(theta, J.Jet) else theta)
    if np.any(np.abs(cos_t) > 1 - POLE_GUARD):
        raise PoleProximityError("direction too close to a coordinate pole")
    x, y, z = direction_jets(theta, phi)
    bx, by, bz = _pullback(spec, x, y, z)
    if method == "cartesian":
        return spec.body_radius(bx, by, bz)
    if method != "angles":
        raise ValueError(f"unknown evaluation method {method!r}")
    if np.any(np.abs(bz.value) > 1 - POLE_GUARD):
        raise PoleProximityError("pulled-back direction too close to a pole")
    t2 = J.acos(bz)
    p2 = J.atan2(by, bx)
    Y = angle_harmonics(spec.degree, t2, p2)
    out = t2 * 0.0 + 1.0
    for l, m, c in spec.harmonics:
        out = out + Y[(l, m)] * c
    return out * spec.base_radius


def radius_at(spec: SurfaceSpec, directions: np.ndarray) -> np.ndarray:
    """Radial function at ambient unit vectors ``directions[..., 3]`` (plain floats)."""
    d = np.asarray(directions, dtype=float) @ spec.rotation
    return spec.body_radius(d[..., 0], d[..., 1], d[..., 2])
