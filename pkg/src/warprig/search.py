"""Companion-surface search: minimise the isometry + curvature mismatch to a reference.

The candidate is the star-shaped graph r(xi) = b (1 + sum c_lm Y_lm(xi)) in
its own body frame (rotated by a fixed rotation), sharing the parameter
sphere with the reference.  The objective is

    E(c) = sum_q m_q ( |E (g~ - g) E^T|^2 + lam (K~ - K)^2 )

with E the reference's orthonormal frame, K = H (or sigma2) and lam = rbar^2
(rbar^4 for sigma2), so every term is dimensionless.  Gradients come from
eps-jets: one evaluation per iterate carries all coefficient directions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares, minimize as scipy_minimize
from scipy.spatial.transform import Rotation

from . import jets as J
from .ambient import AmbientSpace
from .geometry import area_weights, eval_point, frame2, second_forms
from .sphere import QuadratureGrid, SurfaceSpec, build_grid, direction_jets, harmonic_indices, harmonics, radius_at

__all__ = ["SearchProblem", "SearchTrace", "minimize", "orbit_distance", "spec_coefficients", "random_rotation", "run_restarts"]


class _Candidate:
    """Body-frame radial graph; with ``directions`` the radius gets eps * b * Y_k per batch column."""

    def __init__(self, problem, coeffs, directions: bool):
        self.p = problem
        self.c = np.asarray(coeffs, dtype=float)
        self.directions = directions

    def position(self, space, theta, phi):
        xi = direction_jets(theta, phi)
        Y = harmonics(self.p.degree, *xi)
        b = self.p.base_radius
        r = xi[0] * 0.0 + 1.0
        for (l, m), c in zip(self.p.indices, self.c):
            if c != 0:
                r = r + Y[(l, m)] * c
        r = r * b
        if self.directions:
            stack = np.stack([Y[k].c for k in self.p.indices], axis=-1) * b
            r = J.Jet(r.c[..., None]) + J.eps_shift(J.Jet(stack))
            xi = tuple(J.Jet(e.c[..., None]) for e in xi)
        R = self.p.rotation
        x = tuple(r * e for e in xi)
        return tuple(x[0] * R[i, 0] + x[1] * R[i, 1] + x[2] * R[i, 2] for i in range(3))


@dataclass(eq=False)
class SearchProblem:
    space: AmbientSpace
    reference: SurfaceSpec
    grid: QuadratureGrid
    degree: int
    mode: str = "mean_curvature"
    lam: float | None = None
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        if self.mode not in ("mean_curvature", "sigma2"):
            raise ValueError(f"unknown search mode {self.mode!r}")
        from .geometry import RadialGraph

        self.indices = harmonic_indices(self.degree)
        self.base_radius = float(self.reference.base_radius)
        ref = eval_point(self.space, RadialGraph(self.reference), self.grid)
        self._ref = ref
        self._w = area_weights(self.grid, ref)
        self.rbar = math.fsum(self._w * ref.r) / math.fsum(self._w)
        if self.lam is None:
            self.lam = self.rbar**2 if self.mode == "mean_curvature" else self.rbar**4
        self._gref = frame2(ref.g, ref.frame)
        self._kref = ref.H if self.mode == "mean_curvature" else ref.sigma2

    @property
    def dimension(self) -> int:
        return len(self.indices)

    def spec(self, coeffs) -> SurfaceSpec:
        terms = tuple((l, m, float(c)) for (l, m), c in zip(self.indices, coeffs) if c != 0)
        return SurfaceSpec(self.base_radius, terms, self.rotation)

    def _forms(self, coeffs, directions):
        return second_forms(self.space, _Candidate(self, coeffs, directions), self.grid.theta, self.grid.phi)

    def _key(self):
        return "H" if self.mode == "mean_curvature" else "sigma2"

    def objective(self, coeffs) -> float:
        F = self._forms(coeffs, False)
        dg = frame2(F["g"], self._ref.frame) - self._gref
        dk = F[self._key()] - self._kref
        return math.fsum(self._w * (np.sum(dg**2, axis=(-1, -2)) + self.lam * dk**2))

    def value_and_gradient(self, coeffs):
        F = self._forms(coeffs, True)
        E = self._ref.frame
        dg = frame2(F["g"][:, 0], E) - self._gref
        dk = F[self._key()][:, 0] - self._kref
        val = math.fsum(self._w * (np.sum(dg**2, axis=(-1, -2)) + self.lam * dk**2))
        gdot = frame2(F["g_dot"], E[:, None])
        kdot = F[self._key() + "_dot"]
        integrand = 2 * (np.einsum("nij,nkij->nk", dg, gdot) + self.lam * dk[:, None] * kdot)
        grad = np.array([math.fsum(self._w * integrand[:, k]) for k in range(integrand.shape[1])])
        return val, grad


def spec_coefficients(spec: SurfaceSpec, degree: int, grid: QuadratureGrid | None = None) -> np.ndarray:
    """Coefficients of r / b - 1 of the *unrotated* spec, projected onto Y_lm, l <= degree."""
    grid = grid or build_grid(2 * degree + 8, 4 * degree + 16)
    x, y, z = (np.sin(grid.theta) * np.cos(grid.phi), np.sin(grid.theta) * np.sin(grid.phi), grid.cos_theta)
    vals = spec.body_radius(x, y, z) / spec.base_radius - 1.0
    Y = harmonics(degree, x, y, z)
    return np.array([grid.integrate(vals * Y[k]) for k in harmonic_indices(degree)])


@dataclass
class SearchTrace:
    energies: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)
    iterates: list = field(default_factory=list)
    status: str = "running"
    final: np.ndarray | None = None
    orbit_distance: float | None = None
    evaluations: int = 0

    @property
    def final_energy(self) -> float:
        return self.energies[-1]

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "iterations": len(self.energies) - 1,
            "evaluations": self.evaluations,
            "final_energy": self.final_energy,
            "final_grad_norm": self.grad_norms[-1],
            "orbit_distance": self.orbit_distance,
            "final_coefficients": [float(c) for c in self.final],
        }

    def csv_rows(self):
        return [(k, e, g) for k, (e, g) in enumerate(zip(self.energies, self.grad_norms))]


def minimize(problem: SearchProblem, initial, max_iter: int = 500, grad_tol: float = 1e-10, energy_tol: float = 0.0, memory: int = 10) -> SearchTrace:
    """Limited-memory BFGS with Armijo backtracking; never raises on line-search failure."""
    x = np.asarray(initial, dtype=float).copy()
    trace = SearchTrace()
    fx, gx = problem.value_and_gradient(x)
    trace.evaluations += 1
    trace.energies.append(fx)
    trace.grad_norms.append(float(np.linalg.norm(gx)))
    trace.iterates.append(x.copy())
    S, Yk = [], []
    for it in range(max_iter):
        if trace.grad_norms[-1] <= grad_tol:
            trace.status = "converged_gradient"
            break
        if fx <= energy_tol:
            trace.status = "converged_energy"
            break
        # two-loop recursion
        q = gx.copy()
        alphas = []
        for s, y in reversed(list(zip(S, Yk))):
            a = s @ q / (y @ s)
            alphas.append(a)
            q -= a * y
        if S:
            gamma = (S[-1] @ Yk[-1]) / (Yk[-1] @ Yk[-1])
        else:
            gamma = 1.0 / max(np.linalg.norm(gx), 1e-300) * min(1.0, 1e-2 * problem.base_radius)
        d = gamma * q
        for (s, y), a in zip(zip(S, Yk), reversed(alphas)):
            b = y @ d / (y @ s)
            d += (a - b) * s
        d = -d
        slope = gx @ d
        if slope >= 0:
            S.clear()
            Yk.clear()
            d = -gx * gamma
            slope = gx @ d
        t = 1.0
        accepted = False
        for _ in range(40):
            xn = x + t * d
            try:
                fn = problem.objective(xn)
            except (ArithmeticError, ValueError):
                fn = math.inf
            trace.evaluations += 1
            if fn <= fx + 1e-4 * t * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            trace.status = "line_search_failed"
            break
        fn, gn = problem.value_and_gradient(xn)
        trace.evaluations += 1
        s, y = xn - x, gn - gx
        if s @ y > 1e-16 * np.linalg.norm(s) * np.linalg.norm(y):
            S.append(s)
            Yk.append(y)
            if len(S) > memory:
                S.pop(0)
                Yk.pop(0)
        x, fx, gx = xn, fn, gn
        trace.energies.append(fx)
        trace.grad_norms.append(float(np.linalg.norm(gx)))
        trace.iterates.append(x.copy())
    else:
        trace.status = "max_iterations"
    if trace.status == "running":
        trace.status = "max_iterations"
    trace.final = x
    trace.orbit_distance = orbit_distance(problem.reference, problem.spec(x))
    return trace


# -- rotation orbit ------------------------------------------------------------
def _fibonacci(n: int) -> np.ndarray:
    k = np.arange(n) + 0.5
    z = 1 - 2 * k / n
    t = np.pi * (1 + 5**0.5) * k
    s = np.sqrt(1 - z * z)
    return np.column_stack([s * np.cos(t), s * np.sin(t), z])


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    return Rotation.random(random_state=rng).as_matrix()


def orbit_distance(specA: SurfaceSpec, specB: SurfaceSpec, grid: QuadratureGrid | None = None, axes: int = 100, angles: int = 12, refine: int = 5) -> float:
    """min over R in SO(3) of the symmetric max-node discrepancy of the radial functions.

    D(R) = max( max_xi |r_A(R^T xi) - r_B(xi)|, max_xi |r_B(R xi) - r_A(xi)| ),
    searched on an axis-angle grid (axes x angles rotations plus the identity)
    and refined from the best ``refine`` candidates.  D_AB(R) = D_BA(R^T), so
    both orderings are searched and the smaller upper bound is returned; the
    result is then exactly symmetric in (A, B).
    """
    grid = grid or build_grid(24, 48)
    return min(_orbit_search(specA, specB, grid, axes, angles, refine), _orbit_search(specB, specA, grid, axes, angles, refine))


def _orbit_search(specA, specB, grid, axes, angles, refine) -> float:
    xi = np.column_stack([np.sin(grid.theta) * np.cos(grid.phi), np.sin(grid.theta) * np.sin(grid.phi), grid.cos_theta])
    rA = radius_at(specA, xi)
    rB = radius_at(specB, xi)

    def resid(R):
        # rows: R^T xi  <->  xi @ R
        return np.concatenate([radius_at(specA, xi @ R) - rB, radius_at(specB, xi @ R.T) - rA])

    def D(vec):
        return float(np.max(np.abs(resid(Rotation.from_rotvec(vec).as_matrix()))))

    cands = [np.zeros(3)]
    for ax in _fibonacci(axes):
        for a in np.linspace(0, np.pi, angles + 1)[1:]:
            cands.append(ax * a)
    scores = np.array([D(v) for v in cands])
    best = np.argsort(scores, kind="stable")[:refine]
    out = float(scores[best[0]])
    for k in best:
        v0 = cands[k]
        ls = least_squares(lambda v: resid(Rotation.from_rotvec(v).as_matrix()), v0, xtol=1e-15, ftol=1e-15, gtol=1e-15)
        nm = scipy_minimize(D, ls.x, method="Nelder-Mead", options={"xatol": 1e-13, "fatol": 1e-15, "initial_simplex": ls.x + 1e-4 * np.vstack([np.zeros(3), np.eye(3)])})
        out = min(out, D(ls.x), float(nm.fun))
    return out


# -- multistart ----------------------------------------------------------------
def _one_restart(args):
    space, reference, grid, degree, mode, lam, seed, k, perturbation, max_iter, grad_tol, energy_tol = args
    rng = np.random.default_rng([seed, k])
    problem = SearchProblem(space, reference, grid, degree, mode, lam, random_rotation(rng))
    start = spec_coefficients(reference, degree) + perturbation * rng.standard_normal(problem.dimension)
    return minimize(problem, start, max_iter=max_iter, grad_tol=grad_tol, energy_tol=energy_tol)


def run_restarts(
    space: AmbientSpace,
    reference: SurfaceSpec,
    grid: QuadratureGrid,
    degree: int,
    seed: int,
    restarts: int = 5,
    perturbation: float = 1e-2,
    mode: str = "mean_curvature",
    lam: float | None = None,
    max_iter: int = 500,
    grad_tol: float = 1e-10,
    energy_tol: float = 0.0,
    workers: int = 1,
) -> list:
    """Independent restarts from perturbed rotated copies; restart k uses the stream (seed, k).

    Each trace depends only on its own seed pair, so results are identical for
    any worker count.
    """
    jobs = [(space, reference, grid, degree, mode, lam, seed, k, perturbation, max_iter, grad_tol, energy_tol) for k in range(restarts)]
    if workers <= 1 or restarts <= 1:
        return [_one_restart(j) for j in jobs]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=min(workers, restarts)) as ex:
        return list(ex.map(_one_restart, jobs))
