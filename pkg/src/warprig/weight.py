"""The weight ODE w_uu + (n-1) Phi w = 0 and the sign conditions built on it.

The equation is integrated in r as the first-order system

    dw/dr   = w_u * r / f
    dw_u/dr = -(n-1) Phi w * r / f

with scipy's DOP853 (embedded Runge-Kutta 8(5,3)) and its dense output.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .ambient import AmbientSpace

__all__ = [
    "WeightSolution",
    "WeightConditions",
    "SolverFailure",
    "solve_weight",
    "static_weight",
    "check_conditions",
    "auto_initial_conditions",
    "weight_table",
    "weight_csv",
    "refinement_error",
]

RTOL = 1e-11
ATOL = 1e-13


class SolverFailure(RuntimeError):
    pass


@dataclass(eq=False)
class WeightSolution:
    """Dense w(r), w_u(r) on [r0, r1]; w_uu is taken from the equation itself."""

    space: AmbientSpace
    r0: float
    r1: float
    ic: tuple
    ic_radius: float
    direction: str
    rtol: float
    kind: str = "ode"
    _dense: object = None

    def _check(self, r):
        r = np.asarray(r, dtype=float)
        span = self.r1 - self.r0
        if np.any(r < self.r0 - 1e-12 * span) or np.any(r > self.r1 + 1e-12 * span):
            raise ValueError(f"radius outside weight domain [{self.r0}, {self.r1}]")
        return np.clip(r, self.r0, self.r1)

    def _state(self, r):
        r = self._check(r)
        if self.kind == "static":
            return self.space.f(r), self.space.f_u(r)
        y = self._dense(np.ravel(r))
        return y[0].reshape(r.shape), y[1].reshape(r.shape)

    def w(self, r):
        return self._state(r)[0]

    def w_u(self, r):
        return self._state(r)[1]

    def w_uu(self, r):
        r = self._check(r)
        if self.kind == "static":
            return self.space.f_uu(r)
        return -(self.space.n - 1) * self.space.Phi(r) * self.w(r)

    def wronskian(self, r):
        """w_u f - w f_u."""
        w, wu = self._state(r)
        return wu * self.space.f(r) - w * self.space.f_u(r)

    def describe(self) -> dict:
        return {
            "interval": [self.r0, self.r1],
            "ic": {"w": self.ic[0], "w_u": self.ic[1], "at_r": self.ic_radius},
            "direction": self.direction,
            "rtol": self.rtol,
            "kind": self.kind,
        }


def auto_initial_conditions(space: AmbientSpace, r0: float, r1: float):
    """(w, w_u, radius, direction) per the sign of Phi on [r0, r1].

    Phi >= 0: start at r0 with w = f, w_u = f_u + delta (strict Wronskian inequality);
    Phi <= 0: start at r1 with w = f, w_u = f_u - delta, integrating backwards.
    """
    r = np.linspace(r0, r1, 400)
    Phi = space.Phi(r)
    scale = 1e-14 * (1 + np.max(np.abs(Phi)))
    if np.min(Phi) >= -scale:
        rs, sign, direction = r0, 1.0, "forward"
    elif np.max(Phi) <= scale:
        rs, sign, direction = r1, -1.0, "backward"
    else:
        raise ValueError("Phi changes sign on the interval; no automatic weight")
    fu = float(space.f_u(rs))
    delta = max(1e-3, 1e-2 * abs(fu))
    return float(space.f(rs)), fu + sign * delta, rs, direction


def solve_weight(space: AmbientSpace, r0: float, r1: float, ic="auto", direction: str | None = None, rtol: float = RTOL) -> WeightSolution:
    """Integrate the weight equation on [r0, r1].

    ``ic`` is "auto" or (w, w_u) given at r0 (forward) or r1 (backward).
    """
    space.check_range(np.array([r0, r1]))
    if not r0 < r1:
        raise ValueError("need r0 < r1")
    if isinstance(ic, str):
        if ic != "auto":
            raise ValueError(f"unknown initial-condition mode {ic!r}")
        w0, wu0, rs, auto_dir = auto_initial_conditions(space, r0, r1)
        if direction is not None and direction != auto_dir:
            raise ValueError(f"automatic initial conditions integrate {auto_dir}")
        direction = auto_dir
    else:
        w0, wu0 = map(float, ic)
        direction = direction or "forward"
        if direction not in ("forward", "backward"):
            raise ValueError("direction must be forward or backward")
        rs = r0 if direction == "forward" else r1
    re = r1 if direction == "forward" else r0
    n = space.n

    def rhs(r, y):
        k = r / space.f(r)
        return np.array([y[1] * k, -(n - 1) * space.Phi(r) * y[0] * k])

    sol = solve_ivp(rhs, (rs, re), [w0, wu0], method="DOP853", rtol=rtol, atol=ATOL * max(1.0, abs(w0), abs(wu0)), dense_output=True)
    if sol.status != 0:
        where = sol.t[-1] if sol.t.size else rs
        raise SolverFailure(f"weight ODE failed near r = {where:.6g}: {sol.message}")
    return WeightSolution(space, float(r0), float(r1), (w0, wu0), rs, direction, rtol, "ode", sol.sol)


def refinement_error(sol: WeightSolution, samples: int = 500) -> float:
    """Max |w - w_ref| with w_ref re-solved at a 100x tighter tolerance."""
    if sol.kind == "static":
        return 0.0
    ref = solve_weight(sol.space, sol.r0, sol.r1, sol.ic, sol.direction, rtol=max(sol.rtol / 100, 1e-14))
    r = np.linspace(sol.r0, sol.r1, samples)
    return float(np.max(np.abs(sol.w(r) - ref.w(r))))


def static_weight(space: AmbientSpace, r0: float, r1: float) -> WeightSolution:
    """The closed-form choice w = f (a solution exactly when the ambient is static)."""
    space.check_range(np.array([r0, r1]))
    return WeightSolution(space, float(r0), float(r1), (float(space.f(r0)), float(space.f_u(r0))), float(r0), "forward", 0.0, "static")


@dataclass
class WeightConditions:
    w_positive: bool
    wronskian_sign: str
    w_over_f_monotone: bool
    min_w: float
    min_wronskian: float
    max_wronskian: float
    wronskian_variation: float
    min_d_w_over_f: float
    first_sign_change: float | None
    wronskian_identity_residual: float
    samples: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _sign_class(x, tol):
    if np.max(np.abs(x)) <= tol:
        return "zero"
    if np.min(x) > tol:
        return "positive"
    if np.max(x) < -tol:
        return "negative"
    if np.min(x) >= -tol:
        return "nonnegative"
    if np.max(x) <= tol:
        return "nonpositive"
    return "mixed"


def check_conditions(space: AmbientSpace, sol: WeightSolution, samples: int = 1001) -> WeightConditions:
    """Positivity of w, sign of the Wronskian w_u f - w f_u, monotonicity of w/f.

    Also checks (w_u f - w f_u)_u + w (f_uu + (n-1) Phi f) = 0 by central
    differences of the dense solution (in u, via d/du = (f/r) d/dr).
    """
    samples = max(int(samples), 500)
    r = np.linspace(sol.r0, sol.r1, samples)
    w, wu = sol._state(r)
    f = space.f(r)
    W = sol.wronskian(r)
    wscale = 1.0 + np.max(np.abs(w))
    tol = 1e-10 * (1.0 + np.max(np.abs(W)) + wscale)
    neg = np.flatnonzero(w <= 0)
    first = None
    if neg.size:
        k = neg[0]
        if k == 0:
            first = float(r[0])
        else:
            # bracket and bisect on the dense output
            a, b = r[k - 1], r[k]
            for _ in range(60):
                m = 0.5 * (a + b)
                a, b = (m, b) if sol.w(m) > 0 else (a, m)
            first = float(0.5 * (a + b))
    # (w/f)_u = W / f^2
    d_wf = W / f**2
    # identity check with a step small enough for the 1e-11 dense output
    h = 1e-4 * (sol.r1 - sol.r0)
    rr = np.clip(r, sol.r0 + h, sol.r1 - h)
    dW_dr = (sol.wronskian(rr + h) - sol.wronskian(rr - h)) / (2 * h)
    dW_du = dW_dr * space.f(rr) / rr
    ident = dW_du + sol.w(rr) * space.static_residual(rr)
    monotone_tol = 1e-10 * (1 + np.max(np.abs(d_wf)))
    wf_dir = 1.0 if sol.direction == "forward" else -1.0
    return WeightConditions(
        w_positive=bool(neg.size == 0),
        wronskian_sign=_sign_class(W, tol),
        w_over_f_monotone=bool(np.all(wf_dir * d_wf >= -monotone_tol)),
        min_w=float(np.min(w)),
        min_wronskian=float(np.min(W)),
        max_wronskian=float(np.max(W)),
        wronskian_variation=float(np.max(W) - np.min(W)),
        min_d_w_over_f=float(np.min(wf_dir * d_wf)),
        first_sign_change=first,
        wronskian_identity_residual=float(np.max(np.abs(ident))),
        samples=samples,
    )


def weight_table(space: AmbientSpace, sol: WeightSolution, samples: int = 201) -> np.ndarray:
    """Columns r, w, w_u, w/f, wronskian."""
    r = np.linspace(sol.r0, sol.r1, samples)
    w, wu = sol._state(r)
    return np.column_stack([r, w, wu, w / space.f(r), sol.wronskian(r)])


def weight_csv(space: AmbientSpace, sol: WeightSolution, samples: int = 201) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["r", "w", "w_u", "w_over_f", "wronskian"])
    for row in weight_table(space, sol, samples):
        wr.writerow([repr(float(x)) for x in row])
    return buf.getvalue()

