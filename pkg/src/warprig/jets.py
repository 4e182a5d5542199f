"""Truncated Taylor arithmetic in two chart variables and one deformation parameter.

A :class:`Jet` stores the Taylor coefficients of a smooth scalar

    F(x1, x2, eps) = sum_{a+b<=3, c<=1} F_abc x1^a x2^b eps^c

about a base point, where ``F_abc`` is the mixed partial derivative divided by
``a! b! c!``.  The coefficient axis is always axis 0 and has length 20; any
trailing axes are batch axes (sample points, deformation directions) and
broadcast like ordinary numpy arrays.

Coefficient layout is lexicographic in ``(c, a, b)``::

    index  0..9   : eps^0, (a, b) = (0,0) (0,1) (0,2) (0,3) (1,0) (1,1) (1,2) (2,0) (2,1) (3,0)
    index 10..19  : eps^1, same (a, b) order

Coefficient ``k`` of a product or composite depends only on coefficients of
equal or lower degree in every variable.  Consequently a jet obtained by
differentiation (whose top chart order is zero-filled) still yields exact
lower-order coefficients downstream; callers track the valid chart order.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "Jet",
    "DegenerateEvaluation",
    "MONOMIALS",
    "NCOEF",
    "index",
    "variable",
    "constant",
    "derivative",
    "eps_part",
    "eps_shift",
    "drop_eps",
    "sqrt",
    "sin",
    "cos",
    "acos",
    "atan2",
    "recip",
    "pow_real",
    "compose",
]

CHART_ORDER = 3
EPS_ORDER = 1
# weight of a product term = chart degree + eps degree <= 4
MAX_WEIGHT = CHART_ORDER + EPS_ORDER

MONOMIALS = tuple(
    (c, a, b)
    for c in range(EPS_ORDER + 1)
    for a in range(CHART_ORDER + 1)
    for b in range(CHART_ORDER + 1)
    if a + b <= CHART_ORDER
)
NCOEF = len(MONOMIALS)
_INDEX = {m: k for k, m in enumerate(MONOMIALS)}


class DegenerateEvaluation(ArithmeticError):
    """Raised when an operation leaves its domain (zero divisor, sqrt of a negative, ...)."""


def index(a: int, b: int, c: int = 0) -> int:
    """Position of the ``x1^a x2^b eps^c`` coefficient."""
    return _INDEX[(c, a, b)]


def _build_product_table():
    """{k: [(i, j), ...]} with monomial_i * monomial_j = monomial_k."""
    table = {k: [] for k in range(len(MONOMIALS))}
    for i, (ci, ai, bi) in enumerate(MONOMIALS):
        for j, (cj, aj, bj) in enumerate(MONOMIALS):
            key = (ci + cj, ai + aj, bi + bj)
            if key in _INDEX:
                table[_INDEX[key]].append((i, j))
    return table


def _generate_mul(table):
    # straight-line code: one fused expression per output coefficient (fixed term order)
    lines = ["def _mul(a, b):", "    c = np.empty((NCOEF,) + np.broadcast_shapes(a.shape[1:], b.shape[1:]))"]
    for k, pairs in table.items():
        terms = " + ".join(f"a[{i}] * b[{j}]" for i, j in pairs)
        lines.append(f"    c[{k}] = {terms}")
    lines.append("    return c")
    scope = {"np": np, "NCOEF": NCOEF}
    exec("\n".join(lines), scope)
    return scope["_mul"]


_PRODUCT_TABLE = _build_product_table()
_mul = _generate_mul(_PRODUCT_TABLE)


def _build_derivative_tables():
    tables = []
    for var in range(2):
        src, dst, fac = [], [], []
        for k, (c, a, b) in enumerate(MONOMIALS):
            up = (c, a + 1, b) if var == 0 else (c, a, b + 1)
            if up in _INDEX:
                src.append(_INDEX[up])
                dst.append(k)
                fac.append(up[1 + var])
        tables.append((np.array(dst), np.array(src), np.array(fac, dtype=float)))
    return tables


_DERIV = _build_derivative_tables()
_EPS0 = np.arange(NCOEF // 2)
_EPS1 = _EPS0 + NCOEF // 2


class Jet:
    """Truncated Taylor expansion; ``c`` has shape ``(20, *batch)``."""

    __slots__ = ("c",)
    # make numpy defer to the reflected operators
    __array_ufunc__ = None

    def __init__(self, coefficients):
        c = np.asarray(coefficients, dtype=float)
        if c.shape[:1] != (NCOEF,):
            raise ValueError(f"jet coefficient axis must have length {NCOEF}, got {c.shape}")
        self.c = c

    # -- accessors -----------------------------------------------------
    @property
    def value(self) -> np.ndarray:
        return self.c[0]

    @property
    def shape(self):
        return self.c.shape[1:]

    def coef(self, a: int, b: int, c: int = 0) -> np.ndarray:
        return self.c[_INDEX[(c, a, b)]]

    def partial(self, a: int, b: int, c: int = 0) -> np.ndarray:
        """Mixed partial derivative d^a/dx1^a d^b/dx2^b d^c/deps^c at the base point."""
        return self.c[_INDEX[(c, a, b)]] * (math.factorial(a) * math.factorial(b))

    def __repr__(self):
        return f"Jet(value={self.value!r}, shape={self.shape})"

    # -- arithmetic ----------------------------------------------------
    def __add__(self, other):
        if isinstance(other, Jet):
            a, b = _align(self.c, other.c)
            return Jet(a + b)
        other = np.asarray(other, dtype=float)
        shape = np.broadcast_shapes(self.shape, other.shape)
        c = np.broadcast_to(self.c, (NCOEF,) + shape).copy()
        c[0] += other
        return Jet(c)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.c)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet):
            return Jet(_mul(*_align(self.c, other.c)))
        other = np.asarray(other, dtype=float)
        return Jet(_lift(self.c, other.ndim) * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * recip(other)
        other = np.asarray(other, dtype=float)
        if np.any(other == 0):
            raise DegenerateEvaluation("division by zero constant")
        return Jet(_lift(self.c, other.ndim) / other)

    def __rtruediv__(self, other):
        return recip(self) * other

    def __pow__(self, p):
        if isinstance(p, (int, np.integer)) and 0 <= p <= 4:
            out = constant(np.ones(self.shape))
            for _ in range(int(p)):
                out = out * self
            return out
        return pow_real(self, float(p))


def _lift(c: np.ndarray, batch_ndim: int) -> np.ndarray:
    """Insert axes after the coefficient axis so ``c`` broadcasts against a batch of that rank."""
    extra = batch_ndim - (c.ndim - 1)
    if extra <= 0:
        return c
    return c.reshape(c.shape[:1] + (1,) * extra + c.shape[1:])


def _align(a: np.ndarray, b: np.ndarray):
    n = max(a.ndim, b.ndim) - 1
    return _lift(a, n), _lift(b, n)


# -- constructors ------------------------------------------------------
def constant(value) -> Jet:
    value = np.asarray(value, dtype=float)
    c = np.zeros((NCOEF,) + value.shape)
    c[0] = value
    return Jet(c)


def variable(value, which: int) -> Jet:
    """Jet of a coordinate: ``which`` = 0 (x1), 1 (x2) or 2 (eps, base value ignored)."""
    value = np.asarray(value, dtype=float)
    c = np.zeros((NCOEF,) + value.shape)
    if which == 2:
        c[_INDEX[(1, 0, 0)]] = 1.0
    else:
        c[0] = value
        c[_INDEX[(0, 1, 0)] if which == 0 else _INDEX[(0, 0, 1)]] = 1.0
    return Jet(c)


# -- structural operations --------------------------------------------
def derivative(x: Jet, var: int) -> Jet:
    """Jet of dF/dx_var; the top chart order of the result is zero-filled."""
    dst, src, fac = _DERIV[var]
    c = np.zeros_like(x.c)
    fac = fac.reshape((-1,) + (1,) * (x.c.ndim - 1))
    c[dst] = x.c[src] * fac
    return Jet(c)


def eps_part(x: Jet) -> Jet:
    """The eps-linear block dF/deps as a jet in the chart variables."""
    c = np.zeros_like(x.c)
    c[_EPS0] = x.c[_EPS1]
    return Jet(c)


def eps_shift(x: Jet) -> Jet:
    """eps * F (the eps-free block moves into the eps slot)."""
    c = np.zeros_like(x.c)
    c[_EPS1] = x.c[_EPS0]
    return Jet(c)


def drop_eps(x: Jet) -> Jet:
    c = x.c.copy()
    c[_EPS1] = 0.0
    return Jet(c)


# -- univariate composition -------------------------------------------
def compose(x: Jet, taylor) -> Jet:
    """g(x) given ``taylor[k] = g^(k)(x0) / k!`` for k = 0..4 (arrays broadcastable to x.shape).

    Terms of weight above 4 vanish identically, so five coefficients are exact.
    """
    if len(taylor) != MAX_WEIGHT + 1:
        raise ValueError("compose needs Taylor coefficients of orders 0..4")
    delta = Jet(x.c.copy())
    delta.c[0] = 0.0
    # Horner in delta
    acc = constant(np.broadcast_to(np.asarray(taylor[MAX_WEIGHT], dtype=float), x.shape))
    for k in range(MAX_WEIGHT - 1, -1, -1):
        acc = acc * delta
        acc.c[0] = acc.c[0] + taylor[k]
    return acc


def _check(cond, message, values):
    if np.any(cond):
        bad = np.asarray(values)[cond] if np.ndim(values) else values
        raise DegenerateEvaluation(f"{message}: {np.ravel(bad)[:5]}")


def recip(x: Jet) -> Jet:
    v = x.value
    _check(v == 0, "reciprocal of a jet with zero value", v)
    inv = 1.0 / v
    return compose(x, [inv, -inv**2, inv**3, -inv**4, inv**5])


def pow_real(x: Jet, p: float) -> Jet:
    v = x.value
    _check(v <= 0, "real power of a non-positive value", v)
    coeffs = []
    binom = 1.0
    for k in range(MAX_WEIGHT + 1):
        coeffs.append(binom * v ** (p - k))
        binom *= (p - k) / (k + 1)
    return compose(x, coeffs)


def sqrt(x: Jet) -> Jet:
    v = x.value
    _check(v <= 0, "sqrt of a non-positive value", v)
    return pow_real(x, 0.5)


def sin(x: Jet) -> Jet:
    s, c = np.sin(x.value), np.cos(x.value)
    return compose(x, [s, c, -s / 2, -c / 6, s / 24])


def cos(x: Jet) -> Jet:
    s, c = np.sin(x.value), np.cos(x.value)
    return compose(x, [c, -s, -c / 2, s / 6, c / 24])


def acos(x: Jet) -> Jet:
    v = x.value
    _check(np.abs(v) >= 1, "acos outside (-1, 1)", v)
    w = 1.0 - v * v
    d1 = -(w**-0.5)
    d2 = -v * w**-1.5
    d3 = -(1 + 2 * v * v) * w**-2.5
    d4 = -(9 * v + 6 * v**3) * w**-3.5
    return compose(x, [np.arccos(v), d1, d2 / 2, d3 / 6, d4 / 24])


def atan2(y: Jet, x: Jet) -> Jet:
    y0, x0 = y.value, x.value
    _check((y0 == 0) & (x0 == 0), "atan2 at the origin", np.hypot(y0, x0))
    # atan2(y, x) = atan2(y0, x0) + atan(t), t = (x0 y - y0 x) / (x0 x + y0 y), t(base) = 0
    t = (y * x0 - x * y0) / (x * x0 + y * y0)
    z = np.zeros(np.broadcast_shapes(y.shape, x.shape))
    return compose(t, [np.arctan2(y0, x0) + z, 1.0 + z, z, -1.0 / 3 + z, z])
