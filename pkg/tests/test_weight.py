import csv
import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from warprig import ambient as A
from warprig.weight import (
    SolverFailure,
    auto_initial_conditions,
    check_conditions,
    refinement_error,
    solve_weight,
    static_weight,
    weight_csv,
    weight_table,
)

# schwarzschild(0.5), w(1.2) = 1, w_u(1.2) = -2: first zero of w.
# Frozen from scipy Radau (rtol 1e-13) on closed-form f, Phi plus brentq.
FIRST_ZERO = 1.3749593918466227


@pytest.mark.parametrize("m,lo", [(0.1, 1.0), (0.5, 1.2)])
def test_static_initial_data_reproduces_f(m, lo):
    s = A.schwarzschild(m)
    sol = solve_weight(s, lo, 4.0, ic=(float(s.f(lo)), float(s.f_u(lo))))
    r = np.linspace(lo, 4.0, 2001)
    assert np.max(np.abs(sol.w(r) - s.f(r))) <= 1e-10
    assert np.max(np.abs(sol.w_u(r) - s.f_u(r))) <= 1e-10
    assert np.max(np.abs(sol.wronskian(r))) <= 1e-10


def test_ads_static_initial_data_reproduces_f():
    s = A.ads_schwarzschild(0.3, 1.0)
    sol = solve_weight(s, 1.0, 4.0, ic=(float(s.f(1.0)), float(s.f_u(1.0))))
    r = np.linspace(1.0, 4.0, 1001)
    assert np.max(np.abs(sol.w(r) - s.f(r))) <= 1e-10 * np.max(s.f(r))


@pytest.mark.parametrize("m,lo", [(0.1, 1.0), (0.5, 1.2)])
def test_auto_wronskian_constant_and_positive(m, lo):
    s = A.schwarzschild(m)
    sol = solve_weight(s, lo, 4.0)
    assert sol.direction == "forward"
    W = sol.wronskian(np.linspace(lo, 4.0, 2001))
    assert np.ptp(W) <= 1e-9
    assert W.min() > 0
    cond = check_conditions(s, sol)
    assert cond.wronskian_sign == "positive" and cond.w_positive and cond.w_over_f_monotone
    assert cond.first_sign_change is None


def test_euclidean_weight_is_linear_in_u():
    e = A.space_form(0.0)
    sol = solve_weight(e, 1.0, 3.0, ic=(1.0, 1.0))
    r = np.linspace(1.0, 3.0, 101)
    u = e.u(r) - e.u(1.0)
    assert np.allclose(u, (r**2 - 1) / 2, atol=1e-12)
    assert np.max(np.abs(sol.w(r) - (1 + u))) <= 1e-10
    assert np.allclose(sol.w_uu(r), 0)


def test_first_sign_change_matches_oracle():
    s = A.schwarzschild(0.5)
    sol = solve_weight(s, 1.2, 4.0, ic=(1.0, -2.0))
    cond = check_conditions(s, sol)
    assert not cond.w_positive
    assert cond.first_sign_change == pytest.approx(FIRST_ZERO, abs=1e-9)


def test_wronskian_identity_in_non_static_ambient():
    s = A.cubic_warp()
    sol = solve_weight(s, 0.5, 1.5)
    cond = check_conditions(s, sol)
    assert cond.wronskian_identity_residual <= 1e-6
    # the Wronskian now drifts: its derivative is -w (f_uu + (n-1) Phi f)
    assert cond.wronskian_variation > 1e-4


def test_backward_auto_for_negative_phi():
    s = A.custom_radial([1.0, 0.0, -0.01])
    assert s.Phi(np.array([1.0, 2.0])).max() < 0
    w0, wu0, rs, direction = auto_initial_conditions(s, 1.0, 3.0)
    assert direction == "backward" and rs == 3.0 and wu0 < float(s.f_u(3.0))
    sol = solve_weight(s, 1.0, 3.0)
    assert sol.w(3.0) == pytest.approx(w0)
    assert check_conditions(s, sol).w_positive


def test_auto_rejects_sign_changing_phi():
    s = A.custom_radial([1.0, 0.0, -1.0, 1.0])
    r = np.linspace(0.3, 1.6, 50)
    assert s.Phi(r).min() < 0 < s.Phi(r).max()
    with pytest.raises(ValueError):
        solve_weight(s, 0.3, 1.6)


def test_input_errors():
    s = A.schwarzschild(0.5)
    with pytest.raises(ValueError):
        solve_weight(s, 3.0, 2.0)
    with pytest.raises(ValueError):
        solve_weight(s, 1.5, 3.0, ic="nope")
    with pytest.raises(ValueError):
        solve_weight(s, 1.5, 3.0, ic=(1, 0), direction="sideways")
    with pytest.raises(A.RangeError):
        solve_weight(s, 0.9, 3.0)
    sol = solve_weight(s, 1.5, 3.0)
    with pytest.raises(ValueError):
        sol.w(3.5)


def test_solver_failure_is_typed(monkeypatch):
    import warprig.weight as W

    class Bad:
        status, message, t = -1, "forced", np.array([1.7])

    monkeypatch.setattr(W, "solve_ivp", lambda *a, **k: Bad())
    with pytest.raises(SolverFailure, match="1.7"):
        W.solve_weight(A.schwarzschild(0.5), 1.5, 3.0)


def test_refinement_error_small():
    sol = solve_weight(A.schwarzschild(0.5), 1.5, 4.0)
    assert refinement_error(sol) <= 1e-9


def test_static_weight_closed_form():
    s = A.schwarzschild(0.5)
    sol = static_weight(s, 1.5, 4.0)
    r = np.linspace(1.5, 4.0, 11)
    assert np.array_equal(sol.w(r), s.f(r))
    assert np.allclose(sol.w_uu(r), -s.Phi(r) * s.f(r), atol=1e-13)
    assert refinement_error(sol) == 0.0


def test_csv_columns():
    s = A.schwarzschild(0.5)
    sol = solve_weight(s, 1.5, 4.0)
    rows = list(csv.reader(io.StringIO(weight_csv(s, sol, samples=11))))
    assert rows[0] == ["r", "w", "w_u", "w_over_f", "wronskian"]
    assert len(rows) == 12
    tab = weight_table(s, sol, samples=11)
    assert np.array_equal(np.array(rows[1:], dtype=float), tab)


@given(st.floats(0.5, 3.0), st.floats(-1.0, 1.0))
def test_wronskian_conserved_for_any_initial_data(w0, wu0):
    s = A.schwarzschild(0.5)
    sol = solve_weight(s, 1.5, 4.0, ic=(w0, wu0))
    W = sol.wronskian(np.linspace(1.5, 4.0, 101))
    assert np.ptp(W) <= 1e-9 * (1 + abs(W[0]))


@given(st.floats(0.1, 5.0))
def test_linearity_in_initial_data(scale):
    s = A.ads_schwarzschild(0.3)
    a = solve_weight(s, 1.0, 3.0, ic=(1.0, 0.5))
    b = solve_weight(s, 1.0, 3.0, ic=(scale, 0.5 * scale))
    r = np.linspace(1.0, 3.0, 51)
    assert np.allclose(b.w(r), scale * a.w(r), rtol=1e-9, atol=1e-12)
