import json

import numpy as np
import pytest

from gkdvlab.groundstate import energy, ground_state_values
from gkdvlab.numerics import Grid
from gkdvlab.profile import (
    BC_SLOPE_AT_5,
    ProfileRangeError,
    ProfileSolveError,
    gamma_target,
    load_profile_json,
    save_profile_json,
    solve_profile,
    tail_audit,
)

# mass/L1 ratios of the p=5 ground state from high-precision quadrature
DGAMMA_DB_AT_5 = -0.54710990380661916


def test_b_zero_is_ground_state():
    sol = solve_profile(5.1, 0.0)
    assert np.max(np.abs(sol.w.values)) < 1e-8
    assert sol.ode_residual < 1e-6
    assert sol.gamma == pytest.approx(gamma_target(5.1))
    q = ground_state_values(5.1, sol.v.grid.nodes())
    assert np.max(np.abs(sol.v.values - q)) == 0.0


def test_solution_contracts(eig51, sol51_bc):
    sol = sol51_bc
    assert sol.ode_residual < 1e-6
    assert sol.ortho_residual < 1e-8
    assert np.min(sol.v.values) > 0.0 or np.min(sol.v.values) > -1e-7 * np.max(sol.v.values)
    assert abs(energy(sol.v, 5.1)) < 1e-4


def test_left_tail_shape(eig51):
    sol = solve_profile(5.1, eig51.b_c / 2.0)
    g = sol.v.grid
    y = g.nodes()
    mask = (y >= -1.0 / (2.0 * sol.b)) & (y <= -10.0)
    pred = sol.b * (1.0 - sol.b * y[mask]) ** (-(1.0 + sol.gamma))
    ratio = np.abs(sol.w.values[mask]) / pred
    assert np.all(ratio > 0.2)
    assert np.all(ratio < 5.0)


def test_tail_amplitude_half_l1(eig51, sol51_bc):
    # the algebraic-tail amplitude approaches (1/2) int Q_p as b -> 0
    from gkdvlab.groundstate import ground_state

    ctx = ground_state(5.1, Grid(-30.0, 30.0, 4001))
    small = solve_profile(5.1, eig51.b_c / 20.0)
    assert small.tail_amplitude == pytest.approx(0.5 * ctx.l1_Q, rel=0.05)


def test_warm_cold_consistency(eig51):
    bc = eig51.b_c
    warm_src = solve_profile(5.1, 0.8 * bc)
    warm = solve_profile(5.1, bc, init=warm_src)
    cold = solve_profile(5.1, bc)
    assert np.max(np.abs(warm.v.values - cold.v.values)) < 1e-6
    assert abs(warm.gamma - cold.gamma) < 1e-8


def test_gamma_decreasing_along_curve(eig51):
    gs = [g for _, g, _ in eig51.curve]
    assert all(b < a for a, b in zip(gs, gs[1:]))


def test_energy_decreasing_along_curve(eig51):
    es = [e for _, _, e in eig51.curve]
    assert es[0] > 0.0
    assert es[-1] < es[0]


def test_eigenvalue_result(eig51):
    assert eig51.b_c > 0.0
    # b_c/(p-5) bounded between fixed constants
    ratio = eig51.b_c / 0.1
    assert 0.1 < ratio < 0.5
    assert eig51.gamma_at_bc == pytest.approx(gamma_target(5.1), abs=1e-9)
    assert eig51.dgamma_db < 0.0
    assert eig51.cross_validation < 0.02
    assert eig51.energy_residual < 1e-4


def test_slope_and_dgamma_at_505():
    from gkdvlab.profile import find_critical_b

    eig = find_critical_b(5.05)
    assert eig.slope_estimate == pytest.approx(BC_SLOPE_AT_5, rel=0.10)
    assert eig.dgamma_db == pytest.approx(DGAMMA_DB_AT_5, rel=0.15)


def test_range_refusals():
    with pytest.raises(ProfileRangeError):
        solve_profile(7.0, 0.0)
    with pytest.raises(ProfileRangeError):
        solve_profile(5.4, 0.01)
    with pytest.raises(ProfileRangeError):
        solve_profile(5.1, 0.2)  # far beyond b_max
    from gkdvlab.profile import find_critical_b

    with pytest.raises(ProfileRangeError):
        find_critical_b(5.0)  # open interval at p = 5


def test_tail_audit_at_bc(eig51, sol51_bc):
    rep = tail_audit(sol51_bc)
    assert rep["right_exponential"] < 10.0
    assert rep["right_scorer_ratio"] < 10.0
    assert 0.1 < rep["left_algebraic"] < 10.0
    assert 0.1 < rep["left_algebraic_dy"] < 10.0


def test_tail_audit_ground_state():
    rep = tail_audit(solve_profile(5.1, 0.0))
    # pure exponential decay: margins at most marginally above 1 (the
    # e^{-y/10} comparison is quadratically flat at the peak)
    assert rep["right_exponential"] < 1.01
    assert rep["left_algebraic"] == 0.0
    assert "right_scorer_ratio" not in rep


def test_json_roundtrip(tmp_path, sol51_bc):
    path = tmp_path / "profile.json"
    save_profile_json(sol51_bc, path)
    back = load_profile_json(path)
    assert back.p == sol51_bc.p
    assert back.b == sol51_bc.b
    assert back.gamma == sol51_bc.gamma
    assert np.array_equal(back.v.values, sol51_bc.v.values)
    payload = json.loads(path.read_text())
    assert set(payload) >= {"p", "b", "gamma", "grid", "values", "residuals"}
