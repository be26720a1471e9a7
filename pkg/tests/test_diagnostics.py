import math

import numpy as np
import pytest

from gkdvlab.diagnostics import (
    BootstrapThresholds,
    DiagnosticsRecord,
    WeightConstructionError,
    bootstrap_audit,
    build_weights,
    local_norm_N,
    localized_energy,
    lyapunov_F,
    monotonicity_audit,
)
from gkdvlab.groundstate import energy
from gkdvlab.numerics import Grid, GridFunction


@pytest.fixture(scope="module")
def W():
    return build_weights(0.1, 0.0222)


def test_phi_plateaus_bit_exact(W):
    ys = np.array([-5.0, -2.0, -1.0])
    assert np.all(W.phi(ys) == np.exp(ys))
    mid = np.array([-0.05, 0.0, 0.09])
    assert np.all(W.phi(mid) == 1.0 + mid)
    assert W.phi(1.5) == 3.0
    assert W.phi(np.array([7.0])) == 3.0


def test_psi_eta_plateaus(W):
    assert W.psi(-3.0) == math.exp(-3.0)
    assert W.psi(-0.05) == 1.0
    assert W.psi(5.0) == 1.0
    assert W.eta(0.5) == 1.0
    assert W.eta(2.5) == 0.0
    assert W.eta0(0.05) == 1.0
    assert W.eta0(2.0) == math.exp(-2.0)


def test_monotonicity_everywhere(W):
    ys = np.linspace(-25.0, 5.0, 30001)
    assert np.all(W.phi_prime(ys) >= -1e-12)
    assert np.all(W.psi_prime(ys) >= -1e-12)
    etas = W.eta(np.linspace(0.0, 3.0, 3001))
    assert np.all(np.diff(etas) <= 1e-12)


def test_psi_kappa_identity(W):
    # psi(-kappa) = phi(-kappa) + kappa holds exactly at the band edge
    assert W.psi(-W.kappa) == pytest.approx(W.phi(-W.kappa) + W.kappa, abs=1e-14)


def test_two_sided_comparability(W):
    band = np.linspace(-20.0 * W.B, -W.kappa * W.B, 20001) / W.B
    phi_v, psi_v = W.phi(band), W.psi(band)
    assert np.all(psi_v >= phi_v * (1.0 - 1e-12))
    assert np.all(psi_v <= (1.0 + 3.0 * W.kappa) * phi_v * (1.0 + 1e-12))


def test_theta_properties(W):
    assert W.Theta(-50.0) < 1e-20
    assert abs(W.Theta(50.0) - 1.0) < 1e-15
    ys = np.linspace(-6.0, 6.0, 4001)
    th = W.Theta(ys)
    assert np.all(np.diff(th) >= -1e-15)
    assert np.all(W.theta(np.linspace(-1.0, 1.0, 101)) >= 1.0 / math.e - 1e-12)
    assert W.theta(3.0) == math.exp(-3.0)


def test_scaled_weights(W):
    assert W.B == pytest.approx(0.0222 ** (-1.0 / 20.0))
    assert W.phi_B(0.0) == 1.0
    y = np.array([0.3])
    assert W.zeta_B(y) == pytest.approx(W.phi_B(y) * W.eta_B(y))


def test_build_guards():
    with pytest.raises(ValueError):
        build_weights(0.7, 0.02)
    with pytest.raises(ValueError):
        build_weights(0.1, 1.5)
    # very small kappa defeats the fixed quintic comparability construction
    with pytest.raises(WeightConstructionError):
        build_weights(0.02, 0.02)


# -- functionals ---------------------------------------------------------------

GRID = Grid(-60.0, 40.0, 4001)


def test_local_norm_zero_and_scaling(W):
    z = GridFunction(GRID, np.zeros(GRID.n))
    assert local_norm_N(z, W) == 0.0
    eps = GridFunction.from_callable(GRID, lambda y: np.exp(-(y**2)))
    n1 = local_norm_N(eps, W)
    n2 = local_norm_N(GridFunction(GRID, 2.0 * eps.values), W)
    assert n2 == pytest.approx(4.0 * n1, rel=1e-14)
    assert n1 > 0.0


def test_local_norm_refined_grid_oracle(W):
    # the weight bands are C^2, so quadrature converges at ~3rd order; a
    # 16k base grid puts the refinement gap below the 1e-6 gate
    base = Grid(-60.0, 40.0, 16001)
    eps = GridFunction.from_callable(base, lambda y: np.exp(-(y**2)))
    fine = Grid(base.y_min, base.y_max, 2 * base.n - 1)
    eps_f = GridFunction.from_callable(fine, lambda y: np.exp(-(y**2)))
    assert local_norm_N(eps, W) == pytest.approx(local_norm_N(eps_f, W), abs=1e-6)


@pytest.fixture(scope="module")
def lp_for_F(eig51, sol51_bc):
    from gkdvlab.localized import localize_profile

    return localize_profile(sol51_bc, eig51.b_c, C_p=eig51.dgamma_db)


def test_lyapunov_zero(lp_for_F):
    Wf = build_weights(0.1, lp_for_F.b_c)
    z = GridFunction(lp_for_F.grid, np.zeros(lp_for_F.grid.n))
    assert lyapunov_F(z, lp_for_F, Wf) == 0.0


def test_lyapunov_quadratic_limit(lp_for_F):
    Wf = build_weights(0.1, lp_for_F.b_c)
    g = lp_for_F.grid
    y = g.nodes()
    base = np.exp(-(y**2))
    from gkdvlab.numerics import derivative, quad_weights

    wq = quad_weights(g)
    psi = Wf.psi_B(y)
    zeta = Wf.zeta_B(y)
    qb = lp_for_F.Qb.values
    p = lp_for_F.p
    ratios = []
    for k in (2, 3, 4):
        eps = GridFunction(g, 10.0**-k * base)
        ey = derivative(eps, 1).values
        quad = float(
            wq
            @ (ey**2 * psi + eps.values**2 * zeta - p * psi * np.abs(qb) ** (p - 1.0) * eps.values**2)
        )
        full = lyapunov_F(eps, lp_for_F, Wf)
        ratios.append(abs(full - quad) / 10.0 ** (-2 * k))
    # the cubic remainder scales like ||eps||^3, so the quadratic mismatch
    # over ||eps||^2 keeps shrinking by the scaling factor
    assert ratios[1] < 0.2 * ratios[0]
    assert ratios[2] < 0.2 * ratios[1]


def test_lyapunov_grid_guard(lp_for_F):
    Wf = build_weights(0.1, lp_for_F.b_c)
    other = GridFunction(GRID, np.zeros(GRID.n))
    with pytest.raises(ValueError):
        lyapunov_F(other, lp_for_F, Wf)


def test_localized_energy_zero_and_degeneration(W):
    z = GridFunction(GRID, np.zeros(GRID.n))
    assert localized_energy(z, 0.0, 1.0, W, 5.0) == 0.0
    u = GridFunction.from_callable(GRID, lambda y: np.exp(-(y**2)))
    # pushing the weight center far left makes Theta ~ 1: plain energy
    full = localized_energy(u, -2.0e4, 1.0, W, 5.0)
    assert full == pytest.approx(energy(u, 5.0), rel=1e-10)


# -- thresholds and audits ------------------------------------------------------

def test_thresholds_ordering():
    th = BootstrapThresholds(b_c=0.05)
    ap, im = th.apriori(), th.improved()
    for key in ap:
        assert im[key] < ap[key]


def _mk_record(s, F=0.0, **kw):
    base = dict(
        s=s, t=s, lam=1.0, x=0.0, b=0.02, b_tilde=0.0, N=0.0, F=F, E_tilde=0.0,
        eps_Lp0=0.0, eps_dy_L2=0.0, diss=0.0, res1=0.0, res2=0.0, res3=0.0,
        mass_rec=1.0,
    )
    base.update(kw)
    return DiagnosticsRecord(**base)


def test_bootstrap_audit_trapped_and_not():
    th = BootstrapThresholds(b_c=0.02)
    good = [_mk_record(s) for s in (0.0, 1.0, 2.0)]
    rep = bootstrap_audit(good, th)
    assert rep["verdict"] == "trapped"
    bad = good + [_mk_record(3.0, b_tilde=0.02)]  # far outside the tube
    rep2 = bootstrap_audit(bad, th)
    assert rep2["verdict"] == "untrapped"
    assert not rep2["b_deviation"]["passed"]
    assert rep2["b_deviation"]["worst_margin"] > 1.0


def test_monotonicity_audit_constant_F(W):
    recs = [_mk_record(float(s), F=0.25) for s in range(12)]
    rep = monotonicity_audit(recs, W)
    assert rep["dF_identically_zero"]
    assert rep["fraction_satisfied"] >= 0.95


def test_monotonicity_audit_violations_flagged(W):
    # strongly increasing F cannot satisfy the decay inequality with C <= cap
    recs = [_mk_record(float(s), F=0.1 * s) for s in range(12)]
    rep = monotonicity_audit(recs, W, mu_fit=1.0, constant_cap=100.0)
    assert rep["C_fit"] > 100.0 or rep["fraction_satisfied"] < 1.0


def test_monotonicity_audit_needs_samples(W):
    with pytest.raises(ValueError):
        monotonicity_audit([_mk_record(0.0)], W)
