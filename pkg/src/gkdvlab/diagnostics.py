"""Weight functions, localized norms, the Lyapunov functional and audits.

The trapping analysis runs on weighted quantities: a localized Sobolev
norm N built from the derivative of a monotone weight phi, a Lyapunov
functional F with weights psi (exponential left tail, flat right) and
zeta = phi * eta (compactly supported on the right), and a localized
energy with the normalized primitive of a two-sided exponential bump.
All plateaus hold bit-exactly on their stated regions; transition bands
are fixed monotone quintic Hermite blends so results are reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import GridFunction, derivative, quad_weights
from .localized import LocalizedProfile


class WeightConstructionError(RuntimeError):
    pass


NU_DEFAULT = 1.0 / 1000.0


# ---------------------------------------------------------------------------
# quintic Hermite bands

def _quintic(t, f0, d0, s0, f1, d1, s1):
    t = np.asarray(t, dtype=float)
    t2, t3, t4, t5 = t * t, t**3, t**4, t**5
    h0 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5
    h1 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5
    h2 = 0.5 * t2 - 1.5 * t3 + 1.5 * t4 - 0.5 * t5
    h3 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5
    h4 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5
    h5 = 0.5 * t3 - t4 + 0.5 * t5
    return f0 * h0 + d0 * h1 + s0 * h2 + f1 * h3 + d1 * h4 + s1 * h5


def _quintic_d(t, f0, d0, s0, f1, d1, s1):
    t = np.asarray(t, dtype=float)
    t2, t3, t4 = t * t, t**3, t**4
    h0 = -30.0 * t2 + 60.0 * t3 - 30.0 * t4
    h1 = 1.0 - 18.0 * t2 + 32.0 * t3 - 15.0 * t4
    h2 = t - 4.5 * t2 + 6.0 * t3 - 2.5 * t4
    h3 = 30.0 * t2 - 60.0 * t3 + 30.0 * t4
    h4 = -12.0 * t2 + 28.0 * t3 - 15.0 * t4
    h5 = 1.5 * t2 - 4.0 * t3 + 2.5 * t4
    return f0 * h0 + d0 * h1 + s0 * h2 + f1 * h3 + d1 * h4 + s1 * h5


class _Band:
    """Quintic Hermite blend on [a, b] with prescribed end data."""

    def __init__(self, a, b, left, right):
        self.a, self.b = a, b
        self.w = b - a
        f0, d0, s0 = left
        f1, d1, s1 = right
        self.coef = (f0, d0 * self.w, s0 * self.w**2, f1, d1 * self.w, s1 * self.w**2)

    def __call__(self, y):
        t = (np.asarray(y, dtype=float) - self.a) / self.w
        return _quintic(t, *self.coef)

    def deriv(self, y):
        t = (np.asarray(y, dtype=float) - self.a) / self.w
        return _quintic_d(t, *self.coef) / self.w


def smoothstep(t: np.ndarray) -> np.ndarray:
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    return t**4 * (35.0 - 84.0 * t + 70.0 * t**2 - 20.0 * t**3)


def smoothstep_d(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    inside = (t > 0.0) & (t < 1.0)
    ts = np.where(inside, t, 0.0)
    d = ts**3 * (140.0 - 420.0 * ts + 420.0 * ts**2 - 140.0 * ts**3)
    return np.where(inside, d, 0.0)


# ---------------------------------------------------------------------------
# weight set

_THETA_TABLE_N = 4001


@dataclass(frozen=True)
class WeightSet:
    """The weight family at a given (kappa, b_c); B = b_c^(-1/20)."""

    kappa: float
    b_c: float
    B: float
    _phi_band_l: _Band = field(repr=False)
    _phi_band_r: _Band = field(repr=False)
    _psi_of_phi: _Band = field(repr=False)
    _eta0_band: _Band = field(repr=False)
    _theta_K: float = field(repr=False)
    _theta_xs: np.ndarray = field(repr=False)
    _theta_cum: np.ndarray = field(repr=False)

    # -- base (unscaled) weights -------------------------------------------
    def phi(self, y):
        y = np.asarray(y, dtype=float)
        k = self.kappa
        return np.select(
            [y < -1.0, y <= -k, y < k, y <= 1.0],
            [np.exp(np.minimum(y, 0.0)), self._phi_band_l(y), 1.0 + y, self._phi_band_r(y)],
            default=3.0,
        )

    def phi_prime(self, y):
        y = np.asarray(y, dtype=float)
        k = self.kappa
        return np.select(
            [y < -1.0, y <= -k, y < k, y <= 1.0],
            [np.exp(np.minimum(y, 0.0)), self._phi_band_l.deriv(y), 1.0, self._phi_band_r.deriv(y)],
            default=0.0,
        )

    def psi(self, y):
        # transition band rides on phi (psi = q(phi)) so the two-sided
        # comparability with phi holds by construction
        y = np.asarray(y, dtype=float)
        return np.select(
            [y < -1.0, y <= -self.kappa],
            [np.exp(np.minimum(y, 0.0)), self._psi_of_phi(self._phi_band_l(y))],
            default=1.0,
        )

    def psi_prime(self, y):
        y = np.asarray(y, dtype=float)
        band = self._psi_of_phi.deriv(self._phi_band_l(y)) * self._phi_band_l.deriv(y)
        return np.select(
            [y < -1.0, y <= -self.kappa],
            [np.exp(np.minimum(y, 0.0)), band],
            default=0.0,
        )

    def eta(self, y):
        y = np.asarray(y, dtype=float)
        return smoothstep(2.0 - y)

    def eta_prime(self, y):
        y = np.asarray(y, dtype=float)
        return -smoothstep_d(2.0 - y)

    def eta0(self, y):
        y = np.asarray(y, dtype=float)
        return np.select(
            [y < self.kappa, y <= 1.0],
            [1.0, self._eta0_band(y)],
            default=np.exp(-np.maximum(y, 0.0)),
        )

    def theta(self, y):
        y = np.asarray(y, dtype=float)
        ay = np.abs(y)
        q = np.where(ay >= 1.0, ay, -(y**4) / 8.0 + 0.75 * y * y + 0.375)
        return np.exp(-q)

    def Theta(self, y):
        """Normalized primitive of theta: 0 at -inf, 1 at +inf."""
        y = np.asarray(y, dtype=float)
        K = self._theta_K
        mid = np.interp(y, self._theta_xs, self._theta_cum)
        return np.where(
            y <= -1.0,
            np.exp(np.minimum(y, -1.0)) / K,
            np.where(y >= 1.0, 1.0 - np.exp(-np.maximum(y, 1.0)) / K, (math.exp(-1.0) + mid) / K),
        )

    # -- scaled weights ------------------------------------------------------
    def phi_B(self, y):
        return self.phi(np.asarray(y, dtype=float) / self.B)

    def phi_B_prime(self, y):
        return self.phi_prime(np.asarray(y, dtype=float) / self.B) / self.B

    def psi_B(self, y):
        return self.psi(np.asarray(y, dtype=float) / self.B)

    def eta_B(self, y):
        return self.eta(np.asarray(y, dtype=float) / self.B**2)

    def zeta_B(self, y):
        return self.phi_B(y) * self.eta_B(y)

    def Psi_B(self, y):
        y = np.asarray(y, dtype=float)
        return self.psi_B(y) * self.eta0(y / self.B)


def build_weights(kappa: float, b_c: float) -> WeightSet:
    """Construct and verify the weight family.

    Raises WeightConstructionError if any monotonicity or the two-sided
    comparability of psi against phi fails on a dense sample.
    """
    if not (0.0 < kappa < 0.5):
        raise ValueError(f"need 0 < kappa < 1/2, got {kappa}")
    if not (0.0 < b_c < 1.0):
        raise ValueError(f"need 0 < b_c < 1, got {b_c}")
    B = b_c ** (-1.0 / 20.0)
    e1 = math.exp(-1.0)
    phi_band_l = _Band(-1.0, -kappa, (e1, e1, e1), (1.0 - kappa, 1.0, 0.0))
    phi_band_r = _Band(kappa, 1.0, (1.0 + kappa, 1.0, 0.0), (3.0, 0.0, 0.0))
    psi_of_phi = _Band(e1, 1.0 - kappa, (e1, 1.0, 0.0), (1.0, 0.0, 0.0))
    eta0_band = _Band(kappa, 1.0, (1.0, 0.0, 0.0), (e1, -e1, e1))

    xs = np.linspace(-1.0, 1.0, _THETA_TABLE_N)
    q = -(xs**4) / 8.0 + 0.75 * xs * xs + 0.375
    th = np.exp(-q)
    from scipy.integrate import cumulative_trapezoid

    cum = np.concatenate([[0.0], cumulative_trapezoid(th, xs)])
    K = 2.0 * e1 + cum[-1]

    W = WeightSet(
        kappa=kappa,
        b_c=b_c,
        B=B,
        _phi_band_l=phi_band_l,
        _phi_band_r=phi_band_r,
        _psi_of_phi=psi_of_phi,
        _eta0_band=eta0_band,
        _theta_K=K,
        _theta_xs=xs,
        _theta_cum=cum,
    )

    ys = np.linspace(-20.0, 3.0, 9001)
    if np.any(W.phi_prime(ys) < -1e-12):
        raise WeightConstructionError("phi is not monotone")
    if np.any(W.psi_prime(ys) < -1e-12):
        raise WeightConstructionError("psi is not monotone")
    if np.any(np.diff(W.eta0(np.linspace(0.0, 3.0, 2001))) > 1e-12):
        raise WeightConstructionError("eta0 is not non-increasing")
    band = np.linspace(-20.0, -kappa, 9001)
    phi_v, psi_v = W.phi(band), W.psi(band)
    if np.any(psi_v < phi_v * (1.0 - 1e-12)):
        raise WeightConstructionError("psi >= phi fails left of -kappa")
    if np.any(psi_v > (1.0 + 3.0 * kappa) * phi_v * (1.0 + 1e-12)):
        raise WeightConstructionError("psi <= (1+3kappa) phi fails left of -kappa")
    return W


# ---------------------------------------------------------------------------
# functionals

def local_norm_N(eps: GridFunction, W: WeightSet) -> float:
    """Localized Sobolev norm B * int (eps^2 + eps_y^2) phi_B'."""
    y = eps.grid.nodes()
    wq = quad_weights(eps.grid)
    pb = W.phi_B_prime(y)
    ey = derivative(eps, 1).values
    return float(W.B * (wq @ ((eps.values**2 + ey**2) * pb)))


def h1loc_dissipation(eps: GridFunction, W: WeightSet) -> float:
    """int (eps^2 + eps_y^2) phi_B' (the decay rate term in the F audit)."""
    y = eps.grid.nodes()
    wq = quad_weights(eps.grid)
    pb = W.phi_B_prime(y)
    ey = derivative(eps, 1).values
    return float(wq @ ((eps.values**2 + ey**2) * pb))


def lyapunov_F(eps: GridFunction, lp: LocalizedProfile, W: WeightSet) -> float:
    """Weighted Hamiltonian-type functional of the deviation field.

    int [ eps_y^2 psi_B + eps^2 zeta_B
          - (2/(p+1)) (|eps+Q_b|^{p+1} - Q_b^{p+1} - (p+1) eps Q_b^p) psi_B ].
    """
    if eps.grid != lp.grid:
        raise ValueError("eps and the localized profile live on different grids")
    p = lp.p
    y = eps.grid.nodes()
    wq = quad_weights(eps.grid)
    psi = W.psi_B(y)
    zeta = W.zeta_B(y)
    ey = derivative(eps, 1).values
    qb = lp.Qb.values
    full = np.abs(eps.values + qb) ** (p + 1.0)
    nl = full - np.abs(qb) ** (p + 1.0) - (p + 1.0) * eps.values * np.abs(qb) ** p
    return float(wq @ (ey**2 * psi + eps.values**2 * zeta - (2.0 / (p + 1.0)) * nl * psi))


def localized_energy(u: GridFunction, x_t: float, lam: float, W: WeightSet, p: float) -> float:
    """Energy density integrated against the sigmoid weight around the core.

    int (1/2 u_x^2 - 1/(p+1)|u|^{p+1}) Theta(((x - x_t)/lam - kappa B)/sqrt(B)).
    """
    x = u.grid.nodes()
    wq = quad_weights(u.grid)
    ux = derivative(u, 1).values
    xt = ((x - x_t) / lam - W.kappa * W.B) / math.sqrt(W.B)
    th = W.Theta(xt)
    dens = 0.5 * ux**2 - np.abs(u.values) ** (p + 1.0) / (p + 1.0)
    return float(wq @ (dens * th))


# ---------------------------------------------------------------------------
# records and audits

@dataclass
class DiagnosticsRecord:
    s: float
    t: float
    lam: float
    x: float
    b: float
    b_tilde: float
    N: float
    F: float
    E_tilde: float
    eps_Lp0: float
    eps_dy_L2: float
    diss: float
    res1: float
    res2: float
    res3: float
    mass_rec: float
    rate_ratio: float = float("nan")

    def csv_row(self):
        return (
            self.s,
            self.t,
            self.lam,
            self.x,
            self.b,
            self.b_tilde,
            self.N,
            self.F,
            self.res1,
            self.res2,
            self.res3,
        )


@dataclass(frozen=True)
class BootstrapThresholds:
    """Closed-form trapping bounds as functions of b_c."""

    b_c: float
    nu: float = NU_DEFAULT

    def apriori(self) -> dict:
        b = self.b_c
        return {
            "b_deviation": b ** (1.5 + self.nu),
            "local_norm": b ** (3.0 + 6.0 * self.nu),
            "lp0_norm": b ** (23.0 / 50.0),
            "grad_l2": b ** (2.0 / 3.0),
        }

    def improved(self) -> dict:
        b = self.b_c
        return {
            "b_deviation": b ** (1.5 + 2.0 * self.nu),
            "local_norm": b ** (3.0 + 8.0 * self.nu),
            "lp0_norm": b ** (13.0 / 28.0),
            "grad_l2": b ** 0.75,
        }


def _record_values(rec: DiagnosticsRecord) -> dict:
    return {
        "b_deviation": abs(rec.b_tilde),
        "local_norm": rec.N,
        "lp0_norm": rec.eps_Lp0,
        "grad_l2": rec.eps_dy_L2,
    }


def bootstrap_audit(series, thresholds: BootstrapThresholds) -> dict:
    """Per-bound worst margins against the improved trapping thresholds."""
    bounds = thresholds.improved()
    report = {}
    verdict = True
    for name, bound in bounds.items():
        worst = max(_record_values(r)[name] / bound for r in series)
        passed = worst <= 1.0
        verdict = verdict and passed
        report[name] = {
            "passed": bool(passed),
            "worst_margin": float(worst),
            "fitted_constant": float(worst),
            "bound": float(bound),
        }
    report["verdict"] = "trapped" if verdict else "untrapped"
    return report


def monotonicity_audit(
    series,
    W: WeightSet,
    mu_fit: float | None = None,
    sigma_c: float | None = None,
    constant_cap: float = 100.0,
    quantile: float = 0.95,
) -> dict:
    """Discrete audit of the Lyapunov decay inequality.

    Checks dF/ds + mu * int (eps^2+eps_y^2) phi_B' <= C * b_c^{7/2} per
    recorded step.  If mu is not supplied, fits the largest mu for which a
    single constant C <= constant_cap covers `quantile` of the steps.  Also
    audits the localized-energy decay d(lam^{2(1-sigma_c)} E~)/dt against
    the C_E * b_c^9 / lam^{3+2(1-sigma_c)} envelope when sigma_c is given.
    """
    recs = list(series)
    if len(recs) < 3:
        raise ValueError("need at least 3 records")
    rhs_scale = W.b_c ** 3.5
    ds = np.diff([r.s for r in recs])
    dF = np.diff([r.F for r in recs]) / ds
    diss = np.array([r.diss for r in recs][:-1])

    def c_required(mu):
        vals = (dF + mu * diss) / rhs_scale
        return float(np.quantile(vals, quantile))

    if mu_fit is None:
        mu_grid = np.geomspace(1e-4, 10.0, 60)
        feasible = [m for m in mu_grid if c_required(m) <= constant_cap]
        mu_fit = max(feasible) if feasible else float(mu_grid[0])
    C_fit = max(c_required(mu_fit), 0.0)
    lhs = dF + mu_fit * diss
    satisfied = lhs <= C_fit * rhs_scale + 1e-300
    out = {
        "mu_fit": float(mu_fit),
        "C_fit": float(C_fit),
        "fraction_satisfied": float(np.mean(satisfied)),
        "worst_violation": float(np.max(lhs - C_fit * rhs_scale)),
        "dF_max": float(np.max(dF)),
        "dF_identically_zero": bool(np.all(dF == 0.0)),
    }
    if sigma_c is not None:
        lam = np.array([r.lam for r in recs])
        Et = np.array([r.E_tilde for r in recs])
        t = np.array([r.t for r in recs])
        weighted = lam ** (2.0 * (1.0 - sigma_c)) * Et
        dt = np.diff(t)
        lhs_e = np.diff(weighted) / np.where(dt > 0, dt, np.inf)
        env = W.b_c**9 / lam[:-1] ** (3.0 + 2.0 * (1.0 - sigma_c))
        ce = np.max(lhs_e / env)
        out["energy_C_fit"] = float(max(ce, 0.0))
        out["energy_fraction_nonincreasing"] = float(np.mean(lhs_e <= np.maximum(ce, 0.0) * env))
    return out
