"""Finite-dimensional blow-up law and the geometrical decomposition.

The scale/translation/speed system

    ds/dt = 1/lambda^3,   x_s/lambda = 1,   lambda_s/lambda = -b,   b_s = 0

integrates in closed form to lambda(t) = (3 b0 (T - t))^{1/3} with
T = lambda0^3/(3 b0).  `perturbed_law` integrates the version with the
linear restoring term b_s = -c_p (b - b_c) b_c under user-supplied
residual forcings and reports whether b stays inside the trapping tube.
`decompose` fits (lambda, x, b) to a field so that the rescaled deviation
from the localized profile is orthogonal to Q_p, Lambda Q_p and
y Lambda Q_p.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import make_interp_spline

from .groundstate import GroundStateContext
from .numerics import Grid, GridFunction, derivative, quad_weights

CSV_COLUMNS = ("s", "t", "lambda", "x", "b", "b_tilde", "N", "F", "res1", "res2", "res3")
CSV_SCHEMA_VERSION = 1


class DecomposeError(RuntimeError):
    pass


@dataclass(frozen=True)
class ModulationState:
    lam: float  # scale > 0
    x_c: float  # translation
    b: float  # rescaled blow-up speed
    s: float  # rescaled time
    t: float  # physical time

    def __post_init__(self):
        if not self.lam > 0.0:
            raise ValueError(f"scale must be positive, got {self.lam}")


@dataclass(frozen=True)
class ModulationConstants:
    c_p: float = 2.0
    c_tilde_p: float = 0.125
    T_pred: float = float("nan")

    def __post_init__(self):
        if self.c_p <= 0.0 or self.c_tilde_p <= 0.0:
            raise ValueError("modulation constants must be positive")


@dataclass(frozen=True)
class Trajectory:
    states: tuple
    T: float
    blowup_reached: bool = False
    trapped: bool | None = None

    def arrays(self):
        out = {}
        for name in ("s", "t", "lam", "x_c", "b"):
            out[name] = np.array([getattr(st, name) for st in self.states])
        return out


def exact_law(lambda0: float, b0: float, horizon: float, num: int = 512) -> Trajectory:
    """Closed-form trajectory of the unperturbed law up to rescaled time `horizon`."""
    if lambda0 <= 0.0:
        raise ValueError("lambda0 must be positive")
    ss = np.linspace(0.0, horizon, num)
    if b0 > 0.0:
        lam = lambda0 * np.exp(-b0 * ss)
        t = lambda0**3 * (1.0 - np.exp(-3.0 * b0 * ss)) / (3.0 * b0)
        x = (lambda0 / b0) * (1.0 - np.exp(-b0 * ss))
        T = lambda0**3 / (3.0 * b0)
    elif b0 == 0.0:
        lam = np.full_like(ss, lambda0)
        t = lambda0**3 * ss
        x = lambda0 * ss
        T = math.inf
    else:
        raise ValueError("b0 must be nonnegative")
    states = tuple(
        ModulationState(lam=float(l), x_c=float(xx), b=b0, s=float(sv), t=float(tv))
        for l, xx, sv, tv in zip(lam, x, ss, t)
    )
    return Trajectory(states=states, T=T)


def lambda_of_t(lambda0: float, b0: float, t) -> np.ndarray:
    """Scale as a function of physical time, (lambda0^3 - 3 b0 t)^{1/3}."""
    return np.cbrt(lambda0**3 - 3.0 * b0 * np.asarray(t, dtype=float))


def perturbed_law(
    state0: ModulationState,
    forcing,
    b_c: float,
    c_p: float,
    horizon: float,
    ds: float = None,
    nu: float = 1.0 / 1000.0,
) -> Trajectory:
    """Integrate the law with restoring b-dynamics and residual forcings.

    `forcing` is either a triple (r1, r2, r3) of constants or a callable
    s -> triple; the system is lambda_s/lambda = -b + r1,
    x_s/lambda = 1 + r2, b_s = -c_p (b - b_c) b_c + r3 (classic RK4).
    Reaching lambda -> 0 inside the horizon is reported as blow-up, not an
    error.  The trapped flag records whether |b - b_c| stayed within
    b_c^{3/2 + 2 nu}.
    """
    if ds is None:
        ds = 0.01 / max(b_c, 1e-6)
    if callable(forcing):
        force = forcing
    else:
        r = tuple(forcing)
        force = lambda s: r  # noqa: E731

    tube = b_c ** (1.5 + 2.0 * nu)
    n_steps = int(math.ceil(horizon / ds))
    ds = horizon / n_steps
    states = [state0]
    loglam, x, b, t = math.log(state0.lam), state0.x_c, state0.b, state0.t
    s = state0.s
    trapped = abs(b - b_c) <= tube
    blowup = False

    def rhs(sv, state_vec):
        ll, xx, bb, tt = state_vec
        r1, r2, r3 = force(sv)
        lam = math.exp(ll)
        return np.array(
            [-bb + r1, lam * (1.0 + r2), -c_p * (bb - b_c) * b_c + r3, lam**3]
        )

    vec = np.array([loglam, x, b, t])
    for _ in range(n_steps):
        k1 = rhs(s, vec)
        k2 = rhs(s + 0.5 * ds, vec + 0.5 * ds * k1)
        k3 = rhs(s + 0.5 * ds, vec + 0.5 * ds * k2)
        k4 = rhs(s + ds, vec + ds * k3)
        vec = vec + (ds / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        s += ds
        if not np.all(np.isfinite(vec)):
            raise RuntimeError(f"non-finite state at s={s}")
        lam = math.exp(vec[0])
        if lam < 1e-12:
            blowup = True
            break
        trapped = trapped and abs(vec[2] - b_c) <= tube
        states.append(
            ModulationState(lam=lam, x_c=float(vec[1]), b=float(vec[2]), s=s, t=float(vec[3]))
        )
    T_pred = state0.lam**3 / (3.0 * b_c) + state0.t
    return Trajectory(states=tuple(states), T=T_pred, blowup_reached=blowup, trapped=trapped)


# ---------------------------------------------------------------------------
# geometrical decomposition

class LinearProfileFamily:
    """First-order model of the localized profile family b -> Q_b.

    Q_b = Q_ref + (b - b_ref) P_b with P_b = dQ_b/db frozen at the
    reference speed; adequate across the trapping tube |b - b_ref| << b_ref.
    """

    def __init__(self, Qb_ref: GridFunction, Pb: GridFunction, b_ref: float):
        if Qb_ref.grid != Pb.grid:
            raise ValueError("profile and its b-derivative must share a grid")
        self.grid = Qb_ref.grid
        self.Qb_ref = Qb_ref
        self.Pb = Pb
        self.b_ref = b_ref

    def q(self, b: float) -> np.ndarray:
        return self.Qb_ref.values + (b - self.b_ref) * self.Pb.values

    def dq_db(self, b: float) -> np.ndarray:
        return self.Pb.values


@dataclass(frozen=True)
class DecompositionResult:
    state: ModulationState
    eps: GridFunction = field(repr=False)
    ortho: tuple
    newton_iters: int


def decompose(
    w: GridFunction,
    ctx: GroundStateContext,
    profile_family: LinearProfileFamily,
    guess: ModulationState,
    tol_rel: float = 1e-9,
    tol_abs: float = 1e-12,
    max_iter: int = 50,
) -> DecompositionResult:
    """Fit (lambda, x, b) so the deviation satisfies the orthogonality conditions.

    eps(y) = lam^{2/(p-1)} w(lam y + x_c) - Q_b(y) with
    (eps, Q_p) = (eps, Lambda Q_p) = (eps, y Lambda Q_p) = 0, solved by a
    damped Newton iteration with analytic Jacobian columns.
    """
    ref = profile_family.grid
    if ctx.grid != ref:
        raise ValueError("ground-state context and profile family grids differ")
    p = ctx.p
    y = ref.nodes()
    wq = quad_weights(ref)
    basis = np.vstack(
        [ctx.Qp.values, ctx.lambda_Qp.values, y * ctx.lambda_Qp.values]
    )
    bw = basis * wq  # rows integrate against eps

    spline = make_interp_spline(w.grid.nodes(), w.values, k=5)
    dspline = spline.derivative()
    lo, hi = w.grid.y_min, w.grid.y_max

    def resample(lam, x_c):
        pts = lam * y + x_c
        good = (pts >= lo) & (pts <= hi)
        vals = np.where(good, spline(np.clip(pts, lo, hi)), 0.0)
        dvals = np.where(good, dspline(np.clip(pts, lo, hi)), 0.0)
        pref = lam ** (2.0 / (p - 1.0))
        return pref * vals, pref * dvals

    def residual(lam, x_c, b):
        wr, dwr = resample(lam, x_c)
        eps = wr - profile_family.q(b)
        return (bw @ eps), wr, dwr, eps

    lam, x_c, b = guess.lam, guess.x_c, guess.b
    iters = 0
    F, wr, dwr, eps = residual(lam, x_c, b)
    for iters in range(1, max_iter + 1):
        if not (1e-6 <= lam <= 1e6):
            raise DecomposeError(f"scale left the admissible range: {lam}")
        scale = tol_rel * math.sqrt(max(float(wq @ eps**2), 0.0)) + tol_abs
        if np.all(np.abs(F) <= scale):
            break
        # Jacobian columns: d eps/d lam = Lambda(w_resc)/lam,
        # d eps/d x = pref * w'(lam y + x_c), d eps/d b = -P_b
        lam_col = ((2.0 / (p - 1.0)) * wr + y * dwr * lam) / lam
        x_col = dwr
        b_col = -profile_family.dq_db(b)
        J = np.column_stack([bw @ lam_col, bw @ x_col, bw @ b_col])
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError as exc:
            raise DecomposeError("singular modulation Jacobian") from exc
        # trust caps plus backtracking on the residual norm
        alpha = 1.0
        if abs(step[0]) > 0.2 * lam:
            alpha = min(alpha, 0.2 * lam / abs(step[0]))
        if abs(step[2]) > 0.5 * max(abs(b), 1e-3):
            alpha = min(alpha, 0.5 * max(abs(b), 1e-3) / abs(step[2]))
        f0 = float(np.linalg.norm(F))
        moved = False
        for _ in range(12):
            cand = (lam + alpha * step[0], x_c + alpha * step[1], b + alpha * step[2])
            if cand[0] > 0.0:
                F_new, wr_new, dwr_new, eps_new = residual(*cand)
                if np.linalg.norm(F_new) < f0 * (1.0 - 1e-4 * alpha) + tol_abs:
                    lam, x_c, b = cand
                    F, wr, dwr, eps = F_new, wr_new, dwr_new, eps_new
                    moved = True
                    break
            alpha *= 0.5
        if not moved:
            raise DecomposeError(
                f"orthogonality fit stalled after {iters} iterations "
                f"(data may be outside the decomposition basin)"
            )
    else:
        raise DecomposeError(
            f"orthogonality fit did not converge in {max_iter} iterations"
        )
    wr, _ = resample(lam, x_c)
    eps = GridFunction(ref, wr - profile_family.q(b))
    ortho = tuple(float(v) for v in (bw @ eps.values))
    state = ModulationState(lam=lam, x_c=x_c, b=b, s=guess.s, t=guess.t)
    return DecompositionResult(state=state, eps=eps, ortho=ortho, newton_iters=iters)


def synthesize(
    family: LinearProfileFamily,
    ctx: GroundStateContext,
    state: ModulationState,
    eps: GridFunction | None = None,
    target_grid: Grid | None = None,
) -> GridFunction:
    """Inverse of decompose: build w(x) = lam^{-2/(p-1)} (Q_b+eps)((x-x_c)/lam)."""
    p = ctx.p
    core = family.q(state.b) + (eps.values if eps is not None else 0.0)
    if target_grid is None:
        target_grid = family.grid
    spline = make_interp_spline(family.grid.nodes(), core, k=5)
    pts = (target_grid.nodes() - state.x_c) / state.lam
    good = (pts >= family.grid.y_min) & (pts <= family.grid.y_max)
    vals = np.where(good, spline(np.clip(pts, family.grid.y_min, family.grid.y_max)), 0.0)
    return GridFunction(target_grid, state.lam ** (-2.0 / (p - 1.0)) * vals)


def modulation_residuals(series, b_c: float, c_p_ref: float = 2.0) -> dict:
    """Finite-difference residuals of the parameter equations along a series.

    `series` is a sequence of (s, lam, x, b) tuples or objects with those
    attributes, uniformly sampled in s.  Returns the three residual arrays
    (lambda_s/lambda + b, x_s/lambda - 1, b_s + c_p b_tilde b_c), the
    variant of the first with b_c in place of b, and a least-squares fit of
    c_p from the b-equation.
    """
    def get(r, name, i):
        return getattr(r, name) if hasattr(r, name) else r[i]

    s = np.array([get(r, "s", 0) for r in series], dtype=float)
    lam = np.array([get(r, "lam", 1) for r in series], dtype=float)
    x = np.array([get(r, "x", 2) for r in series], dtype=float)
    b = np.array([get(r, "b", 3) for r in series], dtype=float)
    if s.size < 3:
        raise ValueError("need at least 3 samples")
    ds = np.diff(s)
    if np.max(np.abs(ds - ds[0])) > 1e-9 * max(abs(ds[0]), 1e-300):
        raise ValueError("series must be uniformly sampled in s")
    h = ds[0]
    mid = slice(1, -1)
    dlam = (lam[2:] - lam[:-2]) / (2.0 * h)
    dx = (x[2:] - x[:-2]) / (2.0 * h)
    db = (b[2:] - b[:-2]) / (2.0 * h)
    res1 = dlam / lam[mid] + b[mid]
    res1_bc = dlam / lam[mid] + b_c
    res2 = dx / lam[mid] - 1.0
    bt = b[mid] - b_c
    res3 = db + c_p_ref * bt * b_c
    denom = float(np.sum((bt * b_c) ** 2))
    c_p_fit = float(-np.sum(db * bt * b_c) / denom) if denom > 0.0 else float("nan")
    return {
        "s": s[mid],
        "res1": res1,
        "res1_bc": res1_bc,
        "res2": res2,
        "res3": res3,
        "c_p_fit": c_p_fit,
    }


# ---------------------------------------------------------------------------
# CSV series

def format_float(v: float) -> str:
    return f"{v:.17g}"


def write_series_csv(path, records) -> None:
    """Write the run time series; 17 significant digits, stable column set."""
    lines = [",".join(CSV_COLUMNS)]
    for rec in records:
        row = rec.csv_row() if hasattr(rec, "csv_row") else tuple(rec)
        lines.append(",".join(format_float(v) for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_series_csv(path) -> dict:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV columns: {header}")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return {name: data[:, i] for i, name in enumerate(CSV_COLUMNS)}
