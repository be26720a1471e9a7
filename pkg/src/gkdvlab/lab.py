"""Experiment setup: assemble the pieces a simulation run needs.

Builds, for a given nonlinearity p, the critical-speed eigenvalue result,
the localized profile and its b-derivative on the simulation grid, the
ground-state context and the weight family.  Used by the CLI and the
acceptance suite so every run starts from the same construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .diagnostics import WeightSet, build_weights
from .groundstate import GroundStateContext, ground_state
from .localized import LocalizedProfile, b_derivative, localize_profile
from .modulation import LinearProfileFamily
from .numerics import Grid
from .profile import EigenvalueResult, ProfileSolution, find_critical_b, solve_profile


@dataclass(frozen=True)
class PreparedLab:
    p: float
    eig: EigenvalueResult
    profile_sol: ProfileSolution = field(repr=False)
    grid: Grid
    ctx: GroundStateContext = field(repr=False)
    lp: LocalizedProfile = field(repr=False)
    family: LinearProfileFamily = field(repr=False)
    weights: WeightSet = field(repr=False)

    @property
    def b_c(self) -> float:
        return self.eig.b_c


def simulation_grid(b_c: float, n: int, y_max: float = 40.0) -> Grid:
    """Fixed frame covering the cutoff support and the left radiation zone."""
    y_min = -4.0 / b_c
    return Grid(y_min, y_max, n)


def prepare_lab(
    p: float,
    n: int = 4096,
    y_max: float = 40.0,
    kappa: float = 0.1,
    h_profile: float = 0.02,
    eig: EigenvalueResult | None = None,
) -> PreparedLab:
    if eig is None:
        eig = find_critical_b(p, h=h_profile)
    b_c = eig.b_c
    grid = simulation_grid(b_c, n, y_max)
    sol = solve_profile(p, b_c)
    lp = localize_profile(sol, b_c, grid=grid, C_p=eig.dgamma_db)
    Pb = b_derivative(p, b_c, b_c / 20.0, b_c=b_c, grid=grid, init=sol)
    family = LinearProfileFamily(lp.Qb, Pb, b_c)
    ctx = ground_state(p, grid)
    weights = build_weights(kappa, b_c)
    return PreparedLab(
        p=p,
        eig=eig,
        profile_sol=sol,
        grid=grid,
        ctx=ctx,
        lp=lp,
        family=family,
        weights=weights,
    )
