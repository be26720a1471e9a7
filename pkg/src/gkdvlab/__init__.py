"""Numerical laboratory for self-similar blow-up in slightly supercritical gKdV."""

from .numerics import Grid, GridFunction, derivative, find_root, inner, integrate
from .groundstate import (
    GroundStateContext,
    LinearizedOperator,
    coercivity_constant,
    energy,
    ground_state,
    lambda_apply,
    linearized_apply,
    mass,
    scaling_index,
    virial_form_min,
)
from .scorer import ScorerQuery, scorer_asymptotic, scorer_eval, scorer_ratio
from .profile import (
    EigenvalueResult,
    ProfileSolution,
    find_critical_b,
    solve_profile,
    tail_audit,
)
from .localized import (
    LocalizedProfile,
    b_derivative,
    localize_profile,
    profile_error,
)
from .modulation import (
    DecompositionResult,
    LinearProfileFamily,
    ModulationConstants,
    ModulationState,
    decompose,
    exact_law,
    modulation_residuals,
    perturbed_law,
)
from .diagnostics import (
    BootstrapThresholds,
    DiagnosticsRecord,
    WeightSet,
    bootstrap_audit,
    build_weights,
    local_norm_N,
    localized_energy,
    lyapunov_F,
    monotonicity_audit,
)
from .dynamics import (
    InitialData,
    RunArtifact,
    SimulationState,
    concentration_ratio,
    lq_convergence_audit,
    run_blowup,
    step_rescaled,
)
from .lab import PreparedLab, prepare_lab

__version__ = "0.1.0"
