"""Differentially private linearized consensus ADMM with multiple local updates.

The package splits into problem definitions (:mod:`dpadmm.problems`), the
consensus engine (:mod:`dpadmm.engine`), noise mechanisms
(:mod:`dpadmm.mechanisms`), privacy accounting (:mod:`dpadmm.accounting`),
the penalty solver for general smooth constraints (:mod:`dpadmm.penalty`),
application instances (:mod:`dpadmm.applications`), convergence envelopes
(:mod:`dpadmm.bounds`), and the experiment driver
(:mod:`dpadmm.experiments` / ``dpadmm`` CLI).
"""

from .accounting import PrivacyLedger, compose, moment_alpha, verify_budget
from .engine import (
    DynamicRho,
    RunResult,
    ScheduleConfig,
    eta_schedule,
    finalize_round,
    global_update,
    local_update,
    rho_schedule,
    run,
)
from .mechanisms import (
    MechanismConfig,
    SensitivityRecord,
    StepContext,
    constant_sensitivity,
    noise_magnitude,
    noise_parameters,
    perturb_output,
    sample_noise,
)
from .problems import (
    Box,
    ConsensusProblem,
    ConstraintOracle,
    IterateState,
    ObjectiveOracle,
    Residuals,
    Smoothness,
    SmoothInequalities,
    Unconstrained,
    evaluate_global_objective,
    residuals,
)

__all__ = [
    "Box",
    "ConsensusProblem",
    "ConstraintOracle",
    "DynamicRho",
    "IterateState",
    "MechanismConfig",
    "ObjectiveOracle",
    "PrivacyLedger",
    "Residuals",
    "RunResult",
    "ScheduleConfig",
    "SensitivityRecord",
    "Smoothness",
    "SmoothInequalities",
    "StepContext",
    "Unconstrained",
    "compose",
    "constant_sensitivity",
    "eta_schedule",
    "evaluate_global_objective",
    "finalize_round",
    "global_update",
    "local_update",
    "moment_alpha",
    "noise_magnitude",
    "noise_parameters",
    "perturb_output",
    "residuals",
    "rho_schedule",
    "run",
    "sample_noise",
    "verify_budget",
]

__version__ = "0.1.0"
