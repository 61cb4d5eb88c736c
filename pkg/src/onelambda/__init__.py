"""Success-based offspring population control laboratory.

Simulate the self-adjusting (1,lambda) EA (plus elitist and static-lambda
baselines) on pseudo-Boolean benchmarks, compute exact finite-n transition
probabilities and potential drifts, and reproduce the study figures at
desk scale.
"""

from .ea import (
    AlgorithmKind,
    AlgoState,
    ControllerParams,
    RunRecord,
    StopCause,
    StoppingCondition,
    default_static_lambda,
    generation_comma,
    generation_plus,
    mutate,
    round_lambda,
    run,
    update_lambda,
)
from .fitness import FitnessFunction, SearchPoint
from .oracle import (
    best_of_lambda_distribution,
    check_transition_bounds,
    drift_grid_check,
    elitist_evaluations_bound,
    exact_potential_drift,
    improvement_probability,
    level_quantities,
    make_potential,
    single_offspring_distribution,
)

__version__ = "0.1.0"
