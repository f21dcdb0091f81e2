"""Bayesian Nash equilibria of continuous-type aggregative games.

Types are discretized on an equiprobable grid, the aggregate is carried as a
function of the index sum of all types, and equilibria are found either
centrally or by distributed projected gradient with average tracking over a
time-varying network.
"""

from .aggregation import brute_force_aggregate, contribution, contributions, full_aggregate, rival_aggregate
from .estimators import CentralDBNE, DistributedBNESeeker
from .exceptions import (
    AggBNEError,
    ConfigurationError,
    DivergenceError,
    ModelError,
    NumericalError,
    ShapeError,
    ValidationError,
)
from .game import ActionBox, CostModel, CournotCost, CournotParams, GameSpec, cournot_game, saturated_cournot_game, validate_model
from .network import GraphSchedule, metropolis_weights, mixing_diagnostic, schedule_at, transition_product, validate_schedule
from .solver import StepOptions, StepsizeSchedule, bayes_gradient, init_state, run, step
from .type_space import (
    CountTable,
    TypeDiscretization,
    TypeGrid,
    TypeInterval,
    build_quantile_grid,
    build_uniform_grid,
    discretize,
    sum_index_counts,
)
from .verification import (
    best_response,
    best_response_refinement_check,
    central_dbne,
    epsilon_study,
    expected_cost,
    exploitability,
    refine_strategy,
)

__version__ = "0.1.0"
