"""Thompson sampling guided stochastic point location and related grid-Bayes searchers."""

from .environments import (
    DirectionalOracle,
    RootOracle,
    SplEnvironment,
    benchmark_function,
    spl_query,
    srf_sample,
    srf_to_direction,
)
from .harness import (
    ConfigError,
    EnsembleStats,
    TrialConfig,
    TrialResult,
    convergence_step,
    run_ensemble,
    run_trial,
)
from .policies import POLICY_IDS, make_policy
from .posterior import Direction, QueryKind, QueryPoint, SolutionGrid, new_uniform

__version__ = "0.1.0"
