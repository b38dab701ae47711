"""Approximate probabilistic bisimulation and trace distance for labelled Markov chains."""

from .abstraction import (
    Cell,
    ContinuousModel,
    LipschitzBudget,
    Partition,
    build_abstract,
    embed_finite,
    grid_partition,
    verify_partition,
    weather_abstract,
    weather_analytic,
    weather_concrete,
    weather_partition,
)
from .bisim import (
    Relation,
    alt_relation,
    check_alt_bisim,
    check_relation,
    exact_bisim,
    lifting_check,
    maximal_bisim,
    minimal_epsilon,
    minimal_epsilons,
)
from .lmc import (
    FiniteLmc,
    LmcError,
    ScaleGuardError,
    TraceSet,
    alt_counterexample,
    branching_example,
    builtin,
    direct_sum,
    simulate,
    tightness,
    trace_probability,
    validate,
)
from .ltl import closeness_bound, horizon, parse, probability, satisfying_traces
from .traces import (
    bisim_bound,
    distinguishability_game,
    trace_distance,
    trace_distance_matrix,
    trace_distances,
    trace_distribution,
    trace_equivalence_check,
)

__version__ = "0.1.0"
