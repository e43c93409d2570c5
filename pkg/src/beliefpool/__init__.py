"""Discrete Bayesian-network learning and opinion-pool aggregation of learned networks."""

from .aggregation import (
    AggregationConfig,
    LinopPool,
    SourceReport,
    aggr,
    de_smooth_family,
    linop,
    linop_marginal,
    map_aggregate_joint,
    samp_baseline,
)
from .core import (
    BayesNet,
    Cpt,
    Dag,
    DataSet,
    Factor,
    Variable,
    full_joint,
    marginalize,
    topological_order,
    validate_network,
)
from .inference import conditional_from_marginals, kl_divergence, marginal
from .learning import (
    DataStatistics,
    DirichletSpec,
    SearchConfig,
    family_counts,
    fit_map,
    fit_mle,
    mdl_score,
    neighbors,
    structure_search,
)
from .sampling import empirical_distribution, forward_sample, make_rng, partition_by_variable

__version__ = "0.1.0"
