"""Edge-based spatial priors for areal count data.

Line-graph dependence structures, exact simulation from Gaussian and
skew-normal edge priors, Bayesian fitting of Poisson log-linear models, and
model comparison criteria.
"""

from .criteria import CriteriaTable, compare, criteria_for_fit, deviance_stats, looic, rmse, waic
from .graph import (
    ArealGraph,
    IncidenceMatrix,
    LineGraphStructure,
    SpectralCache,
    build_incidence,
    build_line_graph,
    load_edge_list,
    precision_quadratic,
    spectral_decompose,
)
from .hmc import Diagnostics, PosteriorDraws, SamplerConfig, ess_bulk, run_chains, split_rhat
from .model import Dataset, ModelCache, ModelSpec, grad_log_posterior, log_posterior, pointwise_loglik
from .priors import (
    B_CONST,
    CarPrior,
    FieldDraw,
    RenegePrior,
    RenegeSkPrior,
    SkewnessSpec,
    build_lowrank_basis,
    prior_moments,
    simulate_field,
    sn_log_density,
)
from .synth import Scenario, SyntheticDataset, make_lattice_graph, run_replication

__version__ = "0.1.0"
