"""Bayesian pooled-testing toolkit.

Builds information-optimal pooled-test designs over a clustered population
prior, runs sequential screening sessions to a decision-interval stopping
rule, benchmarks against classic pooling strategies, and serves live
operator sessions over HTTP.
"""

from .baselines import (
    DorfmanConfig,
    MatrixConfig,
    RecursiveConfig,
    StrategyOutcome,
    dorfman_run,
    matrix_run,
    recursive_run,
    separate_run,
)
from .design import (
    HillClimbConfig,
    MIEstimate,
    PoolCountMatrix,
    estimate_mi,
    exact_mi,
    optimal_design,
    perturb,
)
from .errors import (
    EnumerationBudgetError,
    InvalidArgumentError,
    InvalidModelError,
    PoolingError,
)
from .model import (
    MAX_POOL_SIZE,
    Cluster,
    Design,
    InfectionState,
    Pool,
    PopulationSpec,
    PriorParams,
    TestData,
    TestErrorParams,
    design_log_likelihood,
    load_model_config,
    pool_log_likelihood,
    pool_of,
    prior_log_prob,
    prior_mean_prevalence,
    sample_data,
    sample_prior,
    sample_prior_matrix,
    save_model_config,
    validate_design,
)
from .posterior import (
    ChainDiagnostics,
    ExactDistribution,
    GibbsConfig,
    PosteriorSamples,
    estimate_iact,
    exact_posterior,
    gibbs_conditional,
    gibbs_run,
    posterior_entropy,
    posterior_marginals,
)
from .sequential import (
    DecisionInterval,
    DopeConfig,
    DopeResult,
    SessionState,
    classify,
    ingest,
    propose,
    run,
    should_stop,
    simulation_executor,
)

__version__ = "0.1.0"
