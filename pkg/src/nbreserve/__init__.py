"""Stochastic claims reserving for count triangles.

Maximum-likelihood chain-ladder reserving with Poisson, quasi-Poisson
(overdispersed Poisson), and negative binomial families, including
profile-likelihood dispersion estimation with small-sample bias
correction, parametric-bootstrap predictive distributions, and a
simulation engine for coverage studies.
"""

from .chainladder import ChainLadderResult, chain_ladder, dev_factors, project
from .datasets import australian_bodily_injury, taylor_ashe
from .diagnostics import pearson_residuals, residuals_by_factor
from .dispersion import (
    KappaEstimate,
    SelectionReport,
    adjusted_profile_loglik,
    bias_correct,
    maximize_adjusted_profile,
    nb_mle,
    overdispersion_test,
    profile_kappa,
)
from .glm import Family, ModelFit, fit, nb_loglik, pearson_dispersion, poisson_loglik, to_simplex
from .predictive import (
    IntervalSummary,
    ReserveDistribution,
    bootstrap,
    plugin_predict,
    sample_nb,
    summarize,
)
from .simulation import DgpConfig, StudyResult, default_config, generate, run_study
from .triangle import (
    CellRecord,
    CumulativeTriangle,
    RunOffTriangle,
    cumulate,
    decumulate,
    from_long,
    parse_triangle,
    read_triangle,
    serialize_triangle,
    to_long,
)

__version__ = "0.1.0"

__all__ = [
    "CellRecord",
    "ChainLadderResult",
    "CumulativeTriangle",
    "DgpConfig",
    "Family",
    "IntervalSummary",
    "KappaEstimate",
    "ModelFit",
    "ReserveDistribution",
    "RunOffTriangle",
    "SelectionReport",
    "StudyResult",
    "adjusted_profile_loglik",
    "australian_bodily_injury",
    "bias_correct",
    "bootstrap",
    "chain_ladder",
    "cumulate",
    "decumulate",
    "default_config",
    "dev_factors",
    "fit",
    "from_long",
    "generate",
    "maximize_adjusted_profile",
    "nb_loglik",
    "nb_mle",
    "overdispersion_test",
    "parse_triangle",
    "pearson_dispersion",
    "pearson_residuals",
    "plugin_predict",
    "poisson_loglik",
    "profile_kappa",
    "project",
    "read_triangle",
    "residuals_by_factor",
    "run_study",
    "sample_nb",
    "serialize_triangle",
    "summarize",
    "taylor_ashe",
    "to_long",
    "to_simplex",
    "__version__",
]
