"""Structure learning for multivariate latent tree models.

The package pairs a spectral quartet test over truncated singular-value
products with a bottom-up recursive grouping algorithm, plus a model
simulator that turns the supporting theory into executable checks.
"""

from .compare import TreeComparison, compare_trees
from .diagnostics import ConditionReport, ModelDiagnostics, check_conditions, model_diagnostics
from .linalg import clamp_nonneg, det_k, spectral_norm, top_singular_values
from .models import (
    ConditionMargins,
    LinearTreeModel,
    SampleBatch,
    attach_parameters,
    make_quartet_model,
    make_star_model,
    sample,
)
from .moments import (
    MomentProvider,
    PopulationMoments,
    cross_moment,
    empirical_moments,
    mu_metric,
    population_moments,
)
from .quartet import (
    ConfidenceParams,
    Pairing,
    QuartetInput,
    delta_bernstein,
    delta_discrete,
    max_delta_full_rank,
    max_delta_rank_r,
    spectral_quartet_test,
    t_factor_quartet,
    t_factor_tree,
)
from .srg import SRGResult, ThresholdTable, spectral_recursive_grouping
from .trees import LatentTree, generate_tree

__version__ = "0.1.0"

__all__ = [
    "ConditionMargins",
    "ConditionReport",
    "ConfidenceParams",
    "LatentTree",
    "LinearTreeModel",
    "ModelDiagnostics",
    "MomentProvider",
    "Pairing",
    "PopulationMoments",
    "QuartetInput",
    "SRGResult",
    "SampleBatch",
    "ThresholdTable",
    "TreeComparison",
    "attach_parameters",
    "check_conditions",
    "clamp_nonneg",
    "compare_trees",
    "cross_moment",
    "delta_bernstein",
    "delta_discrete",
    "det_k",
    "empirical_moments",
    "generate_tree",
    "make_quartet_model",
    "make_star_model",
    "max_delta_full_rank",
    "max_delta_rank_r",
    "model_diagnostics",
    "mu_metric",
    "population_moments",
    "sample",
    "spectral_norm",
    "spectral_quartet_test",
    "spectral_recursive_grouping",
    "t_factor_quartet",
    "t_factor_tree",
    "top_singular_values",
]
