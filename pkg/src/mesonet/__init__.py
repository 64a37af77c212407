"""Projection-based mesoscale two-sample tests for samples of networks.

Compare the edge-expectation parameters of two samples of node-aligned
networks over a fixed set of node pairs, through low-dimensional
projections learned from the held-out edges.
"""

__version__ = "0.1.0"

from .errors import MesonetError, ArgumentError, DataFormatError, NumericalError
from .netmodel import (
    EdgeFamily, GAUSSIAN, BERNOULLI_LOGIT, family_by_name,
    NetworkStack, TwoSampleData, HypothesisSet, ProjectionPair,
    identity_pair, effective_set, build_response, build_design,
    undirected_projection_basis, general_projection_basis,
)
from .stattests import (
    TestReport, RefDist, stat_E, stat_EUD, stat_G, stat_GP,
    fit_two_group_glm, ncp_psi, power_oracle_GP,
)
from .projlearn import (
    learn_projections_rect, learn_projections_impute, learn_full_bases,
    hard_impute, one_step_T, block_means, BlockPartition, SpectralDiag,
    rect_spectral_diag, impute_spectral_diag, logit_transform_trim,
    density_correct, degree_correct, row_hypothesis_projection,
)
from .competitors import (
    basic_gaussian_f_test, basic_proportion_test, admm_constrained,
    position_bootstrap_test, random_projection_test, block_projection_test,
)
from .simharness import (
    ScenarioConfig, MethodSpec, RejectionTable, run_experiment,
    gen_gaussian_ip, gen_gaussian_dist, gen_logit_ip, gen_overdispersed,
)

__all__ = [
    "MesonetError", "ArgumentError", "DataFormatError", "NumericalError",
    "EdgeFamily", "GAUSSIAN", "BERNOULLI_LOGIT", "family_by_name",
    "NetworkStack", "TwoSampleData", "HypothesisSet", "ProjectionPair",
    "identity_pair", "effective_set", "build_response", "build_design",
    "undirected_projection_basis", "general_projection_basis",
    "TestReport", "RefDist", "stat_E", "stat_EUD", "stat_G", "stat_GP",
    "fit_two_group_glm", "ncp_psi", "power_oracle_GP",
    "learn_projections_rect", "learn_projections_impute", "learn_full_bases",
    "hard_impute", "one_step_T", "block_means", "BlockPartition",
    "SpectralDiag", "rect_spectral_diag", "impute_spectral_diag",
    "logit_transform_trim",
    "density_correct", "degree_correct", "row_hypothesis_projection",
    "basic_gaussian_f_test", "basic_proportion_test", "admm_constrained",
    "position_bootstrap_test", "random_projection_test", "block_projection_test",
    "ScenarioConfig", "MethodSpec", "RejectionTable", "run_experiment",
    "gen_gaussian_ip", "gen_gaussian_dist", "gen_logit_ip", "gen_overdispersed",
    "__version__",
]
