"""Exponential-family models on permutations.

Library surface: permutation/rank primitives (:mod:`permexp.perm`),
copula grids and score functions (:mod:`permexp.grids`), IPFP scaling
and the limiting log-normalizer (:mod:`permexp.ipfp`), model families
with exact oracles (:mod:`permexp.models`), MCMC samplers
(:mod:`permexp.mcmc`), temperature estimators and the uniformity test
(:mod:`permexp.estimators`), and file formats (:mod:`permexp.io`).
The ``permexp`` command line fronts the same functionality.
"""
from .estimators import (
    AllPairsDegenerateError,
    EstimateResult,
    NoRootError,
    UniformityTest,
    kendall_ld_estimate,
    ld_estimate,
    ld_score,
    ml_exact,
    multi_estimate,
    multi_sample_scores,
    pl_estimate,
    pl_score,
    threshold_test,
    uniformity_test,
)
from .grids import (
    SCORE_FUNCTIONS,
    CopulaGrid,
    ScoreFunction,
    from_permutation,
    get_score,
    grid_mean,
    kl_to_uniform,
    uniform_grid,
)
from .ipfp import (
    IpfpNonConvergence,
    IpfpResult,
    PotentialGrid,
    ipfp_scale,
    limit_matrix,
    recover_potentials,
    variational_value,
    w_k,
    w_k_prime,
)
from .mcmc import ChainState, auxiliary_gibbs_sweep, gibbs_swap_step, make_rng, sample
from .models import (
    KendallModel,
    LinearModel,
    brute_logZ,
    enumerate_pmf,
    kendall_limit_C,
    kendall_limit_C_prime,
    kendall_limit_density,
    kendall_logZ,
    kendall_logZ_prime,
)
from .perm import (
    BinMatrix,
    Permutation,
    bin_counts,
    cdf_distance,
    fisher_yates_logpmf,
    inversions,
    linear_statistic,
    spearman_r,
)

__version__ = "0.1.0"
