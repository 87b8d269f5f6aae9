"""Loss-optimal label-DP randomization for regression labels on finite label
sets: optimal binned randomized response, private prior estimation, the
additive-noise baselines, and independent optimality verifiers."""

from .binopt import (
    BinLayout,
    inner_min_absolute,
    inner_min_generic,
    inner_min_poisson,
    inner_min_squared,
    optimize_bins,
)
from .core import (
    EpsilonBudget,
    LabelSet,
    MechanismMatrix,
    Prior,
    expected_loss,
    make_label_set,
    make_prior,
    prior_from_labels,
)
from .losses import (
    ABSOLUTE,
    POISSON,
    SQUARED,
    LossSpec,
    check_assumption,
    custom_loss,
    eval_loss,
)
from .mechanisms import (
    NoiseParams,
    Rng,
    clip,
    discrete_laplace_sample,
    discrete_staircase_sample,
    exponential_mechanism_sample,
    laplace_sample,
    randomized_response_sample,
    rr_on_bins_matrix,
    rr_on_bins_sample,
    staircase_sample,
)
from .pipeline import RandomizationReport, label_randomizer, snap_to_universe
from .prior import HistogramEstimate, default_budget_split, laplace_histogram
from .verify import (
    LpSolution,
    brute_force_optimal_bins,
    check_eps_dp,
    empirical_sampler_check,
    lp_optimal_mechanism,
)

__version__ = "0.1.0"
