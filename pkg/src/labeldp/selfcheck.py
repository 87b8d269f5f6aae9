"""Built-in verification suites behind the `verify` CLI command: dynamic
program vs exhaustive search, LP cross-checks, privacy ratio checks on
generated matrices, and sampler goodness-of-fit."""
from __future__ import annotations

import numpy as np

from . import losses
from .binopt import optimize_bins
from .core import make_label_set, make_prior
from .mechanisms import (
    NoiseParams,
    Rng,
    discrete_laplace_pmf,
    discrete_laplace_sample,
    rr_on_bins_matrix,
    rr_on_bins_sample,
)
from .verify import (
    best_rr_on_bins_over_grid,
    brute_force_optimal_bins,
    check_eps_dp,
    empirical_sampler_check,
    lp_optimal_mechanism,
)

EPS_GRID = (0.0, 0.5, 1.0, 2.0, 5.0)
ALL_LOSSES = (losses.SQUARED, losses.ABSOLUTE, losses.POISSON)


def _random_prior(rng, k_max, y_lo=0.0, y_hi=50.0):
    k = int(rng.integers(2, k_max + 1))
    vals = np.sort(rng.uniform(y_lo, y_hi, size=k))
    while len(np.unique(vals)) < k:
        vals = np.sort(rng.uniform(y_lo, y_hi, size=k))
    p = rng.dirichlet(np.ones(k) * float(rng.uniform(0.3, 3.0)))
    labels = make_label_set(vals)
    return make_prior(labels, p)


def check_oracle_equivalence(seed: int, instances: int, k_max: int):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for t in range(instances):
        prior = _random_prior(rng, k_max, y_lo=0.5)
        eps = float(EPS_GRID[t % len(EPS_GRID)])
        loss = ALL_LOSSES[t % len(ALL_LOSSES)]
        fast = optimize_bins(prior, eps, loss)
        slow = brute_force_optimal_bins(prior, eps, loss)
        gap = abs(fast.objective - slow.objective)
        worst = max(worst, gap)
        if gap > 1e-9 * max(1.0, abs(slow.objective)):
            return False, f"instance {t}: objective gap {gap:.3e}"
    return True, f"{instances} instances, worst gap {worst:.2e}"


def check_lp_cross(seed: int, instances: int):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for t in range(instances):
        prior = _random_prior(rng, 5, y_lo=0.5, y_hi=10.0)
        m = int(rng.integers(2, 6))
        grid = np.sort(
            rng.uniform(prior.labels.y_min, prior.labels.y_max, size=m)
        )
        if len(np.unique(grid)) < m:
            continue
        eps = float(rng.choice([0.3, 0.5, 1.0, 2.0]))
        loss = ALL_LOSSES[t % len(ALL_LOSSES)]
        sol = lp_optimal_mechanism(prior, grid, eps, loss)
        if sol.status != "optimal":
            return False, f"instance {t}: LP status {sol.status}"
        enum = best_rr_on_bins_over_grid(prior, grid, eps, loss)
        gap = abs(sol.objective - enum)
        worst = max(worst, gap)
        if gap > 1e-6:
            return False, f"instance {t}: LP {sol.objective:.9f} vs grid best {enum:.9f}"
    return True, f"{instances} instances, worst gap {worst:.2e}"


def check_dp_ratio(seed: int, instances: int, eps_offset: float = 0.0):
    rng = np.random.default_rng(seed)
    checked = 0
    for t in range(instances):
        prior = _random_prior(rng, 8, y_lo=0.5)
        eps = float(rng.choice([0.5, 1.0, 2.0, 5.0]))
        layout = optimize_bins(prior, eps, losses.SQUARED)
        matrix = rr_on_bins_matrix(layout, eps)
        if not check_eps_dp(matrix, eps + eps_offset):
            return False, f"instance {t}: matrix violates the ratio at eps {eps + eps_offset:.3g}"
        if layout.d >= 2 and eps >= 0.2 and check_eps_dp(matrix, eps - 0.1):
            return False, f"instance {t}: matrix passed at eps - 0.1 (too lax)"
        checked += 1
    return True, f"{checked} matrices"


def check_samplers(seed: int, trials: int):
    root = Rng(seed)
    # randomized response over bins, against its own matrix row
    prior = make_prior(make_label_set([0, 1, 2, 3]), [4, 3, 2, 1])
    layout = optimize_bins(prior, 1.5, losses.SQUARED)
    matrix = rr_on_bins_matrix(layout, 1.5)
    y = prior.labels.values[1]
    row = matrix.rows[1]

    def sample_rr(n, rng):
        return np.array([rr_on_bins_sample(layout, 1.5, y, rng) for _ in range(n)])

    if not empirical_sampler_check(
        sample_rr, matrix.outputs, row, max(trials // 10, 10**4), root.spawn(0)
    ):
        return False, "binned randomized response row failed chi-square"

    # discrete laplace against its exact pmf
    params = NoiseParams(eps=1.0, sensitivity=1.0)
    js = np.arange(-40, 41)
    ok = empirical_sampler_check(
        lambda n, rng: discrete_laplace_sample(np.zeros(n, dtype=int), params, rng),
        js,
        discrete_laplace_pmf(js, params.scale),
        trials,
        root.spawn(1),
    )
    if not ok:
        return False, "discrete laplace failed chi-square"
    return True, "binned RR and discrete laplace fit their analytic rows"


def run_suites(quick: bool = False, seed: int = 0, dp_check_eps_offset: float = 0.0):
    """Run all suites; returns a list of (name, passed, detail)."""
    if quick:
        sizes = dict(oracle=(40, 5), lp=10, dp=10, trials=10**4)
    else:
        sizes = dict(oracle=(150, 8), lp=30, dp=30, trials=10**5)
    results = []
    n_inst, k_max = sizes["oracle"]
    results.append(("oracle-equivalence",) + check_oracle_equivalence(seed, n_inst, k_max))
    results.append(("lp-cross-check",) + check_lp_cross(seed + 1, sizes["lp"]))
    results.append(
        ("dp-ratio",) + check_dp_ratio(seed + 2, sizes["dp"], dp_check_eps_offset)
    )
    results.append(("sampler-fit",) + check_samplers(seed + 3, sizes["trials"]))
    return [(name, ok, detail) for name, ok, detail in results]
