"""Private prior estimation over a public label universe, and the default
privacy budget split between estimation and randomization.

The histogram mechanism counts labels over the caller-supplied universe, adds
Laplace(2/eps) noise per cell (a histogram has sensitivity 2 under a one-label
change), clamps at zero and normalizes.  The universe must be public metadata:
inferring it from the data would leak.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .core import EpsilonBudget, LabelSet, Prior, make_prior
from .mechanisms import Rng

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class HistogramEstimate:
    """A privately estimated prior.  raw_counts are the true per-label counts
    and must never leave this process; only prior / noised_counts are DP."""

    prior: Prior
    noised_counts: tuple[float, ...]
    eps_used: float
    raw_counts: tuple[int, ...] = field(repr=False)


def laplace_histogram(labels, universe: LabelSet, eps1: float, rng: Rng) -> HistogramEstimate:
    """Estimate the label distribution with eps1-DP Laplace noise.

    Counts each universe cell, perturbs with Laplace(2/eps1), clamps negatives
    to zero and normalizes.  If every noised count clamps to zero the estimate
    falls back to the uniform distribution (logged).
    """
    if not eps1 > 0:
        raise ValueError(f"eps1 must be positive, got {eps1}")
    ys = np.asarray(list(labels), dtype=float)
    if ys.size == 0:
        raise ValueError("need at least one label")
    grid = universe.as_array()
    idx = np.searchsorted(grid, ys)
    idx_clipped = np.clip(idx, 0, universe.k - 1)
    misses = grid[idx_clipped] != ys
    if np.any(misses):
        bad = int(np.nonzero(misses)[0][0])
        raise ValueError(f"label at index {bad} not in the universe: {ys[bad]!r}")
    counts = np.bincount(idx_clipped, minlength=universe.k).astype(float)
    noised = counts + rng.gen.laplace(0.0, 2.0 / eps1, size=universe.k)
    noised = np.maximum(noised, 0.0)
    if noised.sum() <= 0.0:
        log.warning("all noised histogram counts clamped to zero; using uniform prior")
        prior = make_prior(universe, np.ones(universe.k))
    else:
        prior = make_prior(universe, noised)
    return HistogramEstimate(
        prior=prior,
        noised_counts=tuple(float(c) for c in noised),
        eps_used=float(eps1),
        raw_counts=tuple(int(c) for c in counts),
    )


def default_budget_split(eps: float, k: int, n: int) -> EpsilonBudget:
    """Split a total budget as eps1 = sqrt(k/n) for prior estimation and the
    remainder for randomization; the components sum to eps exactly."""
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if k < 1 or n < 1:
        raise ValueError("need k >= 1 labels and n >= 1 samples")
    eps1 = math.sqrt(k / n)
    if eps1 >= eps:
        raise ValueError(
            f"default split needs sqrt(k/n) = {eps1:.6g} < eps = {eps:.6g}; "
            "supply an explicit split or more data"
        )
    eps2 = eps - eps1
    # make the float sum exact (a couple of one-ulp corrections at most)
    for _ in range(4):
        if eps1 + eps2 == eps:
            break
        eps2 += eps - (eps1 + eps2)
    if eps1 + eps2 != eps or eps2 <= 0:
        raise ValueError(f"cannot split eps = {eps!r} exactly with eps1 = {eps1!r}")
    return EpsilonBudget(eps1=eps1, eps2=eps2)
