"""End-to-end label randomizer for the unknown-prior case: estimate the prior
with part of the budget, optimize the bin layout against the estimate, then
randomize every label independently.  The whole output is (eps1 + eps2)-DP by
basic composition; the raw labels are touched exactly twice (one histogram
pass, one per-label randomization).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .binopt import BinLayout, optimize_bins
from .core import EpsilonBudget, LabelSet, Prior
from .losses import LossSpec
from .mechanisms import Rng, rr_on_bins_randomize
from .prior import laplace_histogram

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RandomizationReport:
    """Run metadata safe to persist alongside the noisy labels.

    mechanism_loss_on_inputs is the empirical mean loss between raw and noisy
    labels; it is a diagnostic data statistic, not DP-protected, and mirrors
    the evaluation convention of reporting the mechanism's label error.
    Contains no raw labels and no raw counts.
    """

    budget: EpsilonBudget
    estimated_prior: Prior
    layout: BinLayout
    mechanism_loss_on_inputs: float
    n: int
    loss_kind: str
    seed: int


def snap_to_universe(values, universe: LabelSet) -> np.ndarray:
    """Map arbitrary reals onto the universe by rounding down to the nearest
    universe element (values below the minimum clamp up to it)."""
    vals = np.asarray(list(values), dtype=float)
    grid = universe.as_array()
    idx = np.searchsorted(grid, vals, side="right") - 1
    idx = np.clip(idx, 0, universe.k - 1)
    return grid[idx]


def label_randomizer(
    labels,
    universe: LabelSet,
    eps1: float,
    eps2: float,
    loss: LossSpec,
    rng: Rng,
):
    """Randomize a batch of labels with total budget eps1 + eps2.

    Returns (noisy_labels, report).  Order and length of the input are
    preserved; snapping to the universe happens before the histogram pass.
    """
    if not eps1 > 0:
        raise ValueError(f"eps1 must be positive, got {eps1}")
    if eps2 < 0:
        raise ValueError(f"eps2 must be non-negative, got {eps2}")
    raw = np.asarray(list(labels), dtype=float)
    if raw.size == 0:
        raise ValueError("need at least one label")
    snapped = snap_to_universe(raw, universe)
    n_moved = int(np.sum(snapped != raw))
    if n_moved:
        log.debug("snapped %d labels onto the universe grid", n_moved)

    estimate = laplace_histogram(snapped, universe, eps1, rng)
    layout = optimize_bins(estimate.prior, eps2, loss)
    noisy = rr_on_bins_randomize(layout, eps2, snapped, rng)

    mech_loss = float(np.mean(loss.eval_fn(noisy, raw)))
    report = RandomizationReport(
        budget=EpsilonBudget(eps1=eps1, eps2=eps2),
        estimated_prior=estimate.prior,
        layout=layout,
        mechanism_loss_on_inputs=mech_loss,
        n=int(raw.size),
        loss_kind=loss.kind,
        seed=rng.seed,
    )
    return noisy, report
