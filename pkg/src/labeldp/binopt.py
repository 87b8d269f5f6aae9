"""Optimal interval binning for randomized response over a finite label set.

Given a prior over sorted labels y^1 < ... < y^k, a privacy parameter eps and
a loss, finds the partition of the labels into consecutive intervals plus one
output value per interval that minimizes the expected loss of randomized
response over the bin outputs.

The single-bin subproblem for the interval [y^r, y^i] is

    L[r][i] = min_yhat  sum_y  p_y * e^(eps * 1[y in [y^r, y^i]]) * loss(yhat, y)

and the best layout with d bins has cost A[k][d] = min over partitions of the
sum of its bins' L values; the reported objective is A[k][d]/(d - 1 + e^eps),
minimized over d.  L tables are filled in r-major order with amortized O(1)
updates per i.  The search over (partition, d) runs as a parametric ratio
search: each round solves an unconstrained segmentation with a per-bin price,
which certifies the exact optimum in a handful of O(k^2) passes.  A literal
layered fill of A[i][j] is kept as `layered_tables` for cross-checks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import LabelSet, Prior
from .losses import POISSON_YHAT_FLOOR, LossSpec

TILT_CAP = 1e300          # e^eps saturates here; layouts beyond eps ~ 35 are identity-like
GOLDEN_TOL = 1e-10        # absolute tolerance in yhat for the generic inner solver
_MAX_RATIO_ROUNDS = 100   # parametric search safety cap; falls back to the layered fill

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def tilt_factor(eps: float) -> float:
    """e^eps, capped at 1e300 for overflow safety."""
    if eps < 0:
        raise ValueError(f"eps must be non-negative, got {eps}")
    if eps >= 690.0:
        return TILT_CAP
    return min(math.exp(eps), TILT_CAP)


@dataclass(frozen=True)
class BinLayout:
    """A partition of the sorted labels into consecutive intervals plus one
    output value per interval.

    boundaries holds the 1-based inclusive end index of each interval, so
    (2, 5) over k=5 labels means bins {y^1,y^2} and {y^3,y^4,y^5}.  outputs
    are non-decreasing and live in [y_min, y_max].  eps and objective record
    what the layout was optimized for and the expected loss it achieves.
    """

    labels: LabelSet
    boundaries: tuple[int, ...]
    outputs: tuple[float, ...]
    eps: float
    objective: float

    def __post_init__(self):
        k = self.labels.k
        if not self.boundaries or self.boundaries[-1] != k:
            raise ValueError("interval boundaries must cover all labels")
        prev = 0
        for b in self.boundaries:
            if b <= prev:
                raise ValueError("interval boundaries must be strictly increasing")
            prev = b
        if len(self.outputs) != len(self.boundaries):
            raise ValueError("need exactly one output per interval")
        for a, b in zip(self.outputs, self.outputs[1:]):
            if b < a:
                raise ValueError("bin outputs must be non-decreasing")
        lo, hi = self.labels.y_min, self.labels.y_max
        slack = 1e-9 * max(1.0, abs(lo), abs(hi))
        for v in self.outputs:
            if v < lo - slack or v > hi + slack:
                raise ValueError(f"bin output {v} outside label range [{lo}, {hi}]")

    @property
    def d(self) -> int:
        return len(self.outputs)

    def assignments(self) -> np.ndarray:
        """Bin index of each label, in label order."""
        out = np.empty(self.labels.k, dtype=np.int64)
        start = 0
        for b_idx, end in enumerate(self.boundaries):
            out[start:end] = b_idx
            start = end
        return out

    def output_for(self, y: float) -> float:
        """The bin output this layout maps a member label to."""
        i = self.labels.index_of(y)
        return self.outputs[int(self.assignments()[i])]


@dataclass
class DPTables:
    """Tables from the layered fill: a[i][j] is the best additive cost of
    splitting the first i labels into j bins; parent[i][j] the chosen start
    of the last bin.  lval/lhat hold the single-bin subproblem values and
    their minimizers, indexed [r-1][i-1]."""

    a: np.ndarray = field(repr=False)
    parent: np.ndarray = field(repr=False)
    lval: np.ndarray = field(repr=False)
    lhat: np.ndarray = field(repr=False)


# ---------------------------------------------------------------------------
# single-bin subproblem tables, filled r-major with amortized updates
# ---------------------------------------------------------------------------

def _tables_squared(p: np.ndarray, y: np.ndarray, tilt: float):
    k = len(p)
    T = tilt - 1.0
    w0 = float(np.sum(p))
    m0 = float(np.dot(p, y))
    q0 = float(np.dot(p, y * y))
    base_mean = m0 / w0
    capped = tilt >= TILT_CAP
    lval = np.full((k, k), np.inf)
    lhat = np.full((k, k), np.nan)
    for r in range(k):
        dp_ = np.cumsum(p[r:])
        dm = np.cumsum((p * y)[r:])
        dq = np.cumsum((p * y * y)[r:])
        sw = w0 + T * dp_
        swy = m0 + T * dm
        swy2 = q0 + T * dq
        if capped:
            # saturated tilt: the minimizer is the in-bin mean exactly
            yhat = np.where(dp_ > 0, dm / np.where(dp_ > 0, dp_, 1.0), base_mean)
            val = swy2 - 2.0 * yhat * swy + yhat * yhat * sw
        else:
            yhat = swy / sw
            val = swy2 - yhat * swy
        lhat[r, r:] = yhat
        lval[r, r:] = np.maximum(val, 0.0)
    return lval, lhat


def _tables_poisson(p: np.ndarray, y: np.ndarray, tilt: float):
    if y[0] < 0:
        raise ValueError("poisson loss requires non-negative labels")
    k = len(p)
    T = tilt - 1.0
    w0 = float(np.sum(p))
    m0 = float(np.dot(p, y))
    base_mean = m0 / w0
    capped = tilt >= TILT_CAP
    lval = np.full((k, k), np.inf)
    lhat = np.full((k, k), np.nan)
    for r in range(k):
        dp_ = np.cumsum(p[r:])
        dm = np.cumsum((p * y)[r:])
        sw = w0 + T * dp_
        swy = m0 + T * dm
        if capped:
            yhat = np.where(dp_ > 0, dm / np.where(dp_ > 0, dp_, 1.0), base_mean)
        else:
            yhat = swy / sw
        yhat = np.maximum(yhat, POISSON_YHAT_FLOOR)
        lhat[r, r:] = yhat
        lval[r, r:] = sw * yhat - swy * np.log(yhat)
    return lval, lhat


def _tables_absolute(p: np.ndarray, y: np.ndarray, tilt: float):
    k = len(p)
    T = tilt - 1.0
    lval = np.full((k, k), np.inf)
    lhat = np.full((k, k), np.nan)
    base_w = p.copy()
    base_wy = p * y
    for r in range(k):
        w = base_w.copy()
        wy = base_wy.copy()
        w[r] *= tilt
        wy[r] *= tilt
        cum = np.cumsum(w)
        total = cum[-1]
        m = int(np.searchsorted(cum, 0.5 * total))
        w_lo = float(cum[m])
        w_hi = total - w_lo
        s_lo = float(np.sum(wy[: m + 1]))
        s_hi = float(np.sum(wy[m + 1:]))
        for i in range(r, k):
            if i > r:
                dw = T * base_w[i]
                dwy = T * base_wy[i]
                w[i] += dw
                wy[i] += dwy
                if i <= m:
                    w_lo += dw
                    s_lo += dwy
                else:
                    w_hi += dw
                    s_hi += dwy
            # restore: w_lo >= half and w_lo - w[m] < half
            half = 0.5 * (w_lo + w_hi)
            while w_lo < half:
                m += 1
                w_lo += w[m]
                w_hi -= w[m]
                s_lo += wy[m]
                s_hi -= wy[m]
            while m > 0 and w_lo - w[m] >= half:
                w_lo -= w[m]
                w_hi += w[m]
                s_lo -= wy[m]
                s_hi += wy[m]
                m -= 1
            med = y[m]
            lhat[r, i] = med
            lval[r, i] = med * w_lo - s_lo + (s_hi - med * w_hi)
    np.maximum(lval, 0.0, out=lval)
    return lval, lhat


def _golden_min(fn, lo: float, hi: float, tol: float = GOLDEN_TOL):
    """Golden-section minimum of a unimodal fn on [lo, hi]."""
    a, b = lo, hi
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = fn(c), fn(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = fn(d)
    x = 0.5 * (a + b)
    return x, fn(x)


def _tables_generic(p: np.ndarray, y: np.ndarray, tilt: float, loss: LossSpec):
    if not loss.convex_in_first_arg:
        raise ValueError("generic inner solver requires a convex loss")
    k = len(p)
    lo, hi = float(y[0]), float(y[-1])
    if loss.domain_min is not None:
        lo = max(lo, loss.domain_min + POISSON_YHAT_FLOOR)
        hi = max(hi, lo)
    lval = np.full((k, k), np.inf)
    lhat = np.full((k, k), np.nan)
    for r in range(k):
        w = p.copy()
        w[r] *= tilt
        for i in range(r, k):
            if i > r:
                w[i] *= tilt

            def g(yhat, w=w):
                return float(np.dot(w, loss.eval_fn(yhat, y)))

            if lo == hi:
                yhat, v = lo, g(lo)
            else:
                yhat, v = _golden_min(g, lo, hi)
            lhat[r, i] = yhat
            lval[r, i] = v
    return lval, lhat


def _build_tables(prior: Prior, tilt: float, loss: LossSpec):
    p = prior.probs_array()
    y = prior.labels.as_array()
    if loss.kind == "squared":
        return _tables_squared(p, y, tilt)
    if loss.kind == "poisson":
        return _tables_poisson(p, y, tilt)
    if loss.kind == "absolute":
        return _tables_absolute(p, y, tilt)
    return _tables_generic(p, y, tilt, loss)


# ---------------------------------------------------------------------------
# public single-interval solvers (from-scratch; amortized tables must agree)
# ---------------------------------------------------------------------------

def _interval_weights(prior: Prior, r: int, i: int, eps: float) -> np.ndarray:
    k = prior.k
    if not (1 <= r <= i <= k):
        raise ValueError(f"need 1 <= r <= i <= k={k}, got r={r}, i={i}")
    w = prior.probs_array().copy()
    w[r - 1: i] *= tilt_factor(eps)
    return w


def inner_min_squared(prior: Prior, r: int, i: int, eps: float):
    """Tilted squared-loss minimizer over one interval [y^r, y^i] (1-based).

    Returns (yhat, value) where yhat is the exponentially weighted mean and
    value the weighted sum of squared losses at yhat.
    """
    w = _interval_weights(prior, r, i, eps)
    y = prior.labels.as_array()
    sw = float(np.sum(w))
    swy = float(np.dot(w, y))
    yhat = swy / sw
    value = float(np.dot(w, (yhat - y) ** 2))
    return yhat, value


def inner_min_poisson(prior: Prior, r: int, i: int, eps: float):
    """Tilted poisson-loss minimizer over one interval; same weighted mean as
    the squared case, with the output floored at a tiny positive value when
    all weighted label mass sits at zero."""
    y = prior.labels.as_array()
    if y[0] < 0:
        raise ValueError("poisson loss requires non-negative labels")
    w = _interval_weights(prior, r, i, eps)
    sw = float(np.sum(w))
    swy = float(np.dot(w, y))
    yhat = max(swy / sw, POISSON_YHAT_FLOOR)
    value = sw * yhat - swy * math.log(yhat)
    return yhat, value


def inner_min_absolute(prior: Prior, r: int, i: int, eps: float):
    """Tilted absolute-loss minimizer: the weighted median, i.e. the smallest
    label whose cumulative weight reaches half the total."""
    w = _interval_weights(prior, r, i, eps)
    y = prior.labels.as_array()
    cum = np.cumsum(w)
    m = int(np.searchsorted(cum, 0.5 * cum[-1]))
    yhat = float(y[m])
    value = float(np.dot(w, np.abs(yhat - y)))
    return yhat, value


def inner_min_generic(prior: Prior, r: int, i: int, eps: float, loss: LossSpec):
    """Golden-section inner solver for an arbitrary convex loss."""
    if not loss.convex_in_first_arg:
        raise ValueError("generic inner solver requires a convex loss")
    w = _interval_weights(prior, r, i, eps)
    y = prior.labels.as_array()
    lo, hi = float(y[0]), float(y[-1])
    if loss.domain_min is not None:
        lo = max(lo, loss.domain_min + POISSON_YHAT_FLOOR)
        hi = max(hi, lo)

    def g(yhat):
        return float(np.dot(w, loss.eval_fn(yhat, y)))

    if lo == hi:
        return lo, g(lo)
    return _golden_min(g, lo, hi)


# ---------------------------------------------------------------------------
# search over partitions
# ---------------------------------------------------------------------------

def _segment_pass(lval: np.ndarray, lam: float):
    """Best additive segmentation with a per-bin price of lam.

    B[i] = min_{0 <= r < i} B[r] + lval[r][i-1] - lam, smallest-r argmin.
    """
    k = lval.shape[0]
    B = np.empty(k + 1)
    parent = np.empty(k + 1, dtype=np.int64)
    B[0] = 0.0
    for i in range(1, k + 1):
        cand = B[:i] + lval[:i, i - 1]
        m = int(np.argmin(cand))
        B[i] = cand[m] - lam
        parent[i] = m
    return B[k], parent


def _segment_pass_min_d(lval: np.ndarray, lam: float):
    """Like _segment_pass but breaks exact value ties toward fewer bins,
    then toward the smallest start index."""
    k = lval.shape[0]
    B = np.empty(k + 1)
    D = np.empty(k + 1, dtype=np.int64)
    parent = np.empty(k + 1, dtype=np.int64)
    B[0] = 0.0
    D[0] = 0
    for i in range(1, k + 1):
        cand = B[:i] + lval[:i, i - 1]
        vmin = cand.min()
        ties = np.nonzero(cand == vmin)[0]
        m = int(ties[np.argmin(D[ties])])
        B[i] = vmin - lam
        D[i] = D[m] + 1
        parent[i] = m
    return parent


def _backtrack(parent: np.ndarray, k: int) -> list[tuple[int, int]]:
    """0-based inclusive (start, end) intervals from last-bin parent pointers."""
    spans = []
    i = k
    while i > 0:
        r = int(parent[i])
        spans.append((r, i - 1))
        i = r
    spans.reverse()
    return spans


def _partition_cost(lval: np.ndarray, spans) -> float:
    return float(math.fsum(lval[a, b] for a, b in spans))


def _parametric_search(lval: np.ndarray, tilt: float):
    """Exact minimizer of sum(L over bins) / (d - 1 + tilt) over partitions.

    Iterates lam <- cost(P)/(d-1+tilt) of the best segmentation at price lam,
    which strictly improves until the optimum certifies itself; terminates in
    a few rounds for any finite instance.
    """
    k = lval.shape[0]
    lam = lval[0, k - 1] / tilt  # single-bin layout seeds the ratio
    spans = [(0, k - 1)]
    for _ in range(_MAX_RATIO_ROUNDS):
        _, parent = _segment_pass(lval, lam)
        new_spans = _backtrack(parent, k)
        new_lam = _partition_cost(lval, new_spans) / (len(new_spans) - 1 + tilt)
        if new_lam >= lam - 1e-14 * max(1.0, abs(lam)):
            if new_lam < lam:
                lam, spans = new_lam, new_spans
            break
        lam, spans = new_lam, new_spans
    else:
        return None  # caller falls back to the layered fill
    # settle exact value ties toward fewer bins, then smaller start indices
    parent = _segment_pass_min_d(lval, lam)
    tied = _backtrack(parent, k)
    tied_lam = _partition_cost(lval, tied) / (len(tied) - 1 + tilt)
    if tied_lam <= lam + 1e-14 * max(1.0, abs(lam)):
        return tied_lam, tied
    return lam, spans


def layered_tables(lval: np.ndarray, lhat: np.ndarray | None = None) -> DPTables:
    """Reference layered fill of the full A[i][j] table (quadratic states,
    linear work per state).  Used for cross-checks and as a fallback."""
    k = lval.shape[0]
    a = np.full((k + 1, k + 1), np.inf)
    parent = np.full((k + 1, k + 1), -1, dtype=np.int64)
    a[0, 0] = 0.0
    for j in range(1, k + 1):
        aprev = a[:, j - 1]
        for i in range(j, k + 1):
            cand = aprev[j - 1: i] + lval[j - 1: i, i - 1]
            m = int(np.argmin(cand))
            a[i, j] = cand[m]
            parent[i, j] = m + (j - 1)
    if lhat is None:
        lhat = np.empty((0, 0))
    return DPTables(a=a, parent=parent, lval=lval, lhat=lhat)


def _layered_select(tables: DPTables, tilt: float):
    k = tables.a.shape[0] - 1
    ds = np.arange(1, k + 1)
    obj = tables.a[k, 1:] / (ds - 1 + tilt)
    d = int(np.argmin(obj)) + 1
    spans = []
    i, j = k, d
    while j > 0:
        r = int(tables.parent[i, j])
        spans.append((r, i - 1))
        i, j = r, j - 1
    spans.reverse()
    return float(obj[d - 1]), spans


def optimize_bins(prior: Prior, eps: float, loss: LossSpec) -> BinLayout:
    """Compute the loss-optimal bin layout for randomized response at eps.

    Fills the single-bin tables, searches over interval partitions and bin
    counts, and backtracks the optimal partition with per-bin outputs.  Ties
    resolve toward fewer bins and smaller start indices.
    """
    if eps < 0:
        raise ValueError(f"eps must be non-negative, got {eps}")
    tilt = tilt_factor(eps)
    lval, lhat = _build_tables(prior, tilt, loss)
    result = _parametric_search(lval, tilt)
    if result is None:
        result = _layered_select(layered_tables(lval, lhat), tilt)
    objective, spans = result
    outputs = [float(lhat[a, b]) for a, b in spans]
    spans, outputs, objective = _merge_degenerate_bins(
        lval, lhat, spans, outputs, objective, tilt
    )
    boundaries = tuple(b + 1 for _, b in spans)
    return BinLayout(
        labels=prior.labels,
        boundaries=boundaries,
        outputs=tuple(outputs),
        eps=float(eps),
        objective=float(objective),
    )


def _merge_degenerate_bins(lval, lhat, spans, outputs, objective, tilt):
    """Collapse adjacent bins whose outputs coincide or invert.

    Neither can occur at an exact optimum (the outputs form a set and are
    non-decreasing there), but float ties on degenerate priors can
    manufacture them; the merged layout is re-costed honestly.
    """
    while len(spans) > 1 and any(
        outputs[t] >= outputs[t + 1] for t in range(len(spans) - 1)
    ):
        t = next(t for t in range(len(spans) - 1) if outputs[t] >= outputs[t + 1])
        a, _ = spans[t]
        _, b = spans[t + 1]
        spans = spans[:t] + [(a, b)] + spans[t + 2:]
        outputs = outputs[:t] + [float(lhat[a, b])] + outputs[t + 2:]
        objective = _partition_cost(lval, spans) / (len(spans) - 1 + tilt)
    return spans, outputs, objective
