"""Label randomization mechanisms: randomized response over bin outputs and
the additive-noise baselines (continuous/discrete Laplace, continuous/discrete
staircase, rejection-sampled exponential, plain randomized response), plus the
clipping post-process.

Every sampler takes an explicit Rng and is deterministic given its seed.
Scalar inputs return scalars; array inputs return arrays of the same shape.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .binopt import BinLayout
from .core import MechanismMatrix

_MAX_REJECTS = 10**6


@dataclass
class Rng:
    """Seeded random source; identical seeds reproduce identical streams.

    Children derived with spawn(index) are independent and deterministic in
    (seed, index), so concurrent tasks can each own their own stream.
    """

    seed: int
    gen: np.random.Generator = field(default=None, repr=False)

    def __post_init__(self):
        if self.gen is None:
            self.gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.seed)))

    def spawn(self, index: int) -> "Rng":
        seq = np.random.SeedSequence(self.seed, spawn_key=(index,))
        return Rng(self.seed, np.random.Generator(np.random.PCG64(seq)))


@dataclass(frozen=True)
class NoiseParams:
    """Additive-noise parameters: privacy eps, sensitivity (label units; the
    label range for a single bounded label), and the optional staircase shape
    parameters (continuous gamma in (0,1), discrete step width r in [1, Delta])."""

    eps: float
    sensitivity: float
    staircase_gamma: float | None = None
    staircase_r: int | None = None

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if not self.sensitivity > 0:
            raise ValueError(f"sensitivity must be positive, got {self.sensitivity}")
        if self.staircase_gamma is not None and not (0 < self.staircase_gamma < 1):
            raise ValueError(f"staircase gamma must be in (0,1), got {self.staircase_gamma}")

    @property
    def scale(self) -> float:
        """Laplace scale sensitivity/eps."""
        return self.sensitivity / self.eps

    def gamma(self) -> float:
        """Staircase step split; defaults to the variance-optimal 1/(1+e^(eps/2)),
        computed via e^(-eps/2) so it never overflows."""
        if self.staircase_gamma is not None:
            return self.staircase_gamma
        t = math.exp(-self.eps / 2.0)
        return t / (1.0 + t)

    def discrete_r(self, delta: int) -> int:
        if self.staircase_r is not None:
            r = int(self.staircase_r)
        else:
            r = int(round(self.gamma() * delta))
        if not 1 <= r <= delta:
            if self.staircase_r is not None:
                raise ValueError(f"staircase r must be in [1, {delta}], got {r}")
            r = min(max(r, 1), delta)
        return r


def _stay_prob(eps: float, m: int) -> float:
    # e^eps / (e^eps + m - 1), computed via e^-eps to stay finite for any eps
    return 1.0 / (1.0 + (m - 1) * math.exp(-eps))


def rr_on_bins_matrix(layout: BinLayout, eps: float) -> MechanismMatrix:
    """Row-stochastic matrix of randomized response over the layout's outputs:
    stay probability e^eps/(e^eps + d - 1) at the own bin, uniform elsewhere."""
    if eps < 0:
        raise ValueError(f"eps must be non-negative, got {eps}")
    d = layout.d
    stay = _stay_prob(eps, d)
    off = math.exp(-eps) * stay if d > 1 else 0.0
    rows = np.full((layout.labels.k, d), off)
    rows[np.arange(layout.labels.k), layout.assignments()] = stay
    return MechanismMatrix(layout.labels, layout.outputs, rows)


def rr_on_bins_sample(layout: BinLayout, eps: float, y: float, rng: Rng) -> float:
    """One draw of randomized response over bins for a member label y."""
    idx = layout.labels.index_of(y)
    own = int(layout.assignments()[idx])
    d = layout.d
    if d == 1:
        return layout.outputs[0]
    stay = _stay_prob(eps, d)
    if rng.gen.random() < stay:
        return layout.outputs[own]
    return layout.outputs[(own + int(rng.gen.integers(1, d))) % d]


def rr_on_bins_randomize(layout: BinLayout, eps: float, ys: np.ndarray, rng: Rng) -> np.ndarray:
    """Vectorized randomized response over bins for an array of member labels."""
    arr = layout.labels.as_array()
    idx = np.searchsorted(arr, ys)
    idx = np.clip(idx, 0, layout.labels.k - 1)
    if not np.all(arr[idx] == ys):
        bad = int(np.nonzero(arr[idx] != ys)[0][0])
        raise ValueError(f"label at index {bad} not in the label set: {ys[bad]!r}")
    own = layout.assignments()[idx]
    d = layout.d
    outs = np.asarray(layout.outputs)
    if d == 1:
        return np.full(len(ys), outs[0])
    stay = _stay_prob(eps, d)
    keep = rng.gen.random(len(ys)) < stay
    hop = rng.gen.integers(1, d, size=len(ys))
    bins = np.where(keep, own, (own + hop) % d)
    return outs[bins]


def laplace_sample(y, params: NoiseParams, rng: Rng):
    """y plus continuous Laplace noise with scale sensitivity/eps."""
    y = np.asarray(y, dtype=float)
    noise = rng.gen.laplace(0.0, params.scale, size=y.shape)
    out = y + noise
    return float(out) if out.ndim == 0 else out


def discrete_laplace_sample(y, params: NoiseParams, rng: Rng):
    """y plus discrete Laplace noise (pmf proportional to e^(-|j|/b), b =
    sensitivity/eps), sampled exactly as a difference of two geometrics."""
    y = np.asarray(y)
    if not np.all(np.equal(np.mod(y, 1), 0)):
        raise ValueError("discrete laplace requires integer-valued input")
    b = params.scale
    p = 1.0 - math.exp(-1.0 / b)
    shape = y.shape if y.ndim else (1,)
    noise = rng.gen.geometric(p, size=shape) - rng.gen.geometric(p, size=shape)
    out = y.astype(np.int64) + noise
    return int(out[0]) if y.ndim == 0 else out


def discrete_laplace_pmf(j, scale: float):
    """Exact pmf of the discrete Laplace with the given scale."""
    q = math.exp(-1.0 / scale)
    return (1 - q) / (1 + q) * q ** np.abs(np.asarray(j))


def staircase_sample(y, params: NoiseParams, rng: Rng):
    """y plus continuous staircase noise: geometric rung with ratio e^(-eps),
    a high/low step within the rung (widths gamma*D and (1-gamma)*D, heights
    1 : e^(-eps)), a sign, and a uniform position inside the step."""
    eps, delta = params.eps, params.sensitivity
    gamma = params.gamma()
    y = np.asarray(y, dtype=float)
    shape = y.shape if y.ndim else (1,)
    g = rng.gen
    rung = g.geometric(1.0 - math.exp(-eps), size=shape) - 1
    denom = gamma + math.exp(-eps) * (1.0 - gamma)
    # denom underflows only when gamma ~ e^(-eps/2) ~ 0; the high step (width
    # gamma * delta ~ 0) is then the correct zero-noise limit
    p_high = gamma / denom if denom > 0 else 1.0
    high = g.random(shape) < p_high
    u = g.random(shape)
    offset = np.where(high, u * gamma * delta, gamma * delta + u * (1.0 - gamma) * delta)
    sign = np.where(g.random(shape) < 0.5, -1.0, 1.0)
    out = y + sign * (rung * delta + offset)
    return float(out[0]) if y.ndim == 0 else out


def staircase_interval_probs(edges: np.ndarray, eps: float, delta: float, gamma: float) -> np.ndarray:
    """Exact probabilities of staircase noise landing in [edges[i], edges[i+1])."""
    a = (1.0 - math.exp(-eps)) / (2.0 * delta * (gamma + math.exp(-eps) * (1.0 - gamma)))

    def cdf_half(x):
        # integral of the density over [0, x], x >= 0
        if math.isinf(x):
            return 0.5
        total = 0.0
        m = int(x // delta)
        for r in range(m):
            total += a * math.exp(-r * eps) * delta * (gamma + math.exp(-eps) * (1 - gamma))
        rem = x - m * delta
        h = a * math.exp(-m * eps)
        total += h * min(rem, gamma * delta)
        if rem > gamma * delta:
            total += h * math.exp(-eps) * (rem - gamma * delta)
        return total

    def cdf(x):
        return 0.5 + cdf_half(x) if x >= 0 else 0.5 - cdf_half(-x)

    vals = np.array([cdf(e) for e in edges])
    return np.diff(vals)


def discrete_staircase_sample(y, params: NoiseParams, rng: Rng):
    """y plus discrete staircase noise over the integers.

    The pmf is a(r) on |i| in [0, r), e^(-eps) a(r) on |i| in [r, Delta), and
    decays by e^(-eps) per rung of width Delta, with
    a(r) = (1-b) / (2r + 2b(Delta-r) - (1-b)) for b = e^(-eps).
    """
    eps = params.eps
    delta = int(params.sensitivity)
    if delta != params.sensitivity or delta < 2:
        raise ValueError("discrete staircase requires integer sensitivity >= 2")
    r = params.discrete_r(delta)
    y = np.asarray(y)
    if not np.all(np.equal(np.mod(y, 1), 0)):
        raise ValueError("discrete staircase requires integer-valued input")
    b = math.exp(-eps)
    a = (1.0 - b) / (2 * r + 2 * b * (delta - r) - (1.0 - b))
    shape = y.shape if y.ndim else (1,)
    n = int(np.prod(shape)) if shape else 1
    g = rng.gen

    # one-sided masses: rung 0 excludes the atom at zero
    m_first = a * (r - 1) + a * b * (delta - r)
    m_rest = a * (r + b * (delta - r)) * b / (1.0 - b)
    side = m_first + m_rest
    u = g.random(n)
    noise = np.zeros(n, dtype=np.int64)
    nonzero = u >= a
    n_nz = int(nonzero.sum())
    if n_nz:
        first = g.random(n_nz) < m_first / side
        rung = np.where(first, 0, g.geometric(1.0 - b, size=n_nz))
        hi_count = np.where(first, r - 1, r)
        hi_weight = hi_count * 1.0
        lo_weight = b * (delta - r)
        p_hi = np.where(
            hi_weight + lo_weight > 0, hi_weight / (hi_weight + lo_weight), 0.0
        )
        take_hi = g.random(n_nz) < p_hi
        off_hi_start = np.where(first, 1, 0)
        off_hi = off_hi_start + (g.random(n_nz) * np.maximum(hi_count, 1)).astype(np.int64)
        off_lo = r + (g.random(n_nz) * (delta - r)).astype(np.int64) if delta > r else np.full(n_nz, r)
        offset = np.where(take_hi, off_hi, off_lo)
        mag = rung * delta + offset
        sign = np.where(g.random(n_nz) < 0.5, -1, 1)
        noise[nonzero] = sign * mag
    out = np.asarray(y, dtype=np.int64).reshape(-1) + noise
    out = out.reshape(shape)
    return int(out[0]) if y.ndim == 0 else out


def discrete_staircase_pmf(i, eps: float, delta: int, r: int):
    """Exact pmf of the discrete staircase noise at integer offsets i."""
    b = math.exp(-eps)
    a = (1.0 - b) / (2 * r + 2 * b * (delta - r) - (1.0 - b))
    i = np.abs(np.asarray(i))
    rung, off = np.divmod(i, delta)
    return a * b**rung * np.where(off < r, 1.0, b)


def exponential_mechanism_sample(y: float, lo: float, hi: float, eps: float, rng: Rng) -> float:
    """Rejection-sampled exponential mechanism on [lo, hi]: redraw y plus
    Laplace noise at scale 2*(hi-lo)/eps until it lands inside the range,
    yielding density proportional to e^(-eps |out - y| / (2 Delta)) there."""
    if lo > hi:
        raise ValueError(f"empty range [{lo}, {hi}]")
    if not lo <= y <= hi:
        raise ValueError(f"input {y} outside the output range [{lo}, {hi}]")
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    scale = 2.0 * (hi - lo) / eps if hi > lo else 0.0
    if scale == 0.0:
        return lo
    for _ in range(_MAX_REJECTS):
        out = y + rng.gen.laplace(0.0, scale)
        if lo <= out <= hi:
            return float(out)
    raise RuntimeError(f"rejection sampling exceeded {_MAX_REJECTS} attempts")


def randomized_response_sample(y: int, q: int, eps: float, rng: Rng) -> int:
    """Plain randomized response on {1..q}: keep y with probability
    e^eps/(e^eps + q - 1), otherwise uniform over the other values."""
    if not 1 <= y <= q or int(y) != y:
        raise ValueError(f"index {y} outside 1..{q}")
    if eps < 0:
        raise ValueError(f"eps must be non-negative, got {eps}")
    if q == 1:
        return int(y)
    if rng.gen.random() < _stay_prob(eps, q):
        return int(y)
    return int((y - 1 + rng.gen.integers(1, q)) % q + 1)


def clip(value, lo: float, hi: float):
    """Clamp into [lo, hi]; never increases the distance to any in-range point."""
    if lo > hi:
        raise ValueError(f"clip bounds out of order: {lo} > {hi}")
    out = np.clip(np.asarray(value, dtype=float), lo, hi)
    return float(out) if out.ndim == 0 else out
