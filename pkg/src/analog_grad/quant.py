"""Analog channel error model: clamping, reduced precision, Gaussian noise.

The model treats every analog signal (sensor data, inter-layer values,
weight reads) as passing through a configurable pipeline of three stages:
a clamp onto the physical signal range, a round-to-nearest map onto a
2^-bits grid, and additive Gaussian noise.  The error-probability calculus
relates the noise standard deviation to the chance that a digitized level
is misread.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import erf

from .errors import ConfigError

STAGE_NAMES = ("clamp", "reduce-precision", "noise")
DEFAULT_STAGE_ORDER = ("clamp", "reduce-precision", "noise")

MIN_BITS = 1
MAX_BITS = 16


def _mix64(a: int, b: int) -> int:
    """Stable 64-bit mix of two integers (splitmix64 finalizer)."""
    z = (a * 0x9E3779B97F4A7C15 + b) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


@dataclass(frozen=True)
class RngStream:
    """Deterministic random stream keyed by (seed, stream_id).

    Identical (seed, stream_id) pairs always reproduce the same sample
    sequence, on any platform.  `child(i)` derives an independent
    sub-stream, so one master seed can fan out to per-site / per-cell
    streams without collisions.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed & 0xFFFFFFFFFFFFFFFF,
                                    spawn_key=(self.stream_id,))
        return np.random.default_rng(ss)

    def child(self, index: int) -> "RngStream":
        return RngStream(self.seed, _mix64(self.stream_id, index))


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng)!r}")


@dataclass
class QuantNoiseSpec:
    """Configuration of one analog corruption site.

    Exactly one of `sigma` / `target_ep` must be given; `resolve()` fills
    in the other through the error-probability relation so that both are
    always consistent afterwards.
    """

    bits: int
    sigma: float | None = None
    target_ep: float | None = None
    clamp_lo: float = -1.0
    clamp_hi: float = 1.0
    stage_order: tuple[str, ...] = field(default=DEFAULT_STAGE_ORDER)

    def __post_init__(self):
        if not (MIN_BITS <= self.bits <= MAX_BITS):
            raise ConfigError(f"bits must be in [{MIN_BITS}, {MAX_BITS}], got {self.bits}")
        if self.clamp_lo >= self.clamp_hi:
            raise ConfigError(f"clamp_lo must be < clamp_hi, got [{self.clamp_lo}, {self.clamp_hi}]")
        if (self.sigma is None) == (self.target_ep is None):
            raise ConfigError("exactly one of sigma / target_ep must be set")
        if self.sigma is not None and self.sigma < 0:
            raise ConfigError(f"sigma must be >= 0, got {self.sigma}")
        if self.target_ep is not None and not (0.0 <= self.target_ep < 1.0):
            raise ConfigError(f"target_ep must be in [0, 1), got {self.target_ep}")
        self.stage_order = tuple(self.stage_order)
        if len(self.stage_order) == 0:
            raise ConfigError("stage_order must not be empty")
        for stage in self.stage_order:
            if stage not in STAGE_NAMES:
                raise ConfigError(f"unknown pipeline stage {stage!r}")

    @property
    def resolved(self) -> bool:
        return self.sigma is not None and self.target_ep is not None

    def resolve(self) -> "QuantNoiseSpec":
        """Return a copy with both sigma and target_ep populated."""
        if self.resolved:
            return self
        spec = replace(self)
        if spec.sigma is None:
            spec.sigma = 0.0 if spec.target_ep == 0.0 else sigma_from_ep(spec.bits, spec.target_ep)
        else:
            spec.target_ep = 0.0 if spec.sigma == 0.0 else error_probability(spec.bits, spec.sigma)
        return spec


def reduce_precision(x: np.ndarray, bits: int) -> np.ndarray:
    """Round-to-nearest onto the grid of multiples of 2^-bits.

    Componentwise (1/2^b) * sign(x) * ceil(|2^b * x| - 0.5).  Exact
    half-steps round toward zero (ceil of an exact integer).  The map is
    idempotent and odd.
    """
    if bits < MIN_BITS:
        raise ConfigError(f"bits must be >= {MIN_BITS}, got {bits}")
    x = np.asarray(x, dtype=np.float64)
    scale = float(2 ** bits)
    return np.sign(x) * np.ceil(np.abs(x) * scale - 0.5) / scale


def clamp(x: np.ndarray, lo: float = -1.0, hi: float = 1.0) -> np.ndarray:
    """Componentwise min(max(x, lo), hi)."""
    if lo >= hi:
        raise ConfigError(f"clamp lower bound must be < upper bound, got [{lo}, {hi}]")
    return np.clip(np.asarray(x, dtype=np.float64), lo, hi)


def gaussian_noise(x: np.ndarray, sigma: float, rng) -> np.ndarray:
    """Add i.i.d. N(0, sigma^2) noise; sigma=0 returns the input unchanged."""
    if sigma < 0:
        raise ConfigError(f"sigma must be >= 0, got {sigma}")
    x = np.asarray(x, dtype=np.float64)
    if sigma == 0.0:
        return x.copy()
    gen = _as_generator(rng)
    return x + gen.normal(0.0, sigma, size=x.shape)


def error_probability(bits: int, sigma: float) -> float:
    """Probability that a digitized level is misread after noise.

    1 - erf(1 / (2*sqrt(2) * sigma * (2^bits - 1))): monotone increasing
    in both sigma and bits.
    """
    if bits < MIN_BITS:
        raise ConfigError(f"bits must be >= {MIN_BITS}, got {bits}")
    if sigma <= 0:
        raise ConfigError(f"sigma must be > 0 (formula singular at 0), got {sigma}")
    levels = float(2 ** bits - 1)
    return float(1.0 - erf(1.0 / (2.0 * math.sqrt(2.0) * sigma * levels)))


def sigma_from_ep(bits: int, ep: float) -> float:
    """Invert error_probability: sigma such that EP(bits, sigma) == ep.

    Bisection on a bracketing interval; EP is monotone increasing in
    sigma, from 0 at sigma->0+ to 1 at sigma->inf.
    """
    if not (0.0 < ep < 1.0):
        raise ConfigError(f"ep must be in (0, 1), got {ep}")
    lo = 0.0
    hi = 1.0
    while error_probability(bits, hi) < ep:
        hi *= 2.0
        if hi > 1e12:  # pragma: no cover - erf saturates long before this
            raise ArithmeticError("failed to bracket sigma")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if error_probability(bits, mid) < ep:
            lo = mid
        else:
            hi = mid
    return hi


def pipeline(x: np.ndarray, spec: QuantNoiseSpec, rng) -> np.ndarray:
    """Apply the spec's stages left to right (default clamp -> RP -> noise)."""
    spec = spec.resolve()
    gen = None
    out = np.asarray(x, dtype=np.float64)
    for stage in spec.stage_order:
        if stage == "clamp":
            out = clamp(out, spec.clamp_lo, spec.clamp_hi)
        elif stage == "reduce-precision":
            out = reduce_precision(out, spec.bits)
        elif stage == "noise":
            if spec.sigma > 0.0 and gen is None:
                gen = _as_generator(rng)
            out = gaussian_noise(out, spec.sigma, gen) if spec.sigma > 0.0 else out
    return out


def empirical_error_probability(bits: int, sigma: float, trials: int, rng) -> float:
    """Monte Carlo estimate of the level-misread probability.

    Draws interior levels of the digitizer implied by the EP formula
    (uniform levels spaced 1/(2^bits - 1) apart), adds Gaussian noise,
    re-digitizes, and counts level changes.  Boundary levels are excluded:
    they saturate one-sidedly and would bias the estimate relative to the
    two-sided interior-cell probability.
    """
    if trials < 1:
        raise ConfigError(f"trials must be >= 1, got {trials}")
    gen = _as_generator(rng)
    n_levels = 2 ** bits
    delta = 1.0 / (n_levels - 1)
    levels = gen.integers(1, n_levels - 1, size=trials)  # interior levels only
    noisy = levels * delta + gen.normal(0.0, sigma, size=trials)
    requant = np.clip(np.round(noisy / delta), 0, n_levels - 1).astype(np.int64)
    return float(np.mean(requant != levels))


def effective_bit_precision(act, bits: int, window: float) -> float:
    """Resolution of an activation's derivative under input/output quantization.

    Evaluates the derivative on every 2^-bits grid point in
    [-window, +window], rounds the outputs onto the same grid, and returns
    log2 of the number of distinct quantized outputs.  A constant
    derivative yields log2(1) = 0; steeper derivative transitions (larger
    scaling factors) skip grid levels and lower the count.
    """
    from .activations import act_derivative

    if window <= 0:
        raise ConfigError(f"window must be > 0, got {window}")
    scale = 2 ** bits
    k_max = int(math.floor(window * scale))
    grid = np.arange(-k_max, k_max + 1, dtype=np.float64) / scale
    deriv = act_derivative(act, grid)
    quantized = reduce_precision(deriv, bits)
    return float(np.log2(len(np.unique(quantized))))
