"""Monte Carlo study of how analog corruption distorts activation gradients.

`noisy_product` models a single input*weight product where both operands
are quantized and the analog channel injects Gaussian noise.
`gradient_error_surface` maps the mean absolute derivative error over an
(input, weight) grid; `accumulated_error` measures the mini-batch mean of
a derivative under input noise, whose limit exposes the bias of
discontinuous derivatives near zero.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .activations import ActivationSpec, act_derivative
from .errors import ConfigError
from .ioutil import fmt_float, read_csv_rows, write_csv
from .quant import RngStream, _as_generator, sigma_from_ep

NOISE_MODES = ("combined", "direct")


@dataclass
class ErrorSurface:
    """Mean absolute gradient error over an (input, weight) grid."""

    xi_grid: np.ndarray
    xw_grid: np.ndarray
    values: np.ndarray
    meta: dict

    def __post_init__(self):
        self.xi_grid = np.asarray(self.xi_grid, dtype=np.float64)
        self.xw_grid = np.asarray(self.xw_grid, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (len(self.xi_grid), len(self.xw_grid)):
            raise ConfigError(
                f"surface values {self.values.shape} do not match grids "
                f"({len(self.xi_grid)}, {len(self.xw_grid)})")
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0):
            raise ArithmeticError("surface values must be finite and >= 0")

    def mean(self) -> float:
        return float(self.values.mean())


@dataclass
class AccumRecord:
    """Mini-batch mean of a derivative under Gaussian input noise."""

    x: float
    n: int
    sigma: float
    mean_error: float
    reference: float


def noisy_product(x_i: float, x_w: float, bits: int, sigma: float, rng,
                  size: int | None = None, mode: str = "combined"):
    """Product of two quantized operands corrupted by channel noise.

    "combined" draws one Gaussian and injects it in the variance-combined
    closed form (noise scaled by the root-sum-square of the quantized
    operand magnitudes, plus a squared-noise term).  "direct" perturbs
    each quantized operand with its own Gaussian and multiplies; it exists
    as a cross-check that first and second moments of both generators
    agree.  With sigma=0 both reduce to the product of the quantized
    operands.  Returns a scalar, or an array of `size` draws.
    """
    if bits < 1:
        raise ConfigError(f"bits must be >= 1, got {bits}")
    if sigma < 0:
        raise ConfigError(f"sigma must be >= 0, got {sigma}")
    if mode not in NOISE_MODES:
        raise ConfigError(f"mode must be one of {NOISE_MODES}, got {mode!r}")
    p = float(2 ** bits)
    mag_i = math.ceil(abs(x_i) * p - 0.5)
    mag_w = math.ceil(abs(x_w) * p - 0.5)
    shape = () if size is None else (size,)
    if sigma == 0.0:
        eps = np.zeros(shape)
        eps2 = np.zeros(shape)
    else:
        gen = _as_generator(rng)
        eps = gen.normal(0.0, sigma, size=shape)
        eps2 = gen.normal(0.0, sigma, size=shape) if mode == "direct" else None
    if mode == "combined":
        base = math.copysign(mag_i * mag_w, x_i * x_w) if x_i * x_w != 0 else 0.0
        out = base / p**2 + (eps / p) * math.hypot(mag_i, mag_w) + eps**2
    else:
        rp_i = math.copysign(mag_i, x_i) / p if x_i != 0 else 0.0
        rp_w = math.copysign(mag_w, x_w) / p if x_w != 0 else 0.0
        out = (rp_i + eps) * (rp_w + eps2)
    return float(out) if size is None else out


def gradient_error_surface(spec: ActivationSpec, bits: int, ep: float,
                           grid: np.ndarray, trials: int, rng: RngStream,
                           mode: str = "combined") -> ErrorSurface:
    """Mean |f'(corrupted product) - f'(true product)| per grid cell.

    The noise level is derived from the error probability at the given
    bit width.  Cell (j, k) draws from the stream rng.child(j*len+k), so
    results are reproducible per seed and independent of evaluation
    order; two surfaces built from the same stream see identical noise.
    """
    if trials < 1:
        raise ConfigError(f"trials must be >= 1, got {trials}")
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 1 or np.any(np.abs(grid) > 1.0):
        raise ConfigError("grid must be a 1-d vector within [-1, 1]")
    sigma = sigma_from_ep(bits, ep)
    values = np.empty((len(grid), len(grid)))
    for j, x_i in enumerate(grid):
        for k, x_w in enumerate(grid):
            cell_rng = rng.child(j * len(grid) + k)
            draws = noisy_product(x_i, x_w, bits, sigma, cell_rng,
                                  size=trials, mode=mode)
            true_deriv = act_derivative(spec, np.float64(x_i * x_w))
            values[j, k] = np.mean(np.abs(act_derivative(spec, draws) - true_deriv))
    meta = {
        "activation": dataclasses.asdict(spec),
        "bits": bits,
        "ep": ep,
        "sigma": sigma,
        "trials": trials,
        "seed": rng.seed,
        "stream_id": rng.stream_id,
        "noise_mode": mode,
        "statistic": "mean-absolute-deviation",
    }
    return ErrorSurface(grid, grid.copy(), values, meta)


def accumulated_error(spec: ActivationSpec, x: float, n: int, sigma: float,
                      rng: RngStream) -> AccumRecord:
    """Empirical mean of f'(x + eps) over n Gaussian draws.

    The reference is the closed-form derivative at x itself, which at a
    kink takes the one-sided branch selected by the sign of x (evaluate
    at +-1e-9 to probe the 0+ / 0- limits).
    """
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    if sigma <= 0:
        raise ConfigError(f"sigma must be > 0, got {sigma}")
    gen = _as_generator(rng)
    draws = x + gen.normal(0.0, sigma, size=n)
    mean_error = float(np.mean(act_derivative(spec, draws)))
    reference = float(act_derivative(spec, np.float64(x)))
    return AccumRecord(x=float(x), n=int(n), sigma=float(sigma),
                       mean_error=mean_error, reference=reference)


def interpolation_error_sweep(bits: int, ep: float, i_values, grid,
                              trials: int, rng: RngStream,
                              kind: str = "interp-relu-gelu",
                              mode: str = "combined") -> list[ErrorSurface]:
    """One gradient-error surface per interpolation factor, shared noise.

    Every surface reuses the same base stream, so the i=0 surface is
    bitwise identical to a plain rectified surface (and i=1 to the smooth
    target's) computed from that stream.
    """
    surfaces = []
    for i in i_values:
        spec = ActivationSpec(kind, i=float(i))
        surfaces.append(gradient_error_surface(spec, bits, ep, grid, trials, rng, mode))
    return surfaces


# ---------------------------------------------------------------------------
# serialization: CSV for the numbers, JSON sidecar for provenance


def _sidecar_path(csv_path: Path) -> Path:
    return csv_path.with_suffix(".meta.json")


def write_surface(surface: ErrorSurface, csv_path) -> Path:
    """Write (x_i, x_w, value) triples plus a .meta.json sidecar."""
    csv_path = Path(csv_path)
    rows = [(fmt_float(x_i), fmt_float(x_w), fmt_float(surface.values[j, k]))
            for j, x_i in enumerate(surface.xi_grid)
            for k, x_w in enumerate(surface.xw_grid)]
    write_csv(csv_path, ("x_i", "x_w", "value"), rows)
    _sidecar_path(csv_path).write_text(json.dumps(surface.meta, indent=2, sort_keys=True))
    return csv_path


def read_surface(csv_path) -> ErrorSurface:
    csv_path = Path(csv_path)
    rows = read_csv_rows(csv_path)
    xi = sorted({float(r["x_i"]) for r in rows})
    xw = sorted({float(r["x_w"]) for r in rows})
    values = np.full((len(xi), len(xw)), np.nan)
    xi_index = {v: j for j, v in enumerate(xi)}
    xw_index = {v: k for k, v in enumerate(xw)}
    for r in rows:
        values[xi_index[float(r["x_i"])], xw_index[float(r["x_w"])]] = float(r["value"])
    if np.any(np.isnan(values)):
        raise ConfigError(f"{csv_path}: surface rows do not cover the full grid")
    meta = json.loads(_sidecar_path(csv_path).read_text())
    return ErrorSurface(np.array(xi), np.array(xw), values, meta)


def write_accum_records(records: list[AccumRecord], csv_path) -> Path:
    csv_path = Path(csv_path)
    rows = [(fmt_float(r.x), str(r.n), fmt_float(r.sigma),
             fmt_float(r.mean_error), fmt_float(r.reference)) for r in records]
    write_csv(csv_path, ("x", "n", "sigma", "mean_error", "reference"), rows)
    return csv_path
