"""Activation zoo with closed-form derivatives and interpolation machinery.

All rectifier-family activations share the convention that kink-point
derivatives take the x <= 0 branch (relu'(0) = 0, leaky'(0) = alpha).
Smooth activations use the exact Gaussian error function, never the tanh
approximation: the interpolation and step-discontinuity identities below
are asserted to 1e-6 and the tanh form is off by more than that.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .errors import ConfigError, ShapeError

ELEMENTWISE_KINDS = (
    "identity",
    "relu",
    "leaky-relu",
    "gelu",
    "silu",
    "scaled-gelu",
    "interp-relu-gelu",
    "interp-relu-silu",
)
GLU_KINDS = ("reglu", "geglu", "interp-reglu-geglu")
ACTIVATION_KINDS = ELEMENTWISE_KINDS + GLU_KINDS

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class ActivationSpec:
    """Parameterized activation description.

    s:     scaling factor inside the erf argument (scaled-gelu only).
    i:     interpolation factor in [0, 1] between the rectified base and
           the smooth target (interp-* kinds only); 0 is the base, 1 the
           target.
    alpha: negative slope in [0, 1) (leaky-relu only).
    """

    kind: str
    s: float = 1.0
    i: float = 0.0
    alpha: float = 0.0

    def __post_init__(self):
        if self.kind not in ACTIVATION_KINDS:
            raise ConfigError(f"unknown activation kind {self.kind!r}")
        if not (0.0 <= self.i <= 1.0):
            raise ConfigError(f"interpolation factor must be in [0, 1], got {self.i}")
        if self.s <= 0.0:
            raise ConfigError(f"scaling factor must be > 0, got {self.s}")
        if not (0.0 <= self.alpha < 1.0):
            raise ConfigError(f"negative slope must be in [0, 1), got {self.alpha}")

    @property
    def is_glu(self) -> bool:
        return self.kind in GLU_KINDS


@dataclass
class GluParams:
    """Weights of a gated linear unit: gate branch (W, b), linear branch (V, c)."""

    W: np.ndarray
    V: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.V = np.asarray(self.V, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        self.c = np.asarray(self.c, dtype=np.float64)
        if self.W.shape != self.V.shape:
            raise ShapeError(f"W and V must have identical shapes, got {self.W.shape} vs {self.V.shape}")
        if self.b.shape != (self.W.shape[1],):
            raise ShapeError(f"b must match W's output dimension {self.W.shape[1]}, got {self.b.shape}")
        if self.c.shape != (self.V.shape[1],):
            raise ShapeError(f"c must match V's output dimension {self.V.shape[1]}, got {self.c.shape}")


def _relu(x):
    return np.maximum(0.0, x)


def _relu_prime(x):
    # x <= 0 branch at the kink
    return (x > 0).astype(np.float64)


def _gelu(x, s=1.0):
    return x * 0.5 * (1.0 + erf(s * x * _INV_SQRT2))


def _gelu_prime(x, s=1.0):
    u = s * x
    return 0.5 * (1.0 + erf(u * _INV_SQRT2)) + u * _INV_SQRT2PI * np.exp(-0.5 * u * u)


def _silu(x):
    return x / (1.0 + np.exp(-x))


def _silu_prime(x):
    e = np.exp(-x)
    return (1.0 + e + x * e) / (1.0 + e) ** 2


def act_eval(spec: ActivationSpec, x: np.ndarray) -> np.ndarray:
    """Componentwise activation value; GLU kinds must go through glu_eval."""
    if spec.is_glu:
        raise ConfigError(f"{spec.kind} takes weight parameters; use glu_eval")
    x = np.asarray(x, dtype=np.float64)
    kind = spec.kind
    if kind == "identity":
        return x.copy()
    if kind == "relu":
        return _relu(x)
    if kind == "leaky-relu":
        return np.where(x > 0, x, spec.alpha * x)
    if kind == "gelu":
        return _gelu(x)
    if kind == "silu":
        return _silu(x)
    if kind == "scaled-gelu":
        return _gelu(x, spec.s)
    if kind == "interp-relu-gelu":
        return _relu(x) + spec.i * (_gelu(x) - _relu(x))
    if kind == "interp-relu-silu":
        return _relu(x) + spec.i * (_silu(x) - _relu(x))
    raise ConfigError(f"unknown activation kind {kind!r}")  # pragma: no cover


def act_derivative(spec: ActivationSpec, x: np.ndarray) -> np.ndarray:
    """Componentwise closed-form derivative, x <= 0 branch at kinks."""
    if spec.is_glu:
        raise ConfigError(f"{spec.kind} takes weight parameters; use glu_eval")
    x = np.asarray(x, dtype=np.float64)
    kind = spec.kind
    if kind == "identity":
        return np.ones_like(x)
    if kind == "relu":
        return _relu_prime(x)
    if kind == "leaky-relu":
        return np.where(x > 0, 1.0, spec.alpha)
    if kind == "gelu":
        return _gelu_prime(x)
    if kind == "silu":
        return _silu_prime(x)
    if kind == "scaled-gelu":
        return _gelu_prime(x, spec.s)
    if kind == "interp-relu-gelu":
        return _relu_prime(x) + spec.i * (_gelu_prime(x) - _relu_prime(x))
    if kind == "interp-relu-silu":
        return _relu_prime(x) + spec.i * (_silu_prime(x) - _relu_prime(x))
    raise ConfigError(f"unknown activation kind {kind!r}")  # pragma: no cover


def glu_eval(spec: ActivationSpec, x: np.ndarray, params: GluParams) -> np.ndarray:
    """Gated linear unit: gate(x W + b) * (x V + c), elementwise product.

    The interpolated kind blends the gate nonlinearity between relu and
    gelu; since both variants share the linear branch, blending the gate
    equals blending the full outputs.
    """
    if not spec.is_glu:
        raise ConfigError(f"{spec.kind} is elementwise; use act_eval")
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.W.shape[0]:
        raise ShapeError(
            f"input feature dim {x.shape[-1]} does not match gate weights {params.W.shape}")
    gate_pre = x @ params.W + params.b
    linear = x @ params.V + params.c
    if spec.kind == "reglu":
        gate = _relu(gate_pre)
    elif spec.kind == "geglu":
        gate = _gelu(gate_pre)
    else:
        gate = _relu(gate_pre) + spec.i * (_gelu(gate_pre) - _relu(gate_pre))
    return gate * linear


def gradient_step_discontinuity(spec: ActivationSpec, x0: float, eps: float = 1e-3) -> float:
    """Absolute jump between the derivative's one-sided limits at x0.

    Approximates |f'(x0-) - f'(x0+)| by evaluating the closed-form
    derivative at x0 -+ h for a shrinking ladder of offsets h = eps/2^k,
    stopping once successive estimates agree to 1e-9.  Working from
    one-sided limits (rather than per-kind formulas) keeps the metric
    valid for interpolated and rescaled variants automatically.
    """
    if eps <= 0:
        raise ConfigError(f"eps must be > 0, got {eps}")
    h = float(eps)
    prev = None
    estimate = None
    for _ in range(60):
        left = float(act_derivative(spec, np.float64(x0 - h)))
        right = float(act_derivative(spec, np.float64(x0 + h)))
        if not (math.isfinite(left) and math.isfinite(right)):
            raise ArithmeticError(f"non-finite one-sided derivative at {x0} +- {h}")
        estimate = abs(left - right)
        if prev is not None and abs(estimate - prev) < 1e-9:
            return estimate
        prev = estimate
        h *= 0.5
    return estimate


# short alias used by the analysis CLI
gsd = gradient_step_discontinuity
