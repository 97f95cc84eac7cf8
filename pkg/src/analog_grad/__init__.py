"""Gradient propagation under quantized analog noise.

Library + CLI for studying how activation-function smoothness affects
gradient quality and trainability when signals, weights, and sensor data
pass through clamped, reduced-precision, noisy analog channels.
"""

from .activations import (ActivationSpec, GluParams, act_derivative, act_eval,
                          glu_eval, gradient_step_discontinuity, gsd)
from .autodiff import (Graph, NoiseSource, backward, finite_diff_check, forward)
from .errors import AnalogGradError, ConfigError, GraphError, ShapeError
from .erroranalysis import (AccumRecord, ErrorSurface, accumulated_error,
                            gradient_error_surface, interpolation_error_sweep,
                            noisy_product)
from .quant import (QuantNoiseSpec, RngStream, clamp, effective_bit_precision,
                    empirical_error_probability, error_probability,
                    gaussian_noise, pipeline, reduce_precision, sigma_from_ep)

__version__ = "0.1.0"
