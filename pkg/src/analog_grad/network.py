"""Layer specs, analog wrapping, and miniature model builders.

A model is an ordered list of LayerSpec entries.  Any conv/linear layer
output can carry an analog corruption pipeline, as can the raw input and
every weight/bias read; with all pipelines absent the graph is a plain
digital network.  Master weights always live in full precision: the
weight pipeline sits in the forward graph, so quantization and noise are
applied on every read and the straight-through backward keeps small
gradient updates effective.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .activations import ActivationSpec
from .errors import ConfigError, ShapeError
from .quant import QuantNoiseSpec, RngStream

LAYER_KINDS = ("linear", "conv2d", "maxpool", "flatten", "activation")


@dataclass
class LayerSpec:
    """One layer: kind-specific dims plus optional analog wrapping.

    dims: linear (in, out); conv2d (in_ch, out_ch, ksize); others ().
    analog applies to this layer's output signal; weight_analog to the
    weight/bias reads of linear and conv2d layers.
    """

    kind: str
    dims: tuple = ()
    activation: ActivationSpec | None = None
    analog: QuantNoiseSpec | None = None
    weight_analog: QuantNoiseSpec | None = None

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ConfigError(f"unknown layer kind {self.kind!r}")
        self.dims = tuple(int(d) for d in self.dims)
        if self.kind == "linear" and len(self.dims) != 2:
            raise ConfigError(f"linear layer needs dims (in, out), got {self.dims}")
        if self.kind == "conv2d" and len(self.dims) != 3:
            raise ConfigError(f"conv2d layer needs dims (in_ch, out_ch, ksize), got {self.dims}")
        if self.kind == "activation" and self.activation is None:
            raise ConfigError("activation layer needs an ActivationSpec")
        if self.kind != "activation" and self.activation is not None:
            raise ConfigError(f"{self.kind} layer must not carry an ActivationSpec")


@dataclass
class ModelConfig:
    """Full model description: layer chain plus input-side analog wrap."""

    layers: list[LayerSpec]
    classes: int
    input_shape: tuple
    input_analog: QuantNoiseSpec | None = None
    init_gain: float = 1.4

    def __post_init__(self):
        self.input_shape = tuple(int(d) for d in self.input_shape)
        if self.classes < 2:
            raise ConfigError(f"classes must be >= 2, got {self.classes}")
        if len(self.input_shape) not in (1, 3):
            raise ConfigError(
                f"input_shape must be (features,) or (channels, h, w), got {self.input_shape}")

    def with_activation(self, spec: ActivationSpec) -> "ModelConfig":
        """Copy with every activation layer replaced by `spec`."""
        layers = [replace(l, activation=spec) if l.kind == "activation" else replace(l)
                  for l in self.layers]
        return dataclasses.replace(self, layers=layers)

    def with_interpolation(self, i: float) -> "ModelConfig":
        """Copy with the interpolation factor of every activation set to i."""
        layers = []
        for l in self.layers:
            if l.kind == "activation":
                layers.append(replace(l, activation=replace(l.activation, i=float(i))))
            else:
                layers.append(replace(l))
        return dataclasses.replace(self, layers=layers)


@dataclass
class BuiltModel:
    """A ready-to-train graph plus its master parameters."""

    graph: ad.Graph
    params: dict[str, np.ndarray]
    config: ModelConfig
    noise_sites: int
    input_name: str = "input"
    labels_name: str = "labels"


def _init_linear(rng: np.random.Generator, fan_in: int, shape: tuple, gain: float) -> np.ndarray:
    bound = gain * np.sqrt(3.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def build_model(config: ModelConfig, rng: RngStream) -> BuiltModel:
    """Assemble the autodiff graph and draw seeded initial parameters.

    Raises a ConfigError naming the offending layer on any dimension-chain
    mismatch.  The same (config, stream) pair always yields bit-identical
    initial weights.
    """
    gen = rng.generator()
    params: dict[str, np.ndarray] = {}
    site = 0

    x = ad.leaf(BuiltModel.input_name, requires_grad=False)
    labels = ad.leaf(BuiltModel.labels_name, requires_grad=False)
    net: ad.Node = x
    if config.input_analog is not None:
        net = ad.quant_pipeline(net, config.input_analog, site)
        site += 1

    shape = config.input_shape
    for idx, layer in enumerate(config.layers):
        where = f"layer {idx} ({layer.kind})"
        if layer.kind == "linear":
            d_in, d_out = layer.dims
            if len(shape) != 1 or shape[0] != d_in:
                raise ConfigError(f"{where}: expected flat input of {d_in}, chain has {shape}")
            w_leaf = ad.leaf(f"w{idx}")
            b_leaf = ad.leaf(f"b{idx}")
            params[f"w{idx}"] = _init_linear(gen, d_in, (d_in, d_out), config.init_gain)
            params[f"b{idx}"] = np.zeros(d_out)
            w_node, b_node = w_leaf, b_leaf
            if layer.weight_analog is not None:
                w_node = ad.quant_pipeline(w_node, layer.weight_analog, site); site += 1
                b_node = ad.quant_pipeline(b_node, layer.weight_analog, site); site += 1
            net = ad.add(ad.matmul(net, w_node), b_node)
            shape = (d_out,)
        elif layer.kind == "conv2d":
            c_in, c_out, k = layer.dims
            if len(shape) != 3 or shape[0] != c_in:
                raise ConfigError(f"{where}: expected input channels {c_in}, chain has {shape}")
            if k % 2 == 0:
                raise ConfigError(f"{where}: kernel size must be odd, got {k}")
            w_leaf = ad.leaf(f"w{idx}")
            b_leaf = ad.leaf(f"b{idx}")
            fan_in = c_in * k * k
            params[f"w{idx}"] = _init_linear(gen, fan_in, (c_out, c_in, k, k), config.init_gain)
            params[f"b{idx}"] = np.zeros((c_out, 1, 1))
            w_node, b_node = w_leaf, b_leaf
            if layer.weight_analog is not None:
                w_node = ad.quant_pipeline(w_node, layer.weight_analog, site); site += 1
                b_node = ad.quant_pipeline(b_node, layer.weight_analog, site); site += 1
            net = ad.add(ad.conv2d(net, w_node, padding=k // 2), b_node)
            shape = (c_out, shape[1], shape[2])
        elif layer.kind == "maxpool":
            if len(shape) != 3 or shape[1] % 2 or shape[2] % 2:
                raise ConfigError(f"{where}: needs even spatial dims, chain has {shape}")
            net = ad.maxpool2x2(net)
            shape = (shape[0], shape[1] // 2, shape[2] // 2)
        elif layer.kind == "flatten":
            if len(shape) != 3:
                raise ConfigError(f"{where}: needs (c, h, w) input, chain has {shape}")
            net = ad.flatten(net)
            shape = (shape[0] * shape[1] * shape[2],)
        elif layer.kind == "activation":
            net = ad.activation(net, layer.activation)
        if layer.analog is not None:
            net = ad.quant_pipeline(net, layer.analog, site)
            site += 1

    if shape != (config.classes,):
        raise ConfigError(
            f"final layer output {shape} does not match classes ({config.classes},)")
    loss = ad.softmax_cross_entropy(net, labels)
    graph = ad.Graph({"loss": loss, "logits": net})
    return BuiltModel(graph=graph, params=params, config=config, noise_sites=site)


# ---------------------------------------------------------------------------
# presets


def _analog(layer: LayerSpec, signal: QuantNoiseSpec | None,
            weights: QuantNoiseSpec | None) -> LayerSpec:
    return replace(layer, analog=signal, weight_analog=weights)


def convnet_mini(classes: int = 10, input_shape: tuple = (1, 16, 16),
                 activation: ActivationSpec = ActivationSpec("relu"),
                 signal_noise: QuantNoiseSpec | None = None,
                 weight_noise: QuantNoiseSpec | None = None,
                 input_noise: QuantNoiseSpec | None = None,
                 width: int = 8, init_gain: float = 1.4) -> ModelConfig:
    """Six conv + three linear layers, pooled down to a 2x2 spatial map.

    Analog pipelines (when given) sit on the raw input and on every
    conv/linear output, with weight pipelines on all weight/bias reads.
    """
    c, h, w = input_shape
    if h % 8 or w % 8 or h < 8 or w < 8:
        raise ConfigError(f"input spatial dims must be multiples of 8, got {input_shape}")
    chans = [width, width, 2 * width, 2 * width, 2 * width, 2 * width]
    layers: list[LayerSpec] = []
    prev = c
    for k, ch in enumerate(chans):
        layers.append(_analog(LayerSpec("conv2d", (prev, ch, 3)), signal_noise, weight_noise))
        layers.append(LayerSpec("activation", activation=activation))
        if k in (1, 3, 5):
            layers.append(LayerSpec("maxpool"))
        prev = ch
    flat = prev * (h // 8) * (w // 8)
    layers.append(LayerSpec("flatten"))
    hidden = [6 * width, 4 * width]
    prev = flat
    for hd in hidden:
        layers.append(_analog(LayerSpec("linear", (prev, hd)), signal_noise, weight_noise))
        layers.append(LayerSpec("activation", activation=activation))
        prev = hd
    layers.append(_analog(LayerSpec("linear", (prev, classes)), signal_noise, weight_noise))
    return ModelConfig(layers=layers, classes=classes, input_shape=input_shape,
                       input_analog=input_noise, init_gain=init_gain)


def mlp(linear_layers: int, in_features: int, classes: int,
        hidden: int = 32, activation: ActivationSpec = ActivationSpec("relu"),
        signal_noise: QuantNoiseSpec | None = None,
        weight_noise: QuantNoiseSpec | None = None,
        input_noise: QuantNoiseSpec | None = None,
        init_gain: float = 1.4) -> ModelConfig:
    """k linear layers with activations between them; k=1 is a bare classifier."""
    if linear_layers < 1:
        raise ConfigError(f"need at least one linear layer, got {linear_layers}")
    layers: list[LayerSpec] = []
    prev = in_features
    for k in range(linear_layers - 1):
        layers.append(_analog(LayerSpec("linear", (prev, hidden)), signal_noise, weight_noise))
        layers.append(LayerSpec("activation", activation=activation))
        prev = hidden
    layers.append(_analog(LayerSpec("linear", (prev, classes)), signal_noise, weight_noise))
    return ModelConfig(layers=layers, classes=classes, input_shape=(in_features,),
                       input_analog=input_noise, init_gain=init_gain)
