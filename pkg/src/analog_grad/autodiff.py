"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

A graph is a DAG of Node objects built by the constructor helpers below
(leaf, matmul, conv2d, ...).  `forward` populates every node's value from
named leaf bindings; `backward` accumulates d(loss)/d(leaf) for every
gradient-carrying leaf.  Corruption nodes (quant_pipeline) are
straight-through: their backward pass is the identity inside the clamp
bounds and zero outside, which is the only convention under which training
through round-to-nearest layers is meaningful.

All arithmetic is 64-bit: the explicit quantization nodes own the entire
rounding story.
"""

from __future__ import annotations

import itertools

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .activations import ActivationSpec, act_derivative, act_eval
from .errors import GraphError, ShapeError
from .quant import QuantNoiseSpec, RngStream
from . import quant

_node_counter = itertools.count()


class Node:
    """One operation (or leaf) in the computation graph."""

    __slots__ = ("kind", "inputs", "params", "name", "label", "value", "grad", "cache")

    def __init__(self, kind, inputs=(), params=None, name=None, label=None):
        self.kind = kind
        self.inputs = list(inputs)
        self.params = params or {}
        self.name = name
        self.label = label or f"{kind}#{next(_node_counter)}"
        self.value = None
        self.grad = None
        self.cache = None

    def __repr__(self):
        shape = None if self.value is None else self.value.shape
        return f"Node({self.label}, shape={shape})"


def leaf(name: str, requires_grad: bool = True) -> Node:
    return Node("leaf", params={"requires_grad": requires_grad}, name=name, label=name)


def identity(x: Node) -> Node:
    return Node("identity", [x])


def matmul(a: Node, b: Node) -> Node:
    return Node("matmul", [a, b])


def add(a: Node, b: Node) -> Node:
    return Node("add", [a, b])


def conv2d(x: Node, w: Node, padding: int = 0) -> Node:
    return Node("conv2d", [x, w], params={"padding": int(padding)})


def flatten(x: Node) -> Node:
    return Node("flatten", [x])


def maxpool2x2(x: Node) -> Node:
    return Node("maxpool2x2", [x])


def activation(x: Node, spec: ActivationSpec) -> Node:
    return Node("activation", [x], params={"spec": spec})


def quant_pipeline(x: Node, spec: QuantNoiseSpec, site: int) -> Node:
    """Straight-through analog corruption node; `site` keys its RNG stream."""
    return Node("quant_pipeline", [x], params={"spec": spec.resolve(), "site": int(site)})


def softmax_cross_entropy(logits: Node, labels: Node) -> Node:
    """Mean cross-entropy between softmax(logits) and one-hot labels."""
    return Node("softmax_xent", [logits, labels])


class NoiseSource:
    """Per-site random generators for the corruption nodes of one run.

    Generators persist across forward calls, so each call draws fresh
    noise; rebuilding a NoiseSource from the same stream replays the
    identical sequence.
    """

    def __init__(self, stream: RngStream):
        self._stream = stream
        self._gens: dict[int, np.random.Generator] = {}

    def generator(self, site: int) -> np.random.Generator:
        gen = self._gens.get(site)
        if gen is None:
            gen = self._stream.child(site).generator()
            self._gens[site] = gen
        return gen


class Graph:
    """A set of named output nodes plus their topologically-sorted closure."""

    def __init__(self, outputs: dict[str, Node]):
        self.outputs = dict(outputs)
        self.nodes = _toposort(self.outputs.values())
        self.leaves = {n.name: n for n in self.nodes if n.kind == "leaf"}

    def output(self, name: str) -> Node:
        return self.outputs[name]


def _toposort(roots) -> list[Node]:
    order, seen = [], set()
    stack = [(r, False) for r in roots]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for inp in node.inputs:
            stack.append((inp, False))
    return order


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcasted gradient back to the operand's shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# per-op forward / backward


def _fwd_matmul(node, a, b):
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"{node.label}: cannot matmul {a.shape} @ {b.shape}")
    return a @ b


def _bwd_matmul(node, g):
    a, b = node.inputs[0].value, node.inputs[1].value
    return [g @ b.T, a.T @ g]


def _fwd_add(node, a, b):
    try:
        return a + b
    except ValueError as exc:
        raise ShapeError(f"{node.label}: cannot add {a.shape} + {b.shape}") from exc


def _bwd_add(node, g):
    return [_unbroadcast(g, node.inputs[0].value.shape),
            _unbroadcast(g, node.inputs[1].value.shape)]


def _fwd_conv2d(node, x, w):
    pad = node.params["padding"]
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"{node.label}: conv2d needs 4-d input/weights, got {x.shape}, {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(
            f"{node.label}: input channels {x.shape[1]} != weight channels {w.shape[1]}")
    kh, kw = w.shape[2], w.shape[3]
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    if xp.shape[2] < kh or xp.shape[3] < kw:
        raise ShapeError(f"{node.label}: kernel {kh}x{kw} larger than padded input {xp.shape}")
    n, c = x.shape[0], x.shape[1]
    f = w.shape[0]
    ho, wo = xp.shape[2] - kh + 1, xp.shape[3] - kw + 1
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))  # (N, C, H', W', kh, kw)
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)
                                ).reshape(n * ho * wo, c * kh * kw)
    y = cols @ w.reshape(f, -1).T  # (N*H'*W', F)
    node.cache = (cols, xp.shape)
    return np.ascontiguousarray(y.reshape(n, ho, wo, f).transpose(0, 3, 1, 2))


def _bwd_conv2d(node, g):
    x, w = node.inputs[0].value, node.inputs[1].value
    pad = node.params["padding"]
    cols, xp_shape = node.cache
    f, c, kh, kw = w.shape
    n, _, ho, wo = g.shape
    gmat = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(n * ho * wo, f)
    dw = (gmat.T @ cols).reshape(f, c, kh, kw)
    dcols = (gmat @ w.reshape(f, -1)).reshape(n, ho, wo, c, kh, kw)
    dcols = np.ascontiguousarray(dcols.transpose(0, 3, 4, 5, 1, 2))  # (N, C, kh, kw, H', W')
    dxp = np.zeros(xp_shape)
    for a in range(kh):
        for b in range(kw):
            dxp[:, :, a:a + ho, b:b + wo] += dcols[:, :, a, b]
    dx = dxp[:, :, pad:pad + x.shape[2], pad:pad + x.shape[3]] if pad else dxp
    return [dx, dw]


def _fwd_flatten(node, x):
    return x.reshape(x.shape[0], -1)


def _bwd_flatten(node, g):
    return [g.reshape(node.inputs[0].value.shape)]


def _fwd_maxpool(node, x):
    if x.ndim != 4 or x.shape[2] % 2 or x.shape[3] % 2:
        raise ShapeError(f"{node.label}: 2x2 max-pool needs even spatial dims, got {x.shape}")
    n, c, h, w = x.shape
    ho, wo = h // 2, w // 2
    windows = (x.reshape(n, c, ho, 2, wo, 2)
                .transpose(0, 1, 2, 4, 3, 5)
                .reshape(n, c, ho, wo, 4))
    idx = windows.argmax(axis=-1)
    node.cache = idx
    return np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]


def _bwd_maxpool(node, g):
    x = node.inputs[0].value
    n, c, h, w = x.shape
    ho, wo = h // 2, w // 2
    scattered = np.zeros((n, c, ho, wo, 4))
    np.put_along_axis(scattered, node.cache[..., None], g[..., None], axis=-1)
    dx = (scattered.reshape(n, c, ho, wo, 2, 2)
                   .transpose(0, 1, 2, 4, 3, 5)
                   .reshape(n, c, h, w))
    return [dx]


def _fwd_activation(node, x):
    return act_eval(node.params["spec"], x)


def _bwd_activation(node, g):
    return [g * act_derivative(node.params["spec"], node.inputs[0].value)]


def _silenced(spec: QuantNoiseSpec) -> QuantNoiseSpec:
    return QuantNoiseSpec(bits=spec.bits, sigma=0.0, clamp_lo=spec.clamp_lo,
                          clamp_hi=spec.clamp_hi, stage_order=spec.stage_order).resolve()


def _fwd_quant(node, x, noise=None, sample_noise=True):
    spec = node.params["spec"]
    gen = None
    if spec.sigma > 0.0 and "noise" in spec.stage_order:
        if not sample_noise:
            spec = node.params.setdefault("_silenced", _silenced(spec))
        elif noise is None:
            raise GraphError(f"{node.label}: sigma={spec.sigma} > 0 requires a NoiseSource")
        else:
            gen = noise.generator(node.params["site"])
    return quant.pipeline(x, spec, gen)


def _bwd_quant(node, g):
    spec = node.params["spec"]
    if "clamp" not in spec.stage_order:
        return [g.copy()]
    x = node.inputs[0].value
    inside = (x >= spec.clamp_lo) & (x <= spec.clamp_hi)
    return [g * inside]


def _fwd_softmax_xent(node, logits, labels):
    if logits.ndim != 2 or logits.shape != labels.shape:
        raise ShapeError(
            f"{node.label}: logits {logits.shape} and one-hot labels {labels.shape} must match")
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    node.cache = np.exp(logp)
    return np.asarray(-(labels * logp).sum() / logits.shape[0])


def _bwd_softmax_xent(node, g):
    labels = node.inputs[1].value
    n = labels.shape[0]
    return [(node.cache - labels) * (g / n), None]


_FORWARD = {
    "identity": lambda node, x: x.copy(),
    "matmul": _fwd_matmul,
    "add": _fwd_add,
    "conv2d": _fwd_conv2d,
    "flatten": _fwd_flatten,
    "maxpool2x2": _fwd_maxpool,
    "activation": _fwd_activation,
    "softmax_xent": _fwd_softmax_xent,
}

_BACKWARD = {
    "identity": lambda node, g: [g.copy()],
    "matmul": _bwd_matmul,
    "add": _bwd_add,
    "conv2d": _bwd_conv2d,
    "flatten": _bwd_flatten,
    "maxpool2x2": _bwd_maxpool,
    "activation": _bwd_activation,
    "quant_pipeline": _bwd_quant,
    "softmax_xent": _bwd_softmax_xent,
}


def forward(graph: Graph, bindings: dict[str, np.ndarray],
            noise: NoiseSource | None = None,
            sample_noise: bool = True) -> dict[str, np.ndarray]:
    """Evaluate every node from leaf bindings; returns outputs by name.

    Deterministic given the bindings and the NoiseSource state: corruption
    nodes draw from their own per-site streams, so graph topology changes
    elsewhere never shift another site's samples.  sample_noise=False
    skips only the Gaussian stage of corruption nodes (clamping and
    rounding are intrinsic to the hardware and stay on).
    """
    for name, node in graph.leaves.items():
        if name not in bindings:
            raise GraphError(f"unbound leaf {name!r}")
        node.value = np.asarray(bindings[name], dtype=np.float64)
    for node in graph.nodes:
        if node.kind == "leaf":
            continue
        args = [inp.value for inp in node.inputs]
        if node.kind == "quant_pipeline":
            node.value = _fwd_quant(node, *args, noise=noise, sample_noise=sample_noise)
        else:
            node.value = _FORWARD[node.kind](node, *args)
    return {name: node.value for name, node in graph.outputs.items()}


def backward(graph: Graph, loss: str = "loss", seed: float = 1.0) -> dict[str, np.ndarray]:
    """Accumulate d(loss)/d(leaf) for every gradient-carrying leaf.

    `seed` scales the upstream gradient of the loss node (default 1);
    backward is linear in it.
    """
    if loss not in graph.outputs:
        raise GraphError(f"unknown output {loss!r}")
    loss_node = graph.outputs[loss]
    if loss_node.value is None:
        raise GraphError("backward called before forward")
    if loss_node.value.ndim != 0 and loss_node.value.size != 1:
        raise GraphError(f"loss must be scalar, got shape {loss_node.value.shape}")
    for node in graph.nodes:
        node.grad = np.zeros_like(node.value)
    loss_node.grad = loss_node.grad + seed
    for node in reversed(graph.nodes):
        if node.kind == "leaf":
            continue
        input_grads = _BACKWARD[node.kind](node, node.grad)
        for inp, grad in zip(node.inputs, input_grads):
            if grad is not None:
                inp.grad = inp.grad + grad
    return {name: node.grad for name, node in graph.leaves.items()
            if node.params.get("requires_grad", True)}


def finite_diff_check(graph: Graph, bindings: dict[str, np.ndarray], leaf_name: str,
                      eps: float = 1e-5, output: str | None = None) -> float:
    """Max relative deviation between analytic and central-difference grads.

    Relative error per component is |analytic - fd| / max(|analytic|,
    1e-8); the maximum over components is returned.  Only meaningful for
    graphs that are differentiable at the evaluation point (no noise, no
    rounding, no kink within eps).
    """
    if eps <= 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    if output is None:
        output = "loss" if "loss" in graph.outputs else next(iter(graph.outputs))
    forward(graph, bindings)
    analytic = backward(graph, loss=output)[leaf_name].copy()

    point = np.asarray(bindings[leaf_name], dtype=np.float64)
    fd = np.zeros_like(point)
    perturbed = dict(bindings)
    flat = point.ravel()
    fd_flat = fd.ravel()
    for idx in range(flat.size):
        for sign in (+1.0, -1.0):
            shifted = point.copy()
            shifted.ravel()[idx] = flat[idx] + sign * eps
            perturbed[leaf_name] = shifted
            value = forward(graph, perturbed)[output].item()
            fd_flat[idx] += sign * value
        fd_flat[idx] /= 2.0 * eps
    rel = np.abs(analytic - fd) / np.maximum(np.abs(analytic), 1e-8)
    result = float(rel.max())
    if not np.isfinite(result):
        raise ArithmeticError(f"non-finite finite-difference check for {leaf_name!r}")
    return result
