"""Mini-batch training and evaluation on analog-wrapped models.

Fresh corruption noise is drawn on every forward pass, during evaluation
too: the simulated hardware stays analog at inference time (pass
sample_noise=False to probe the noise-free behaviour).  Master weights are
updated in full precision; their quantization happens on read inside the
graph.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .datasets import Dataset, one_hot
from .errors import ConfigError
from .network import BuiltModel, ModelConfig, build_model
from .quant import RngStream

OPTIMIZERS = ("sgd", "adam")

# fixed sub-stream roles derived from one run seed
_STREAM_INIT = 11
_STREAM_NOISE = 12
_STREAM_SHUFFLE = 13
_STREAM_EVAL = 14


@dataclass
class TrainConfig:
    epochs: int
    batch_size: int
    learning_rate: float
    optimizer: str = "adam"
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")


@dataclass
class TrainingHistory:
    epochs: list[dict] = field(default_factory=list)
    status: str = "ok"
    wall_time_s: float = 0.0

    @property
    def final_top1(self) -> float:
        return self.epochs[-1]["test_top1"] if self.epochs else float("nan")


class _Adam:
    def __init__(self, params: dict[str, np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for key, g in grads.items():
            m = self.m[key]
            v = self.v[key]
            m += (1.0 - self.beta1) * (g - m)
            v += (1.0 - self.beta2) * (g * g - v)
            params[key] -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


class _Sgd:
    def __init__(self, params, lr):
        self.lr = lr

    def step(self, params, grads):
        for key, g in grads.items():
            params[key] -= self.lr * g


def _make_optimizer(name: str, params, lr):
    return _Adam(params, lr) if name == "adam" else _Sgd(params, lr)


def evaluate(model: BuiltModel, x: np.ndarray, y: np.ndarray, rng: RngStream,
             batch_size: int = 256, sample_noise: bool = True) -> float:
    """Top-1 accuracy on a split; deterministic per rng stream."""
    if len(x) == 0:
        raise ConfigError("cannot evaluate an empty split")
    noise = ad.NoiseSource(rng)
    labels = one_hot(y, model.config.classes)
    hits = 0
    for start in range(0, len(x), batch_size):
        stop = start + batch_size
        bindings = dict(model.params)
        bindings[model.input_name] = x[start:stop]
        bindings[model.labels_name] = labels[start:stop]
        out = ad.forward(model.graph, bindings, noise=noise, sample_noise=sample_noise)
        hits += int((np.argmax(out["logits"], axis=1) == y[start:stop]).sum())
    return hits / len(x)


def train(model: BuiltModel, data: Dataset, tc: TrainConfig,
          log=None) -> TrainingHistory:
    """Mini-batch gradient descent with per-epoch test evaluation.

    Every RNG involved (noise, shuffling, evaluation) derives from
    tc.seed, so identical (model seed, train seed, data) reruns produce a
    bit-identical metric stream.  A non-finite loss terminates the run
    with status "diverged" and the history collected so far.
    """
    if tc.batch_size > data.n_train:
        raise ConfigError(
            f"batch_size {tc.batch_size} exceeds training set size {data.n_train}")
    root = RngStream(tc.seed)
    noise = ad.NoiseSource(root.child(_STREAM_NOISE))
    shuffle_gen = root.child(_STREAM_SHUFFLE).generator()
    eval_stream = root.child(_STREAM_EVAL)

    optimizer = _make_optimizer(tc.optimizer, model.params, tc.learning_rate)
    labels = one_hot(data.train_y, model.config.classes)
    history = TrainingHistory()
    started = time.perf_counter()

    for epoch in range(tc.epochs):
        order = shuffle_gen.permutation(data.n_train)
        losses = []
        diverged = False
        for start in range(0, data.n_train, tc.batch_size):
            batch = order[start:start + tc.batch_size]
            bindings = dict(model.params)
            bindings[model.input_name] = data.train_x[batch]
            bindings[model.labels_name] = labels[batch]
            out = ad.forward(model.graph, bindings, noise=noise)
            loss = float(out["loss"])
            if not np.isfinite(loss):
                diverged = True
                break
            losses.append(loss)
            grads = ad.backward(model.graph)
            optimizer.step(model.params, grads)
        if diverged:
            history.status = "diverged"
            break
        top1 = evaluate(model, data.test_x, data.test_y, eval_stream.child(epoch))
        entry = {"epoch": epoch, "train_loss": float(np.mean(losses)), "test_top1": top1}
        history.epochs.append(entry)
        if log is not None:
            log(entry)
    history.wall_time_s = time.perf_counter() - started
    return history


def run_training(config: ModelConfig, data: Dataset, tc: TrainConfig) -> tuple[BuiltModel, TrainingHistory]:
    """Build (seeded by tc.seed) and train in one call."""
    model = build_model(config, RngStream(tc.seed, _STREAM_INIT))
    history = train(model, data, tc)
    return model, history


def interpolation_sweep_train(config: ModelConfig, i_values, data: Dataset,
                              tc: TrainConfig) -> list[dict]:
    """Train one model per interpolation factor with identical seeds.

    Initialization and every noise stream are shared across table entries,
    so the i=0 row is bit-identical to training the plain rectified model.
    """
    table = []
    for i in i_values:
        cfg = config.with_interpolation(float(i))
        _, history = run_training(cfg, data, tc)
        table.append({"i": float(i), "final_top1": history.final_top1,
                      "status": history.status})
    return table
