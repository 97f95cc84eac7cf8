"""Model building, training, evaluation, and the digital-equivalence and
interpolation-sweep invariants."""

import dataclasses

import numpy as np
import pytest

from analog_grad.activations import ActivationSpec
from analog_grad.datasets import Dataset
from analog_grad.errors import ConfigError
from analog_grad.network import (LayerSpec, ModelConfig, build_model,
                                 convnet_mini, mlp)
from analog_grad.quant import QuantNoiseSpec, RngStream
from analog_grad.training import (TrainConfig, evaluate,
                                  interpolation_sweep_train, run_training,
                                  train)


def make_blobs(n_per_class=120, dims=4, separation=0.6, seed=0):
    """Two well-separated Gaussian blobs inside [-1, 1]."""
    gen = RngStream(seed, 777).generator()
    centers = np.zeros((2, dims))
    centers[0, :] = -separation / 2
    centers[1, :] = separation / 2
    xs, ys = [], []
    for cls in range(2):
        pts = centers[cls] + gen.normal(0, 0.12, size=(n_per_class, dims))
        xs.append(pts), ys.append(np.full(n_per_class, cls))
    x = np.clip(np.concatenate(xs), -1, 1)
    y = np.concatenate(ys).astype(np.int64)
    order = gen.permutation(len(y))
    x, y = x[order], y[order]
    n_test = len(y) // 6
    return Dataset(x[n_test:], y[n_test:], x[:n_test], y[:n_test], 2)


class TestLayerSpec:
    def test_dims_validation(self):
        with pytest.raises(ConfigError):
            LayerSpec("linear", (4,))
        with pytest.raises(ConfigError):
            LayerSpec("conv2d", (1, 8))
        with pytest.raises(ConfigError):
            LayerSpec("activation")
        with pytest.raises(ConfigError):
            LayerSpec("linear", (4, 2), activation=ActivationSpec("relu"))
        with pytest.raises(ConfigError):
            LayerSpec("swizzle")


class TestBuildModel:
    def test_single_linear_classifier_graph(self):
        config = mlp(1, in_features=4, classes=2)
        model = build_model(config, RngStream(1))
        kinds = [n.kind for n in model.graph.nodes]
        assert kinds.count("matmul") == 1
        assert kinds.count("add") == 1
        assert kinds.count("softmax_xent") == 1
        assert kinds.count("activation") == 0
        assert kinds.count("quant_pipeline") == 0

    def test_convnet_mini_structure_and_sites(self):
        noise = QuantNoiseSpec(bits=4, target_ep=0.5)
        config = convnet_mini(classes=10, input_shape=(1, 16, 16),
                              signal_noise=noise, input_noise=noise)
        model = build_model(config, RngStream(2))
        kinds = [n.kind for n in model.graph.nodes]
        assert kinds.count("conv2d") == 6
        assert kinds.count("matmul") == 3
        # one corruption site per conv/linear output plus the input sensor
        assert model.noise_sites == 10
        assert kinds.count("quant_pipeline") == 10

    def test_weight_analog_adds_sites(self):
        noise = QuantNoiseSpec(bits=4, target_ep=0.5)
        config = convnet_mini(classes=10, input_shape=(1, 16, 16),
                              signal_noise=noise, input_noise=noise,
                              weight_noise=noise)
        model = build_model(config, RngStream(2))
        # 9 weight + 9 bias pipelines on top of the 10 signal sites
        assert model.noise_sites == 28

    def test_same_seed_same_initial_weights(self):
        config = convnet_mini(classes=10, input_shape=(1, 16, 16))
        a = build_model(config, RngStream(7))
        b = build_model(config, RngStream(7))
        for key in a.params:
            np.testing.assert_array_equal(a.params[key], b.params[key])

    def test_chain_mismatch_names_layer(self):
        layers = [LayerSpec("linear", (4, 8)),
                  LayerSpec("linear", (6, 2))]
        config = ModelConfig(layers=layers, classes=2, input_shape=(4,))
        with pytest.raises(ConfigError, match="layer 1"):
            build_model(config, RngStream(0))

    def test_final_dim_must_match_classes(self):
        config = ModelConfig(layers=[LayerSpec("linear", (4, 3))], classes=2,
                             input_shape=(4,))
        with pytest.raises(ConfigError, match="classes"):
            build_model(config, RngStream(0))


class TestTraining:
    def test_separable_blobs_reach_95(self):
        data = make_blobs(seed=3)
        # independent oracle: logistic regression solves this at >= 0.99
        from sklearn.linear_model import LogisticRegression
        probe = LogisticRegression().fit(data.train_x, data.train_y)
        assert probe.score(data.test_x, data.test_y) >= 0.99

        config = mlp(1, in_features=4, classes=2)
        tc = TrainConfig(epochs=50, batch_size=32, learning_rate=1e-2, seed=5)
        _, history = run_training(config, data, tc)
        assert history.status == "ok"
        assert history.final_top1 >= 0.95

    def test_divergence_reported_not_raised(self):
        data = make_blobs(seed=4)
        config = mlp(2, in_features=4, classes=2, hidden=8, init_gain=30.0)
        tc = TrainConfig(epochs=8, batch_size=32, learning_rate=1e6, seed=1)
        _, history = run_training(config, data, tc)
        assert history.status in ("ok", "diverged")
        if history.status == "diverged":
            assert len(history.epochs) < 8

    def test_batch_size_guard(self):
        data = make_blobs(n_per_class=12, seed=5)
        config = mlp(1, in_features=4, classes=2)
        model = build_model(config, RngStream(0))
        with pytest.raises(ConfigError, match="batch_size"):
            train(model, data, TrainConfig(epochs=1, batch_size=512,
                                           learning_rate=1e-3, seed=0))

    def test_metric_stream_reproducible(self):
        data = make_blobs(seed=6)
        noise = QuantNoiseSpec(bits=6, target_ep=0.3)
        config = mlp(2, in_features=4, classes=2, hidden=8,
                     signal_noise=noise, weight_noise=noise, input_noise=noise)
        tc = TrainConfig(epochs=3, batch_size=32, learning_rate=1e-3, seed=11)
        _, h1 = run_training(config, data, tc)
        _, h2 = run_training(config, data, tc)
        assert h1.epochs == h2.epochs


class TestEvaluate:
    def test_untrained_balanced_is_chance(self):
        gen = RngStream(8, 123).generator()
        x = gen.uniform(-1, 1, size=(1000, 1, 16, 16))
        y = np.repeat(np.arange(10), 100)
        config = convnet_mini(classes=10, input_shape=(1, 16, 16))
        model = build_model(config, RngStream(9))
        top1 = evaluate(model, x, y, RngStream(10))
        assert abs(top1 - 0.1) <= 0.03

    def test_memorizer_scores_one(self):
        data = make_blobs(n_per_class=18, seed=7)
        config = mlp(2, in_features=4, classes=2, hidden=16)
        tc = TrainConfig(epochs=120, batch_size=6, learning_rate=1e-2, seed=2)
        model, history = run_training(config, data, tc)
        top1 = evaluate(model, data.train_x, data.train_y, RngStream(11))
        assert top1 == 1.0

    def test_deterministic_per_stream(self):
        data = make_blobs(seed=8)
        noise = QuantNoiseSpec(bits=4, target_ep=0.5)
        config = mlp(2, in_features=4, classes=2, hidden=8,
                     signal_noise=noise, input_noise=noise)
        model = build_model(config, RngStream(12))
        a = evaluate(model, data.test_x, data.test_y, RngStream(13))
        b = evaluate(model, data.test_x, data.test_y, RngStream(13))
        assert a == b

    def test_empty_split_rejected(self):
        config = mlp(1, in_features=4, classes=2)
        model = build_model(config, RngStream(0))
        with pytest.raises(ConfigError, match="empty"):
            evaluate(model, np.zeros((0, 4)), np.zeros(0, dtype=int), RngStream(0))


class TestDigitalEquivalence:
    def test_noiseless_high_precision_wrap_matches_plain(self):
        # in-range init keeps the clamp inert, so the only wrap effect is the
        # 2^-16 rounding, which must not bend the trajectory beyond 1e-3
        data = make_blobs(seed=9, separation=0.5)
        quiet = QuantNoiseSpec(bits=16, sigma=0.0)
        act = ActivationSpec("gelu")
        tc = TrainConfig(epochs=5, batch_size=32, learning_rate=1e-3, seed=21)
        plain = mlp(2, in_features=4, classes=2, hidden=8, activation=act,
                    init_gain=0.5)
        wrapped = mlp(2, in_features=4, classes=2, hidden=8, activation=act,
                      init_gain=0.5, signal_noise=quiet, weight_noise=quiet,
                      input_noise=quiet)
        _, h_plain = run_training(plain, data, tc)
        _, h_wrapped = run_training(wrapped, data, tc)
        losses_plain = np.array([e["train_loss"] for e in h_plain.epochs])
        losses_wrapped = np.array([e["train_loss"] for e in h_wrapped.epochs])
        np.testing.assert_allclose(losses_wrapped, losses_plain, atol=1e-3)


class TestInterpolationSweepTrain:
    def test_noiseless_insensitive_to_i(self):
        data = make_blobs(seed=10)
        config = mlp(2, in_features=4, classes=2, hidden=8,
                     activation=ActivationSpec("interp-relu-gelu"))
        tc = TrainConfig(epochs=15, batch_size=32, learning_rate=1e-2, seed=3)
        table = interpolation_sweep_train(config, [0.0, 0.5, 1.0], data, tc)
        tops = [row["final_top1"] for row in table]
        assert max(tops) - min(tops) < 0.05

    def test_zero_entry_equals_direct_relu_model(self):
        data = make_blobs(seed=11)
        noise = QuantNoiseSpec(bits=6, target_ep=0.3)
        config = mlp(2, in_features=4, classes=2, hidden=8,
                     activation=ActivationSpec("interp-relu-gelu"),
                     signal_noise=noise, input_noise=noise)
        tc = TrainConfig(epochs=4, batch_size=32, learning_rate=1e-3, seed=4)
        table = interpolation_sweep_train(config, [0.0], data, tc)
        relu_config = config.with_activation(ActivationSpec("relu"))
        _, relu_history = run_training(relu_config, data, tc)
        assert table[0]["final_top1"] == relu_history.final_top1
