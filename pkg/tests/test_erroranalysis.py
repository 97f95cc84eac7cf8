"""Monte Carlo gradient-error analysis: the corrupted product generator,
error surfaces, mini-batch accumulated derivatives, and serialization."""

import numpy as np
import pytest

from analog_grad.activations import ActivationSpec
from analog_grad.erroranalysis import (accumulated_error,
                                       gradient_error_surface,
                                       interpolation_error_sweep,
                                       noisy_product, read_surface,
                                       write_surface)
from analog_grad.quant import RngStream, sigma_from_ep

GRID = np.linspace(0.0, 1.0, 11)


class TestNoisyProduct:
    def test_noiseless_is_quantized_product(self):
        out = noisy_product(0.5, 0.5, 8, 0.0, RngStream(0))
        assert out == 0.25  # 128/256 * 128/256 exactly

    def test_noiseless_respects_rounding(self):
        # 0.3 on the 2-bit grid is 0.25
        out = noisy_product(0.3, 0.3, 2, 0.0, RngStream(0))
        assert out == pytest.approx(0.0625)

    def test_zero_input_is_noise_dominated(self):
        # first term vanishes; remaining terms are eps-scaled exactly
        stream = RngStream(3, 7)
        sigma = 0.01
        draws = noisy_product(0.0, 0.5, 8, sigma, stream, size=1000)
        eps = stream.generator().normal(0.0, sigma, size=1000)
        mag_w = np.ceil(abs(0.5) * 256 - 0.5)
        expected = (eps / 256.0) * mag_w + eps ** 2
        np.testing.assert_allclose(draws, expected, rtol=1e-12)

    def test_monte_carlo_mean(self):
        sigma = sigma_from_ep(8, 0.5)
        draws = noisy_product(0.5, 0.5, 8, sigma, RngStream(11), size=10 ** 6)
        # eps has zero mean; the eps^2 term contributes sigma^2 ~ 8.5e-6
        assert draws.mean() == pytest.approx(0.25, abs=1e-3)

    def test_modes_agree_in_moments(self):
        # the one-draw form and the two-independent-draw form differ in mean
        # by exactly sigma^2 (the eps^2 term vs the eps1*eps2 cross term);
        # beyond that both must agree within Monte Carlo error
        sigma = sigma_from_ep(8, 0.5)
        n = 10 ** 6
        combined = noisy_product(0.4, 0.7, 8, sigma, RngStream(5), size=n)
        direct = noisy_product(0.4, 0.7, 8, sigma, RngStream(6), size=n,
                               mode="direct")
        se = np.hypot(combined.std(), direct.std()) / np.sqrt(n)
        assert abs(combined.mean() - direct.mean()) <= sigma ** 2 + 5 * se
        assert combined.std() == pytest.approx(direct.std(), rel=0.02)

    def test_symmetric_in_operands(self):
        a = noisy_product(0.3, 0.8, 8, 0.0, RngStream(0))
        b = noisy_product(0.8, 0.3, 8, 0.0, RngStream(0))
        assert a == b


class TestErrorSurface:
    def test_identity_activation_zero_surface(self):
        surface = gradient_error_surface(ActivationSpec("identity"), 8, 0.5,
                                         GRID, trials=50, rng=RngStream(1))
        np.testing.assert_array_equal(surface.values, 0.0)

    def test_relu_error_concentrates_near_zero_product(self):
        surface = gradient_error_surface(ActivationSpec("relu"), 8, 0.5,
                                         GRID, trials=2000, rng=RngStream(2))
        near = surface.values[0, 1:]          # x_i = 0 row
        far = surface.values[-1, -1]          # (1.0, 1.0) corner
        corner_09 = surface.values[9, 9]      # (0.9, 0.9)
        assert near.mean() >= 10 * max(far, corner_09, 1e-12)

    def test_gelu_more_uniform_than_relu(self):
        relu = gradient_error_surface(ActivationSpec("relu"), 8, 0.5,
                                      GRID, trials=2000, rng=RngStream(3))
        gelu = gradient_error_surface(ActivationSpec("gelu"), 8, 0.5,
                                      GRID, trials=2000, rng=RngStream(3))

        def spread(surface):
            return surface.values.max() / max(np.median(surface.values), 1e-12)

        assert spread(gelu) < spread(relu)

    def test_symmetry_under_swap(self):
        surface = gradient_error_surface(ActivationSpec("gelu"), 8, 0.5,
                                         GRID, trials=4000, rng=RngStream(4))
        asymmetry = np.abs(surface.values - surface.values.T).max()
        assert asymmetry < 5e-4  # Monte Carlo tolerance

    def test_deterministic_per_stream(self):
        a = gradient_error_surface(ActivationSpec("relu"), 4, 0.3, GRID[:5],
                                   trials=100, rng=RngStream(9))
        b = gradient_error_surface(ActivationSpec("relu"), 4, 0.3, GRID[:5],
                                   trials=100, rng=RngStream(9))
        np.testing.assert_array_equal(a.values, b.values)


class TestInterpolationSweep:
    def test_endpoints_bitwise_equal_to_plain_surfaces(self):
        stream = RngStream(13)
        sweep = interpolation_error_sweep(8, 0.5, [0.0, 0.5, 1.0], GRID[:6],
                                          trials=500, rng=stream)
        relu = gradient_error_surface(ActivationSpec("relu"), 8, 0.5, GRID[:6],
                                      trials=500, rng=stream)
        gelu = gradient_error_surface(ActivationSpec("gelu"), 8, 0.5, GRID[:6],
                                      trials=500, rng=stream)
        np.testing.assert_array_equal(sweep[0].values, relu.values)
        np.testing.assert_array_equal(sweep[2].values, gelu.values)

    def test_mean_error_non_increasing_in_i(self):
        sweep = interpolation_error_sweep(8, 0.5, [0.0, 0.25, 0.5, 0.75, 1.0],
                                          GRID, trials=2000, rng=RngStream(14))
        means = [s.mean() for s in sweep]
        band = 2e-3  # Monte Carlo band at this trial count
        assert all(a >= b - band for a, b in zip(means, means[1:]))


class TestAccumulatedError:
    def test_gelu_unbiased_at_zero(self):
        rec = accumulated_error(ActivationSpec("gelu"), 0.0, 10 ** 6, 0.01,
                                RngStream(21))
        assert rec.reference == pytest.approx(0.5)
        assert abs(rec.mean_error - 0.5) < 0.005

    def test_relu_biased_at_zero_plus(self):
        rec = accumulated_error(ActivationSpec("relu"), 1e-9, 10 ** 6, 0.01,
                                RngStream(22))
        assert rec.reference == 1.0  # one-sided limit from the right
        assert rec.mean_error == pytest.approx(0.5, abs=0.005)

    def test_relu_clean_away_from_kink(self):
        rec = accumulated_error(ActivationSpec("relu"), 0.5, 10 ** 6, 0.01,
                                RngStream(23))
        assert rec.mean_error == pytest.approx(1.0, abs=0.002)


class TestSerialization:
    def test_surface_round_trip(self, tmp_path):
        surface = gradient_error_surface(ActivationSpec("gelu"), 6, 0.4,
                                         GRID[:7], trials=50, rng=RngStream(31))
        path = write_surface(surface, tmp_path / "surface.csv")
        assert path.exists()
        assert (tmp_path / "surface.meta.json").exists()
        loaded = read_surface(path)
        np.testing.assert_array_equal(loaded.values, surface.values)
        np.testing.assert_array_equal(loaded.xi_grid, surface.xi_grid)
        assert loaded.meta["bits"] == 6
        assert loaded.meta["activation"]["kind"] == "gelu"
        assert loaded.meta["statistic"] == "mean-absolute-deviation"
