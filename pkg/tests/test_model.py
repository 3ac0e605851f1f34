import json
import math

import numpy as np
import pytest

from mlgcp.model import (
    ModelParams,
    Window,
    beta_vector,
    cross_pcf,
    exp_correlation,
    latent_covariances,
    proportion_of_variance,
    q_eff,
    row_distance_matrix,
)

from conftest import random_params


def permuted_flipped(params, rng):
    """Simultaneous column permutation of (alpha, phi) plus column sign flips."""
    perm = rng.permutation(params.q)
    signs = rng.choice([-1.0, 1.0], size=params.q)
    return ModelParams(
        alpha=params.alpha[:, perm] * signs[None, :],
        sigma2=params.sigma2,
        phi=params.phi[perm],
        psi=params.psi,
    )


class TestExpCorrelation:
    def test_zero_lag(self):
        assert exp_correlation(0.0, 0.02) == 1.0

    def test_one_scale(self):
        assert exp_correlation(0.02, 0.02) == pytest.approx(math.exp(-1.0), rel=1e-15)

    def test_direct_evaluation(self):
        assert exp_correlation(0.1, 0.02) == pytest.approx(math.exp(-5.0), rel=1e-15)

    def test_monotone(self):
        t = np.linspace(0, 1, 50)
        vals = exp_correlation(t, 0.1)
        assert np.all(np.diff(vals) < 0)

    def test_bad_scale(self):
        with pytest.raises(ValueError):
            exp_correlation(0.1, 0.0)
        with pytest.raises(ValueError):
            exp_correlation(0.1, -1.0)


class TestBetaVector:
    def test_offdiag_p5(self, params_p5):
        np.testing.assert_allclose(
            beta_vector(params_p5, 0, 1), [math.sqrt(0.5), 0.0], atol=1e-12
        )

    def test_diag_zero_row(self):
        params = ModelParams(np.zeros((2, 3)), [1.0, 2.0], [0.1] * 3, [0.1, 0.1])
        np.testing.assert_array_equal(beta_vector(params, 0, 0), [0, 0, 0, 1.0])

    def test_diag_p5(self, params_p5):
        np.testing.assert_allclose(beta_vector(params_p5, 0, 0), [0.5, 0.0, 1.0], rtol=1e-15)

    def test_out_of_range(self, params_p5):
        with pytest.raises(IndexError):
            beta_vector(params_p5, 0, 5)


class TestCrossPcf:
    def test_diag_lag0(self, params_p5):
        assert cross_pcf(params_p5, 0, 0, 0.0) == pytest.approx(math.exp(1.5), rel=1e-14)

    def test_offdiag_lag0(self, params_p5):
        assert cross_pcf(params_p5, 0, 1, 0.0) == pytest.approx(
            math.exp(math.sqrt(0.5)), rel=1e-14
        )

    def test_independence_when_alpha_zero(self):
        params = ModelParams(np.zeros((3, 2)), np.ones(3), [0.1, 0.2], [0.1] * 3)
        for t in (0.0, 0.05, 1.0):
            assert cross_pcf(params, 0, 1, t) == 1.0

    def test_symmetric_exactly(self):
        rng = np.random.default_rng(10)
        for _ in range(20):
            params = random_params(rng)
            i, j = rng.integers(0, params.p, 2)
            t = rng.uniform(0, 0.3)
            assert cross_pcf(params, i, j, t) == cross_pcf(params, j, i, t)

    def test_log_equals_beta_inner_product(self):
        # ties the closed form to the least squares design row
        rng = np.random.default_rng(11)
        for _ in range(20):
            params = random_params(rng)
            i = int(rng.integers(0, params.p))
            j = int(rng.integers(0, params.p))
            t = float(rng.uniform(0.01, 0.3))
            row = exp_correlation(t, params.phi)
            if i == j:
                row = np.append(row, exp_correlation(t, params.psi[i]))
            expected = float(np.dot(beta_vector(params, i, j), row))
            assert math.log(cross_pcf(params, i, j, t)) == pytest.approx(
                expected, abs=1e-12
            )


class TestProportionOfVariance:
    def test_lag0_p5(self, params_p5):
        assert proportion_of_variance(params_p5, 0, 0.0) == pytest.approx(1.0 / 3.0)

    def test_no_specific_variance(self):
        params = ModelParams([[1.0]], [0.0], [0.1], [0.1])
        for t in (0.0, 0.1, 0.5):
            assert proportion_of_variance(params, 0, t) == 1.0

    def test_no_common_variance(self):
        params = ModelParams([[0.0]], [1.0], [0.1], [0.1])
        assert proportion_of_variance(params, 0, 0.3) == 0.0

    def test_zero_denominator(self):
        params = ModelParams([[0.0]], [0.0], [0.1], [0.1])
        with pytest.raises(ZeroDivisionError):
            proportion_of_variance(params, 0, 0.0)

    def test_in_unit_interval(self):
        rng = np.random.default_rng(12)
        for _ in range(30):
            params = random_params(rng)
            for t in rng.uniform(0, 0.5, 3):
                pv = proportion_of_variance(params, 0, t)
                assert 0.0 <= pv <= 1.0


class TestLatentCovariances:
    def test_p5_values(self, params_p5):
        common, total = latent_covariances(params_p5)
        assert common[0, 0] == pytest.approx(0.5, rel=1e-15)
        assert total[0, 0] == pytest.approx(1.5, rel=1e-15)
        assert common[0, 1] == pytest.approx(math.sqrt(0.5), rel=1e-15)

    def test_alpha_zero(self):
        params = ModelParams(np.zeros((3, 2)), [1.0, 2.0, 3.0], [0.1] * 2, [0.1] * 3)
        common, total = latent_covariances(params)
        np.testing.assert_array_equal(common, np.zeros((3, 3)))
        np.testing.assert_array_equal(total, np.diag([1.0, 2.0, 3.0]))

    def test_total_psd(self):
        rng = np.random.default_rng(13)
        for _ in range(30):
            _, total = latent_covariances(random_params(rng))
            assert np.linalg.eigvalsh(total).min() >= -1e-10

    def test_diagonal_dominates_common(self):
        rng = np.random.default_rng(14)
        common, total = latent_covariances(random_params(rng))
        assert np.all(np.diag(total) >= np.diag(common))


class TestRowDistances:
    def test_identical_rows(self):
        params = ModelParams([[1.0, 2.0], [1.0, 2.0]], [1, 1], [0.1, 0.1], [0.1, 0.1])
        assert row_distance_matrix(params)[0, 1] == 0.0

    def test_p5_rows01(self, params_p5):
        expected = abs(math.sqrt(0.5) - 1.0)
        assert row_distance_matrix(params_p5)[0, 1] == pytest.approx(expected, rel=1e-15)

    def test_orthonormal(self):
        params = ModelParams([[1.0, 0.0], [0.0, 1.0]], [1, 1], [0.1, 0.1], [0.1, 0.1])
        assert row_distance_matrix(params)[0, 1] == pytest.approx(math.sqrt(2.0))

    def test_triangle_inequality(self):
        rng = np.random.default_rng(15)
        for _ in range(20):
            d = row_distance_matrix(random_params(rng, p=4))
            for i in range(4):
                for j in range(4):
                    for k in range(4):
                        assert d[i, j] <= d[i, k] + d[k, j] + 1e-12


class TestQeff:
    def test_zero_column(self):
        assert q_eff(np.array([[1.0, 0.0], [2.0, 0.0]]), tol=0.0) == 1

    def test_all_zero(self):
        assert q_eff(np.zeros((4, 3))) == 0

    def test_p10_truth(self):
        from mlgcp.simulate import scenario_p10

        assert q_eff(scenario_p10().params.alpha, tol=0.0) == 4

    def test_tol_absorbs_residue(self):
        alpha = np.array([[1.0, 1e-12], [0.5, -1e-13]])
        assert q_eff(alpha) == 1

    def test_q_zero(self):
        assert q_eff(np.zeros((3, 0))) == 0


class TestInvariance:
    def test_model_summaries_exact(self):
        rng = np.random.default_rng(16)
        for _ in range(100):
            params = random_params(rng)
            other = permuted_flipped(params, rng)
            i, j = rng.integers(0, params.p, 2)
            t = float(rng.uniform(0, 0.4))
            assert cross_pcf(params, i, j, t) == cross_pcf(other, i, j, t)
            assert proportion_of_variance(params, i, t) == proportion_of_variance(
                other, i, t
            )
            c1, t1 = latent_covariances(params)
            c2, t2 = latent_covariances(other)
            assert np.array_equal(c1, c2) and np.array_equal(t1, t2)
            assert np.array_equal(
                row_distance_matrix(params), row_distance_matrix(other)
            )


class TestModelParams:
    def test_validation(self):
        with pytest.raises(ValueError):
            ModelParams([[1.0]], [-0.1], [0.1], [0.1])
        with pytest.raises(ValueError):
            ModelParams([[1.0]], [1.0], [0.0], [0.1])
        with pytest.raises(ValueError):
            ModelParams([[np.nan]], [1.0], [0.1], [0.1])
        with pytest.raises(ValueError):
            ModelParams([[1.0, 2.0]], [1.0], [0.1], [0.1])

    def test_json_roundtrip(self, params_p5):
        text = params_p5.to_json()
        loaded = ModelParams.from_json(text)
        np.testing.assert_array_equal(loaded.alpha, params_p5.alpha)
        np.testing.assert_array_equal(loaded.sigma2, params_p5.sigma2)
        np.testing.assert_array_equal(loaded.phi, params_p5.phi)
        np.testing.assert_array_equal(loaded.psi, params_p5.psi)

    def test_json_field_names(self, params_p5):
        d = json.loads(params_p5.to_json())
        assert sorted(d) == ["alpha", "phi", "psi", "sigma2"]

    def test_json_roundtrip_q0(self):
        params = ModelParams(np.zeros((2, 0)), [1.0, 2.0], [], [0.1, 0.2])
        loaded = ModelParams.from_json(params.to_json())
        assert loaded.q == 0 and loaded.p == 2


class TestWindow:
    def test_properties(self):
        w = Window(0, 2, 0, 1)
        assert w.area == 2.0 and w.width == 2.0 and w.height == 1.0
        assert w.diameter == pytest.approx(math.sqrt(5))

    def test_invalid(self):
        with pytest.raises(ValueError):
            Window(0, 0, 0, 1)
