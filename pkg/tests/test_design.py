import math

import numpy as np
import pytest

from mlgcp.design import (
    DesignBlocks,
    Penalty,
    build_design,
    grad_Q,
    noiseless_design,
    objective_Q,
    objective_Q_lambda,
)
from mlgcp.model import ModelParams
from mlgcp.pcf import PcfEstimate

from conftest import random_params
from test_model import permuted_flipped

LAGS = np.linspace(0.025, 0.25, 25)


def scalar_blocks(ylog=1.0, w=1.0, lag=0.02 * math.log(2.0)):
    """One type, one lag; r = c = 0.5 at the chosen lag when scales are 0.02."""
    return DesignBlocks(
        np.full((1, 1, 1), ylog), np.full((1, 1, 1), w), np.array([lag])
    )


def random_blocks(rng, params, noise=0.1):
    clean = noiseless_design(params, LAGS)
    ylog = clean.ylog + noise * rng.normal(size=clean.ylog.shape)
    ylog = (ylog + ylog.transpose(1, 0, 2)) / 2.0
    w = rng.uniform(0.1, 2.0, size=ylog.shape)
    w = (w + w.transpose(1, 0, 2)) / 2.0
    return DesignBlocks(ylog, w, LAGS)


class TestBuildDesign:
    def test_offdiag_row(self):
        est = PcfEstimate(np.array([0.02]), np.ones((2, 2, 1)), 0.005)
        params = ModelParams(np.ones((2, 1)), [1, 1], [0.02], [0.02, 0.02])
        blocks = build_design(est, np.ones((2, 2, 1)), params)
        np.testing.assert_allclose(blocks.X(0, 1, params), [[math.exp(-1)]], rtol=1e-15)

    def test_zero_weight_row(self):
        est = PcfEstimate(np.array([0.02]), np.full((2, 2, 1), 2.0), 0.005)
        params = ModelParams(np.ones((2, 1)), [1, 1], [0.02], [0.02, 0.02])
        blocks = build_design(est, np.zeros((2, 2, 1)), params)
        assert np.all(blocks.X(0, 1, params) == 0.0)
        assert np.all(blocks.Y(0, 1) == 0.0)

    def test_diag_row_length(self):
        est = PcfEstimate(LAGS, np.ones((2, 2, len(LAGS))), 0.005)
        params = ModelParams(np.ones((2, 2)), [1, 1], [0.02, 0.1], [0.02, 0.02])
        blocks = build_design(est, np.ones((2, 2, len(LAGS))), params)
        assert blocks.X(0, 0, params).shape == (len(LAGS), 3)
        assert blocks.X(0, 1, params).shape == (len(LAGS), 2)

    def test_nonpositive_ghat_neutralized(self):
        ghat = np.ones((1, 1, 2))
        ghat[0, 0, 1] = 0.0
        est = PcfEstimate(np.array([0.05, 0.1]), ghat, 0.005)
        blocks = build_design(est, np.ones((1, 1, 2)))
        assert blocks.w[0, 0, 1] == 0.0 and blocks.ylog[0, 0, 1] == 0.0


class TestObjective:
    def test_noiseless_is_zero(self, params_p5):
        blocks = noiseless_design(params_p5, LAGS)
        assert objective_Q(blocks, params_p5) <= 1e-18

    def test_all_weights_zero(self, params_p5):
        blocks = noiseless_design(params_p5, LAGS, weights=np.zeros((5, 5, len(LAGS))))
        assert objective_Q(blocks, params_p5) == 0.0

    def test_scalar_example(self):
        blocks = scalar_blocks()
        r = math.exp(-blocks.lags[0] / 0.02)  # = c, about one half
        full = ModelParams([[1.0]], [1.0], [0.02], [0.02])
        assert objective_Q(blocks, full) == pytest.approx((1 - 2 * r) ** 2, abs=1e-15)
        none = ModelParams([[1.0]], [0.0], [0.02], [0.02])
        assert objective_Q(blocks, none) == pytest.approx(0.25, abs=1e-12)

    def test_lambda_zero_equals_Q(self, params_p5):
        rng = np.random.default_rng(0)
        blocks = random_blocks(rng, params_p5)
        assert objective_Q_lambda(blocks, params_p5, Penalty(0.0, 0.7)) == objective_Q(
            blocks, params_p5
        )

    def test_penalty_arithmetic(self):
        blocks = scalar_blocks(w=0.0)  # Q = 0
        params = ModelParams([[3.0]], [1.0], [0.02], [0.02])
        assert objective_Q_lambda(blocks, params, Penalty(2.0, 1.0)) == pytest.approx(6.0)
        assert objective_Q_lambda(blocks, params, Penalty(2.0, 0.0)) == pytest.approx(9.0)

    def test_penalized_at_least_Q(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            params = random_params(rng)
            blocks = random_blocks(rng, params)
            pen = Penalty(rng.uniform(0, 2), rng.uniform(0, 1))
            q = objective_Q(blocks, params)
            ql = objective_Q_lambda(blocks, params, pen)
            assert ql >= q
            if pen.lam > 0 and np.any(params.alpha != 0):
                assert ql > q


class TestInvariance:
    def test_Q_exact(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            params = random_params(rng)
            blocks = random_blocks(rng, params)
            other = permuted_flipped(params, rng)
            assert objective_Q(blocks, params) == objective_Q(blocks, other)
            pen = Penalty(rng.uniform(0, 2), rng.uniform(0, 1))
            assert objective_Q_lambda(blocks, params, pen) == objective_Q_lambda(
                blocks, other, pen
            )


class TestGradient:
    def test_matches_central_differences(self):
        rng = np.random.default_rng(3)
        for _ in range(5):
            truth = random_params(rng)
            blocks = random_blocks(rng, truth)
            params = random_params(rng, p=truth.p, q=truth.q)
            g = grad_Q(blocks, params)

            def value(alpha, sigma2, phi, psi):
                return objective_Q(blocks, ModelParams(alpha, sigma2, phi, psi))

            def check(analytic, x, setter):
                h = 1e-6 * max(1.0, abs(x))
                up = value(*setter(x + h))
                dn = value(*setter(x - h))
                fd = (up - dn) / (2 * h)
                assert analytic == pytest.approx(fd, rel=1e-5, abs=1e-7)

            i = int(rng.integers(0, params.p))
            l = int(rng.integers(0, params.q))

            def set_alpha(v):
                a = params.alpha.copy()
                a[i, l] = v
                return a, params.sigma2, params.phi, params.psi

            check(g["alpha"][i, l], params.alpha[i, l], set_alpha)

            def set_sigma2(v):
                s = params.sigma2.copy()
                s[i] = v
                return params.alpha, s, params.phi, params.psi

            check(g["sigma2"][i], params.sigma2[i], set_sigma2)

            def set_logphi(v):
                ph = params.phi.copy()
                ph[l] = math.exp(v)
                return params.alpha, params.sigma2, ph, params.psi

            check(g["log_phi"][l], math.log(params.phi[l]), set_logphi)

            def set_logpsi(v):
                ps = params.psi.copy()
                ps[i] = math.exp(v)
                return params.alpha, params.sigma2, params.phi, ps

            check(g["log_psi"][i], math.log(params.psi[i]), set_logpsi)


class TestBlocks:
    def test_corr_cache_refresh(self, params_p5):
        blocks = noiseless_design(params_p5, LAGS)
        R1, C1 = blocks.corr(params_p5.phi, params_p5.psi)
        R2, C2 = blocks.corr(params_p5.phi, params_p5.psi)
        assert R1 is R2 and C1 is C2  # unchanged scales reuse the cache
        R3, _ = blocks.corr(params_p5.phi * 1.1, params_p5.psi)
        assert R3 is not R1
        np.testing.assert_allclose(R3, np.exp(-LAGS[:, None] / (params_p5.phi * 1.1)))

    def test_symmetric_responses(self, params_p5):
        rng = np.random.default_rng(4)
        blocks = random_blocks(rng, params_p5)
        np.testing.assert_array_equal(blocks.Y(0, 1), blocks.Y(1, 0))

    def test_penalty_validation(self):
        with pytest.raises(ValueError):
            Penalty(-1.0, 0.5)
        with pytest.raises(ValueError):
            Penalty(1.0, 1.5)
