"""Acceptance gate: one criterion per test, one PASS/FAIL line per criterion.

Run with `pytest tests/test_acceptance.py -v -s`.  The simulated-replicate
studies (criteria 4 and 5) dominate the runtime; both are deterministic given
the fixed master seeds and are shared through session fixtures.
"""

import time

import numpy as np
import pytest

from mlgcp.design import (
    DesignBlocks,
    Penalty,
    noiseless_design,
    objective_Q,
    objective_Q_lambda,
)
from mlgcp.model import (
    ModelParams,
    UNIT_SQUARE,
    cross_pcf,
    latent_covariances,
    proportion_of_variance,
    row_distance_matrix,
)
from mlgcp.optimizer import (
    FitConfig,
    coordinate_update_alpha,
    default_init,
    fit,
    update_scales,
    update_sigma2,
)
from mlgcp.patterns import constant_intensity
from mlgcp.pcf import default_lag_grid, estimate_pcf
from mlgcp.simulate import scenario_p5
from mlgcp.study import run_study

from conftest import random_params
from test_model import permuted_flipped
from test_optimizer import golden_section
from test_pcf import UNIT, brute_force_pcf, random_pattern
from test_design import random_blocks

LAGS = np.linspace(0.025, 0.25, 25)


def check(name, ok, detail=""):
    print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="session")
def study_fixed_q2():
    """20 replicates of the five-type scenario, fixed q=2, lambda=0, with the
    joint BFGS baseline from identical initializations."""
    return run_study(
        scenario_p5(resolution=256),
        replicates=20,
        master_seed=20250809,
        workers=2,
        mode="fixed",
        q=2,
        lam=0.0,
        baseline=True,
    )


@pytest.fixture(scope="session")
def study_cv_min():
    """20 replicates with Min-rule CV over q in 1..5 and the 20-point lambda
    grid, LASSO, K=8."""
    return run_study(
        scenario_p5(resolution=256),
        replicates=20,
        master_seed=424242,
        workers=2,
        mode="min",
        q_grid=[1, 2, 3, 4, 5],
        lambdas=None,
        xi=1.0,
        K=8,
        block_length=5,
        config=FitConfig(rel_tol=1e-5, max_outer_iters=150),
    )


def test_criterion_1_descent_suite():
    """Non-increasing trace and parameter positivity on 50 random fits."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(1001)
    lams = [0.0, 0.1, 1.0]
    xis = [0.0, 0.5, 1.0]
    worst_violation = -np.inf
    ok = True
    for k in range(50):
        params = random_params(rng, p=(2, 5)[k % 2], q=(1, 3)[(k // 2) % 2])
        blocks = random_blocks(rng, params, noise=0.2)
        init = default_init(params.p, params.q, seed=int(rng.integers(1 << 31)))
        pen = Penalty(lams[k % 3], xis[k % 5 % 3])
        res = fit(blocks, init, pen, FitConfig(max_outer_iters=25))
        worst_violation = max(worst_violation, float(np.max(np.diff(res.trace))))
        ok &= bool(np.all(np.diff(res.trace) <= 1e-12))
        ok &= bool(np.all(res.params.sigma2 >= 0))
        ok &= bool(np.all(res.params.phi > 0) and np.all(res.params.psi > 0))
    dt = time.perf_counter() - t0
    check(
        "criterion 1 (descent suite)",
        ok and dt < 60,
        f"50 fits, worst trace increase {worst_violation:.2e}, {dt:.1f}s",
    )


def test_criterion_2_block_update_oracles():
    """Coordinate update vs golden section (1e-8), sigma2 vs clamped least
    squares (1e-12), scale update vs grid-scan oracle (1e-3)."""
    rng = np.random.default_rng(1002)
    worst_cd = 0.0
    for _ in range(12):
        nb, L, q = int(rng.integers(1, 4)), 6, int(rng.integers(1, 4))
        Xstar = rng.normal(size=(nb, L, q))
        Ystar = rng.normal(size=(nb, L))
        row = rng.normal(size=q)
        pen = Penalty(float(rng.uniform(0, 2)), float(rng.uniform(0, 1)))
        l = int(rng.integers(0, q))
        Xl = Xstar[:, :, l].astype(np.longdouble)
        base = (Ystar - np.einsum("jkl,l->jk", Xstar, row) + Xl * row[l]).astype(
            np.longdouble
        )

        def model(v):
            v = np.longdouble(v)
            resid = base - Xl * v
            return np.sum(resid**2) + np.longdouble(pen.lam) * (
                (1 - pen.xi) * 0.5 * v**2 + pen.xi * abs(v)
            )

        oracle = golden_section(model, -20.0, 20.0)
        worst_cd = max(
            worst_cd, abs(coordinate_update_alpha(Ystar, Xstar, row, l, pen) - oracle)
        )

    worst_s2 = 0.0
    for _ in range(12):
        params = random_params(rng)
        blocks = random_blocks(rng, params)
        i = int(rng.integers(0, params.p))
        X = blocks.X(i, i, params)
        resid = blocks.Y(i, i) - X[:, : params.q] @ (params.alpha[i] ** 2)
        oracle = max(0.0, float(np.linalg.lstsq(X[:, [-1]], resid, rcond=None)[0][0]))
        worst_s2 = max(worst_s2, abs(update_sigma2(blocks, params, i)[0] - oracle))

    # one-dimensional scale recovery vs an independent golden-section scan
    truth_phi = ModelParams([[1.0], [0.8]], [0.3, 0.3], [0.1], [0.02, 0.02])
    blocks_phi = noiseless_design(truth_phi, LAGS)
    start = truth_phi.copy()
    start.phi[0] = 0.05
    got_phi = update_scales(blocks_phi, start, "phi", FitConfig())[0]
    oracle_phi = golden_section(
        lambda v: objective_Q(
            blocks_phi, ModelParams(truth_phi.alpha, truth_phi.sigma2, [v], truth_phi.psi)
        ),
        0.01,
        0.5,
        tol=1e-10,
    )
    truth_psi = ModelParams([[0.5]], [1.2], [0.05], [0.06])
    blocks_psi = noiseless_design(truth_psi, LAGS)
    start = truth_psi.copy()
    start.psi[0] = 0.02
    got_psi = update_scales(blocks_psi, start, "psi", FitConfig())[0]
    oracle_psi = golden_section(
        lambda v: objective_Q(
            blocks_psi,
            ModelParams(truth_psi.alpha, truth_psi.sigma2, truth_psi.phi, [v]),
        ),
        0.01,
        0.5,
        tol=1e-10,
    )
    worst_scale = max(abs(got_phi - oracle_phi), abs(got_psi - oracle_psi))
    ok = worst_cd <= 1e-8 and worst_s2 <= 1e-12 and worst_scale <= 1e-3
    check(
        "criterion 2 (block update oracles)",
        ok,
        f"coordinate {worst_cd:.2e} (tol 1e-8), sigma2 {worst_s2:.2e} (tol 1e-12), "
        f"scales {worst_scale:.2e} (tol 1e-3)",
    )


def test_criterion_3_noiseless_recovery():
    """Noiseless five-type design: recovery near truth and from restarts."""
    t0 = time.perf_counter()
    truth = scenario_p5().params
    blocks = noiseless_design(truth, default_lag_grid(UNIT_SQUARE))
    outer_true = latent_covariances(truth)[0]

    def errors(params):
        outer = latent_covariances(params)[0]
        return max(
            float(np.max(np.abs(outer - outer_true))),
            float(np.max(np.abs(params.sigma2 - truth.sigma2))),
            float(np.max(np.abs(params.psi - truth.psi))),
        )

    rng = np.random.default_rng(1003)
    near = truth.copy()
    near.alpha = truth.alpha + rng.normal(0, 0.01, truth.alpha.shape)
    near.sigma2 = truth.sigma2 * rng.uniform(0.95, 1.05, truth.p)
    near.phi = truth.phi * rng.uniform(0.95, 1.05, truth.q)
    near.psi = truth.psi * rng.uniform(0.95, 1.05, truth.p)
    res_near = fit(blocks, near, Penalty(0.0), FitConfig(rel_tol=1e-13, max_outer_iters=5000))
    err_near = errors(res_near.params)

    best = None
    for seed in range(10):
        res = fit(
            blocks,
            default_init(truth.p, truth.q, seed=seed),
            Penalty(0.0),
            FitConfig(rel_tol=1e-10, max_outer_iters=3000),
        )
        if best is None or res.trace[-1] < best.trace[-1]:
            best = res
    err_best = errors(best.params)
    dt = time.perf_counter() - t0
    check(
        "criterion 3 (noiseless recovery)",
        err_near <= 1e-3 and err_best <= 5e-2 and dt < 120,
        f"near-truth max err {err_near:.2e} (tol 1e-3), "
        f"best-of-10 max err {err_best:.2e} (tol 5e-2), {dt:.0f}s",
    )


def test_criterion_4_objective_ordering(study_fixed_q2):
    """Block descent beats the joint quasi-Newton baseline in median final Q."""
    rows = study_fixed_q2["rows"]
    cbd = np.median([r["final_Q"] for r in rows])
    sqn = np.median([r["baseline_Q"] for r in rows])
    check(
        "criterion 4 (objective ordering, 20 replicates)",
        cbd < sqn,
        f"CBD median Q {cbd:.3f} < joint BFGS median Q {sqn:.3f}",
    )


def test_study_rmse_example(study_fixed_q2):
    """Desk-scale analogue of the published q=2, lambda=0 RMSE table column."""
    rmse = study_fixed_q2["rmse"]["alpha_outer"]
    pct = study_fixed_q2["rmse"]["outliers_pct"]
    check(
        "study example (alpha alpha^T RMSE, q=2, lambda=0)",
        rmse < 0.6,
        f"RMSE {rmse:.3f} < 0.6 ({pct:.0f}% extreme estimates excluded)",
    )


def test_criterion_5_cv_sanity(study_cv_min):
    """Min-rule CV over (q, lambda): q_eff lands within 1 of the truth in at
    least half the replicates."""
    frac = study_cv_min["qeff_within_1"]
    check(
        "criterion 5 (CV sanity, 20 replicates)",
        frac >= 0.5,
        f"fraction |q_eff - 2| <= 1 is {frac:.2f} (needs >= 0.5); "
        f"distribution {study_cv_min['qeff_abs_dev']}",
    )


def test_criterion_6_estimator_correctness():
    """Kernel estimator equals a brute-force double loop; hand value checks."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(1006)
    lags = default_lag_grid(UNIT)
    worst = 0.0
    for _ in range(30):
        p = int(rng.integers(1, 4))
        pattern = random_pattern(rng, p=p, max_points=20)
        intensities = [constant_intensity(pattern, i) for i in range(p)]
        est = estimate_pcf(pattern, intensities, lags, 0.02)
        oracle = brute_force_pcf(pattern, intensities, lags, 0.02)
        denom = max(1.0, np.abs(oracle).max())
        worst = max(worst, float(np.abs(est.ghat - oracle).max() / denom))

    from mlgcp.patterns import Intensity, MultiPointPattern

    pattern = MultiPointPattern(UNIT, [[[0.3, 0.5]], [[0.3, 0.6]]])
    ones = [Intensity(UNIT, constant=1.0)] * 2
    est = estimate_pcf(pattern, ones, lags=np.array([0.1]), bandwidth=0.005)
    hand = (1.0 / (2.0 * np.pi * 0.1)) * (100.0 / 0.9)
    hand_err = abs(est.ghat[0, 1, 0] - hand)
    dt = time.perf_counter() - t0
    check(
        "criterion 6 (estimator correctness)",
        worst <= 1e-12 and hand_err <= 1e-9,
        f"30 patterns, worst rel err {worst:.2e} (tol 1e-12); "
        f"hand example |err| {hand_err:.2e} (tol 1e-9), {dt:.1f}s",
    )


def test_criterion_7_invariance_suite():
    """Exact equality under column permutation + sign flips, 100 instances."""
    rng = np.random.default_rng(1007)
    ok = True
    for _ in range(100):
        params = random_params(rng)
        other = permuted_flipped(params, rng)
        blocks = random_blocks(rng, params)
        pen = Penalty(float(rng.uniform(0, 1)), float(rng.uniform(0, 1)))
        i, j = rng.integers(0, params.p, 2)
        t = float(rng.uniform(0, 0.4))
        ok &= objective_Q(blocks, params) == objective_Q(blocks, other)
        ok &= objective_Q_lambda(blocks, params, pen) == objective_Q_lambda(
            blocks, other, pen
        )
        ok &= cross_pcf(params, i, j, t) == cross_pcf(other, i, j, t)
        ok &= proportion_of_variance(params, i, t) == proportion_of_variance(other, i, t)
        c1, t1 = latent_covariances(params)
        c2, t2 = latent_covariances(other)
        ok &= np.array_equal(c1, c2) and np.array_equal(t1, t2)
        ok &= np.array_equal(row_distance_matrix(params), row_distance_matrix(other))
        if not ok:
            break
    check("criterion 7 (invariance suite)", bool(ok), "100 instances, exact equality")


def test_criterion_8_scale_demonstration():
    """86 types, 4 factors, one penalized fit well inside the time budget."""
    rng = np.random.default_rng(1008)
    p, q = 86, 4
    alpha = np.where(rng.random((p, q)) < 0.4, 0.0, rng.normal(0, 0.6, (p, q)))
    truth = ModelParams(
        alpha,
        rng.uniform(0.2, 1.5, p),
        [0.02, 0.03, 0.04, 0.05],
        rng.uniform(0.01, 0.07, p),
    )
    clean = noiseless_design(truth, LAGS)
    ylog = clean.ylog + rng.normal(0, 0.05, clean.ylog.shape)
    ylog = (ylog + ylog.transpose(1, 0, 2)) / 2.0
    blocks = DesignBlocks(ylog, clean.w, LAGS)
    t0 = time.perf_counter()
    # lambda small enough that the fitted model stays genuinely loaded
    res = fit(blocks, default_init(p, q, seed=7), Penalty(0.05, 0.5), FitConfig())
    dt = time.perf_counter() - t0
    active_cols = int(np.sum(np.max(np.abs(res.params.alpha), axis=0) > 1e-10))
    nonzero = int(np.sum(np.abs(res.params.alpha) > 1e-10))
    ok = dt < 900 and bool(np.all(np.diff(res.trace) <= 1e-12)) and active_cols == 4
    check(
        "criterion 8 (p=86 scale demonstration)",
        ok,
        f"fit took {dt:.1f}s (budget 900s), {res.n_iter} passes, "
        f"converged={res.converged}, {nonzero}/344 loadings nonzero, "
        f"{active_cols} active columns",
    )
