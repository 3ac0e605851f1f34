"""Cyclical block descent for the regularized least squares criterion.

One outer pass updates, in order: for each type i a nonnegative least squares
update of sigma2_i followed by a proximal Newton update of the loading row
alpha_i (quadratic model minimized by cyclical coordinate descent, then a
backtracking line search along the resulting direction on the true row
objective), and finally separate BFGS updates of the common and type-specific
correlation scales on the log scale.  Passes repeat until relative function
convergence.  Every block update either lowers the penalized criterion or
leaves its parameters unchanged, so the objective trace is non-increasing.

For a fit along an increasing lambda path, each fit is warm started from the
previous one.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .design import (
    DesignBlocks,
    Penalty,
    _Q_raw,
    objective_Q,
    objective_Q_lambda,
)
from .model import ModelParams, Window, UNIT_SQUARE

__all__ = [
    "FitConfig",
    "FitResult",
    "soft_threshold",
    "update_sigma2",
    "prox_newton_transform",
    "coordinate_update_alpha",
    "update_alpha_row",
    "update_scales",
    "fit",
    "fit_path",
    "default_init",
    "fit_joint_bfgs",
    "BaselineResult",
]

SQRT2 = math.sqrt(2.0)


@dataclass
class FitConfig:
    """Tuning knobs of the block descent.

    Convergence is declared when the penalized objective changes by at most
    rel_tol * max(1, |previous|) over one outer pass.  The line search starts
    at step t = ls_initial_step and multiplies by ls_backtrack until the row
    objective strictly decreases (at most ls_max_backtracks halvings; on
    failure the row is left unchanged).  Coordinate descent sweeps stop when
    the largest relative coordinate change drops below cd_tol.  Scale updates
    run at most qn_max_iters BFGS iterations per pass with gradient tolerance
    qn_gtol, restarting from the identity Hessian approximation each pass.
    """

    max_outer_iters: int = 500
    rel_tol: float = 1e-6
    ls_initial_step: float = 1.0
    ls_backtrack: float = 0.5
    ls_max_backtracks: int = 30
    cd_max_sweeps: int = 100
    cd_tol: float = 1e-8
    qn_max_iters: int = 25
    qn_gtol: float = 1e-8
    seed: int = 0


@dataclass
class FitResult:
    params: ModelParams
    trace: np.ndarray  # Q_lambda after each outer pass, trace[0] = initial
    converged: bool
    n_iter: int
    lam: float = 0.0
    xi: float = 1.0
    final_Q: float = float("nan")
    stalled_rows: int = 0  # line searches that found no decrease
    seconds: float = 0.0
    log: list = field(default_factory=list)  # rows (iteration, block, Q, Q_lambda, step)

    @property
    def final_Q_lambda(self) -> float:
        return float(self.trace[-1])


def soft_threshold(a: float, gamma: float) -> float:
    """sign(a) (|a| - gamma)_+"""
    return math.copysign(max(abs(a) - gamma, 0.0), a)


def update_sigma2(blocks: DesignBlocks, params: ModelParams, i: int):
    """Clamped least squares update of sigma2_i given everything else.

    Returns (value, active).  The block is inactive (current value returned,
    active=False) when the diagonal design column is identically zero -- all
    weights zero -- or when c_i(t; psi_i) has decayed below the lag grid's
    resolution, where the least squares division would manufacture a spike.
    """
    R, C = blocks.corr(params.phi, params.psi)
    ci = C[:, i]
    w_ii = blocks.w[i, i]
    den = float(np.sum(w_ii * ci * ci))
    if den == 0.0 or ci.max() < CORR_RESOLUTION:
        return float(params.sigma2[i]), False
    qfit = R @ (params.alpha[i] ** 2)
    num = float(np.sum(w_ii * ci * (blocks.ylog[i, i] - qfit)))
    return max(0.0, num / den), True


def prox_newton_transform(blocks: DesignBlocks, params: ModelParams, i: int):
    """Transformed blocks (Ystar, Xstar) of the quadratic model for row i.

    Off-diagonal pairs are exact (scaled by sqrt(2) to absorb the double
    count of ordered pairs); the diagonal pair is the second-order Taylor
    model around the current row:

        Ystar_ii = Y_ii + X_ii(1:q) alpha_i^2 - X_ii(q+1) sigma2_i
        Xstar_ii = 2 X_ii(1:q) Diag(alpha_i)

    Shapes: Ystar (p, L), Xstar (p, L, q).
    """
    R, C = blocks.corr(params.phi, params.psi)
    alpha = params.alpha
    sw_i = blocks.sw[i]  # (p, L)
    Ystar = SQRT2 * sw_i * blocks.ylog[i]
    Xstar = SQRT2 * sw_i[:, :, None] * R[None, :, :] * alpha[:, None, :]
    sw_ii = blocks.sw[i, i]
    Ystar[i] = sw_ii * (
        blocks.ylog[i, i] + R @ (alpha[i] ** 2) - C[:, i] * params.sigma2[i]
    )
    Xstar[i] = 2.0 * sw_ii[:, None] * R * alpha[i][None, :]
    return Ystar, Xstar


# A quadratic-model column whose squared norm is this far below the largest
# column is numerically zero (a collapsed scale or all-zero loadings); its
# flat direction gets the minimum-norm coordinate 0 instead of num/den with
# a denormal denominator.
DEAD_COLUMN_REL = 1e-20

# A correlation column that never rises above this value on the lag grid is
# below the data's resolution: the corresponding block is frozen rather than
# regressed on a vanishing column (which manufactures nugget spikes with
# arbitrarily large sigma2 / loadings while barely moving the objective).
CORR_RESOLUTION = math.exp(-5.0)


def _dead_columns(colsq: np.ndarray) -> np.ndarray:
    return colsq <= DEAD_COLUMN_REL * colsq.max(initial=0.0)


def coordinate_update_alpha(Ystar, Xstar, row, l: int, penalty: Penalty) -> float:
    """Exact minimizer of the quadratic model in coordinate l (soft threshold).

    row holds the current coordinates; the partial residual excludes
    coordinate l.  A (numerically) zero column forces a zero numerator, and
    the update returns 0.
    """
    colsq = np.einsum("jkl,jkl->l", Xstar, Xstar)
    if _dead_columns(colsq)[l]:
        return 0.0
    Xl = Xstar[:, :, l]
    res = Ystar - np.einsum("jkl,l->jk", Xstar, row)
    num = 2.0 * float(np.sum(Xl * (res + Xl * row[l])))
    den = 2.0 * float(colsq[l]) + penalty.lam * (1.0 - penalty.xi)
    return soft_threshold(num, penalty.lam * penalty.xi) / den


def _coordinate_descent(Ystar, Xstar, row0, penalty: Penalty, config: FitConfig, frozen=None):
    """Cyclical coordinate descent on the quadratic model; residuals tracked.

    frozen marks coordinates held at their current value (correlation row
    below resolution); dead columns get the minimum-norm coordinate 0.
    """
    row = np.array(row0, dtype=float)
    q = row.size
    if q == 0:
        return row
    colsq = np.einsum("jkl,jkl->l", Xstar, Xstar)
    dead = _dead_columns(colsq)
    den = 2.0 * colsq + penalty.lam * (1.0 - penalty.xi)
    thresh = penalty.lam * penalty.xi
    res = Ystar - np.einsum("jkl,l->jk", Xstar, row)
    for _ in range(config.cd_max_sweeps):
        max_change = 0.0
        for l in range(q):
            if frozen is not None and frozen[l]:
                continue
            if dead[l]:
                new = 0.0
            else:
                num = 2.0 * (float(np.sum(Xstar[:, :, l] * res)) + colsq[l] * row[l])
                new = soft_threshold(num, thresh) / den[l]
            delta = new - row[l]
            if delta != 0.0:
                res -= Xstar[:, :, l] * delta
                row[l] = new
                max_change = max(max_change, abs(delta) / max(1.0, abs(new)))
        if max_change < config.cd_tol:
            break
    return row


def row_objective(blocks: DesignBlocks, params: ModelParams, i: int, row, penalty: Penalty) -> float:
    """Q_{lambda,i}: the part of the criterion that depends on row i,

        2 sum_{j != i} ||Y_ij - Xtilde_ij row||^2
        + ||Y_ii - X_ii beta_ii||^2 + lambda sum_l p(row_l).
    """
    R, C = blocks.corr(params.phi, params.psi)
    F = (params.alpha * row) @ R.T  # (p, L); row j: sum_l row_l alpha_jl r_l(t_k)
    F[i] = R @ (row * row) + C[:, i] * params.sigma2[i]
    rowsums = np.sum(blocks.w[i] * (blocks.ylog[i] - F) ** 2, axis=1)
    return 2.0 * float(rowsums.sum()) - float(rowsums[i]) + penalty.value(row)


def update_alpha_row(blocks: DesignBlocks, params: ModelParams, i: int, penalty: Penalty, config: FitConfig):
    """One proximal Newton step on row i with backtracking line search.

    Returns (new_row, step): step is the accepted step size, 1.0 for a no-op
    direction, 0.0 when every backtrack failed (row left unchanged).
    """
    row0 = params.alpha[i].copy()
    if row0.size == 0:
        return row0, 1.0
    if penalty.lam * max(penalty.xi, 1.0 - penalty.xi) < 1e-6:
        # (Nearly) unpenalized fits freeze coordinates of below-resolution
        # columns: their flat num/den update would inflate loadings freely.
        # With a working penalty the soft threshold / ridge denominator
        # zeroes such coordinates on its own (zeroing is strict descent).
        R, _ = blocks.corr(params.phi, params.psi)
        frozen = R.max(axis=0) < CORR_RESOLUTION
    else:
        frozen = None
    Ystar, Xstar = prox_newton_transform(blocks, params, i)
    ahat = _coordinate_descent(Ystar, Xstar, row0, penalty, config, frozen=frozen)
    direction = ahat - row0
    if not np.any(direction):
        return row0, 1.0
    f0 = row_objective(blocks, params, i, row0, penalty)
    t = config.ls_initial_step
    for _ in range(config.ls_max_backtracks + 1):
        cand = row0 + t * direction
        if row_objective(blocks, params, i, cand, penalty) < f0:
            return cand, t
        t *= config.ls_backtrack
    return row0, 0.0


def _scale_bounds(blocks: DesignBlocks):
    """Identifiable range of the correlation scales for this lag grid.

    Below first-lag/8 a correlation column is (numerically) zero on the grid
    and only parameterizes nugget spikes; beyond the window diameter
    (reconstructed from the default grid convention, max lag = 0.25 *
    diameter / sqrt(2)) it is indistinguishable from a constant.
    """
    return blocks.lags[0] / 8.0, blocks.lags[-1] * 4.0 * SQRT2


def _bfgs_minimize(fun_grad, x0, max_iters, gtol):
    """Compact BFGS with Armijo backtracking; monotone by construction.

    fun_grad returns (f, gradient).  The inverse Hessian approximation starts
    at the identity.  Returns (x, f) of the best point reached.
    """
    x = np.asarray(x0, dtype=float).copy()
    f, g = fun_grad(x)
    H = np.eye(x.size)
    for _ in range(max_iters):
        if np.max(np.abs(g)) <= gtol:
            break
        p = -H @ g
        gTp = float(g @ p)
        if gTp >= 0.0:  # numerical loss of positive definiteness
            H = np.eye(x.size)
            p = -g
            gTp = -float(g @ g)
            if gTp == 0.0:
                break
        t = 1.0
        accepted = None
        for _ in range(30):
            xn = x + t * p
            fn, gn = fun_grad(xn)
            if fn <= f + 1e-4 * t * gTp:
                accepted = (xn, fn, gn)
                break
            t *= 0.5
        if accepted is None:
            break
        xn, fn, gn = accepted
        s = t * p
        y = gn - g
        x, f, g = xn, fn, gn
        ys = float(y @ s)
        if ys > 1e-10 * np.linalg.norm(y) * np.linalg.norm(s):
            rho = 1.0 / ys
            Hy = H @ y
            H = (
                H
                - rho * (np.outer(Hy, s) + np.outer(s, Hy))
                + (rho + rho * rho * float(y @ Hy)) * np.outer(s, s)
            )
    return x, f


def update_scales(blocks: DesignBlocks, params: ModelParams, which: str, config: FitConfig):
    """BFGS update of phi or psi through their logs; analytic gradients.

    Flat directions are frozen: phi_l when alpha column l is all zero, psi_i
    when sigma2_i = 0 or the diagonal weights of type i all vanish.  The
    returned vector never increases Q; scales are kept within the lag grid's
    identifiable range (see _scale_bounds).  Only the psi-dependent
    (diagonal) residual blocks are evaluated for the psi update.
    """
    if which not in ("phi", "psi"):
        raise ValueError("which must be 'phi' or 'psi'")
    alpha, sigma2 = params.alpha, params.sigma2
    p = params.p
    idx = np.arange(p)
    current = params.phi if which == "phi" else params.psi
    if which == "phi":
        active = np.max(np.abs(alpha), axis=0) > 0 if alpha.size else np.zeros(0, bool)
    else:
        diag_w = blocks.w[idx, idx, :].any(axis=1)
        active = (sigma2 > 0) & diag_w
    if not active.any():
        return current.copy()

    floor, ceil = _scale_bounds(blocks)
    lo, hi = math.log(floor), math.log(ceil)
    t_col = blocks.lags[:, None]

    def unpack(x):
        scales = current.copy()
        scales[active] = np.exp(np.clip(x, lo, hi))
        return scales

    if which == "phi":
        A2 = np.einsum("il,jl->ijl", alpha, alpha)
        _, C = blocks.corr(params.phi, params.psi)
        diag_add = sigma2[:, None] * C.T  # (p, L)

        def fun_grad(x):
            phi = unpack(x)
            R = np.exp(-t_col / phi[None, :])
            fit = np.einsum("ijl,kl->ijk", A2, R)
            fit[idx, idx, :] += diag_add
            diff = fit - blocks.ylog
            f = float(np.sum(blocks.w * diff * diff))
            dR = R * (t_col / phi[None, :])
            g = np.einsum("ijk,ijl,kl->l", 2.0 * blocks.w * diff, A2, dR)
            return f, g[active]

    else:
        R, _ = blocks.corr(params.phi, params.psi)
        base = (alpha * alpha) @ R.T  # (p, L): common part of the diagonal
        yd = blocks.ylog[idx, idx, :]
        wd = blocks.w[idx, idx, :]

        def fun_grad(x):  # diagonal residual blocks only; rest constant in psi
            psi = unpack(x)
            C = np.exp(-t_col / psi[None, :])
            diff = base + sigma2[:, None] * C.T - yd
            f = float(np.sum(wd * diff * diff))
            dC = C * (t_col / psi[None, :])
            g = sigma2 * np.einsum("ik,ki->i", 2.0 * wd * diff, dC)
            return f, g[active]

    x0 = np.log(np.clip(current[active], floor, ceil))
    x_best, _ = _bfgs_minimize(fun_grad, x0, config.qn_max_iters, config.qn_gtol)
    if not np.all(np.isfinite(x_best)):
        return current.copy()
    return unpack(x_best)


def fit(
    blocks: DesignBlocks,
    init: ModelParams,
    penalty: Penalty = None,
    config: FitConfig = None,
    keep_log: bool = False,
) -> FitResult:
    """Cyclical block descent until relative function convergence."""
    penalty = penalty or Penalty(0.0, 1.0)
    config = config or FitConfig()
    params = init.copy()
    t_start = time.perf_counter()
    q_lam = objective_Q_lambda(blocks, params, penalty)
    trace = [q_lam]
    log = []
    stalled = 0
    converged = False
    n_iter = 0
    for m in range(1, config.max_outer_iters + 1):
        n_iter = m
        for i in range(params.p):
            params.sigma2[i], _ = update_sigma2(blocks, params, i)
            if keep_log:
                log.append(
                    (
                        m,
                        f"sigma2[{i}]",
                        objective_Q(blocks, params),
                        objective_Q_lambda(blocks, params, penalty),
                        1.0,
                    )
                )
            row, step = update_alpha_row(blocks, params, i, penalty, config)
            params.alpha[i] = row
            if step == 0.0:
                stalled += 1
            if keep_log:
                log.append(
                    (
                        m,
                        f"alpha[{i}]",
                        objective_Q(blocks, params),
                        objective_Q_lambda(blocks, params, penalty),
                        step,
                    )
                )
        params.phi = update_scales(blocks, params, "phi", config)
        params.psi = update_scales(blocks, params, "psi", config)
        q_prev, q_lam = q_lam, objective_Q_lambda(blocks, params, penalty)
        if keep_log:
            log.append((m, "scales", objective_Q(blocks, params), q_lam, 1.0))
        trace.append(q_lam)
        if abs(q_prev - q_lam) <= config.rel_tol * max(1.0, abs(q_prev)):
            converged = True
            break
    return FitResult(
        params=params,
        trace=np.array(trace),
        converged=converged,
        n_iter=n_iter,
        lam=penalty.lam,
        xi=penalty.xi,
        final_Q=objective_Q(blocks, params),
        stalled_rows=stalled,
        seconds=time.perf_counter() - t_start,
        log=log,
    )


def fit_path(
    blocks: DesignBlocks,
    init: ModelParams,
    lambdas,
    xi: float = 1.0,
    config: FitConfig = None,
    keep_log: bool = False,
) -> list:
    """Sequential fits along an ascending lambda path with warm starts."""
    lambdas = list(lambdas)
    if any(b < a for a, b in zip(lambdas, lambdas[1:])):
        raise ValueError("lambda path must be sorted ascending")
    results = []
    start = init
    for lam in lambdas:
        res = fit(blocks, start, Penalty(lam, xi), config, keep_log=keep_log)
        results.append(res)
        start = res.params
    return results


def default_init(p: int, q: int, window: Window = UNIT_SQUARE, seed=0) -> ModelParams:
    """Random starting point: alpha ~ N(0, 0.05^2), sigma2 = 1, and scales
    uniform on [0.01, 0.05] times the window scale (deterministic per seed)."""
    rng = np.random.default_rng(seed)
    s = window.diameter / SQRT2
    return ModelParams(
        alpha=rng.normal(0.0, 0.05, size=(p, q)),
        sigma2=np.ones(p),
        phi=rng.uniform(0.01, 0.05, size=q) * s,
        psi=rng.uniform(0.01, 0.05, size=p) * s,
    )


@dataclass
class BaselineResult:
    final_Q: float
    n_iter: int
    seconds: float
    converged: bool


def fit_joint_bfgs(
    blocks: DesignBlocks, init: ModelParams, max_iters: int = 1000, log_scales: bool = False
) -> BaselineResult:
    """Joint quasi-Newton baseline: plain BFGS on the full parameter vector.

    Minimizes Q over theta = (alpha, sigma2, phi, psi) jointly with
    finite-difference gradients, scales on their natural (raw) parameter
    scale and the objective undefined (inf) for non-positive scales -- the
    off-the-shelf run the block descent is compared against.  log_scales=True
    gives the friendlier log-reparameterized variant.  Used only for
    objective/timing comparisons.
    """
    p, q = init.p, init.q
    t_start = time.perf_counter()

    def split(theta):
        alpha = theta[: p * q].reshape(p, q)
        sigma2 = theta[p * q : p * q + p]
        phi = theta[p * q + p : p * q + p + q]
        psi = theta[p * q + p + q :]
        if log_scales:
            phi = np.exp(np.clip(phi, -50, 50))
            psi = np.exp(np.clip(psi, -50, 50))
        return alpha, sigma2, phi, psi

    def fun(theta):
        alpha, sigma2, phi, psi = split(theta)
        if np.any(phi <= 0) or np.any(psi <= 0):
            return np.inf
        return _Q_raw(blocks, alpha, sigma2, phi, psi)

    scale0 = (np.log(init.phi), np.log(init.psi)) if log_scales else (init.phi, init.psi)
    theta0 = np.concatenate([init.alpha.ravel(), init.sigma2, *scale0])
    with np.errstate(all="ignore"):
        res = minimize(fun, theta0, method="BFGS", options={"maxiter": max_iters})
    return BaselineResult(
        final_Q=float(res.fun),
        n_iter=int(res.nit),
        seconds=time.perf_counter() - t_start,
        converged=bool(res.success),
    )
