"""Weighted least squares design for fitting the latent factor model.

The criterion is a sum over all ordered type pairs (off-diagonal pairs
therefore count twice; the row update formulas rely on that factor 2):

    Q(theta) = sum_{i,j} || Y_ij - X_ij(phi, psi) beta_ij(alpha, sigma2) ||^2

with Y_ij[k] = sqrt(w_ijk) log ghat_ij(t_k) and design rows
sqrt(w_ijk) [r_1(t_k; phi_1) ... r_q(t_k; phi_q)] plus a trailing
c_i(t_k; psi_i) column on the diagonal.  The regularized criterion adds the
elastic net penalty lambda * sum_il [(1-xi) a_il^2 / 2 + xi |a_il|] on the
loading matrix only.

Entries are stored unweighted (``ylog``) together with the weights; zero
weight is the single mechanism for both hold-out and degenerate ghat entries,
and zero-weight rows are kept so shapes never change.

objective_Q reduces over loading columns in a canonical order (see
``model._canonical_columns``), which makes the column permutation and sign
flip invariance hold bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ModelParams, _canonical_columns
from .pcf import PcfEstimate, neutralized_log

__all__ = [
    "Penalty",
    "DesignBlocks",
    "build_design",
    "noiseless_design",
    "objective_Q",
    "objective_Q_lambda",
    "grad_Q",
]


@dataclass
class Penalty:
    """Elastic net penalty lambda * [(1-xi) a^2/2 + xi |a|]."""

    lam: float = 0.0
    xi: float = 1.0

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if not 0.0 <= self.xi <= 1.0:
            raise ValueError("xi must be in [0, 1]")

    def value(self, alpha) -> float:
        if self.lam == 0.0 or np.asarray(alpha).size == 0:
            return 0.0
        alpha = np.asarray(alpha, dtype=float)
        return self.lam * float(
            np.sum((1.0 - self.xi) * 0.5 * alpha**2 + self.xi * np.abs(alpha))
        )


class DesignBlocks:
    """Responses, weights and cached correlation rows for one data set.

    ylog, w : (p, p, L) symmetric arrays (log ghat and weights)
    lags    : (L,) positive lag grid

    Correlation rows r(t_k; phi) and columns c_i(t_k; psi_i) are cached keyed
    on the (phi, psi) values, so alpha / sigma2 block updates never recompute
    them.  ylog and w are treated as immutable after construction.
    """

    def __init__(self, ylog, weights, lags):
        self.ylog = np.asarray(ylog, dtype=float)
        self.w = np.asarray(weights, dtype=float)
        self.lags = np.asarray(lags, dtype=float)
        p = self.ylog.shape[0]
        L = len(self.lags)
        if self.ylog.shape != (p, p, L) or self.w.shape != (p, p, L):
            raise ValueError("ylog and weights must have shape (p, p, L)")
        if np.any(self.w < 0):
            raise ValueError("weights must be >= 0")
        self.sw = np.sqrt(self.w)
        self.p = p
        self.L = L
        self._phi = None
        self._psi = None
        self._R = None
        self._C = None

    def with_weights(self, weights) -> "DesignBlocks":
        """New blocks sharing ylog/lags with different weights (CV hold-out)."""
        return DesignBlocks(self.ylog, weights, self.lags)

    def corr(self, phi, psi):
        """Cached (R, C): R[k, l] = r(t_k; phi_l), C[k, i] = c_i(t_k; psi_i)."""
        phi = np.asarray(phi, dtype=float)
        psi = np.asarray(psi, dtype=float)
        if self._phi is None or not (
            np.array_equal(phi, self._phi) and np.array_equal(psi, self._psi)
        ):
            t = self.lags[:, None]
            self._R = np.exp(-t / phi[None, :]) if len(phi) else np.zeros((self.L, 0))
            self._C = np.exp(-t / psi[None, :])
            self._phi = phi.copy()
            self._psi = psi.copy()
        return self._R, self._C

    def corr_dlog(self, phi, psi):
        """Derivatives of the cached rows w.r.t. log scales:
        d r(t; s) / d log s = exp(-t/s) * (t/s)."""
        R, C = self.corr(phi, psi)
        t = self.lags[:, None]
        dR = R * (t / phi[None, :]) if len(phi) else R
        dC = C * (t / psi[None, :])
        return dR, dC

    def X(self, i, j, params: ModelParams) -> np.ndarray:
        """Design matrix of pair (i, j): (L, q), or (L, q+1) on the diagonal."""
        R, C = self.corr(params.phi, params.psi)
        X = self.sw[i, j][:, None] * R
        if i == j:
            X = np.hstack([X, (self.sw[i, i] * C[:, i])[:, None]])
        return X

    def Y(self, i, j) -> np.ndarray:
        """Response vector of pair (i, j), weights folded in."""
        return self.sw[i, j] * self.ylog[i, j]


def build_design(est: PcfEstimate, weights, params: ModelParams = None) -> DesignBlocks:
    """Blocks from a pcf estimate; nonpositive ghat entries are neutralized
    (response 0, weight 0).  If params is given the correlation cache is
    warmed for its scales."""
    ylog, w_eff = neutralized_log(est, weights)
    blocks = DesignBlocks(ylog, w_eff, est.lags)
    if params is not None:
        blocks.corr(params.phi, params.psi)
    return blocks


def noiseless_design(params: ModelParams, lags, weights=None) -> DesignBlocks:
    """Blocks whose responses equal the model's log cross pcf exactly.

    Default weights follow the ghat/2 off-diagonal, ghat diagonal rule
    applied to the theoretical values.
    """
    lags = np.asarray(lags, dtype=float)
    blocks_tmp = DesignBlocks(
        np.zeros((params.p, params.p, len(lags))),
        np.zeros((params.p, params.p, len(lags))),
        lags,
    )
    ylog = fitted_log(blocks_tmp, params)
    if weights is None:
        g = np.exp(ylog)
        weights = g / 2.0
        idx = np.arange(params.p)
        weights[idx, idx, :] = g[idx, idx, :]
    return DesignBlocks(ylog, weights, lags)


def _fitted_log_raw(blocks: DesignBlocks, alpha, sigma2, phi, psi) -> np.ndarray:
    R, C = blocks.corr(phi, psi)
    fit = np.einsum("il,jl,kl->ijk", alpha, alpha, R)
    idx = np.arange(len(sigma2))
    fit[idx, idx, :] += sigma2[:, None] * C.T
    return fit


def _Q_raw(blocks: DesignBlocks, alpha, sigma2, phi, psi) -> float:
    """Q without the canonical column reordering; fast path for optimizers."""
    fit = _fitted_log_raw(blocks, alpha, sigma2, phi, psi)
    return float(np.sum(blocks.w * (blocks.ylog - fit) ** 2))


def _grad_Q_raw(blocks: DesignBlocks, alpha, sigma2, phi, psi):
    R, C = blocks.corr(phi, psi)
    dR, dC = blocks.corr_dlog(phi, psi)
    fit = _fitted_log_raw(blocks, alpha, sigma2, phi, psi)
    E = 2.0 * blocks.w * (fit - blocks.ylog)
    idx = np.arange(len(sigma2))
    E_diag = E[idx, idx, :]  # (p, L)
    return {
        "alpha": 2.0 * np.einsum("ijk,jl,kl->il", E, alpha, R),
        "sigma2": np.einsum("ik,ki->i", E_diag, C),
        "log_phi": np.einsum("ijk,il,jl,kl->l", E, alpha, alpha, dR),
        "log_psi": sigma2 * np.einsum("ik,ki->i", E_diag, dC),
    }


def fitted_log(blocks: DesignBlocks, params: ModelParams) -> np.ndarray:
    """Model log cross pcf on the lag grid, shape (p, p, L):
    sum_l alpha_il alpha_jl r_l(t_k) + 1(i=j) sigma2_i c_i(t_k)."""
    return _fitted_log_raw(blocks, params.alpha, params.sigma2, params.phi, params.psi)


def _fitted_log_canonical(blocks: DesignBlocks, params: ModelParams) -> np.ndarray:
    alpha_c, phi_c = _canonical_columns(params.alpha, params.phi)
    t = blocks.lags[:, None]
    R = np.exp(-t / phi_c[None, :]) if len(phi_c) else np.zeros((blocks.L, 0))
    _, C = blocks.corr(params.phi, params.psi)
    fit = np.einsum("il,jl,kl->ijk", alpha_c, alpha_c, R)
    idx = np.arange(params.p)
    fit[idx, idx, :] += params.sigma2[:, None] * C.T
    return fit


def objective_Q(blocks: DesignBlocks, params: ModelParams) -> float:
    """Unpenalized criterion: weighted squared residuals over ordered pairs."""
    fit = _fitted_log_canonical(blocks, params)
    return float(np.sum(blocks.w * (blocks.ylog - fit) ** 2))


def objective_Q_lambda(blocks: DesignBlocks, params: ModelParams, penalty: Penalty) -> float:
    """Penalized criterion Q + lambda sum_il p(alpha_il)."""
    alpha_c, _ = _canonical_columns(params.alpha, params.phi)
    return objective_Q(blocks, params) + penalty.value(alpha_c)


def grad_Q(blocks: DesignBlocks, params: ModelParams):
    """Analytic gradient of Q w.r.t. (alpha, sigma2, log phi, log psi).

    Returns a dict with keys 'alpha' (p, q), 'sigma2' (p,), 'log_phi' (q,),
    'log_psi' (p,).
    """
    return _grad_Q_raw(blocks, params.alpha, params.sigma2, params.phi, params.psi)
