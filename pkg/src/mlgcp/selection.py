"""Two-dimensional K-fold cross-validation over (q, lambda).

Folds hold out blocks of consecutive off-diagonal index triples (i, j, k),
i < j, arranged lexicographically: consecutive lags of one pair are strongly
correlated, so they leave together, and diagonal triples never enter a fold
(they mostly inform sigma2/psi, not q).  Holding out a triple zeroes both
(i, j, k) and its mirror (j, i, k) during fitting -- the criterion sums over
ordered pairs, so leaving the mirror in would leak the held-out observation.
Held-out prediction errors are scored with the original weights.

Selection: the Min rule takes the grid argmin (ties toward smaller q, then
larger lambda); the 1-SE rule takes the smallest q, then largest lambda,
whose score is within one standard error of the minimum, with the standard
error computed from the Min cell's fold scores.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .design import DesignBlocks, Penalty, fitted_log
from .model import ModelParams, Window, q_eff
from .optimizer import FitConfig, default_init, fit_path

__all__ = [
    "FoldAssignment",
    "CvGrid",
    "make_folds",
    "cv_score",
    "evaluate_cv_grid",
    "select_min",
    "select_one_se",
    "default_lambda_grid",
    "default_q_grid",
]


def default_lambda_grid() -> np.ndarray:
    """{0} followed by 19 log-linear values from 1e-3 to 5 (20 in total)."""
    return np.concatenate([[0.0], np.geomspace(1e-3, 5.0, 19)])


def default_q_grid(p: int) -> list:
    return list(range(0, min(p, 10) + 1))


@dataclass
class FoldAssignment:
    """K disjoint sets of off-diagonal triples (i, j, k) with i < j."""

    folds: list  # K arrays of shape (n_c, 3)
    block_length: int
    p: int
    L: int
    seed: int = 0

    @property
    def K(self) -> int:
        return len(self.folds)


def _offdiag_triples(p: int, L: int) -> np.ndarray:
    triples = [(i, j, k) for i in range(p) for j in range(i + 1, p) for k in range(L)]
    return np.array(triples, dtype=int).reshape(-1, 3)


def make_folds(p: int, L: int, K: int, block_length: int = 5, seed: int = 0) -> FoldAssignment:
    """Lexicographic blocking, then random balanced block-to-fold assignment."""
    if K < 2:
        raise ValueError("K must be >= 2")
    if block_length < 1:
        raise ValueError("block length must be >= 1")
    triples = _offdiag_triples(p, L)
    n_blocks = -(-len(triples) // block_length)
    if n_blocks < K:
        raise ValueError(
            f"only {n_blocks} blocks of length {block_length} for K={K} folds"
        )
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n_blocks)
    folds = []
    for c in range(K):
        rows = [
            triples[b * block_length : (b + 1) * block_length] for b in perm[c::K]
        ]
        folds.append(np.vstack(rows))
    return FoldAssignment(folds=folds, block_length=block_length, p=p, L=L, seed=seed)


def _heldout_weights(blocks: DesignBlocks, fold_triples: np.ndarray) -> np.ndarray:
    w = blocks.w.copy()
    i, j, k = fold_triples.T
    w[i, j, k] = 0.0
    w[j, i, k] = 0.0
    return w


def _fold_error(blocks: DesignBlocks, params: ModelParams, fold_triples: np.ndarray) -> float:
    """sum over held-out triples of (Y_ijk - Yhat_ijk)^2, original weights."""
    fit = fitted_log(blocks, params)
    i, j, k = fold_triples.T
    resid = blocks.ylog[i, j, k] - fit[i, j, k]
    return float(np.sum(blocks.w[i, j, k] * resid**2))


def _init_window(blocks: DesignBlocks) -> Window:
    # square window matching the lag grid convention (max lag = 0.25 * scale)
    s = blocks.lags[-1] / 0.25
    return Window(0.0, s, 0.0, s)


def cv_score(
    blocks: DesignBlocks,
    q: int,
    penalty: Penalty,
    folds: FoldAssignment,
    config: FitConfig = None,
    seed: int = 0,
    init: ModelParams = None,
):
    """CV score of one (q, lambda) cell: (mean, per-fold scores, converged).

    Fold fits start from the default random initialization (seeded per fold)
    unless an explicit init is given.
    """
    config = config or FitConfig()
    if not np.any(blocks.w):
        warnings.warn("all weights are zero; CV score is degenerate")
        return 0.0, [0.0] * folds.K, [True] * folds.K
    window = _init_window(blocks)
    scores, flags = [], []
    for c, triples in enumerate(folds.folds):
        start = init if init is not None else default_init(
            p=blocks.p, q=q, window=window, seed=np.random.SeedSequence([seed, q, c])
        )
        fold_blocks = blocks.with_weights(_heldout_weights(blocks, triples))
        res = fit_path(fold_blocks, start, [penalty.lam], penalty.xi, config)[-1]
        scores.append(_fold_error(blocks, res.params, triples))
        flags.append(res.converged)
    return float(np.mean(scores)), scores, flags


@dataclass
class CvGrid:
    """CV surface over (q, lambda) for one xi."""

    xi: float
    q_values: list
    lambdas: np.ndarray
    scores: np.ndarray  # (n_q, n_lambda)
    fold_scores: np.ndarray  # (n_q, n_lambda, K)
    converged_folds: np.ndarray  # (n_q, n_lambda) ints
    qeff: np.ndarray = None  # (n_q, n_lambda) ints from full-data fits
    full_params: dict = field(default_factory=dict)  # (qi, mi) -> ModelParams

    @property
    def K(self) -> int:
        return self.fold_scores.shape[2]


def _path_task(args):
    """One (q, fold) path of fits; fold None means full data (for q_eff)."""
    (ylog, w, lags, q, lambdas, xi, triples, seed_key, config) = args
    blocks = DesignBlocks(ylog, w, lags)
    window = _init_window(blocks)
    init = default_init(p=blocks.p, q=q, window=window, seed=np.random.SeedSequence(seed_key))
    if triples is not None:
        fit_blocks = blocks.with_weights(_heldout_weights(blocks, triples))
    else:
        fit_blocks = blocks
    results = fit_path(fit_blocks, init, lambdas, xi, config)
    if triples is not None:
        errs = [_fold_error(blocks, r.params, triples) for r in results]
        return np.array(errs), np.array([r.converged for r in results]), None
    qeffs = np.array([q_eff(r.params.alpha) for r in results])
    return qeffs, np.array([r.converged for r in results]), [r.params for r in results]


def evaluate_cv_grid(
    blocks: DesignBlocks,
    q_values,
    lambdas=None,
    xi: float = 1.0,
    K: int = 8,
    block_length: int = 5,
    seed: int = 0,
    config: FitConfig = None,
    workers: int = 1,
    with_full_fits: bool = True,
) -> CvGrid:
    """Evaluate the CV surface; fits along each lambda path are warm started.

    All (q, fold) tasks are independent; with workers > 1 they run in a
    process pool and are reduced by task key, so results do not depend on
    completion order.
    """
    config = config or FitConfig()
    q_values = sorted(int(q) for q in q_values)
    lambdas = default_lambda_grid() if lambdas is None else np.asarray(lambdas, dtype=float)
    folds = make_folds(blocks.p, blocks.L, K, block_length, seed)
    tasks = {}
    for qi, q in enumerate(q_values):
        for c, triples in enumerate(folds.folds):
            tasks[(qi, c)] = (
                blocks.ylog,
                blocks.w,
                blocks.lags,
                q,
                lambdas,
                xi,
                triples,
                [seed, q, c],
                config,
            )
        if with_full_fits:
            tasks[(qi, -1)] = (
                blocks.ylog,
                blocks.w,
                blocks.lags,
                q,
                lambdas,
                xi,
                None,
                [seed, q, K],
                config,
            )
    keys = sorted(tasks)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outs = dict(zip(keys, pool.map(_path_task, [tasks[k] for k in keys])))
    else:
        outs = {k: _path_task(tasks[k]) for k in keys}

    n_q, n_lam = len(q_values), len(lambdas)
    fold_scores = np.zeros((n_q, n_lam, K))
    converged = np.zeros((n_q, n_lam), dtype=int)
    qeff = np.full((n_q, n_lam), -1, dtype=int) if with_full_fits else None
    full_params = {}
    for (qi, c), (vals, flags, paramlist) in outs.items():
        if c >= 0:
            fold_scores[qi, :, c] = vals
            converged[qi, :] += flags.astype(int)
        else:
            qeff[qi, :] = vals
            for mi, pars in enumerate(paramlist):
                full_params[(qi, mi)] = pars
    return CvGrid(
        xi=xi,
        q_values=q_values,
        lambdas=lambdas,
        scores=fold_scores.mean(axis=2),
        fold_scores=fold_scores,
        converged_folds=converged,
        qeff=qeff,
        full_params=full_params,
    )


def select_min(grid: CvGrid):
    """Grid argmin; ties broken toward smaller q, then larger lambda.

    Returns (lam, q, qi, mi)."""
    best = None
    for qi, q in enumerate(grid.q_values):
        for mi, lam in enumerate(grid.lambdas):
            key = (grid.scores[qi, mi], q, -lam)
            if best is None or key < best[0]:
                best = (key, lam, q, qi, mi)
    _, lam, q, qi, mi = best
    return float(lam), int(q), qi, mi


def one_se_threshold(grid: CvGrid):
    """Min-cell score plus its standard error sqrt(sum (CV_c - CV)^2 / ((K-1)K))."""
    _, _, qi, mi = select_min(grid)
    cv = grid.scores[qi, mi]
    cs = grid.fold_scores[qi, mi]
    K = grid.K
    se = float(np.sqrt(np.sum((cs - cv) ** 2) / ((K - 1) * K)))
    return cv + se, se


def select_one_se(grid: CvGrid):
    """Smallest q, then largest lambda, within one SE of the minimum score.

    Returns (lam, q, qi, mi)."""
    thr, _ = one_se_threshold(grid)
    for qi, q in enumerate(grid.q_values):  # q_values sorted ascending
        ok = np.flatnonzero(grid.scores[qi] <= thr)
        if ok.size:
            mi = int(ok[np.argmax(grid.lambdas[ok])])
            return float(grid.lambdas[mi]), int(q), qi, mi
    raise RuntimeError("empty CV grid")
