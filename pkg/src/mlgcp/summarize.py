"""Derived summaries of a fitted model: variance decomposition, lag-zero
covariance/correlation matrices, type clustering, and histogram tables."""

from __future__ import annotations

import numpy as np
from scipy.cluster.hierarchy import linkage
from scipy.spatial.distance import squareform

from .model import (
    ModelParams,
    latent_covariances,
    proportion_of_variance,
    q_eff,
    row_distance_matrix,
)

__all__ = ["correlation_from_covariance", "merge_tree", "correlation_histogram", "summarize_params"]

# Table breakpoints for the correlation distribution summaries.
CORR_BIN_EDGES = (-1.0, -0.5, -0.2, 0.0, 0.2, 0.5, 1.0)


def correlation_from_covariance(cov: np.ndarray) -> np.ndarray:
    """Normalize to correlations; types with zero variance get correlation 0."""
    sd = np.sqrt(np.diag(cov))
    with np.errstate(divide="ignore", invalid="ignore"):
        corr = cov / np.outer(sd, sd)
    corr[~np.isfinite(corr)] = 0.0
    return corr


def merge_tree(dist: np.ndarray):
    """Average-linkage agglomerative clustering of a distance matrix.

    Returns rows [left, right, height, size] in scipy linkage convention
    (leaves 0..p-1, internal node p+m created by merge m).
    """
    p = dist.shape[0]
    if p == 1:
        return []
    Z = linkage(squareform(dist, checks=False), method="average")
    return [[int(a), int(b), float(h), int(n)] for a, b, h, n in Z]


def correlation_histogram(corr: np.ndarray):
    """Counts of the off-diagonal (i < j) correlations per table bin."""
    iu = np.triu_indices(corr.shape[0], k=1)
    vals = corr[iu]
    counts, _ = np.histogram(vals, bins=CORR_BIN_EDGES)
    total = max(len(vals), 1)
    return [
        {
            "lower": CORR_BIN_EDGES[b],
            "upper": CORR_BIN_EDGES[b + 1],
            "count": int(counts[b]),
            "percent": 100.0 * counts[b] / total,
        }
        for b in range(len(CORR_BIN_EDGES) - 1)
    ]


def summarize_params(params: ModelParams, lags=(0.0,)) -> dict:
    """Summary bundle for a parameter estimate.

    Keys: pv (per type, per requested lag), covariance and correlation
    matrices (common-field part and total), row distances, average-linkage
    merge tree, q_eff, and correlation histograms over the table bins.
    """
    lags = [float(t) for t in np.atleast_1d(lags)]
    common, total = latent_covariances(params)
    corr_common = correlation_from_covariance(common)
    corr_total = correlation_from_covariance(total)
    dist = row_distance_matrix(params)
    pv = [
        [float(proportion_of_variance(params, i, t)) for t in lags]
        for i in range(params.p)
    ]
    return {
        "p": params.p,
        "q": params.q,
        "q_eff": q_eff(params.alpha),
        "lags": lags,
        "pv": pv,
        "cov_common": common.tolist(),
        "cov_total": total.tolist(),
        "corr_common": corr_common.tolist(),
        "corr_total": corr_total.tolist(),
        "row_distances": dist.tolist(),
        "merge_tree": merge_tree(dist),
        "linkage": "average",
        "corr_histogram": {
            "common": correlation_histogram(corr_common),
            "total": correlation_histogram(corr_total),
        },
    }
