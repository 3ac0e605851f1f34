"""Nonparametric kernel estimation of cross pair correlation functions.

For each ordered pair of types (i, j) and lag t_k the estimate is

    ghat_ij(t_k) = 1/(2 pi t_k) * sum_{u in X_i, v in X_j, u != v}
                   k_b(t_k - |u-v|) / (rho_i(u) rho_j(v) |W n W_{u-v}|)

with a uniform kernel k_b of half-width b and translation edge correction
|W n W_h| = (width - |h_x|)(height - |h_y|) on rectangles.  The double sum
is evaluated by a compiled kernel when available (``mlgcp._pcf_accel``,
built from Cython), otherwise by a numpy fallback; both produce the same
sums up to float addition order.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from .model import Window
from .patterns import Intensity, MultiPointPattern, constant_intensity
from . import _pcf_numpy

try:
    from . import _pcf_accel
except ImportError:  # pure-python install; keep the numpy path
    _pcf_accel = None

HAVE_COMPILED_KERNEL = _pcf_accel is not None

__all__ = [
    "PcfEstimate",
    "estimate_pcf",
    "translation_overlap",
    "default_lag_grid",
    "default_bandwidth",
    "default_weights",
    "log_pcf_response",
    "write_pcf_csv",
    "read_pcf_csv",
    "HAVE_COMPILED_KERNEL",
]

# Defaults from the unit-square protocol; scaled by window diameter otherwise.
_LAG_MIN, _LAG_MAX, _NUM_LAGS = 0.025, 0.25, 25
_BANDWIDTH = 0.005


@dataclass
class PcfEstimate:
    """ghat[i, j, k] on a positive, strictly increasing lag grid."""

    lags: np.ndarray
    ghat: np.ndarray
    bandwidth: float
    skipped_pairs: int = 0

    def __post_init__(self):
        self.lags = np.asarray(self.lags, dtype=float)
        self.ghat = np.asarray(self.ghat, dtype=float)
        if np.any(self.lags <= 0) or np.any(np.diff(self.lags) <= 0):
            raise ValueError("lags must be positive and strictly increasing")
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be > 0")
        p = self.ghat.shape[0]
        if self.ghat.shape != (p, p, len(self.lags)):
            raise ValueError("ghat must have shape (p, p, L)")

    @property
    def p(self) -> int:
        return self.ghat.shape[0]


def _window_scale(window: Window) -> float:
    # relative to the unit square reference window
    return window.diameter / np.sqrt(2.0)


def default_lag_grid(window: Window) -> np.ndarray:
    s = _window_scale(window)
    return np.linspace(_LAG_MIN * s, _LAG_MAX * s, _NUM_LAGS)


def default_bandwidth(window: Window) -> float:
    return _BANDWIDTH * _window_scale(window)


def translation_overlap(window: Window, h) -> float:
    """Area of W intersected with its translate by h."""
    h = np.asarray(h, dtype=float)
    return max(0.0, window.width - abs(h[0])) * max(0.0, window.height - abs(h[1]))


def _select_backend(backend):
    if backend in (None, "auto"):
        return _pcf_accel if HAVE_COMPILED_KERNEL else _pcf_numpy
    if backend == "compiled":
        if not HAVE_COMPILED_KERNEL:
            raise RuntimeError("compiled kernel not available; rebuild with Cython")
        return _pcf_accel
    if backend == "numpy":
        return _pcf_numpy
    raise ValueError(f"unknown backend {backend!r}")


def estimate_pcf(
    pattern: MultiPointPattern,
    intensities=None,
    lags=None,
    bandwidth=None,
    backend=None,
) -> PcfEstimate:
    """Kernel estimate of all cross pair correlation functions.

    intensities: one Intensity per type, or None for the constant estimates
    n_i / |W|.  Pairs whose translation overlap is zero are skipped and
    counted in ``skipped_pairs``.  ghat is exactly symmetric in (i, j): the
    two orderings of a cross pair contribute identical terms, so each
    unordered type pair is accumulated once and mirrored.
    """
    window = pattern.window
    if intensities is None:
        intensities = [constant_intensity(pattern, i) for i in range(pattern.p)]
    if lags is None:
        lags = default_lag_grid(window)
    if bandwidth is None:
        bandwidth = default_bandwidth(window)
    lags = np.ascontiguousarray(lags, dtype=float)
    if np.any(lags <= 0) or np.any(np.diff(lags) <= 0):
        raise ValueError("lags must be positive and strictly increasing")
    if bandwidth <= 0:
        raise ValueError("bandwidth must be > 0")
    kernel = _select_backend(backend)

    p = pattern.p
    L = len(lags)
    shifted = [
        np.ascontiguousarray(pts - [window.xmin, window.ymin]) for pts in pattern.points
    ]
    rho = [
        np.ascontiguousarray(intensities[i].at(pattern.points[i]), dtype=float)
        for i in range(p)
    ]
    norm = 2.0 * np.pi * lags
    ghat = np.zeros((p, p, L))
    skipped = 0
    for i in range(p):
        for j in range(i, p):
            sums, skip = kernel.accumulate_pair_sums(
                shifted[i],
                shifted[j],
                rho[i],
                rho[j],
                i == j,
                window.width,
                window.height,
                lags,
                bandwidth,
            )
            skipped += skip
            ghat[i, j] = sums / norm
            if i != j:
                ghat[j, i] = ghat[i, j]
    return PcfEstimate(lags=lags, ghat=ghat, bandwidth=bandwidth, skipped_pairs=skipped)


def default_weights(est: PcfEstimate) -> np.ndarray:
    """Weights ghat_ij/2 off the diagonal and ghat_ii on it; nonpositive
    estimates get weight 0."""
    w = est.ghat / 2.0
    p = est.p
    idx = np.arange(p)
    w[idx, idx, :] = est.ghat[idx, idx, :]
    return np.where(est.ghat > 0, w, 0.0)


def neutralized_log(est: PcfEstimate, weights):
    """log ghat with nonpositive entries neutralized.

    Returns (ylog, w_eff): where ghat <= 0 the log is undefined, so the entry
    is emitted as 0 with its weight forced to 0 (the pair-lag then contributes
    nothing to the objective).
    """
    weights = np.asarray(weights, dtype=float)
    if weights.shape != est.ghat.shape:
        raise ValueError("weights must have shape (p, p, L)")
    if np.any(weights < 0) or not np.all(np.isfinite(weights)):
        raise ValueError("weights must be finite and >= 0")
    ok = est.ghat > 0
    ylog = np.where(ok, np.log(np.where(ok, est.ghat, 1.0)), 0.0)
    return ylog, np.where(ok, weights, 0.0)


def log_pcf_response(est: PcfEstimate, weights):
    """Weighted response vectors Y_ij[k] = sqrt(w_ijk) log ghat_ij(t_k).

    Returns (Y, w_eff) with the effective weights after neutralizing
    nonpositive ghat entries.
    """
    ylog, w_eff = neutralized_log(est, weights)
    return np.sqrt(w_eff) * ylog, w_eff


def write_pcf_csv(path, est: PcfEstimate, weights=None):
    """Write columns i,j,lag,ghat,weight (types 1-based, all ordered pairs)."""
    if weights is None:
        weights = default_weights(est)
    p, L = est.p, len(est.lags)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["i", "j", "lag", "ghat", "weight"])
        for i in range(p):
            for j in range(p):
                for k in range(L):
                    writer.writerow(
                        [
                            i + 1,
                            j + 1,
                            repr(float(est.lags[k])),
                            repr(float(est.ghat[i, j, k])),
                            repr(float(weights[i, j, k])),
                        ]
                    )


def read_pcf_csv(path, bandwidth=None):
    """Inverse of write_pcf_csv; returns (PcfEstimate, weights).

    The bandwidth is not stored in the file; pass it if downstream code needs
    a faithful value (defaults to the unit-square bandwidth).
    """
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            rows.append(
                (
                    int(row["i"]) - 1,
                    int(row["j"]) - 1,
                    float(row["lag"]),
                    float(row["ghat"]),
                    float(row["weight"]),
                )
            )
    if not rows:
        raise ValueError(f"{os.fspath(path)}: empty pcf file")
    p = max(r[0] for r in rows) + 1
    lags = np.array(sorted({r[2] for r in rows}))
    kidx = {lag: k for k, lag in enumerate(lags)}
    ghat = np.zeros((p, p, len(lags)))
    weights = np.zeros((p, p, len(lags)))
    for i, j, lag, g, w in rows:
        ghat[i, j, kidx[lag]] = g
        weights[i, j, kidx[lag]] = w
    est = PcfEstimate(
        lags=lags,
        ghat=ghat,
        bandwidth=_BANDWIDTH if bandwidth is None else bandwidth,
    )
    return est, weights
