"""Parametric model for multivariate log Gaussian Cox processes.

A p-variate process is driven by latent Gaussian fields: q common fields
shared across types through a p x q loading matrix ``alpha`` (correlation
scales ``phi``), plus one independent type-specific field per type with
variance ``sigma2[i]`` and correlation scale ``psi[i]``.  All correlation
functions are exponential, exp(-t/scale).

Cross pair correlation between types i and j at lag t:

    g_ij(t) = exp[ sum_l alpha_il alpha_jl exp(-t/phi_l)
                   + 1(i=j) sigma2_i exp(-t/psi_i) ]

The distribution is invariant to simultaneous column permutations of
(alpha, phi) and to sign flips of alpha columns.  Functions here are made
*bitwise* invariant by reducing over columns with exactly-rounded summation
(math.fsum), so the invariance is assertable with exact equality.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ModelParams",
    "Window",
    "exp_correlation",
    "beta_vector",
    "cross_pcf",
    "proportion_of_variance",
    "latent_covariances",
    "row_distance_matrix",
    "q_eff",
]

# Columns with no entry above this magnitude count as switched off; absorbs
# float residue on top of the exact zeros produced by soft thresholding.
QEFF_TOL = 1e-10


@dataclass
class Window:
    """Rectangular observation window [xmin, xmax] x [ymin, ymax]."""

    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def __post_init__(self):
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise ValueError("window must have positive width and height")

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def diameter(self) -> float:
        return math.hypot(self.width, self.height)

    def contains(self, xy) -> np.ndarray:
        xy = np.asarray(xy, dtype=float)
        return (
            (xy[..., 0] >= self.xmin)
            & (xy[..., 0] <= self.xmax)
            & (xy[..., 1] >= self.ymin)
            & (xy[..., 1] <= self.ymax)
        )


UNIT_SQUARE = Window(0.0, 1.0, 0.0, 1.0)


@dataclass
class ModelParams:
    """Full parameter state (alpha, sigma2, phi, psi).

    alpha  : (p, q) loading matrix, row i couples type i to the common fields
    sigma2 : (p,) nonnegative type-specific variances
    phi    : (q,) positive correlation scales of the common fields
    psi    : (p,) positive correlation scales of the type-specific fields

    q = 0 is allowed (alpha has zero columns; all common-field terms vanish).
    """

    alpha: np.ndarray
    sigma2: np.ndarray
    phi: np.ndarray
    psi: np.ndarray

    def __post_init__(self):
        self.alpha = np.atleast_2d(np.asarray(self.alpha, dtype=float))
        self.sigma2 = np.asarray(self.sigma2, dtype=float)
        self.phi = np.asarray(self.phi, dtype=float)
        self.psi = np.asarray(self.psi, dtype=float)
        p, q = self.alpha.shape
        if self.sigma2.shape != (p,) or self.psi.shape != (p,):
            raise ValueError("sigma2 and psi must have length p = alpha.shape[0]")
        if self.phi.shape != (q,):
            raise ValueError("phi must have length q = alpha.shape[1]")
        if not np.all(np.isfinite(self.alpha)):
            raise ValueError("alpha entries must be finite")
        if np.any(self.sigma2 < 0) or not np.all(np.isfinite(self.sigma2)):
            raise ValueError("sigma2 entries must be finite and >= 0")
        if np.any(self.phi <= 0) or np.any(self.psi <= 0):
            raise ValueError("phi and psi entries must be > 0")

    @property
    def p(self) -> int:
        return self.alpha.shape[0]

    @property
    def q(self) -> int:
        return self.alpha.shape[1]

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.alpha.copy(), self.sigma2.copy(), self.phi.copy(), self.psi.copy()
        )

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha.tolist(),
            "sigma2": self.sigma2.tolist(),
            "phi": self.phi.tolist(),
            "psi": self.psi.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        alpha = np.asarray(d["alpha"], dtype=float)
        if alpha.ndim == 1:  # p rows of an empty q=0 matrix serialize as []
            alpha = alpha.reshape(len(d["sigma2"]), 0)
        return cls(alpha, d["sigma2"], d["phi"], d["psi"])

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_json(cls, source) -> "ModelParams":
        if hasattr(source, "read"):
            d = json.load(source)
        elif isinstance(source, str) and source.lstrip().startswith("{"):
            d = json.loads(source)
        else:
            with open(source) as fh:
                d = json.load(fh)
        return cls.from_dict(d)


def exp_correlation(t, scale):
    """Exponential correlation exp(-t/scale); scale must be positive."""
    if np.any(np.asarray(scale) <= 0):
        raise ValueError("correlation scale must be > 0")
    return np.exp(-np.asarray(t, dtype=float) / scale)


def _canonical_columns(alpha, phi):
    """Order (alpha columns, phi) canonically and fix column signs.

    Any simultaneous column permutation or column sign flip of the input maps
    to the same output, so reductions over columns performed in this order are
    bitwise invariant under those transformations.
    """
    alpha = np.asarray(alpha, dtype=float)
    phi = np.asarray(phi, dtype=float)
    q = alpha.shape[1]
    if q == 0:
        return alpha, phi
    flipped = alpha.copy()
    for l in range(q):
        col = flipped[:, l]
        nz = np.nonzero(col)[0]
        if nz.size and col[nz[0]] < 0:
            flipped[:, l] = -col
    order = np.lexsort(np.vstack([flipped[::-1], phi]))
    return flipped[:, order], phi[order]


def _index_check(p, *indices):
    for i in indices:
        if not 0 <= i < p:
            raise IndexError(f"type index {i} out of range [0, {p})")


def beta_vector(params: ModelParams, i: int, j: int) -> np.ndarray:
    """Coefficient vector of the pair (i, j) in the least squares design.

    Off-diagonal pairs: (alpha_i1 alpha_j1, ..., alpha_iq alpha_jq).
    Diagonal pairs get sigma2_i appended after the squared loadings.
    """
    _index_check(params.p, i, j)
    prod = params.alpha[i] * params.alpha[j]
    if i == j:
        return np.append(prod, params.sigma2[i])
    return prod


def _common_term(alpha_i, alpha_j, phi, t):
    """sum_l alpha_il alpha_jl exp(-t/phi_l), exact-sum over canonical terms."""
    terms = alpha_i * alpha_j * np.exp(-t / phi)
    return math.fsum(terms)


def cross_pcf(params: ModelParams, i: int, j: int, t):
    """Theoretical cross pair correlation g_ij(t); symmetric in (i, j)."""
    _index_check(params.p, i, j)
    t_arr = np.asarray(t, dtype=float)
    scalar = t_arr.ndim == 0
    t_arr = np.atleast_1d(t_arr)
    out = np.empty_like(t_arr)
    for k, tk in enumerate(t_arr):
        s = _common_term(params.alpha[i], params.alpha[j], params.phi, tk)
        if i == j:
            s += params.sigma2[i] * math.exp(-tk / params.psi[i])
        out[k] = math.exp(s)
    return float(out[0]) if scalar else out


def proportion_of_variance(params: ModelParams, i: int, t):
    """Share of type i's latent covariance at lag t due to the common fields."""
    _index_check(params.p, i)
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    scalar = np.asarray(t).ndim == 0
    out = np.empty_like(t_arr)
    for k, tk in enumerate(t_arr):
        common = _common_term(params.alpha[i], params.alpha[i], params.phi, tk)
        total = common + params.sigma2[i] * math.exp(-tk / params.psi[i])
        if total <= 0:
            raise ZeroDivisionError(
                f"PV undefined for type {i} at lag {tk}: zero latent variance"
            )
        out[k] = common / total
    return float(out[0]) if scalar else out


def latent_covariances(params: ModelParams):
    """Lag-zero covariance matrices of the latent fields.

    Returns (common, total): common = alpha alpha^T is the part due to the
    shared fields, total adds diag(sigma2).
    """
    alpha = params.alpha
    p = params.p
    common = np.empty((p, p))
    for i in range(p):
        for j in range(i, p):
            v = math.fsum(alpha[i] * alpha[j])
            common[i, j] = common[j, i] = v
    total = common + np.diag(params.sigma2)
    return common, total


def row_distance_matrix(params: ModelParams) -> np.ndarray:
    """Euclidean distances between rows of alpha (type dissimilarities)."""
    alpha = params.alpha
    p = params.p
    dist = np.zeros((p, p))
    for i in range(p):
        for j in range(i + 1, p):
            d = alpha[i] - alpha[j]
            dist[i, j] = dist[j, i] = math.sqrt(math.fsum(d * d))
    return dist


def q_eff(alpha, tol: float = QEFF_TOL) -> int:
    """Number of alpha columns with at least one entry of magnitude > tol."""
    alpha = np.atleast_2d(np.asarray(alpha, dtype=float))
    if alpha.shape[1] == 0:
        return 0
    return int(np.sum(np.max(np.abs(alpha), axis=0) > tol))
