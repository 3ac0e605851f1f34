"""Pure-numpy fallback for the pair accumulation kernel.

Same contract and same arithmetic as the compiled module ``_pcf_accel``;
pair search is delegated to scipy's cKDTree and processed in chunks to bound
memory.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

_CHUNK = 4096


def accumulate_pair_sums(pts_a, pts_b, rho_a, rho_b, same, width, height, lags, bandwidth):
    """See ``_pcf_accel.accumulate_pair_sums``."""
    pts_a = np.ascontiguousarray(pts_a, dtype=float)
    pts_b = np.ascontiguousarray(pts_b, dtype=float)
    L = len(lags)
    sums = np.zeros(L)
    skipped = 0
    if len(pts_a) == 0 or len(pts_b) == 0 or L == 0:
        return sums, 0

    rmax = lags[-1] + bandwidth
    kb = 1.0 / (2.0 * bandwidth)
    pair_factor = 2.0 if same else 1.0
    tree_b = cKDTree(pts_b)

    for lo_a in range(0, len(pts_a), _CHUNK):
        chunk = slice(lo_a, lo_a + _CHUNK)
        coo = cKDTree(pts_a[chunk]).sparse_distance_matrix(
            tree_b, rmax * (1 + 1e-9), output_type="coo_matrix"
        )
        ia, ib = coo.row + lo_a, coo.col
        if same:
            keep = ia < ib
            ia, ib = ia[keep], ib[keep]
        if ia.size == 0:
            continue
        dx = pts_a[ia, 0] - pts_b[ib, 0]
        dy = pts_a[ia, 1] - pts_b[ib, 1]
        d = np.sqrt(dx * dx + dy * dy)
        lo = np.searchsorted(lags, d - bandwidth, side="left")
        hi = np.searchsorted(lags, d + bandwidth, side="right")
        in_support = hi > lo
        fx = width - np.abs(dx)
        fy = height - np.abs(dy)
        no_overlap = in_support & ((fx <= 0.0) | (fy <= 0.0))
        skipped += int(np.count_nonzero(no_overlap))
        keep = in_support & ~no_overlap
        if not np.any(keep):
            continue
        lo, hi = lo[keep], hi[keep]
        w = pair_factor * kb / (rho_a[ia[keep]] * rho_b[ib[keep]] * (fx * fy)[keep])
        counts = hi - lo
        offsets = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
        np.add.at(sums, np.repeat(lo, counts) + offsets, np.repeat(w, counts))

    return sums, skipped
