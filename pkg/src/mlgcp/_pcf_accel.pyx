# Compiled kernel for cross pair correlation estimation: accumulates the
# translation-corrected uniform-kernel sums over point pairs.  Pair search
# uses a uniform grid of cells with side >= max lag + bandwidth, so only the
# 3x3 cell neighbourhood of each point is scanned.

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, sqrt

cnp.import_array()


cdef inline Py_ssize_t _lower_bound(const double[::1] a, Py_ssize_t n, double x) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = n, mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if a[mid] < x:
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef inline Py_ssize_t _upper_bound(const double[::1] a, Py_ssize_t n, double x) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = n, mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if a[mid] <= x:
            lo = mid + 1
        else:
            hi = mid
    return lo


def accumulate_pair_sums(const double[:, ::1] pts_a, const double[:, ::1] pts_b,
                         const double[::1] rho_a, const double[::1] rho_b,
                         bint same, double width, double height,
                         const double[::1] lags, double bandwidth):
    """Sum k_b(t_k - |u-v|) / (rho(u) rho(v) |W n W_{u-v}|) over ordered pairs.

    Coordinates must be shifted to [0, width] x [0, height].  With
    ``same=True`` the arrays describe one point set and ordered pairs u != v
    are counted (accumulated over u < v and doubled).  Returns
    (sums[len(lags)], skipped) where skipped counts pairs inside kernel
    support whose translation overlap was zero.
    """
    cdef Py_ssize_t na = pts_a.shape[0]
    cdef Py_ssize_t nb = pts_b.shape[0]
    cdef Py_ssize_t L = lags.shape[0]
    sums_arr = np.zeros(L, dtype=np.float64)
    cdef double[::1] sums = sums_arr
    cdef long skipped = 0
    if na == 0 or nb == 0 or L == 0:
        return sums_arr, 0

    cdef double rmax = lags[L - 1] + bandwidth
    cdef double kb = 1.0 / (2.0 * bandwidth)
    cdef double pair_factor = 2.0 if same else 1.0

    # Cell grid over the b points; cell side >= rmax in each direction.
    cdef Py_ssize_t ncx = <Py_ssize_t>(width / rmax)
    cdef Py_ssize_t ncy = <Py_ssize_t>(height / rmax)
    if ncx < 1:
        ncx = 1
    if ncy < 1:
        ncy = 1
    cdef double inv_cw = ncx / width
    cdef double inv_ch = ncy / height

    cell_arr = np.empty(nb, dtype=np.intp)
    start_arr = np.zeros(ncx * ncy + 1, dtype=np.intp)
    order_arr = np.empty(nb, dtype=np.intp)
    cdef Py_ssize_t[::1] cell = cell_arr
    cdef Py_ssize_t[::1] start = start_arr
    cdef Py_ssize_t[::1] order = order_arr
    cdef Py_ssize_t u, v, m, cx, cy, c, gx, gy, lo, hi, k
    cdef double x, y, dx, dy, d, ov, w

    with nogil:
        for v in range(nb):
            cx = <Py_ssize_t>(pts_b[v, 0] * inv_cw)
            cy = <Py_ssize_t>(pts_b[v, 1] * inv_ch)
            if cx >= ncx:
                cx = ncx - 1
            if cy >= ncy:
                cy = ncy - 1
            c = cy * ncx + cx
            cell[v] = c
            start[c + 1] += 1
        for c in range(ncx * ncy):
            start[c + 1] += start[c]
        for v in range(nb):
            c = cell[v]
            order[start[c]] = v
            start[c] += 1
        for c in range(ncx * ncy, 0, -1):
            start[c] = start[c - 1]
        start[0] = 0

        for u in range(na):
            x = pts_a[u, 0]
            y = pts_a[u, 1]
            cx = <Py_ssize_t>(x * inv_cw)
            cy = <Py_ssize_t>(y * inv_ch)
            if cx >= ncx:
                cx = ncx - 1
            if cy >= ncy:
                cy = ncy - 1
            for gy in range(cy - 1, cy + 2):
                if gy < 0 or gy >= ncy:
                    continue
                for gx in range(cx - 1, cx + 2):
                    if gx < 0 or gx >= ncx:
                        continue
                    c = gy * ncx + gx
                    for m in range(start[c], start[c + 1]):
                        v = order[m]
                        if same and v <= u:
                            continue
                        dx = x - pts_b[v, 0]
                        dy = y - pts_b[v, 1]
                        d = sqrt(dx * dx + dy * dy)
                        lo = _lower_bound(lags, L, d - bandwidth)
                        hi = _upper_bound(lags, L, d + bandwidth)
                        if lo >= hi:
                            continue
                        ov = (width - fabs(dx)) * (height - fabs(dy))
                        if width - fabs(dx) <= 0.0 or height - fabs(dy) <= 0.0:
                            skipped += 1
                            continue
                        w = pair_factor * kb / (rho_a[u] * rho_b[v] * ov)
                        for k in range(lo, hi):
                            sums[k] += w

    return sums_arr, skipped
