# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the numeric kernels.

Mirrors ``_fallback`` function-for-function; see that module for the
behavioural contracts. Accumulation order matches the fallback so both
backends return identical floats.
"""

import numpy as np

from libc.stdlib cimport calloc, free, malloc


cdef Py_ssize_t _sort_unique(long long* a, Py_ssize_t k) noexcept nogil:
    """Insertion-sort ``a[:k]`` in place and dedupe; returns unique count."""
    cdef Py_ssize_t i, j, u
    cdef long long v
    for i in range(1, k):
        v = a[i]
        j = i - 1
        while j >= 0 and a[j] > v:
            a[j + 1] = a[j]
            j -= 1
        a[j + 1] = v
    if k == 0:
        return 0
    u = 1
    for i in range(1, k):
        if a[i] != a[u - 1]:
            a[u] = a[i]
            u += 1
    return u


cdef Py_ssize_t _index_of(const long long* a, Py_ssize_t n, long long v) noexcept nogil:
    """Binary search for ``v`` in sorted unique ``a`` (``v`` is present)."""
    cdef Py_ssize_t lo = 0, hi = n, mid
    while lo < hi:
        mid = (lo + hi) // 2
        if a[mid] < v:
            lo = mid + 1
        else:
            hi = mid
    return lo


def region_areas(pred, gt):
    """Exact pixel areas of two rectangle-set regions and their overlap.

    Same contract as the fallback: int64 (n, 4) half-open boxes in, exact
    (area_pred, area_gt, area_intersection, area_union) out.
    """
    pred_arr = np.ascontiguousarray(np.asarray(pred, dtype=np.int64).reshape(-1, 4))
    gt_arr = np.ascontiguousarray(np.asarray(gt, dtype=np.int64).reshape(-1, 4))
    cdef long long[:, ::1] p = pred_arr
    cdef long long[:, ::1] g = gt_arr
    cdef Py_ssize_t n = p.shape[0]
    cdef Py_ssize_t m = g.shape[0]
    if n == 0 and m == 0:
        return 0, 0, 0, 0

    cdef Py_ssize_t ncoord = 2 * (n + m)
    cdef long long* xs = <long long*> malloc(ncoord * sizeof(long long))
    cdef long long* ys = <long long*> malloc(ncoord * sizeof(long long))
    if xs == NULL or ys == NULL:
        free(xs)
        free(ys)
        raise MemoryError()

    cdef Py_ssize_t i, k = 0
    for i in range(n):
        xs[k] = p[i, 0]
        ys[k] = p[i, 1]
        k += 1
        xs[k] = p[i, 2]
        ys[k] = p[i, 3]
        k += 1
    for i in range(m):
        xs[k] = g[i, 0]
        ys[k] = g[i, 1]
        k += 1
        xs[k] = g[i, 2]
        ys[k] = g[i, 3]
        k += 1

    cdef Py_ssize_t nxs = _sort_unique(xs, k)
    cdef Py_ssize_t nys = _sort_unique(ys, k)
    cdef Py_ssize_t nx = nxs - 1
    cdef Py_ssize_t ny = nys - 1

    cdef unsigned char* pc = <unsigned char*> calloc(nx * ny, 1)
    cdef unsigned char* gc = <unsigned char*> calloc(nx * ny, 1)
    if pc == NULL or gc == NULL:
        free(xs)
        free(ys)
        free(pc)
        free(gc)
        raise MemoryError()

    cdef Py_ssize_t i1, i2, j1, j2, a, b
    cdef long long area_p = 0, area_g = 0, area_i = 0, area_u = 0, cell
    with nogil:
        for i in range(n):
            i1 = _index_of(xs, nxs, p[i, 0])
            i2 = _index_of(xs, nxs, p[i, 2])
            j1 = _index_of(ys, nys, p[i, 1])
            j2 = _index_of(ys, nys, p[i, 3])
            for a in range(i1, i2):
                for b in range(j1, j2):
                    pc[a * ny + b] = 1
        for i in range(m):
            i1 = _index_of(xs, nxs, g[i, 0])
            i2 = _index_of(xs, nxs, g[i, 2])
            j1 = _index_of(ys, nys, g[i, 1])
            j2 = _index_of(ys, nys, g[i, 3])
            for a in range(i1, i2):
                for b in range(j1, j2):
                    gc[a * ny + b] = 1
        for a in range(nx):
            for b in range(ny):
                if pc[a * ny + b] or gc[a * ny + b]:
                    cell = (xs[a + 1] - xs[a]) * (ys[b + 1] - ys[b])
                    area_u += cell
                    if pc[a * ny + b]:
                        area_p += cell
                    if gc[a * ny + b]:
                        area_g += cell
                        if pc[a * ny + b]:
                            area_i += cell

    free(xs)
    free(ys)
    free(pc)
    free(gc)
    return area_p, area_g, area_i, area_u


def merge_mean(emb, Py_ssize_t rows, Py_ssize_t cols, Py_ssize_t w):
    """Window-mean over a patch grid (truncated w×w windows)."""
    emb_arr = np.ascontiguousarray(np.asarray(emb, dtype=np.float64))
    if emb_arr.ndim != 2 or emb_arr.shape[0] != rows * cols:
        raise ValueError("embedding count does not match grid")
    if w < 1 or w % 2 == 0:
        raise ValueError("window must be odd and >= 1")
    out_arr = np.zeros_like(emb_arr)

    cdef double[:, ::1] src = emb_arr
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t dim = src.shape[1]
    cdef Py_ssize_t half = w // 2
    cdef Py_ssize_t r, c, dr, dc, rr, cc, d, idx, nidx
    cdef double cnt
    with nogil:
        for r in range(rows):
            for c in range(cols):
                idx = r * cols + c
                cnt = 0.0
                for dr in range(-half, half + 1):
                    rr = r + dr
                    if rr < 0 or rr >= rows:
                        continue
                    for dc in range(-half, half + 1):
                        cc = c + dc
                        if cc < 0 or cc >= cols:
                            continue
                        nidx = rr * cols + cc
                        for d in range(dim):
                            out[idx, d] += src[nidx, d]
                        cnt += 1.0
                for d in range(dim):
                    out[idx, d] /= cnt
    return out_arr


def col_score(x, mask):
    """Sum over rows of the row maximum restricted to masked columns."""
    x_arr = np.ascontiguousarray(np.asarray(x, dtype=np.float64))
    mask_arr = np.ascontiguousarray(np.asarray(mask, dtype=np.uint8).ravel())
    cdef double[:, ::1] xv = x_arr
    cdef unsigned char[::1] mv = mask_arr
    cdef Py_ssize_t n_text = xv.shape[0]
    cdef Py_ssize_t n_img = xv.shape[1]
    if mv.shape[0] != n_img:
        raise ValueError("mask length does not match patch count")

    cdef Py_ssize_t i, j
    cdef bint any_set = False
    for j in range(n_img):
        if mv[j]:
            any_set = True
            break
    if not any_set:
        raise ValueError("empty mask")

    cdef double total = 0.0
    cdef double best
    cdef bint started
    with nogil:
        for i in range(n_text):
            started = False
            best = 0.0
            for j in range(n_img):
                if mv[j] and (not started or xv[i, j] > best):
                    best = xv[i, j]
                    started = True
            total += best
    return total


def two_level_select(sim, Py_ssize_t rows, Py_ssize_t cols, Py_ssize_t k1,
                     Py_ssize_t k2, bint growing=True):
    """Seed with top-k1, then admit top-k2 patches adjacent to the selection."""
    sim_arr = np.ascontiguousarray(np.asarray(sim, dtype=np.float64).ravel())
    cdef Py_ssize_t n = sim_arr.shape[0]
    if n != rows * cols:
        raise ValueError("similarity length does not match grid")
    if k1 > n:
        k1 = n
    if k2 < k1:
        k2 = k1
    if k2 > n:
        k2 = n

    order_arr = np.argsort(-sim_arr, kind="stable").astype(np.intp)
    sel_arr = np.zeros(n, dtype=np.uint8)
    seed_arr = np.zeros(n, dtype=np.uint8)
    cdef Py_ssize_t[::1] order = order_arr
    cdef unsigned char[::1] sel = sel_arr
    cdef unsigned char[::1] seeds = seed_arr
    cdef unsigned char[::1] base

    cdef Py_ssize_t t, idx, r, c, dr, dc, rr, cc
    cdef bint admitted
    for t in range(k1):
        sel[order[t]] = 1
        seeds[order[t]] = 1
    base = sel if growing else seeds
    for t in range(k1, k2):
        idx = order[t]
        r = idx // cols
        c = idx % cols
        admitted = False
        for dr in range(-1, 2):
            rr = r + dr
            if rr < 0 or rr >= rows:
                continue
            for dc in range(-1, 2):
                if dr == 0 and dc == 0:
                    continue
                cc = c + dc
                if 0 <= cc < cols and base[rr * cols + cc]:
                    admitted = True
                    break
            if admitted:
                break
        if admitted:
            sel[idx] = 1
    return np.flatnonzero(sel_arr).tolist()
