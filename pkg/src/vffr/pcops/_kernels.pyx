# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled point-neighbourhood kernels.

Every routine here has a numpy twin in :mod:`vffr.pcops._fallback` with the
same signature.  Squared distances are always accumulated as
``dx*dx + dy*dy + dz*dz`` in that order so both backends agree bit-for-bit.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor, sqrt, fabs
from libc.stdlib cimport malloc, free, qsort
from libc.stdint cimport int64_t

cnp.import_array()

ctypedef struct Cand:
    double d2
    int64_t idx


cdef int _cmp_cand(const void* a, const void* b) noexcept nogil:
    cdef const Cand* x = <const Cand*>a
    cdef const Cand* y = <const Cand*>b
    if x.d2 < y.d2:
        return -1
    if x.d2 > y.d2:
        return 1
    if x.idx < y.idx:
        return -1
    if x.idx > y.idx:
        return 1
    return 0


cdef inline bint _less(double da, int64_t ia, double db, int64_t ib) noexcept nogil:
    return da < db or (da == db and ia < ib)


def farthest_point_sampling(const double[:, ::1] points, Py_ssize_t m, Py_ssize_t start):
    cdef Py_ssize_t n = points.shape[0]
    out = np.empty(m, dtype=np.int64)
    mind_arr = np.full(n, np.inf)
    cdef int64_t[::1] o = out
    cdef double[::1] md = mind_arr
    cdef Py_ssize_t s, i, cur = start, best
    cdef double cx, cy, cz, dx, dy, dz, d, bestd
    with nogil:
        for s in range(m):
            o[s] = cur
            md[cur] = -1.0
            cx = points[cur, 0]
            cy = points[cur, 1]
            cz = points[cur, 2]
            best = -1
            bestd = -2.0
            for i in range(n):
                if md[i] < 0.0:
                    continue
                dx = points[i, 0] - cx
                dy = points[i, 1] - cy
                dz = points[i, 2] - cz
                d = dx * dx + dy * dy + dz * dz
                if d < md[i]:
                    md[i] = d
                if md[i] > bestd:
                    bestd = md[i]
                    best = i
            cur = best
    return out


cdef void _sift_down(Cand* h, Py_ssize_t size, Py_ssize_t i) noexcept nogil:
    # max-heap on (d2, idx)
    cdef Py_ssize_t l, r, big
    cdef Cand tmp
    while True:
        l = 2 * i + 1
        r = l + 1
        big = i
        if l < size and _less(h[big].d2, h[big].idx, h[l].d2, h[l].idx):
            big = l
        if r < size and _less(h[big].d2, h[big].idx, h[r].d2, h[r].idx):
            big = r
        if big == i:
            return
        tmp = h[i]
        h[i] = h[big]
        h[big] = tmp
        i = big


cdef void _sift_up(Cand* h, Py_ssize_t i) noexcept nogil:
    cdef Py_ssize_t parent
    cdef Cand tmp
    while i > 0:
        parent = (i - 1) >> 1
        if _less(h[parent].d2, h[parent].idx, h[i].d2, h[i].idx):
            tmp = h[i]
            h[i] = h[parent]
            h[parent] = tmp
            i = parent
        else:
            return


cdef Py_ssize_t _lower_bound(const int64_t[::1] keys, int64_t key) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = keys.shape[0], mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if keys[mid] < key:
            lo = mid + 1
        else:
            hi = mid
    return lo


def _build_grid(points, double reach):
    """Sorted-key uniform grid: cell edge ``reach`` (capped to 1024 cells per axis)."""
    lo = points.min(axis=0)
    ext = points.max(axis=0) - lo
    cell = max(reach, float(ext.max()) / 1024.0, 1e-300)
    dims = (np.floor(ext / cell).astype(np.int64) + 1)
    ijk = np.floor((points - lo) / cell).astype(np.int64)
    ijk = np.minimum(ijk, dims - 1)
    keys = (ijk[:, 0] * dims[1] + ijk[:, 1]) * dims[2] + ijk[:, 2]
    order = np.argsort(keys, kind="stable")
    return lo, cell, dims, np.ascontiguousarray(keys[order]), np.ascontiguousarray(order)


cdef Py_ssize_t _grid_collect(
    const double[:, ::1] points,
    const int64_t[::1] skeys,
    const int64_t[::1] order,
    double ox, double oy, double oz, double cell,
    int64_t nx, int64_t ny, int64_t nz,
    double cx, double cy, double cz,
    double vx, double vy, double vz,
    double half_len, double r2, double reach, bint capsule,
    Cand* heap, Py_ssize_t max_k,
) noexcept nogil:
    # keeps the max_k closest members in a bounded max-heap; returns the total count
    cdef int64_t i0, i1, j0, j1, k0, k1, i, j, k, key
    cdef Py_ssize_t pos, cnt = 0, p
    cdef double dx, dy, dz, t, ex, ey, ez, d2, dc
    i0 = <int64_t>floor((cx - reach - ox) / cell)
    i1 = <int64_t>floor((cx + reach - ox) / cell)
    j0 = <int64_t>floor((cy - reach - oy) / cell)
    j1 = <int64_t>floor((cy + reach - oy) / cell)
    k0 = <int64_t>floor((cz - reach - oz) / cell)
    k1 = <int64_t>floor((cz + reach - oz) / cell)
    if i0 < 0: i0 = 0
    if j0 < 0: j0 = 0
    if k0 < 0: k0 = 0
    if i1 > nx - 1: i1 = nx - 1
    if j1 > ny - 1: j1 = ny - 1
    if k1 > nz - 1: k1 = nz - 1
    for i in range(i0, i1 + 1):
        for j in range(j0, j1 + 1):
            for k in range(k0, k1 + 1):
                key = (i * ny + j) * nz + k
                pos = _lower_bound(skeys, key)
                while pos < skeys.shape[0] and skeys[pos] == key:
                    p = order[pos]
                    pos += 1
                    dx = points[p, 0] - cx
                    dy = points[p, 1] - cy
                    dz = points[p, 2] - cz
                    dc = dx * dx + dy * dy + dz * dz
                    if capsule:
                        t = dx * vx + dy * vy + dz * vz
                        if t > half_len:
                            t = half_len
                        elif t < -half_len:
                            t = -half_len
                        ex = dx - t * vx
                        ey = dy - t * vy
                        ez = dz - t * vz
                        d2 = ex * ex + ey * ey + ez * ez
                    else:
                        d2 = dc
                    if d2 <= r2:
                        if cnt < max_k:
                            heap[cnt].d2 = dc
                            heap[cnt].idx = p
                            _sift_up(heap, cnt)
                        elif _less(dc, p, heap[0].d2, heap[0].idx):
                            heap[0].d2 = dc
                            heap[0].idx = p
                            _sift_down(heap, max_k, 0)
                        cnt += 1
    return cnt


def _radius_query(points, centers, directions, double half_len, double radius,
                  Py_ssize_t max_k, bint capsule):
    cdef Py_ssize_t n = points.shape[0], m = centers.shape[0]
    idx_arr = np.full((m, max_k), -1, dtype=np.int64)
    cnt_arr = np.zeros(m, dtype=np.int64)
    if n == 0 or m == 0:
        return idx_arr, cnt_arr
    cdef double reach = (half_len + radius) * (1.0 + 1e-9) + 1e-300
    lo, cell, dims, skeys_a, order_a = _build_grid(points, reach)
    cdef const double[:, ::1] P = points
    cdef const double[:, ::1] C = centers
    cdef const double[:, ::1] V = directions
    cdef const int64_t[::1] skeys = skeys_a
    cdef const int64_t[::1] order = order_a
    cdef int64_t[:, ::1] out = idx_arr
    cdef int64_t[::1] counts = cnt_arr
    cdef double ox = lo[0], oy = lo[1], oz = lo[2], cz = cell
    cdef int64_t nx = dims[0], ny = dims[1], nz = dims[2]
    cdef double r2 = radius * radius
    cdef Cand* buf = <Cand*>malloc((max_k + 1) * sizeof(Cand))
    if buf == NULL:
        raise MemoryError()
    cdef Py_ssize_t c, cnt, q, take
    try:
        with nogil:
            for c in range(m):
                cnt = _grid_collect(P, skeys, order, ox, oy, oz, cz, nx, ny, nz,
                                    C[c, 0], C[c, 1], C[c, 2],
                                    V[c, 0], V[c, 1], V[c, 2],
                                    half_len, r2, reach, capsule, buf, max_k)
                if cnt == 0:
                    continue
                take = cnt if cnt < max_k else max_k
                qsort(buf, take, sizeof(Cand), _cmp_cand)
                for q in range(take):
                    out[c, q] = buf[q].idx
                for q in range(take, max_k):
                    out[c, q] = buf[0].idx
                counts[c] = take
    finally:
        free(buf)
    return idx_arr, cnt_arr


def ball_query(points, centers, double radius, Py_ssize_t max_k):
    dummy = np.zeros((centers.shape[0], 3))
    return _radius_query(points, centers, dummy, 0.0, radius, max_k, False)


def capsule_query(points, centers, directions, double half_len, double radius, Py_ssize_t max_k):
    return _radius_query(points, centers, directions, half_len, radius, max_k, True)


def knn(const double[:, ::1] points, const double[:, ::1] queries, Py_ssize_t k):
    cdef Py_ssize_t n = points.shape[0], m = queries.shape[0]
    idx_arr = np.empty((m, k), dtype=np.int64)
    dist_arr = np.empty((m, k), dtype=np.float64)
    cdef int64_t[:, ::1] oi = idx_arr
    cdef double[:, ::1] od = dist_arr
    cdef Cand* heap = <Cand*>malloc((k + 1) * sizeof(Cand))
    if heap == NULL:
        raise MemoryError()
    cdef Py_ssize_t q, i, size
    cdef double cx, cy, cz, dx, dy, dz, d2
    try:
        with nogil:
            for q in range(m):
                cx = queries[q, 0]
                cy = queries[q, 1]
                cz = queries[q, 2]
                size = 0
                for i in range(n):
                    dx = points[i, 0] - cx
                    dy = points[i, 1] - cy
                    dz = points[i, 2] - cz
                    d2 = dx * dx + dy * dy + dz * dz
                    if size < k:
                        heap[size].d2 = d2
                        heap[size].idx = i
                        _sift_up(heap, size)
                        size += 1
                    elif _less(d2, i, heap[0].d2, heap[0].idx):
                        heap[0].d2 = d2
                        heap[0].idx = i
                        _sift_down(heap, size, 0)
                qsort(heap, size, sizeof(Cand), _cmp_cand)
                for i in range(k):
                    oi[q, i] = heap[i].idx
                    od[q, i] = sqrt(heap[i].d2)
    finally:
        free(heap)
    return idx_arr, dist_arr


cdef void _jacobi3(double a[3][3], double v[3][3]) noexcept nogil:
    """Cyclic Jacobi diagonalisation of a symmetric 3x3 matrix (in place)."""
    cdef int sweep, p, q, r
    cdef double apq, theta, t, c, s, arp, arq, vrp, vrq, app, aqq, off
    for p in range(3):
        for q in range(3):
            v[p][q] = 1.0 if p == q else 0.0
    for sweep in range(64):
        off = fabs(a[0][1]) + fabs(a[0][2]) + fabs(a[1][2])
        if off == 0.0:
            return
        for p in range(2):
            for q in range(p + 1, 3):
                apq = a[p][q]
                if apq == 0.0:
                    continue
                app = a[p][p]
                aqq = a[q][q]
                if fabs(apq) <= 1e-300 or fabs(apq) < 1e-18 * (fabs(app) + fabs(aqq)):
                    a[p][q] = 0.0
                    a[q][p] = 0.0
                    continue
                theta = (aqq - app) / (2.0 * apq)
                if theta >= 0.0:
                    t = 1.0 / (theta + sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (-theta + sqrt(theta * theta + 1.0))
                c = 1.0 / sqrt(t * t + 1.0)
                s = t * c
                for r in range(3):
                    if r != p and r != q:
                        arp = a[r][p]
                        arq = a[r][q]
                        a[r][p] = c * arp - s * arq
                        a[p][r] = a[r][p]
                        a[r][q] = s * arp + c * arq
                        a[q][r] = a[r][q]
                a[p][p] = app - t * apq
                a[q][q] = aqq + t * apq
                a[p][q] = 0.0
                a[q][p] = 0.0
                for r in range(3):
                    vrp = v[r][p]
                    vrq = v[r][q]
                    v[r][p] = c * vrp - s * vrq
                    v[r][q] = s * vrp + c * vrq


def principal_directions(const double[:, ::1] points, const int64_t[:, ::1] neighbors,
                         double tie_rtol):
    """Top covariance eigenvector of each neighbour set.

    Returns ``(directions, top_eigenvalue, scale2)`` where ``scale2`` is the
    largest squared coordinate magnitude in the set (degeneracy yardstick).
    """
    cdef Py_ssize_t m = neighbors.shape[0], k = neighbors.shape[1]
    dirs = np.zeros((m, 3))
    lam_top = np.zeros(m)
    scale = np.zeros(m)
    cdef double[:, ::1] D = dirs
    cdef double[::1] L = lam_top
    cdef double[::1] S = scale
    cdef double a[3][3]
    cdef double v[3][3]
    cdef double mu[3]
    cdef double d[3]
    cdef double lam[3]
    cdef double proj[3]
    cdef double w[3]
    cdef double lmax, nrm, best, s2, x
    cdef Py_ssize_t c, i, p, q, ax, j, top
    with nogil:
        for c in range(m):
            mu[0] = 0.0
            mu[1] = 0.0
            mu[2] = 0.0
            s2 = 0.0
            for i in range(k):
                for p in range(3):
                    x = points[neighbors[c, i], p]
                    mu[p] += x
                    if x * x > s2:
                        s2 = x * x
            for p in range(3):
                mu[p] = mu[p] / k
            for p in range(3):
                for q in range(3):
                    a[p][q] = 0.0
            for i in range(k):
                for p in range(3):
                    d[p] = points[neighbors[c, i], p] - mu[p]
                for p in range(3):
                    for q in range(3):
                        a[p][q] += d[p] * d[q]
            for p in range(3):
                for q in range(3):
                    a[p][q] = a[p][q] / k
            _jacobi3(a, v)
            for p in range(3):
                lam[p] = a[p][p]
            lmax = lam[0]
            top = 0
            for p in range(1, 3):
                if lam[p] > lmax:
                    lmax = lam[p]
                    top = p
            L[c] = lmax
            S[c] = s2
            # axis with largest projection onto the (possibly tied) top eigenspace
            best = -1.0
            ax = 0
            for j in range(3):
                proj[j] = 0.0
                for p in range(3):
                    if lam[p] >= lmax - tie_rtol * fabs(lmax):
                        proj[j] += v[j][p] * v[j][p]
                if proj[j] > best + 1e-12:
                    best = proj[j]
                    ax = j
            # single top eigenvector unless tied
            j = 0
            for p in range(3):
                if lam[p] >= lmax - tie_rtol * fabs(lmax):
                    j += 1
            if j == 1:
                for q in range(3):
                    w[q] = v[q][top]
            else:
                for q in range(3):
                    w[q] = 0.0
                for p in range(3):
                    if lam[p] >= lmax - tie_rtol * fabs(lmax):
                        for q in range(3):
                            w[q] += v[ax][p] * v[q][p]
            nrm = sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2])
            if nrm > 0.0:
                for q in range(3):
                    w[q] = w[q] / nrm
            # canonical sign: largest-magnitude component positive
            j = 0
            for q in range(1, 3):
                if fabs(w[q]) > fabs(w[j]) + 1e-12:
                    j = q
            if w[j] < 0.0:
                for q in range(3):
                    w[q] = -w[q]
            for q in range(3):
                D[c, q] = w[q]
    return dirs, lam_top, scale


def scatter_add_rows(const double[:, ::1] src, const int64_t[::1] idx, Py_ssize_t n_out):
    """``out[idx[r]] += src[r]`` accumulated in row order."""
    cdef Py_ssize_t rows = src.shape[0], ch = src.shape[1], r, c
    cdef int64_t i
    out = np.zeros((n_out, ch))
    cdef double[:, ::1] o = out
    with nogil:
        for r in range(rows):
            i = idx[r]
            for c in range(ch):
                o[i, c] += src[r, c]
    return out


def group_max(const double[:, :, ::1] x):
    """Max over axis 1 of an (m, k, c) block plus the first argmax."""
    cdef Py_ssize_t m = x.shape[0], k = x.shape[1], ch = x.shape[2], g, j, c
    out = np.empty((m, ch))
    arg = np.zeros((m, ch), dtype=np.int64)
    cdef double[:, ::1] o = out
    cdef int64_t[:, ::1] a = arg
    with nogil:
        for g in range(m):
            for c in range(ch):
                o[g, c] = x[g, 0, c]
            for j in range(1, k):
                for c in range(ch):
                    if x[g, j, c] > o[g, c]:
                        o[g, c] = x[g, j, c]
                        a[g, c] = j
    return out, arg


def group_max_backward(const double[:, ::1] grad, const int64_t[:, ::1] arg, Py_ssize_t k):
    cdef Py_ssize_t m = grad.shape[0], ch = grad.shape[1], g, c
    out = np.zeros((m, k, ch))
    cdef double[:, :, ::1] o = out
    with nogil:
        for g in range(m):
            for c in range(ch):
                o[g, arg[g, c], c] = grad[g, c]
    return out
