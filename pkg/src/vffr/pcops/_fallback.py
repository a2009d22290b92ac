"""Pure numpy twins of the compiled kernels in ``_kernels.pyx``.

Selected automatically when the extension is not built.  Results are
identical to the compiled path for FPS, radius queries and k-NN; the
eigenvector routine agrees to rounding.
"""
import numpy as np
import scipy.sparse as sp

_CHUNK = 256


def farthest_point_sampling(points, m, start):
    n = points.shape[0]
    out = np.empty(m, dtype=np.int64)
    mind = np.full(n, np.inf)
    selected = np.zeros(n, dtype=bool)
    cur = int(start)
    for s in range(m):
        out[s] = cur
        selected[cur] = True
        dx = points[:, 0] - points[cur, 0]
        dy = points[:, 1] - points[cur, 1]
        dz = points[:, 2] - points[cur, 2]
        np.minimum(mind, dx * dx + dy * dy + dz * dz, out=mind)
        cur = int(np.argmax(np.where(selected, -2.0, mind)))
    return out


def _radius_query(points, centers, directions, half_len, radius, max_k, capsule):
    m = centers.shape[0]
    idx = np.full((m, max_k), -1, dtype=np.int64)
    counts = np.zeros(m, dtype=np.int64)
    if points.shape[0] == 0 or m == 0:
        return idx, counts
    r2 = radius * radius
    for a in range(0, m, _CHUNK):
        c = centers[a:a + _CHUNK]
        dx = points[None, :, 0] - c[:, None, 0]
        dy = points[None, :, 1] - c[:, None, 1]
        dz = points[None, :, 2] - c[:, None, 2]
        dc = dx * dx + dy * dy + dz * dz
        if capsule:
            v = directions[a:a + _CHUNK]
            vx, vy, vz = v[:, None, 0], v[:, None, 1], v[:, None, 2]
            t = np.clip(dx * vx + dy * vy + dz * vz, -half_len, half_len)
            ex = dx - t * vx
            ey = dy - t * vy
            ez = dz - t * vz
            member = ex * ex + ey * ey + ez * ez <= r2
        else:
            member = dc <= r2
        key = np.where(member, dc, np.inf)
        order = np.argsort(key, axis=1, kind="stable")[:, :max_k]
        cnt = np.minimum(member.sum(axis=1), max_k)
        pos = np.arange(order.shape[1])[None, :]
        block = np.where(pos < cnt[:, None], order, order[:, :1])
        block[cnt == 0] = -1
        idx[a:a + len(c), :block.shape[1]] = block
        if block.shape[1] < max_k:
            idx[a:a + len(c), block.shape[1]:] = block[:, :1]
        counts[a:a + len(c)] = cnt
    return idx, counts


def ball_query(points, centers, radius, max_k):
    return _radius_query(points, centers, None, 0.0, radius, max_k, False)


def capsule_query(points, centers, directions, half_len, radius, max_k):
    return _radius_query(points, centers, directions, half_len, radius, max_k, True)


def knn(points, queries, k):
    m = queries.shape[0]
    idx = np.empty((m, k), dtype=np.int64)
    dist = np.empty((m, k))
    for a in range(0, m, _CHUNK):
        q = queries[a:a + _CHUNK]
        dx = points[None, :, 0] - q[:, None, 0]
        dy = points[None, :, 1] - q[:, None, 1]
        dz = points[None, :, 2] - q[:, None, 2]
        d2 = dx * dx + dy * dy + dz * dz
        order = np.argsort(d2, axis=1, kind="stable")[:, :k]
        idx[a:a + len(q)] = order
        dist[a:a + len(q)] = np.sqrt(np.take_along_axis(d2, order, axis=1))
    return idx, dist


def _jacobi3_batch(a):
    m = a.shape[0]
    v = np.broadcast_to(np.eye(3), (m, 3, 3)).copy()
    for _ in range(64):
        off = np.abs(a[:, 0, 1]) + np.abs(a[:, 0, 2]) + np.abs(a[:, 1, 2])
        if not off.any():
            break
        for p, q in ((0, 1), (0, 2), (1, 2)):
            r = 3 - p - q
            apq, app, aqq = a[:, p, q], a[:, p, p], a[:, q, q]
            small = (apq != 0.0) & (
                (np.abs(apq) <= 1e-300) | (np.abs(apq) < 1e-18 * (np.abs(app) + np.abs(aqq)))
            )
            a[small, p, q] = 0.0
            a[small, q, p] = 0.0
            act = np.flatnonzero(a[:, p, q] != 0.0)
            if act.size == 0:
                continue
            apq, app, aqq = a[act, p, q], a[act, p, p], a[act, q, q]
            with np.errstate(over="ignore", divide="ignore"):
                theta = (aqq - app) / (2.0 * apq)
                root = np.sqrt(theta * theta + 1.0)
                t = np.where(theta >= 0.0, 1.0 / (theta + root), -1.0 / (-theta + root))
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            arp, arq = a[act, r, p].copy(), a[act, r, q].copy()
            a[act, r, p] = a[act, p, r] = c * arp - s * arq
            a[act, r, q] = a[act, q, r] = s * arp + c * arq
            a[act, p, p] = app - t * apq
            a[act, q, q] = aqq + t * apq
            a[act, p, q] = a[act, q, p] = 0.0
            vp, vq = v[act, :, p].copy(), v[act, :, q].copy()
            v[act, :, p] = c[:, None] * vp - s[:, None] * vq
            v[act, :, q] = s[:, None] * vp + c[:, None] * vq
    return np.diagonal(a, axis1=1, axis2=2).copy(), v


def principal_directions(points, neighbors, tie_rtol):
    nb = points[neighbors]  # (m, k, 3)
    k = neighbors.shape[1]
    scale2 = (nb * nb).max(axis=(1, 2))
    d = nb - nb.sum(axis=1, keepdims=True) / k
    cov = np.einsum("mki,mkj->mij", d, d) / k
    lam, v = _jacobi3_batch(cov)
    lmax = lam.max(axis=1)
    top = np.argmax(lam, axis=1)
    in_top = lam >= (lmax - tie_rtol * np.abs(lmax))[:, None]
    # axis with largest projection onto the top eigenspace; first wins ties
    proj = np.einsum("mjp,mp->mj", v * v, in_top.astype(float))
    ax = np.zeros(len(lam), dtype=np.int64)
    best = proj[:, 0].copy()
    for j in (1, 2):
        better = proj[:, j] > best + 1e-12
        ax[better] = j
        best[better] = proj[better, j]
    rows = np.arange(len(lam))
    single = in_top.sum(axis=1) == 1
    w = np.where(
        single[:, None],
        v[rows, :, top],
        np.einsum("mp,mqp->mq", v[rows, ax, :] * in_top, v),
    )
    nrm = np.sqrt(w[:, 0] * w[:, 0] + w[:, 1] * w[:, 1] + w[:, 2] * w[:, 2])
    w = np.where(nrm[:, None] > 0, w / np.where(nrm > 0, nrm, 1.0)[:, None], w)
    j = np.zeros(len(lam), dtype=np.int64)
    big = np.abs(w[:, 0])
    for q in (1, 2):
        better = np.abs(w[:, q]) > big + 1e-12
        j[better] = q
        big[better] = np.abs(w[better, q])
    w[w[rows, j] < 0] *= -1.0
    return w, lmax, scale2


def scatter_add_rows(src, idx, n_out):
    rows = src.shape[0]
    mat = sp.csr_matrix((np.ones(rows), (idx, np.arange(rows))), shape=(n_out, rows))
    return np.asarray(mat @ src)


def group_max(x):
    arg = np.argmax(x, axis=1)
    return np.take_along_axis(x, arg[:, None, :], axis=1)[:, 0, :], arg


def group_max_backward(grad, arg, k):
    out = np.zeros((grad.shape[0], k, grad.shape[1]))
    np.put_along_axis(out, arg[:, None, :], grad[:, None, :], axis=1)
    return out
