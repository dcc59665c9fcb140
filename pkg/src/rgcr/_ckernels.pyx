# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled graph kernels. Semantics match ``rgcr._pykernels`` exactly."""
import numpy as np
cimport numpy as cnp

cnp.import_array()

ctypedef cnp.int64_t i64


def bfs_truncated(const i64[::1] indptr, const i64[::1] indices, i64 src, i64 radius):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef i64[::1] dist = np.full(n, -1, dtype=np.int64)
    cdef i64[::1] queue = np.empty(n, dtype=np.int64)
    cdef Py_ssize_t head = 0, tail = 1, k
    cdef i64 u, v, du
    queue[0] = src
    dist[src] = 0
    while head < tail:
        u = queue[head]
        head += 1
        du = dist[u]
        if radius >= 0 and du >= radius:
            continue
        for k in range(indptr[u], indptr[u + 1]):
            v = indices[k]
            if dist[v] < 0:
                dist[v] = du + 1
                queue[tail] = v
                tail += 1
    nodes = np.asarray(queue[:tail]).copy()
    return nodes, np.asarray(dist)[nodes]


def ball_sizes(const i64[::1] indptr, const i64[::1] indices, i64 radius):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef i64[::1] stamp = np.full(n, -1, dtype=np.int64)
    cdef i64[::1] dist = np.zeros(n, dtype=np.int64)
    cdef i64[::1] queue = np.empty(n, dtype=np.int64)
    cdef i64[::1] out = np.empty(n, dtype=np.int64)
    cdef Py_ssize_t i, head, tail, k
    cdef i64 u, v
    for i in range(n):
        queue[0] = i
        stamp[i] = i
        dist[i] = 0
        head = 0
        tail = 1
        while head < tail:
            u = queue[head]
            head += 1
            if radius >= 0 and dist[u] >= radius:
                continue
            for k in range(indptr[u], indptr[u + 1]):
                v = indices[k]
                if stamp[v] != i:
                    stamp[v] = i
                    dist[v] = dist[u] + 1
                    queue[tail] = v
                    tail += 1
        out[i] = tail
    return np.asarray(out)


def one_hop_max_labels(const i64[::1] indptr, const i64[::1] indices, const double[::1] x):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef i64[::1] out = np.empty(n, dtype=np.int64)
    cdef Py_ssize_t i, k
    cdef i64 best, v
    cdef double bx
    for i in range(n):
        best = i
        bx = x[i]
        for k in range(indptr[i], indptr[i + 1]):
            v = indices[k]
            if x[v] > bx or (x[v] == bx and v < best):
                best = v
                bx = x[v]
        out[i] = best
    return np.asarray(out)


def three_net_labels(const i64[::1] indptr, const i64[::1] indices, const i64[::1] order):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef cnp.uint8_t[::1] marked = np.zeros(n, dtype=np.uint8)
    cdef cnp.uint8_t[::1] is_seed = np.zeros(n, dtype=np.uint8)
    cdef i64[::1] label = np.full(n, -1, dtype=np.int64)
    cdef i64[::1] dist = np.full(n, -1, dtype=np.int64)
    cdef i64[::1] queue = np.empty(n, dtype=np.int64)
    cdef Py_ssize_t t, k, k2, head, tail, level_end
    cdef i64 s, u, v, lu
    for t in range(order.shape[0]):
        s = order[t]
        if marked[s]:
            continue
        is_seed[s] = 1
        marked[s] = 1
        for k in range(indptr[s], indptr[s + 1]):
            u = indices[k]
            marked[u] = 1
            for k2 in range(indptr[u], indptr[u + 1]):
                marked[indices[k2]] = 1
    # multi-source BFS seeded in increasing id order
    tail = 0
    for t in range(n):
        if is_seed[t]:
            label[t] = t
            dist[t] = 0
            queue[tail] = t
            tail += 1
    head = 0
    while head < tail:
        u = queue[head]
        head += 1
        lu = label[u]
        for k in range(indptr[u], indptr[u + 1]):
            v = indices[k]
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                label[v] = lu
                queue[tail] = v
                tail += 1
            elif dist[v] == dist[u] + 1 and lu < label[v]:
                label[v] = lu
    return np.asarray(label)


def adjacent_clusters(const i64[::1] indptr, const i64[::1] indices, const i64[::1] labels):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef i64 nlab = 0
    cdef Py_ssize_t i, k, t
    for i in range(n):
        if labels[i] + 1 > nlab:
            nlab = labels[i] + 1
    cdef i64[::1] stamp = np.full(max(nlab, 1), -1, dtype=np.int64)
    cdef i64[::1] aptr = np.zeros(n + 1, dtype=np.int64)
    cdef i64[::1] buf = np.empty(indices.shape[0] + n, dtype=np.int64)
    cdef Py_ssize_t pos = 0, start
    cdef i64 lab
    for i in range(n):
        start = pos
        lab = labels[i]
        stamp[lab] = i
        buf[pos] = lab
        pos += 1
        for k in range(indptr[i], indptr[i + 1]):
            lab = labels[indices[k]]
            if stamp[lab] != i:
                stamp[lab] = i
                # insertion sort: rows hold few distinct labels
                t = pos
                while t > start and buf[t - 1] > lab:
                    buf[t] = buf[t - 1]
                    t -= 1
                buf[t] = lab
                pos += 1
        aptr[i + 1] = pos
    return np.asarray(aptr), np.asarray(buf[:pos]).copy()


def pair_intersections(const i64[::1] aptr, const i64[::1] aidx,
                       const i64[::1] rows, const i64[::1] cols):
    cdef Py_ssize_t m = rows.shape[0]
    cdef i64[::1] out = np.zeros(m, dtype=np.int64)
    cdef Py_ssize_t t, a, ae, b, be
    cdef i64 c
    for t in range(m):
        a = aptr[rows[t]]
        ae = aptr[rows[t] + 1]
        b = aptr[cols[t]]
        be = aptr[cols[t] + 1]
        c = 0
        while a < ae and b < be:
            if aidx[a] == aidx[b]:
                c += 1
                a += 1
                b += 1
            elif aidx[a] < aidx[b]:
                a += 1
            else:
                b += 1
        out[t] = c
    return np.asarray(out)


def accumulate_joint(const i64[::1] aptr, const i64[::1] aidx, i64 nclusters,
                     const double[::1] same1, const double[::1] same0, const double[:, ::1] opp,
                     double weight, double[:, ::1] j11, double[:, ::1] j10, double[:, ::1] j00):
    """Add weight * P(E_i^a, E_j^b | c) for every ordered pair into dense accumulators.

    same1[r] / same0[r]: probability that r given clusters all carry arm 1 / arm 0.
    opp[r1, r0]: probability that r1 given clusters carry arm 1 and r0 others arm 0.
    """
    cdef Py_ssize_t n = aptr.shape[0] - 1
    cdef Py_ssize_t nc = max(nclusters, 1)
    cdef i64[::1] rptr = np.zeros(nc + 1, dtype=np.int64)
    cdef i64[::1] ridx = np.empty(aidx.shape[0], dtype=np.int64)
    cdef i64[::1] fill = np.zeros(nc, dtype=np.int64)
    cdef i64[::1] cnt = np.zeros(n, dtype=np.int64)
    cdef i64[::1] m = np.empty(n, dtype=np.int64)
    cdef Py_ssize_t i, j, t, u
    cdef i64 c, mi, inter
    with nogil:
        # reverse index: cluster -> nodes whose closed neighbourhood touches it
        for t in range(aidx.shape[0]):
            rptr[aidx[t] + 1] += 1
        for c in range(nc):
            rptr[c + 1] += rptr[c]
        for i in range(n):
            m[i] = aptr[i + 1] - aptr[i]
            for t in range(aptr[i], aptr[i + 1]):
                c = aidx[t]
                ridx[rptr[c] + fill[c]] = i
                fill[c] += 1
        for i in range(n):
            mi = m[i]
            for t in range(aptr[i], aptr[i + 1]):
                c = aidx[t]
                for u in range(rptr[c], rptr[c + 1]):
                    cnt[ridx[u]] += 1
            for j in range(n):
                inter = cnt[j]
                j11[i, j] += weight * same1[mi + m[j] - inter]
                j00[i, j] += weight * same0[mi + m[j] - inter]
                if inter == 0:
                    j10[i, j] += weight * opp[mi, m[j]]
            for t in range(aptr[i], aptr[i + 1]):
                c = aidx[t]
                for u in range(rptr[c], rptr[c + 1]):
                    cnt[ridx[u]] = 0
