# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled polar coding kernels: encoder, SC decoder, SC list decoder.

Bit-compatible with mdpolar.kernels.pure: identical decision rules and
identical deterministic path-metric tie-breaking, so either lane can back
the public API.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, INFINITY
from libc.stdlib cimport free, malloc
from libc.string cimport memcpy, memset

cnp.import_array()


def encode(u):
    """Polar transform x = u * F^(kron n) over GF(2), natural bit order."""
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] x = np.array(u, dtype=np.uint8)
    cdef int n_block = x.shape[0]
    cdef unsigned char* p = <unsigned char*> x.data
    cdef int size = n_block
    cdef int half, start, i
    while size > 1:
        half = size >> 1
        for start in range(0, n_block, size):
            for i in range(half):
                p[start + i] ^= p[start + half + i]
        size = half
    return x


cdef inline double _f(double a, double b) noexcept nogil:
    cdef double m = fabs(a)
    cdef double mb = fabs(b)
    if mb < m:
        m = mb
    if (a < 0) != (b < 0):
        return -m
    return m


cdef void _sc_rec(const double* lv, const unsigned char* frz, int size, int lo,
                  unsigned char* u_hat, unsigned char* ps, double* scratch) noexcept nogil:
    cdef int half, i
    cdef double a, b
    cdef unsigned char bit
    if size == 1:
        if frz[lo]:
            bit = 0
        else:
            bit = 1 if lv[0] < 0 else 0
        u_hat[lo] = bit
        ps[0] = bit
        return
    half = size >> 1
    for i in range(half):
        scratch[i] = _f(lv[i], lv[i + half])
    _sc_rec(scratch, frz, half, lo, u_hat, ps, scratch + half)
    for i in range(half):
        a = lv[i]
        b = lv[i + half]
        scratch[i] = b + a if ps[i] == 0 else b - a
    _sc_rec(scratch, frz, half, lo + half, u_hat, ps + half, scratch + half)
    for i in range(half):
        ps[i] ^= ps[i + half]


def sc_decode(llrs, frozen):
    """Successive-cancellation decode; returns the full u-domain vector."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] lv = np.ascontiguousarray(llrs, dtype=np.float64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] frz = np.ascontiguousarray(frozen, dtype=np.uint8)
    cdef int n_block = lv.shape[0]
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] u_hat = np.zeros(n_block, dtype=np.uint8)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] ps = np.zeros(n_block, dtype=np.uint8)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] scratch = np.zeros(n_block, dtype=np.float64)
    if n_block == 1:
        u_hat[0] = 0 if frz[0] else (1 if lv[0] < 0 else 0)
        return u_hat
    with nogil:
        _sc_rec(<const double*> lv.data, <const unsigned char*> frz.data, n_block, 0,
                <unsigned char*> u_hat.data, <unsigned char*> ps.data, <double*> scratch.data)
    return u_hat


cdef struct _Cand:
    double metric
    int idx


cdef int _cand_cmp(const void* pa, const void* pb) noexcept nogil:
    cdef _Cand* a = <_Cand*> pa
    cdef _Cand* b = <_Cand*> pb
    if a.metric < b.metric:
        return -1
    if a.metric > b.metric:
        return 1
    return a.idx - b.idx


cdef extern from "stdlib.h":
    void qsort(void* base, size_t nmemb, size_t size,
               int (*compar)(const void*, const void*)) nogil


def scl_decode(llrs, frozen, list_size):
    """Successive-cancellation list decode.

    Returns ``(candidates, metrics)`` sorted by ascending path metric with
    the same tie-break order as the pure lane (natural decision before
    flip, lower parent path index first).
    """
    cdef cnp.ndarray[cnp.float64_t, ndim=1] lv = np.ascontiguousarray(llrs, dtype=np.float64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] frz = np.ascontiguousarray(frozen, dtype=np.uint8)
    cdef int n_block = lv.shape[0]
    cdef int n = 0
    while (1 << n) < n_block:
        n += 1
    cdef int lsz = int(list_size)

    # per-path LLR tree: level d occupies [off[d], off[d] + (n_block >> d))
    cdef int tree = 2 * n_block - 1
    cdef int rows = n + 1
    cdef cnp.ndarray[cnp.float64_t, ndim=2] llr_a = np.zeros((lsz, tree), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] llr_b = np.zeros((lsz, tree), dtype=np.float64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] ucap_a = np.zeros((lsz, rows * n_block), dtype=np.uint8)
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] ucap_b = np.zeros((lsz, rows * n_block), dtype=np.uint8)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] node_state = np.zeros(tree, dtype=np.uint8)

    cdef double* llr = <double*> llr_a.data
    cdef double* llr_alt = <double*> llr_b.data
    cdef unsigned char* ucap = <unsigned char*> ucap_a.data
    cdef unsigned char* ucap_alt = <unsigned char*> ucap_b.data
    cdef unsigned char* nstate = <unsigned char*> node_state.data

    cdef int* off = <int*> malloc((n + 1) * sizeof(int))
    cdef double* metrics = <double*> malloc(lsz * sizeof(double))
    cdef double* metrics_alt = <double*> malloc(lsz * sizeof(double))
    cdef _Cand* cands = <_Cand*> malloc(2 * lsz * sizeof(_Cand))
    if off == NULL or metrics == NULL or metrics_alt == NULL or cands == NULL:
        free(off); free(metrics); free(metrics_alt); free(cands)
        raise MemoryError()

    cdef int d, p, i, depth, node, size, half, state, base, cbase, src, k
    cdef double dm, pen
    cdef unsigned char natural, bit
    cdef double* tmpd
    cdef unsigned char* tmpc

    for d in range(n + 1):
        off[d] = 2 * n_block - ((2 * n_block) >> d)
    for p in range(lsz):
        memcpy(llr + p * tree, <double*> lv.data, n_block * sizeof(double))
        metrics[p] = INFINITY
    metrics[0] = 0.0

    with nogil:
        depth = 0
        node = 0
        while True:
            if depth == n:
                if frz[node]:
                    for p in range(lsz):
                        dm = llr[p * tree + off[n]]
                        ucap[p * rows * n_block + n * n_block + node] = 0
                        if dm < 0:
                            metrics[p] += -dm
                else:
                    for p in range(lsz):
                        dm = llr[p * tree + off[n]]
                        cands[p].metric = metrics[p]
                        cands[p].idx = p
                        cands[lsz + p].metric = metrics[p] + fabs(dm)
                        cands[lsz + p].idx = lsz + p
                    qsort(cands, 2 * lsz, sizeof(_Cand), _cand_cmp)
                    for k in range(lsz):
                        src = cands[k].idx % lsz
                        dm = llr[src * tree + off[n]]
                        natural = 1 if dm < 0 else 0
                        bit = natural ^ (1 if cands[k].idx >= lsz else 0)
                        memcpy(llr_alt + k * tree, llr + src * tree, tree * sizeof(double))
                        memcpy(ucap_alt + k * rows * n_block, ucap + src * rows * n_block,
                               rows * n_block)
                        metrics_alt[k] = cands[k].metric
                        ucap_alt[k * rows * n_block + n * n_block + node] = bit
                    tmpd = llr; llr = llr_alt; llr_alt = tmpd
                    tmpc = ucap; ucap = ucap_alt; ucap_alt = tmpc
                    tmpd = metrics; metrics = metrics_alt; metrics_alt = tmpd
                if node == n_block - 1:
                    break
                node >>= 1
                depth -= 1
            else:
                # llr levels are compact: level d holds only the segment of
                # the node currently being traversed, at offset off[d]
                size = n_block >> depth
                half = size >> 1
                state = nstate[(1 << depth) - 1 + node]
                base = off[depth]
                if state == 0:
                    cbase = off[depth + 1]
                    for p in range(lsz):
                        for i in range(half):
                            llr[p * tree + cbase + i] = _f(llr[p * tree + base + i],
                                                           llr[p * tree + base + half + i])
                    nstate[(1 << depth) - 1 + node] = 1
                    node = 2 * node
                    depth += 1
                elif state == 1:
                    cbase = off[depth + 1]
                    for p in range(lsz):
                        for i in range(half):
                            if ucap[p * rows * n_block + (depth + 1) * n_block
                                    + half * (2 * node) + i] == 0:
                                llr[p * tree + cbase + i] = (llr[p * tree + base + half + i]
                                                             + llr[p * tree + base + i])
                            else:
                                llr[p * tree + cbase + i] = (llr[p * tree + base + half + i]
                                                             - llr[p * tree + base + i])
                    nstate[(1 << depth) - 1 + node] = 2
                    node = 2 * node + 1
                    depth += 1
                else:
                    for p in range(lsz):
                        for i in range(half):
                            ucap[p * rows * n_block + depth * n_block + size * node + i] = (
                                ucap[p * rows * n_block + (depth + 1) * n_block
                                     + half * (2 * node) + i]
                                ^ ucap[p * rows * n_block + (depth + 1) * n_block
                                       + half * (2 * node + 1) + i])
                            ucap[p * rows * n_block + depth * n_block + size * node + half + i] = \
                                ucap[p * rows * n_block + (depth + 1) * n_block
                                     + half * (2 * node + 1) + i]
                    node >>= 1
                    depth -= 1

        for p in range(lsz):
            cands[p].metric = metrics[p]
            cands[p].idx = p
        qsort(cands, lsz, sizeof(_Cand), _cand_cmp)

    out = np.empty((lsz, n_block), dtype=np.uint8)
    out_metrics = np.empty(lsz, dtype=np.float64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] out_v = out
    cdef cnp.ndarray[cnp.float64_t, ndim=1] outm_v = out_metrics
    for k in range(lsz):
        src = cands[k].idx
        memcpy(<unsigned char*> out_v.data + k * n_block,
               ucap + src * rows * n_block + n * n_block, n_block)
        outm_v[k] = cands[k].metric
    free(off); free(metrics); free(metrics_alt); free(cands)
    return out, out_metrics
