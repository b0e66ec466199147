# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the kernels in ``_kernels_py``. Same ordering, same bits."""
import numpy as np
cimport numpy as cnp
from libc.math cimport M_PI, NAN
from libc.stdlib cimport malloc, realloc, free

cnp.import_array()

cdef double TWO_PI = 2.0 * M_PI

ctypedef struct Entry:
    double negq
    Py_ssize_t idx
    Py_ssize_t parent


cdef inline bint _less(Entry* a, Entry* b) noexcept nogil:
    if a.negq != b.negq:
        return a.negq < b.negq
    if a.idx != b.idx:
        return a.idx < b.idx
    return a.parent < b.parent


cdef struct Heap:
    Entry* data
    Py_ssize_t size
    Py_ssize_t cap


cdef int heap_push(Heap* h, double negq, Py_ssize_t idx, Py_ssize_t parent) except -1 nogil:
    cdef Py_ssize_t i, up
    cdef Entry tmp
    cdef Entry* grown
    if h.size == h.cap:
        h.cap = h.cap * 2 + 16
        grown = <Entry*> realloc(h.data, h.cap * sizeof(Entry))
        if grown == NULL:
            with gil:
                raise MemoryError()
        h.data = grown
    i = h.size
    h.size += 1
    h.data[i].negq = negq
    h.data[i].idx = idx
    h.data[i].parent = parent
    while i > 0:
        up = (i - 1) >> 1
        if _less(&h.data[i], &h.data[up]):
            tmp = h.data[i]
            h.data[i] = h.data[up]
            h.data[up] = tmp
            i = up
        else:
            break
    return 0


cdef Entry heap_pop(Heap* h) noexcept nogil:
    cdef Entry top = h.data[0]
    cdef Entry tmp
    cdef Py_ssize_t i = 0, l, r, m
    h.size -= 1
    h.data[0] = h.data[h.size]
    while True:
        l = 2 * i + 1
        r = l + 1
        m = i
        if l < h.size and _less(&h.data[l], &h.data[m]):
            m = l
        if r < h.size and _less(&h.data[r], &h.data[m]):
            m = r
        if m == i:
            break
        tmp = h.data[i]
        h.data[i] = h.data[m]
        h.data[m] = tmp
        i = m
    return top


cdef inline double _wrapped_step(double d) noexcept nogil:
    if d > M_PI:
        return d - TWO_PI
    if d <= -M_PI:
        return d + TWO_PI
    return d


cdef int _push_neighbours(Heap* h, Py_ssize_t i, Py_ssize_t rows, Py_ssize_t cols,
                          unsigned char* done, unsigned char* allowed, double* q) except -1 nogil:
    cdef Py_ssize_t r = i // cols, c = i % cols, k
    if r > 0:
        k = i - cols
        if not done[k] and allowed[k]:
            heap_push(h, -q[k], k, i)
    if r < rows - 1:
        k = i + cols
        if not done[k] and allowed[k]:
            heap_push(h, -q[k], k, i)
    if c > 0:
        k = i - 1
        if not done[k] and allowed[k]:
            heap_push(h, -q[k], k, i)
    if c < cols - 1:
        k = i + 1
        if not done[k] and allowed[k]:
            heap_push(h, -q[k], k, i)
    return 0


cdef int _flood(Heap* h, Py_ssize_t rows, Py_ssize_t cols, unsigned char* done,
                unsigned char* allowed, double* q, double* psi, double* unw, long* lab) except -1 nogil:
    cdef Entry e
    cdef Py_ssize_t j
    while h.size > 0:
        e = heap_pop(h)
        j = e.idx
        if done[j]:
            continue
        done[j] = 1
        unw[j] = unw[e.parent] + _wrapped_step(psi[j] - psi[e.parent])
        lab[j] = lab[e.parent]
        _push_neighbours(h, j, rows, cols, done, allowed, q)
    return 0


def grow_region(wrapped, quality, double threshold):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] w = np.ascontiguousarray(wrapped, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] qa = np.ascontiguousarray(quality, dtype=np.float64)
    cdef Py_ssize_t rows = w.shape[0], cols = w.shape[1], n = rows * cols, i, k, t
    cdef double* psi = &w[0, 0] if n else NULL
    cdef double* q = &qa[0, 0] if n else NULL
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] valid_a = np.zeros(n, dtype=np.uint8)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] high_a = np.zeros(n, dtype=np.uint8)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] done_a = np.zeros(n, dtype=np.uint8)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] unw_a = np.full(n, np.nan)
    cdef cnp.ndarray[long, ndim=1] lab_a = np.zeros(n, dtype=np.int_)
    cdef unsigned char* valid = &valid_a[0] if n else NULL
    cdef unsigned char* high = &high_a[0] if n else NULL
    cdef unsigned char* done = &done_a[0] if n else NULL
    cdef double* unw = &unw_a[0] if n else NULL
    cdef long* lab = &lab_a[0] if n else NULL
    cdef long label = 0
    cdef Heap h
    seeds = []

    for i in range(n):
        valid[i] = (psi[i] == psi[i]) and (q[i] == q[i])
        high[i] = valid[i] and q[i] >= threshold
    idx = np.flatnonzero(valid_a)
    # stable sort on -quality keeps ascending index among ties
    order_a = idx[np.argsort(-qa.ravel()[idx], kind="stable")].astype(np.intp)
    cdef cnp.ndarray[cnp.intp_t, ndim=1] order = order_a
    cdef Py_ssize_t n_order = order.shape[0]

    h.data = NULL
    h.size = 0
    h.cap = 0
    try:
        for t in range(n_order):
            i = order[t]
            if high[i] and not done[i]:
                label += 1
                seeds.append(i)
                done[i] = 1
                unw[i] = psi[i]
                lab[i] = label
                h.size = 0
                _push_neighbours(&h, i, rows, cols, done, high, q)
                _flood(&h, rows, cols, done, high, q, psi, unw, lab)

        h.size = 0
        for i in range(n):
            if done[i]:
                _push_neighbours(&h, i, rows, cols, done, valid, q)
        _flood(&h, rows, cols, done, valid, q, psi, unw, lab)

        for t in range(n_order):
            i = order[t]
            if not done[i]:
                label += 1
                done[i] = 1
                unw[i] = psi[i]
                lab[i] = label
                h.size = 0
                _push_neighbours(&h, i, rows, cols, done, valid, q)
                _flood(&h, rows, cols, done, valid, q, psi, unw, lab)
    finally:
        free(h.data)

    return (unw_a.reshape(rows, cols), lab_a.astype(np.int64).reshape(rows, cols),
            np.array(seeds, dtype=np.int64))
