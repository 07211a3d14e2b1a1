# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled single-source shortest-path kernel over CSR adjacency."""

import numpy as np

cimport numpy as cnp

cnp.import_array()

INF = float("inf")


cdef inline void _heap_push(double* hk, cnp.int32_t* hv, Py_ssize_t* size,
                            double key, cnp.int32_t node) noexcept nogil:
    cdef Py_ssize_t i = size[0]
    cdef Py_ssize_t parent
    hk[i] = key
    hv[i] = node
    size[0] += 1
    while i > 0:
        parent = (i - 1) >> 1
        if hk[parent] <= hk[i]:
            break
        hk[parent], hk[i] = hk[i], hk[parent]
        hv[parent], hv[i] = hv[i], hv[parent]
        i = parent


cdef inline void _heap_pop(double* hk, cnp.int32_t* hv, Py_ssize_t* size,
                           double* key_out, cnp.int32_t* node_out) noexcept nogil:
    cdef Py_ssize_t i = 0
    cdef Py_ssize_t child
    cdef Py_ssize_t last = size[0] - 1
    key_out[0] = hk[0]
    node_out[0] = hv[0]
    hk[0] = hk[last]
    hv[0] = hv[last]
    size[0] = last
    while True:
        child = 2 * i + 1
        if child >= last:
            break
        if child + 1 < last and hk[child + 1] < hk[child]:
            child += 1
        if hk[i] <= hk[child]:
            break
        hk[i], hk[child] = hk[child], hk[i]
        hv[i], hv[child] = hv[child], hv[i]
        i = child


def dijkstra(cnp.int32_t[::1] indptr not None,
             cnp.int32_t[::1] indices not None,
             cnp.float64_t[::1] weights not None,
             int source,
             double radius=INF):
    """Exact shortest-path distances from ``source`` over a weighted CSR graph.

    Vertices farther than ``radius`` (and unreachable ones) are reported as
    +inf. Relaxation uses strict improvement, so results are independent of
    heap tie order.
    """
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t m = indices.shape[0]
    if source < 0 or source >= n:
        raise ValueError(f"source vertex {source} out of range for {n} vertices")

    dist_arr = np.full(n, np.inf, dtype=np.float64)
    cdef cnp.float64_t[::1] dist = dist_arr
    heap_keys = np.empty(m + 1, dtype=np.float64)
    heap_nodes = np.empty(m + 1, dtype=np.int32)
    cdef cnp.float64_t[::1] hk = heap_keys
    cdef cnp.int32_t[::1] hv = heap_nodes

    cdef Py_ssize_t size = 0
    cdef double d, nd
    cdef cnp.int32_t u, v
    cdef Py_ssize_t k

    with nogil:
        dist[source] = 0.0
        _heap_push(&hk[0], &hv[0], &size, 0.0, source)
        while size > 0:
            _heap_pop(&hk[0], &hv[0], &size, &d, &u)
            if d > dist[u]:
                continue
            if d > radius:
                break
            for k in range(indptr[u], indptr[u + 1]):
                v = indices[k]
                nd = d + weights[k]
                if nd < dist[v]:
                    dist[v] = nd
                    _heap_push(&hk[0], &hv[0], &size, nd, v)

    if radius != INF:
        dist_arr[dist_arr > radius] = np.inf
    return dist_arr
