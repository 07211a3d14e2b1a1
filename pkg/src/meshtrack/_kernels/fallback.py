"""Pure-Python shortest-path kernel, used when the compiled extension is absent.

Same contract as the compiled version: exact Dijkstra over CSR adjacency,
+inf for unreachable vertices and for anything beyond ``radius``. Kept
loop-for-loop equivalent so both implementations produce identical floats.
"""

import heapq
import math

import numpy as np


def dijkstra(indptr, indices, weights, source, radius=math.inf):
    n = len(indptr) - 1
    if source < 0 or source >= n:
        raise ValueError(f"source vertex {source} out of range for {n} vertices")

    dist = np.full(n, np.inf)
    dist[source] = 0.0
    heap = [(0.0, source)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        if d > radius:
            break
        for k in range(indptr[u], indptr[u + 1]):
            v = indices[k]
            nd = d + weights[k]
            if nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, int(v)))

    if radius != math.inf:
        dist[dist > radius] = np.inf
    return dist
