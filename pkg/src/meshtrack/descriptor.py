"""Geodesic feature descriptors and frame-to-frame vertex matching.

A vertex's descriptor is its vector of geodesic distances, either to every
vertex (the full variant) or to the anchor set (the practical variant).
Slots where both sides are unreachable (+inf) compare as equal so a shared
disconnected anchor does not forbid otherwise-good matches; a slot that is
unreachable on one side only makes the distance +inf.
"""

import warnings
from dataclasses import dataclass
from itertools import combinations
from math import comb

import numpy as np

from .geodesic import distance_table, shortest_distances

DEFAULT_GATE_THRESHOLD = 0.10  # meters
GMDS_VERTEX_LIMIT = 10


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """Geodesic distances from one vertex; ``labels`` is None for the
    all-vertices (full) descriptor, else the parallel anchor labels."""

    values: np.ndarray
    labels: np.ndarray | None = None

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True, eq=False)
class Correspondence:
    """Partial vertex map between two frames."""

    pairs: dict
    unmatched_source: frozenset = frozenset()
    unmatched_target: frozenset = frozenset()


@dataclass(frozen=True, eq=False)
class DescriptorTable:
    """Per-vertex anchor descriptors for a whole mesh, columns sorted by label."""

    values: np.ndarray
    labels: np.ndarray


def build_descriptor_table(mesh, anchors):
    """N_A single-source fields, transposed to one descriptor row per vertex."""
    if len(anchors) == 0:
        raise ValueError("anchor set is empty")
    order = np.argsort(anchors.labels)
    table = distance_table(mesh, anchors.anchors[order]).T
    return DescriptorTable(values=table, labels=anchors.labels[order].copy())


def full_descriptor(mesh, v):
    """Distances from ``v`` to every vertex, in vertex-id order."""
    return FeatureVector(values=shortest_distances(mesh, v).distances, labels=None)


def anchor_descriptor(mesh, anchors, v, table=None):
    """Distances from ``v`` to each anchor, in ascending anchor-label order.

    Pass a prebuilt ``table`` to reuse the per-anchor fields across vertices.
    """
    if table is None:
        table = build_descriptor_table(mesh, anchors)
    if not 0 <= v < mesh.n_vertices:
        raise ValueError(f"vertex {v} out of range")
    row = table.values[v].copy()
    if np.isinf(row).any():
        warnings.warn(f"vertex {v} is disconnected from {int(np.isinf(row).sum())} anchor(s)")
    return FeatureVector(values=row, labels=table.labels.copy())


def descriptor_distance(a, b):
    """Euclidean distance between two descriptors with +inf-slot semantics."""
    if len(a) != len(b):
        raise ValueError(f"descriptor length mismatch: {len(a)} vs {len(b)}")
    if a.labels is not None and b.labels is not None and not np.array_equal(a.labels, b.labels):
        raise ValueError("descriptor anchor labels differ")
    x, y = a.values, b.values
    both_inf = np.isinf(x) & np.isinf(y)
    diff = x - y
    sq = np.where(both_inf, 0.0, diff * diff)
    return float(np.sqrt(np.sum(sq)))


def pairwise_sqdist(Q, D):
    """Squared descriptor distances between row sets, with +inf semantics.

    Uses the expanded-norm form so the inner product runs through BLAS;
    clamped at zero against rounding.
    """
    Q = np.atleast_2d(Q)
    D = np.atleast_2d(D)
    qf, df = np.isfinite(Q), np.isfinite(D)
    clean = qf.all() and df.all()
    Q0 = Q if clean else np.where(qf, Q, 0.0)
    D0 = D if clean else np.where(df, D, 0.0)
    qq = np.einsum("ij,ij->i", Q0, Q0)
    dd = np.einsum("ij,ij->i", D0, D0)
    d2 = qq[:, None] + dd[None, :] - 2.0 * (Q0 @ D0.T)
    np.maximum(d2, 0.0, out=d2)
    if not clean:
        mismatch = qf.astype(np.float64) @ (~df).astype(np.float64).T
        mismatch += (~qf).astype(np.float64) @ df.astype(np.float64).T
        d2[mismatch > 0] = np.inf
    return d2


def shared_labels(a_labels, b_labels):
    return np.intersect1d(a_labels, b_labels)


def match_vertices(src_mesh, src_anchors, dst_mesh, dst_anchors,
                   e_max=DEFAULT_GATE_THRESHOLD, e_max_depth_slope=0.0):
    """Match every source vertex to the target vertex with the nearest
    anchor descriptor over the shared anchor labels.

    Ties take the lowest target id. Sources whose best distance exceeds the
    gate threshold are reported unmatched. The threshold may grow linearly
    with the source vertex's distance from the device-frame origin
    (``e_max_depth_slope``, off by default).
    """
    shared = shared_labels(src_anchors.labels, dst_anchors.labels)
    if len(shared) == 0:
        raise ValueError("anchor sets share no labels; cannot match")
    src_table = build_descriptor_table(src_mesh, src_anchors)
    dst_table = build_descriptor_table(dst_mesh, dst_anchors)
    s_cols = np.searchsorted(src_table.labels, shared)
    d_cols = np.searchsorted(dst_table.labels, shared)

    Q = src_table.values[:, s_cols]
    D = dst_table.values[:, d_cols]
    d2 = pairwise_sqdist(Q, D)
    best = np.argmin(d2, axis=1)
    best_d2 = d2[np.arange(len(Q)), best]

    gate = e_max + e_max_depth_slope * np.linalg.norm(src_mesh.vertices, axis=1)
    ok = best_d2 <= gate * gate

    pairs = {int(i): int(best[i]) for i in np.flatnonzero(ok)}
    unmatched_src = frozenset(int(i) for i in np.flatnonzero(~ok))
    unmatched_dst = frozenset(range(dst_mesh.n_vertices)) - frozenset(pairs.values())
    return Correspondence(pairs=pairs, unmatched_source=unmatched_src, unmatched_target=unmatched_dst)


def subset_descriptors(mesh, anchors, v, subset_size):
    """One descriptor per size-``subset_size`` anchor subset, subsets
    enumerated in lexicographic label order."""
    n_a = len(anchors)
    if not 1 <= subset_size <= n_a:
        raise ValueError(f"subset size {subset_size} out of range 1..{n_a}")
    table = build_descriptor_table(mesh, anchors)
    row = table.values[v]
    out = []
    for combo in combinations(range(len(table.labels)), subset_size):
        cols = np.asarray(combo)
        out.append(FeatureVector(values=row[cols].copy(), labels=table.labels[cols].copy()))
    assert len(out) == comb(n_a, subset_size)
    return out


def _abs_geodesic_gap(a, b):
    """|a - b| treating a pair of +inf values as a zero gap."""
    gap = np.abs(a - b)
    both_inf = np.isinf(a) & np.isinf(b)
    if np.ndim(gap):
        gap[both_inf] = 0.0
    elif both_inf:
        gap = 0.0
    return gap


def mesh_distortion(src_mesh, dst_mesh, corr):
    """Worst-case change of geodesic distance over all mapped vertex pairs."""
    items = sorted(corr.pairs.items())
    if len(items) < 2:
        raise ValueError("mesh distortion needs at least 2 mapped pairs")
    src_ids = np.asarray([s for s, _ in items])
    dst_ids = np.asarray([t for _, t in items])
    Ds = distance_table(src_mesh, src_ids)[:, src_ids]
    Dt = distance_table(dst_mesh, dst_ids)[:, dst_ids]
    return float(np.max(_abs_geodesic_gap(Ds, Dt)))


def gmds_distance(src_mesh, dst_mesh):
    """Exhaustive minimum of half the distortion over all total vertex maps.

    Test-scale oracle: both meshes are capped at 10 vertices. Branch and
    bound over the map, pruning any partial assignment whose running
    distortion already matches the incumbent, which also makes the returned
    argmin the lexicographically first optimum.
    """
    ns, nt = src_mesh.n_vertices, dst_mesh.n_vertices
    if ns > GMDS_VERTEX_LIMIT or nt > GMDS_VERTEX_LIMIT:
        raise ValueError(
            f"embedding-distance oracle is limited to {GMDS_VERTEX_LIMIT} vertices "
            f"per mesh (got {ns} and {nt})"
        )
    if ns == 0 or nt == 0:
        raise ValueError("embedding distance of an empty mesh")
    Ds = distance_table(src_mesh, np.arange(ns))
    Dt = distance_table(dst_mesh, np.arange(nt))

    assign = np.zeros(ns, dtype=np.int64)
    best_val = np.inf
    best_map = None

    def recurse(i, cur_max):
        nonlocal best_val, best_map
        if best_map is not None and cur_max >= best_val:
            return
        if i == ns:
            best_val = cur_max
            best_map = assign.copy()
            return
        for t in range(nt):
            gaps = _abs_geodesic_gap(Ds[i, :i], Dt[t, assign[:i]])
            new_max = max(cur_max, float(gaps.max())) if i else cur_max
            if best_map is None or new_max < best_val:
                assign[i] = t
                recurse(i + 1, new_max)

    recurse(0, 0.0)
    pairs = {int(i): int(best_map[i]) for i in range(ns)}
    unmatched_dst = frozenset(range(nt)) - frozenset(pairs.values())
    corr = Correspondence(pairs=pairs, unmatched_target=unmatched_dst)
    return 0.5 * float(best_val), corr
