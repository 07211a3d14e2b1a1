"""Geodesic distance fields and anchor (geodesic extremum) detection.

Geodesic distance here means exact shortest-path distance over the mesh's
weighted edge graph, computed by the compiled kernel when available.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .mesh import connected_components

DEFAULT_ANCHOR_RADIUS = 0.5  # meters


@dataclass(frozen=True, eq=False)
class DistanceField:
    """Single-source geodesic distances; unreachable vertices are +inf."""

    source: int
    distances: np.ndarray


@dataclass(frozen=True, eq=False)
class AnchorSet:
    """Ordered anchor vertices with stable integer labels."""

    anchors: np.ndarray
    labels: np.ndarray
    detection_radius: float

    def __post_init__(self):
        object.__setattr__(self, "anchors", np.asarray(self.anchors, dtype=np.int64).reshape(-1))
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.int64).reshape(-1))
        if len(self.anchors) != len(self.labels):
            raise ValueError("anchors and labels must have equal length")
        if len(np.unique(self.anchors)) != len(self.anchors):
            raise ValueError("anchor vertex ids must be distinct")
        if len(np.unique(self.labels)) != len(self.labels):
            raise ValueError("anchor labels must be distinct")

    def __len__(self):
        return len(self.anchors)


def shortest_distances(mesh, source, radius=np.inf):
    """Exact single-source shortest-path field over the weighted edge graph.

    ``radius`` optionally caps the search; vertices farther than it are
    reported as +inf (used for geodesic-ball queries).
    """
    n = mesh.n_vertices
    if not 0 <= source < n:
        raise ValueError(f"source vertex {source} out of range for mesh with {n} vertices")
    indptr, indices, weights = mesh.csr
    dist = _kernels.dijkstra(indptr, indices, weights, int(source), float(radius))
    return DistanceField(source=int(source), distances=dist)


def distance_table(mesh, sources):
    """Stacked distance fields, one row per source vertex."""
    rows = [shortest_distances(mesh, s).distances for s in sources]
    return np.vstack(rows) if rows else np.zeros((0, mesh.n_vertices))


def mesh_center(mesh):
    """The vertex nearest (Euclidean) to the vertex centroid; ties take the lowest id."""
    if mesh.n_vertices == 0:
        raise ValueError("mesh_center of an empty mesh")
    centroid = mesh.vertices.mean(axis=0)
    d = np.linalg.norm(mesh.vertices - centroid, axis=1)
    return int(np.argmin(d))


def _component_center(mesh, component_vertices):
    centroid = mesh.vertices[component_vertices].mean(axis=0)
    d = np.linalg.norm(mesh.vertices[component_vertices] - centroid, axis=1)
    return int(component_vertices[int(np.argmin(d))])


def detect_anchors(mesh, radius=DEFAULT_ANCHOR_RADIUS):
    """Find geodesic extrema: vertices strictly farther from the mesh center
    than every other vertex within geodesic distance ``radius``.

    Detection runs per connected component against that component's own
    center (occlusions can split the mesh). Anchors are ordered by descending
    center distance within each component (ties by lower vertex id),
    components by their smallest vertex id; labels number them 0..N-1.
    Ties in center distance inside a neighborhood disqualify both vertices,
    so plateaus emit no anchors.
    """
    if radius <= 0:
        raise ValueError("anchor detection radius must be positive")
    if mesh.n_vertices == 0:
        return AnchorSet(anchors=np.zeros(0, dtype=np.int64), labels=np.zeros(0, dtype=np.int64), detection_radius=radius)

    n = mesh.n_vertices
    n_comp, comp_labels = connected_components(mesh)
    indptr, indices, weights = mesh.csr
    d_c = np.full(n, np.inf)
    for comp in range(n_comp):
        comp_vertices = np.flatnonzero(comp_labels == comp)
        center = _component_center(mesh, comp_vertices)
        d = shortest_distances(mesh, center).distances
        d_c[comp_vertices] = d[comp_vertices]

    # necessary condition over direct edges: any neighbor closer than the
    # radius with center distance >= ours disqualifies immediately
    if len(indices):
        src = np.repeat(np.arange(n), np.diff(indptr))
        bad = (weights < radius) & (d_c[indices] >= d_c[src])
        viol = np.zeros(n, dtype=np.int64)
        np.add.at(viol, src[bad], 1)
        candidates = np.flatnonzero(viol == 0)
    else:
        candidates = np.arange(n)

    found = []
    all_ids = np.arange(n)
    for v in candidates:
        ball = shortest_distances(mesh, int(v), radius=radius).distances
        members = np.flatnonzero((ball < radius) & (all_ids != v))
        if len(members) == 0 or np.all(d_c[v] > d_c[members]):
            found.append((int(comp_labels[v]), -float(d_c[v]), int(v)))
    found.sort()
    anchors = np.asarray([v for _, _, v in found], dtype=np.int64)
    labels = np.arange(len(anchors), dtype=np.int64)
    return AnchorSet(anchors=anchors, labels=labels, detection_radius=radius)


def order_anchors(current, reference, mesh, ref_mesh):
    """Carry labels from a reference anchor set to the current one.

    Greedy assignment on ascending Euclidean distance between anchor
    positions; each reference label is used at most once, leftover current
    anchors get fresh labels above everything already in use.
    """
    cur_pos = mesh.vertices[current.anchors]
    ref_pos = ref_mesh.vertices[reference.anchors]
    n_cur, n_ref = len(current), len(reference)

    pairs = []
    for i in range(n_cur):
        d = np.linalg.norm(ref_pos - cur_pos[i], axis=1) if n_ref else np.zeros(0)
        for j in range(n_ref):
            pairs.append((float(d[j]), i, j))
    pairs.sort()

    labels = np.full(n_cur, -1, dtype=np.int64)
    used_ref = set()
    for _, i, j in pairs:
        if labels[i] == -1 and j not in used_ref:
            labels[i] = reference.labels[j]
            used_ref.add(j)
    unmatched = np.flatnonzero(labels == -1)
    if len(unmatched):
        taken = set(labels[labels >= 0].tolist()) | set(reference.labels.tolist())
        fresh = max(taken) + 1 if taken else 0
        for i in unmatched:
            labels[i] = fresh
            fresh += 1
    return AnchorSet(anchors=current.anchors.copy(), labels=labels, detection_radius=current.detection_radius)
