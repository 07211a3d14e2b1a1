"""Frame ingestion: load point clouds, align them to the device frame,
strip permanent occluders and background, and triangulate into meshes."""

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Delaunay, cKDTree

from .mesh import FormatError, SurfaceMesh, _parse_ply, mesh_from_triangles

DEFAULT_MAX_EDGE_LENGTH = 0.05  # meters; breaks bridges across depth discontinuities
DUPLICATE_MERGE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Points in meters; NaN rows mark invalid slots of an organized cloud."""

    points: np.ndarray
    width: int | None = None
    height: int | None = None
    colors: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        object.__setattr__(self, "points", pts)
        if self.organized:
            if self.width * self.height != len(pts):
                raise ValueError(
                    f"organized cloud declares {self.width}x{self.height} slots "
                    f"but holds {len(pts)} points"
                )
        else:
            if not np.all(np.isfinite(pts)):
                raise ValueError("unorganized cloud contains non-finite points")

    @property
    def organized(self):
        return self.width is not None and self.height is not None

    @property
    def valid_mask(self):
        return np.all(np.isfinite(self.points), axis=1)


@dataclass(frozen=True, eq=False)
class RigTransform:
    """Rigid camera-to-device transform; rotation must be proper orthonormal."""

    camera_id: int
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-9):
            raise ValueError(f"camera {self.camera_id}: rotation is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise ValueError(f"camera {self.camera_id}: rotation determinant is not +1")


@dataclass(frozen=True, eq=False)
class OrientedBox:
    """Box in the device frame: center, row-orthonormal rotation, full extents."""

    center: np.ndarray
    extents: np.ndarray
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64).reshape(3))
        object.__setattr__(self, "extents", np.asarray(self.extents, dtype=np.float64).reshape(3))
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64).reshape(3, 3))
        if np.any(self.extents <= 0):
            raise ValueError("box extents must be positive")

    def contains(self, points):
        local = (np.atleast_2d(points) - self.center) @ self.rotation
        return np.all(np.abs(local) <= self.extents / 2.0, axis=1)


@dataclass(frozen=True, eq=False)
class DeviceModel:
    """Permanent-occluder boxes plus the axis-aligned patient workspace."""

    boxes: tuple
    workspace_min: np.ndarray
    workspace_max: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))
        object.__setattr__(self, "workspace_min", np.asarray(self.workspace_min, dtype=np.float64).reshape(3))
        object.__setattr__(self, "workspace_max", np.asarray(self.workspace_max, dtype=np.float64).reshape(3))
        if np.any(self.workspace_max <= self.workspace_min):
            raise ValueError("workspace box must have positive volume")


def load_point_cloud(path, format=None):
    """Load a PointCloud from an ASCII PLY or x,y,z CSV file.

    Organized PLY layout (``comment width/height`` header lines) is preserved
    with NaN slots kept as invalid. In unorganized inputs, non-finite points
    are dropped and reported through a single warning.
    """
    path = str(path)
    if format is None:
        lower = path.lower()
        format = "csv" if lower.endswith(".csv") else "ply"
    if format == "ply":
        points, _, width, height = _parse_ply(path)
        if width is not None and height is not None:
            return PointCloud(points=points, width=width, height=height)
        return PointCloud(points=_drop_invalid(points, path))
    if format == "csv":
        return PointCloud(points=_drop_invalid(_parse_csv(path), path))
    raise ValueError(f"unknown point cloud format {format!r} (expected 'ply' or 'csv')")


def _drop_invalid(points, path):
    bad = ~np.all(np.isfinite(points), axis=1)
    n_bad = int(bad.sum())
    if n_bad:
        warnings.warn(f"{path}: rejected {n_bad} non-finite points")
        return points[~bad]
    return points


def _parse_csv(path):
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise FormatError(
                    f"expected 3 comma-separated values, found {len(parts)}",
                    path=path,
                    line=lineno,
                )
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                raise FormatError(f"bad coordinate in {parts}", path=path, line=lineno) from None
    return np.asarray(rows, dtype=np.float64).reshape(-1, 3)


def write_point_cloud_ply(cloud, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        if cloud.organized:
            fh.write(f"comment width {cloud.width}\n")
            fh.write(f"comment height {cloud.height}\n")
        fh.write(f"element vertex {len(cloud.points)}\n")
        fh.write("property float x\nproperty float y\nproperty float z\n")
        fh.write("end_header\n")
        for p in cloud.points:
            fh.write(f"{p[0]!r} {p[1]!r} {p[2]!r}\n")


def apply_rig_transform(cloud, transform):
    """Map every point p to R p + t; organization and colors are preserved."""
    pts = cloud.points @ transform.rotation.T + transform.translation
    return PointCloud(points=pts, width=cloud.width, height=cloud.height, colors=cloud.colors)


def subtract_background(cloud, model):
    """Keep points inside the workspace and outside every device box.

    Organized clouds keep their layout (removed points become invalid slots);
    unorganized clouds drop the removed rows. A fully-removed frame warns
    rather than fails.
    """
    pts = cloud.points
    valid = cloud.valid_mask
    keep = valid.copy()
    finite_pts = np.where(valid[:, None], pts, 0.0)
    inside_ws = np.all(
        (finite_pts >= model.workspace_min) & (finite_pts <= model.workspace_max), axis=1
    )
    keep &= inside_ws
    for box in model.boxes:
        keep &= ~box.contains(finite_pts)
    keep &= valid

    if not keep.any():
        warnings.warn("background subtraction removed every point (fully occluded frame?)")

    if cloud.organized:
        out = pts.copy()
        out[~keep] = np.nan
        return PointCloud(points=out, width=cloud.width, height=cloud.height, colors=cloud.colors)
    colors = cloud.colors[keep] if cloud.colors is not None else None
    return PointCloud(points=pts[keep], colors=colors)


def _merge_duplicates(points, valid):
    """Map each valid slot to a canonical slot, merging points within tolerance."""
    slot_to_canonical = np.arange(len(points))
    idx = np.flatnonzero(valid)
    if len(idx) > 1:
        pairs = cKDTree(points[idx]).query_pairs(DUPLICATE_MERGE_TOL, output_type="ndarray")
        for a, b in pairs:
            sa, sb = idx[a], idx[b]
            ra, rb = slot_to_canonical[sa], slot_to_canonical[sb]
            lo, hi = min(ra, rb), max(ra, rb)
            slot_to_canonical[slot_to_canonical == hi] = lo
    return slot_to_canonical


def triangulate(cloud, mode="grid", max_edge_length=DEFAULT_MAX_EDGE_LENGTH, knn=12):
    """Convert a point cloud into a SurfaceMesh.

    ``grid`` mode (primary) walks the organized 2x2 cells: fully valid cells
    contribute two triangles across a fixed diagonal, cells with exactly one
    invalid corner contribute the remaining triangle. ``knn`` mode projects
    each point's neighborhood onto its local tangent plane and keeps the
    Delaunay triangles agreed on by all three corners. Either way, triangles
    with any edge longer than ``max_edge_length`` are discarded, duplicate
    points within 1e-12 are merged first, and isolated points are dropped.
    """
    if len(cloud.points) == 0 or not cloud.valid_mask.any():
        raise ValueError("cannot triangulate an empty point cloud")
    if mode == "grid":
        if not cloud.organized:
            raise ValueError("grid triangulation requires an organized cloud")
        raw_tris = _grid_triangles(cloud)
    elif mode == "knn":
        raw_tris = _knn_projection_triangles(cloud, knn)
    else:
        raise ValueError(f"unknown triangulation mode {mode!r} (expected 'grid' or 'knn')")

    pts = cloud.points
    canon = _merge_duplicates(pts, cloud.valid_mask)
    tris = canon[raw_tris] if len(raw_tris) else raw_tris

    if len(tris):
        degenerate = (
            (tris[:, 0] == tris[:, 1]) | (tris[:, 1] == tris[:, 2]) | (tris[:, 0] == tris[:, 2])
        )
        tris = tris[~degenerate]
    if len(tris):
        a, b, c = pts[tris[:, 0]], pts[tris[:, 1]], pts[tris[:, 2]]
        longest = np.maximum(
            np.linalg.norm(a - b, axis=1),
            np.maximum(np.linalg.norm(b - c, axis=1), np.linalg.norm(a - c, axis=1)),
        )
        tris = tris[longest <= max_edge_length]

    used = np.unique(tris) if len(tris) else np.zeros(0, dtype=np.int64)
    remap = np.full(len(pts), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    vertices = pts[used]
    triangles = remap[tris] if len(tris) else np.zeros((0, 3), dtype=np.int32)
    return mesh_from_triangles(vertices, triangles)


def _grid_triangles(cloud):
    w, h = cloud.width, cloud.height
    valid = cloud.valid_mask.reshape(h, w)
    slots = np.arange(w * h, dtype=np.int64).reshape(h, w)

    s00, s01 = slots[:-1, :-1].ravel(), slots[:-1, 1:].ravel()
    s10, s11 = slots[1:, :-1].ravel(), slots[1:, 1:].ravel()
    v00, v01 = valid[:-1, :-1].ravel(), valid[:-1, 1:].ravel()
    v10, v11 = valid[1:, :-1].ravel(), valid[1:, 1:].ravel()

    all4 = v00 & v01 & v10 & v11
    tris = [
        np.column_stack([s00[all4], s10[all4], s11[all4]]),
        np.column_stack([s00[all4], s11[all4], s01[all4]]),
    ]
    # cells with exactly one invalid corner still yield the remaining triangle
    only = ~v00 & v01 & v10 & v11
    tris.append(np.column_stack([s10[only], s11[only], s01[only]]))
    only = v00 & ~v01 & v10 & v11
    tris.append(np.column_stack([s00[only], s10[only], s11[only]]))
    only = v00 & v01 & ~v10 & v11
    tris.append(np.column_stack([s00[only], s11[only], s01[only]]))
    only = v00 & v01 & v10 & ~v11
    tris.append(np.column_stack([s00[only], s10[only], s01[only]]))
    return np.concatenate(tris)


def _knn_projection_triangles(cloud, knn):
    pts = cloud.points[cloud.valid_mask]
    slot_ids = np.flatnonzero(cloud.valid_mask)
    n = len(pts)
    if n < 3:
        return np.zeros((0, 3), dtype=np.int64)
    k = min(knn + 1, n)
    tree = cKDTree(pts)
    _, nbrs = tree.query(pts, k=k)

    votes = {}
    for i in range(n):
        ring = nbrs[i]
        local = pts[ring] - pts[i]
        # local tangent basis from the two dominant directions
        _, _, vt = np.linalg.svd(local, full_matrices=False)
        uv = local @ vt[:2].T
        if len(ring) < 3:
            continue
        try:
            dela = Delaunay(uv)
        except Exception:
            continue
        for simplex in dela.simplices:
            tri = tuple(sorted(int(ring[s]) for s in simplex))
            votes[tri] = votes.get(tri, 0) + 1
    tris = sorted(t for t, c in votes.items() if c >= 3)
    if not tris:
        return np.zeros((0, 3), dtype=np.int64)
    return slot_ids[np.asarray(tris, dtype=np.int64)]


def load_rig_config(path):
    """Parse the rig JSON: cameras, device boxes, and the workspace box.

    Returns ({camera_id: RigTransform}, DeviceModel).
    """
    with open(path, "r", encoding="utf-8") as fh:
        cfg = json.load(fh)
    cameras = {}
    for cam in cfg.get("cameras", []):
        t = RigTransform(
            camera_id=int(cam["id"]),
            rotation=np.asarray(cam["rotation"], dtype=np.float64).reshape(3, 3),
            translation=cam["translation"],
        )
        cameras[t.camera_id] = t
    boxes = [
        OrientedBox(
            center=b["center"],
            extents=b["extents"],
            rotation=np.asarray(b.get("rotation", np.eye(3).ravel()), dtype=np.float64).reshape(3, 3),
        )
        for b in cfg.get("device_boxes", [])
    ]
    ws = cfg["workspace"]
    model = DeviceModel(boxes=boxes, workspace_min=ws["min"], workspace_max=ws["max"])
    return cameras, model
