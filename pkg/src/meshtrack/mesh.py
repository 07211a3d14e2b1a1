"""Triangle surface meshes: construction, validation, and file I/O."""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree


class FormatError(ValueError):
    """Raised when an input file does not parse; carries the offending line."""

    def __init__(self, message, path=None, line=None):
        prefix = ""
        if path is not None:
            prefix = f"{path}:"
            if line is not None:
                prefix += f"{line}:"
            prefix += " "
        super().__init__(prefix + message)
        self.path = path
        self.line = line


@dataclass(frozen=True, eq=False)
class SurfaceMesh:
    """One frame's surface: vertex positions, weighted edges, triangles.

    Immutable after construction. ``edges`` holds each undirected edge once
    as (u, v) with u < v; ``edge_lengths`` are the Euclidean lengths of the
    corresponding edges.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    edge_lengths: np.ndarray

    @property
    def n_vertices(self):
        return len(self.vertices)

    @cached_property
    def csr(self):
        """Symmetric CSR adjacency (indptr, indices, weights) for path kernels."""
        n = self.n_vertices
        if len(self.edges) == 0:
            return (
                np.zeros(n + 1, dtype=np.int32),
                np.zeros(0, dtype=np.int32),
                np.zeros(0, dtype=np.float64),
            )
        src = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        dst = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        w = np.concatenate([self.edge_lengths, self.edge_lengths])
        order = np.lexsort((dst, src))
        src, dst, w = src[order], dst[order], w[order]
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, src + 1, 1)
        indptr = np.cumsum(indptr)
        return (
            indptr.astype(np.int32),
            dst.astype(np.int32),
            np.ascontiguousarray(w, dtype=np.float64),
        )

    @cached_property
    def vertex_degrees(self):
        deg = np.zeros(self.n_vertices, dtype=np.int64)
        if len(self.edges):
            np.add.at(deg, self.edges.ravel(), 1)
        return deg


def mesh_from_triangles(vertices, triangles, extra_edges=None):
    """Build a SurfaceMesh, deriving the edge set from the triangle list."""
    vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    triangles = np.asarray(triangles, dtype=np.int32).reshape(-1, 3)
    if len(triangles):
        pairs = np.concatenate(
            [triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [0, 2]]]
        )
    else:
        pairs = np.zeros((0, 2), dtype=np.int32)
    if extra_edges is not None and len(extra_edges):
        pairs = np.concatenate([pairs, np.asarray(extra_edges, dtype=np.int32)])
    pairs = np.sort(pairs, axis=1)
    if len(pairs):
        pairs = np.unique(pairs, axis=0)
    lengths = np.linalg.norm(
        vertices[pairs[:, 0]] - vertices[pairs[:, 1]], axis=1
    ) if len(pairs) else np.zeros(0)
    return SurfaceMesh(
        vertices=vertices,
        triangles=triangles,
        edges=pairs.astype(np.int32),
        edge_lengths=lengths,
    )


def validate_mesh(mesh, duplicate_tol=1e-12, length_tol=1e-9):
    """Check the SurfaceMesh invariants; raise ValueError on the first failure.

    Checks: finite coordinates, index ranges, edge lengths matching vertex
    positions, triangle edges present in the edge set, and no two vertices
    closer than ``duplicate_tol``.
    """
    v, t, e = mesh.vertices, mesh.triangles, mesh.edges
    if not np.all(np.isfinite(v)):
        raise ValueError("mesh has non-finite vertex coordinates")
    n = len(v)
    if len(t) and (t.min() < 0 or t.max() >= n):
        raise ValueError("triangle references vertex outside 0..n-1")
    if len(e) and (e.min() < 0 or e.max() >= n):
        raise ValueError("edge references vertex outside 0..n-1")
    if len(e):
        actual = np.linalg.norm(v[e[:, 0]] - v[e[:, 1]], axis=1)
        bad = np.abs(actual - mesh.edge_lengths) > length_tol
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise ValueError(
                f"edge {tuple(e[i])} length {mesh.edge_lengths[i]} does not match "
                f"vertex positions ({actual[i]})"
            )
        edge_set = {(int(a), int(b)) for a, b in e}
    else:
        edge_set = set()
    for tri in t:
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[0], tri[2])):
            key = (int(min(a, b)), int(max(a, b)))
            if key not in edge_set:
                raise ValueError(f"triangle edge {key} missing from edge set")
    if n > 1:
        dup = cKDTree(v).query_pairs(duplicate_tol)
        if dup:
            a, b = sorted(dup)[0]
            raise ValueError(f"duplicate vertices {a} and {b} within {duplicate_tol}")


def connected_components(mesh):
    """Label vertices by connected component of the edge graph.

    Returns (n_components, labels). Component ids are ordered by each
    component's smallest vertex id.
    """
    from scipy.sparse import csr_matrix
    from scipy.sparse.csgraph import connected_components as _cc

    n = mesh.n_vertices
    indptr, indices, w = mesh.csr
    graph = csr_matrix((np.ones(len(indices)), indices, indptr), shape=(n, n))
    n_comp, raw = _cc(graph, directed=False)
    # relabel so components are numbered by smallest contained vertex id
    order = np.full(n_comp, n, dtype=np.int64)
    np.minimum.at(order, raw, np.arange(n))
    rank = np.argsort(np.argsort(order))
    return n_comp, rank[raw]


def _read_tokens(path):
    """All whitespace-separated tokens of a text file with their line numbers."""
    tokens = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0]
            for tok in body.split():
                tokens.append((tok, lineno))
    return tokens


def load_mesh(path, format=None):
    """Load a SurfaceMesh from an OFF or PLY file (edges derived from faces)."""
    path = str(path)
    if format is None:
        format = "off" if path.lower().endswith(".off") else "ply"
    if format == "off":
        return _load_off(path)
    if format == "ply":
        vertices, faces, _, _ = _parse_ply(path, need_faces=True)
        return _mesh_from_faces(vertices, faces, path)
    raise ValueError(f"unknown mesh format {format!r} (expected 'off' or 'ply')")


def _mesh_from_faces(vertices, faces, path):
    n = len(vertices)
    triangles = []
    for face_no, face in enumerate(faces):
        for idx in face:
            if idx < 0 or idx >= n:
                raise FormatError(
                    f"face {face_no} references vertex {idx}, valid range 0..{n - 1}",
                    path=path,
                )
        # fan-triangulate polygons with more than 3 vertices
        for k in range(1, len(face) - 1):
            triangles.append((face[0], face[k], face[k + 1]))
    return mesh_from_triangles(np.asarray(vertices), np.asarray(triangles, dtype=np.int32).reshape(-1, 3))


def _load_off(path):
    tokens = _read_tokens(path)
    pos = 0

    def take(count, what):
        nonlocal pos
        if pos + count > len(tokens):
            line = tokens[-1][1] if tokens else 1
            raise FormatError(f"unexpected end of file while reading {what}", path=path, line=line)
        out = tokens[pos : pos + count]
        pos += count
        return out

    first = take(1, "header")[0]
    if first[0] != "OFF":
        raise FormatError(f"expected OFF header, found {first[0]!r}", path=path, line=first[1])
    counts = take(3, "element counts")
    try:
        nv, nf = int(counts[0][0]), int(counts[1][0])
    except ValueError:
        raise FormatError(f"bad element counts {counts[0][0]!r} {counts[1][0]!r}", path=path, line=counts[0][1]) from None

    vertices = np.empty((nv, 3), dtype=np.float64)
    for i in range(nv):
        toks = take(3, f"vertex {i}")
        try:
            vertices[i] = [float(t) for t, _ in toks]
        except ValueError:
            raise FormatError(f"bad vertex coordinate in {[t for t, _ in toks]}", path=path, line=toks[0][1]) from None

    faces = []
    for i in range(nf):
        cnt_tok = take(1, f"face {i}")[0]
        try:
            cnt = int(cnt_tok[0])
        except ValueError:
            raise FormatError(f"bad face vertex count {cnt_tok[0]!r}", path=path, line=cnt_tok[1]) from None
        idx_toks = take(cnt, f"face {i} indices")
        try:
            faces.append([int(t) for t, _ in idx_toks])
        except ValueError:
            raise FormatError(f"bad face index in {[t for t, _ in idx_toks]}", path=path, line=idx_toks[0][1]) from None

    return _mesh_from_faces(vertices, faces, path)


def _parse_ply(path, need_faces=False):
    """Parse the ASCII PLY dialect used by this project.

    Returns (vertices, faces, width, height); faces is a list of index lists
    (empty when the file declares no face element), width/height come from
    ``comment width N`` / ``comment height N`` header lines.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.readlines()

    if not lines or lines[0].strip() != "ply":
        raise FormatError("missing 'ply' magic", path=path, line=1)

    n_vertex = n_face = None
    width = height = None
    vertex_props = []
    current_element = None
    header_end = None
    for lineno, raw in enumerate(lines[1:], start=2):
        parts = raw.split()
        if not parts:
            continue
        key = parts[0]
        if key == "format":
            if parts[1] != "ascii":
                raise FormatError(f"unsupported PLY format {parts[1]!r} (ascii only)", path=path, line=lineno)
        elif key == "comment":
            if len(parts) == 3 and parts[1] in ("width", "height"):
                try:
                    value = int(parts[2])
                except ValueError:
                    raise FormatError(f"bad {parts[1]} comment {parts[2]!r}", path=path, line=lineno) from None
                if parts[1] == "width":
                    width = value
                else:
                    height = value
        elif key == "element":
            current_element = parts[1]
            try:
                count = int(parts[2])
            except (IndexError, ValueError):
                raise FormatError(f"bad element line {raw.strip()!r}", path=path, line=lineno) from None
            if current_element == "vertex":
                n_vertex = count
            elif current_element == "face":
                n_face = count
        elif key == "property":
            if current_element == "vertex" and parts[1] != "list":
                vertex_props.append(parts[-1])
        elif key == "end_header":
            header_end = lineno
            break
    if header_end is None:
        raise FormatError("missing end_header", path=path, line=len(lines))
    if n_vertex is None:
        raise FormatError("no vertex element declared", path=path, line=header_end)
    for axis in ("x", "y", "z"):
        if axis not in vertex_props:
            raise FormatError(f"vertex element missing property {axis!r}", path=path, line=header_end)
    cols = [vertex_props.index(a) for a in ("x", "y", "z")]

    data_lines = [
        (lineno, raw.split())
        for lineno, raw in enumerate(lines[header_end:], start=header_end + 1)
        if raw.strip()
    ]
    expected_faces = n_face or 0
    if len(data_lines) != n_vertex + expected_faces:
        raise FormatError(
            f"expected {n_vertex} vertices and {expected_faces} faces "
            f"({n_vertex + expected_faces} data lines), found {len(data_lines)}",
            path=path,
            line=data_lines[-1][0] if data_lines else header_end,
        )

    vertices = np.empty((n_vertex, 3), dtype=np.float64)
    for i, (lineno, parts) in enumerate(data_lines[:n_vertex]):
        if len(parts) < len(vertex_props):
            raise FormatError(
                f"vertex line has {len(parts)} values, expected {len(vertex_props)}",
                path=path,
                line=lineno,
            )
        try:
            vertices[i] = [float(parts[c]) for c in cols]
        except ValueError:
            raise FormatError(f"bad vertex coordinate in {parts}", path=path, line=lineno) from None

    faces = []
    for lineno, parts in data_lines[n_vertex:]:
        try:
            cnt = int(parts[0])
            face = [int(p) for p in parts[1 : 1 + cnt]]
        except (ValueError, IndexError):
            raise FormatError(f"bad face line {parts}", path=path, line=lineno) from None
        if len(face) != cnt:
            raise FormatError(f"face declares {cnt} indices, has {len(face)}", path=path, line=lineno)
        faces.append(face)
    if need_faces and not faces:
        raise FormatError("PLY file declares no faces; cannot build a mesh", path=path)

    return vertices, faces, width, height


def write_mesh_off(mesh, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("OFF\n")
        fh.write(f"{mesh.n_vertices} {len(mesh.triangles)} 0\n")
        for p in mesh.vertices:
            fh.write(f"{p[0]!r} {p[1]!r} {p[2]!r}\n")
        for tri in mesh.triangles:
            fh.write(f"3 {tri[0]} {tri[1]} {tri[2]}\n")


def write_mesh_ply(mesh, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        fh.write(f"element vertex {mesh.n_vertices}\n")
        fh.write("property float x\nproperty float y\nproperty float z\n")
        fh.write(f"element face {len(mesh.triangles)}\n")
        fh.write("property list uchar int vertex_indices\nend_header\n")
        for p in mesh.vertices:
            fh.write(f"{p[0]!r} {p[1]!r} {p[2]!r}\n")
        for tri in mesh.triangles:
            fh.write(f"3 {tri[0]} {tri[1]} {tri[2]}\n")
