"""Triangle mesh geometry: STL loading, local plane fits, and surface projection.

Distances are millimetres and angles radians unless a name says otherwise.
"""

from __future__ import annotations

import logging
import os
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import HullError, MeshError, PlaneFitError

logger = logging.getLogger(__name__)

# Vertices closer than this are the same vertex.
MERGE_TOL = 1e-6
# Triangles at or below this area are dropped on load.
DEGENERATE_AREA = 1e-9
# Boundary inclusion tolerance for hull containment, in mm.
HULL_TOL = 1e-9
# Minimum gap between the two smallest singular values of a centered
# point set for the plane normal to be well defined.
SINGULAR_GAP = 1e-12


def unit(v):
    """Return v normalized to unit length."""
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ValueError("cannot normalize zero vector")
    return v / n


def rotation_about(axis, angle: float) -> np.ndarray:
    """Rotation matrix for a right-handed rotation of `angle` about `axis`.

    Rodrigues form; `axis` need not be normalized.
    """
    a = unit(axis)
    c = np.cos(angle)
    s = np.sin(angle)
    K = np.array([[0.0, -a[2], a[1]], [a[2], 0.0, -a[0]], [-a[1], a[0], 0.0]])
    return c * np.eye(3) + s * K + (1.0 - c) * np.outer(a, a)


@dataclass
class Plane:
    """A plane through `origin` with unit `normal`."""

    origin: np.ndarray
    normal: np.ndarray

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float)
        self.normal = unit(self.normal)

    def signed_distance(self, p) -> float:
        return float(np.dot(np.asarray(p, dtype=float) - self.origin, self.normal))


@dataclass
class TriMesh:
    """Indexed triangle mesh.

    vertices: (V, 3) float array, mm.
    faces: (F, 3) int array of vertex indices, counter-clockwise seen
        from the outward normal side.
    """

    vertices: np.ndarray
    faces: np.ndarray
    name: str = ""
    _kdtree: cKDTree | None = field(default=None, repr=False, compare=False)
    _vertex_normals: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=float)
        self.faces = np.ascontiguousarray(self.faces, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise MeshError("vertices must be (V, 3)")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise MeshError("faces must be (F, 3)")
        if len(self.faces) and self.faces.max() >= len(self.vertices):
            raise MeshError("face index out of range")
        if len(self.faces) and self.faces.min() < 0:
            raise MeshError("negative face index")

    @property
    def kdtree(self) -> cKDTree:
        # Built once, then read-only.
        if self._kdtree is None:
            self._kdtree = cKDTree(self.vertices)
        return self._kdtree

    def face_normals(self, normalized: bool = True) -> np.ndarray:
        v = self.vertices
        f = self.faces
        n = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        if normalized:
            lens = np.linalg.norm(n, axis=1, keepdims=True)
            lens[lens == 0.0] = 1.0
            n = n / lens
        return n

    def face_areas(self) -> np.ndarray:
        n = self.face_normals(normalized=False)
        return 0.5 * np.linalg.norm(n, axis=1)

    @property
    def vertex_normals(self) -> np.ndarray:
        """Area-weighted average of adjacent face normals, unit length."""
        if self._vertex_normals is None:
            acc = np.zeros_like(self.vertices)
            fn = self.face_normals(normalized=False)  # magnitude = 2 * area
            for k in range(3):
                np.add.at(acc, self.faces[:, k], fn)
            lens = np.linalg.norm(acc, axis=1, keepdims=True)
            lens[lens == 0.0] = 1.0
            self._vertex_normals = acc / lens
        return self._vertex_normals

    def bounds(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def validate(self) -> None:
        """Check mesh invariants; raise MeshError on violation."""
        if len(self.faces) == 0:
            raise MeshError("mesh has no faces")
        areas = self.face_areas()
        if np.any(areas <= DEGENERATE_AREA):
            raise MeshError("mesh contains degenerate triangles")
        # Manifold with boundary: every edge on at most two faces.
        edges = np.concatenate(
            [self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]]
        )
        edges = np.sort(edges, axis=1)
        _, counts = np.unique(edges, axis=0, return_counts=True)
        if counts.max() > 2:
            raise MeshError("non-manifold edge shared by more than two faces")


def _merge_vertices(raw: np.ndarray, tris: np.ndarray):
    """Merge duplicate vertices on a MERGE_TOL grid, first occurrence wins."""
    decimals = int(round(-np.log10(MERGE_TOL)))
    keys = np.round(raw, decimals)
    _, first, inverse = np.unique(
        keys, axis=0, return_index=True, return_inverse=True
    )
    # np.unique sorts; remap so output order follows first occurrence.
    order = np.argsort(first)
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    vertices = raw[first[order]]
    faces = rank[inverse][tris]
    return vertices, faces


def _drop_degenerate(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    a = vertices[faces[:, 0]]
    n = np.cross(vertices[faces[:, 1]] - a, vertices[faces[:, 2]] - a)
    areas = 0.5 * np.linalg.norm(n, axis=1)
    keep = areas > DEGENERATE_AREA
    dropped = int(np.count_nonzero(~keep))
    if dropped:
        logger.debug("dropped %d degenerate triangles", dropped)
    return faces[keep]


def _parse_ascii_stl(text: str) -> np.ndarray:
    coords = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "vertex":
            if len(parts) != 4:
                raise MeshError(f"malformed vertex on line {lineno}")
            try:
                coords.append([float(parts[1]), float(parts[2]), float(parts[3])])
            except ValueError as exc:
                raise MeshError(f"bad coordinate on line {lineno}") from exc
    if not coords or len(coords) % 3 != 0:
        raise MeshError("ASCII STL has no complete facets")
    return np.asarray(coords, dtype=float)


_BINARY_RECORD = np.dtype(
    [("normal", "<f4", 3), ("verts", "<f4", (3, 3)), ("attr", "<u2")]
)


def _parse_binary_stl(data: bytes) -> np.ndarray:
    if len(data) < 84:
        raise MeshError("binary STL truncated before header")
    (count,) = struct.unpack("<I", data[80:84])
    expected = 84 + count * _BINARY_RECORD.itemsize
    if count == 0:
        raise MeshError("binary STL declares zero facets")
    if len(data) < expected:
        raise MeshError("binary STL truncated")
    records = np.frombuffer(data[84:expected], dtype=_BINARY_RECORD)
    return records["verts"].reshape(-1, 3).astype(float)


def load_mesh(path) -> TriMesh:
    """Load an STL file (ASCII or binary, auto-detected) into a TriMesh.

    Duplicate vertices within MERGE_TOL are merged deterministically in
    first-occurrence order and degenerate triangles are dropped.
    """
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise MeshError(f"cannot read mesh file {path}: {exc}") from exc
    if not data:
        raise MeshError(f"empty mesh file {path}")

    head = data[:512].lstrip()
    if head.startswith(b"solid") and b"facet" in data[:4096]:
        try:
            raw = _parse_ascii_stl(data.decode("ascii", errors="strict"))
        except UnicodeDecodeError as exc:
            raise MeshError("STL starts with 'solid' but is not ASCII") from exc
    else:
        raw = _parse_binary_stl(data)

    tris = np.arange(len(raw), dtype=np.int64).reshape(-1, 3)
    vertices, faces = _merge_vertices(raw, tris)
    faces = _drop_degenerate(vertices, faces)
    # Merging can collapse a face to a repeated index; those have zero
    # area and are already gone.
    if len(faces) == 0:
        raise MeshError("mesh contains only degenerate triangles")
    mesh = TriMesh(vertices, faces, name=os.path.splitext(os.path.basename(str(path)))[0])
    mesh.validate()
    logger.info(
        "loaded %s: %d vertices, %d faces", mesh.name, len(vertices), len(faces)
    )
    return mesh


def k_nearest_vertices(mesh: TriMesh, p, n: int):
    """Indices of the n nearest mesh vertices to p.

    Sorted by ascending distance; exact distance ties break toward the
    lower vertex index.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    nv = len(mesh.vertices)
    n = min(n, nv)
    # Over-query so ties straddling the cut are visible to the re-sort.
    k = min(nv, n + 16)
    dist, idx = mesh.kdtree.query(np.asarray(p, dtype=float), k=k)
    dist = np.atleast_1d(dist)
    idx = np.atleast_1d(idx)
    order = np.lexsort((idx, dist))
    return idx[order[:n]]


def _orient_normal(normal: np.ndarray, hint) -> np.ndarray:
    """Fix the sign of a fitted plane normal.

    Prefer agreement with the mean of `hint` normals; otherwise positive
    z component, tie to positive x, then positive y.
    """
    if hint is not None:
        h = np.mean(np.asarray(hint, dtype=float).reshape(-1, 3), axis=0)
        d = float(np.dot(normal, h))
        if d < 0.0:
            return -normal
        if d > 0.0:
            return normal
    for comp in (2, 0, 1):
        if normal[comp] > 0.0:
            return normal
        if normal[comp] < 0.0:
            return -normal
    return normal


def fit_plane(points, normals=None) -> Plane:
    """Least-squares plane through `points`.

    The origin is the centroid and the normal the direction of minimal
    variance. `normals`, when given, vote on the normal's sign.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) < 3:
        raise PlaneFitError("need at least 3 points to fit a plane")
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    # Singular values in descending order; the last singular vector is
    # the minimal-variance direction.
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    if s[1] - s[2] < SINGULAR_GAP:
        raise PlaneFitError("points are collinear or coincident")
    normal = _orient_normal(vt[2], normals)
    return Plane(centroid, normal)


def plane_basis(normal: np.ndarray):
    """Deterministic orthonormal in-plane axes (u, w) for a unit normal."""
    # Seed with the world axis least aligned with the normal.
    k = int(np.argmin(np.abs(normal)))
    e = np.zeros(3)
    e[k] = 1.0
    u = np.cross(normal, e)
    u = u / np.linalg.norm(u)
    w = np.cross(normal, u)
    return u, w


def convex_hull_2d(points) -> np.ndarray:
    """Convex hull of 2-D points, counter-clockwise, via monotone chain.

    Raises HullError when the input is degenerate (collinear).
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < 3:
        raise HullError("need at least 3 points")
    pts = np.unique(pts, axis=0)  # sorts lexicographically by (x, y)
    if len(pts) < 3:
        raise HullError("fewer than 3 distinct points")

    def half(iterable):
        chain = []
        for p in iterable:
            while len(chain) >= 2 and _cross2(chain[-2], chain[-1], p) <= 0.0:
                chain.pop()
            chain.append(p)
        return chain

    lower = half(pts)
    upper = half(pts[::-1])
    hull = np.asarray(lower[:-1] + upper[:-1])
    if len(hull) < 3:
        raise HullError("points are collinear")
    return hull


def _cross2(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def hull_contains(hull: np.ndarray, q, tol: float = HULL_TOL) -> bool:
    """True when q lies inside or within `tol` of the CCW hull boundary."""
    q = np.asarray(q, dtype=float)
    a = hull
    b = np.roll(hull, -1, axis=0)
    edge = b - a
    lens = np.linalg.norm(edge, axis=1)
    cross = edge[:, 0] * (q[1] - a[:, 1]) - edge[:, 1] * (q[0] - a[:, 0])
    # cross / |edge| is the signed distance to the edge line, positive inside.
    return bool(np.all(cross >= -tol * lens))


def _contains_batch_py(sorted_pts, queries, tol, out):
    """Hull containment for a batch of pre-sorted 2-D neighborhoods.

    sorted_pts: (N, k, 2) lexicographically sorted per row.
    out: (N,) uint8, set to 1 where the query is inside its hull,
    2 where the neighborhood is degenerate.
    """
    n_rows, k, _ = sorted_pts.shape
    hx = np.empty(2 * k + 1)
    hy = np.empty(2 * k + 1)
    for i in range(n_rows):
        px = sorted_pts[i, :, 0]
        py = sorted_pts[i, :, 1]
        # Monotone chain, lower then upper.
        m = 0
        for j in range(k):
            while m >= 2 and (
                (hx[m - 1] - hx[m - 2]) * (py[j] - hy[m - 2])
                - (hy[m - 1] - hy[m - 2]) * (px[j] - hx[m - 2])
            ) <= 0.0:
                m -= 1
            hx[m] = px[j]
            hy[m] = py[j]
            m += 1
        lower_len = m
        for j in range(k - 2, -1, -1):
            while m - lower_len >= 1 and (
                (hx[m - 1] - hx[m - 2]) * (py[j] - hy[m - 2])
                - (hy[m - 1] - hy[m - 2]) * (px[j] - hx[m - 2])
            ) <= 0.0:
                m -= 1
            hx[m] = px[j]
            hy[m] = py[j]
            m += 1
        m -= 1  # last point repeats the first
        if m < 3:
            out[i] = 2
            continue
        qx = queries[i, 0]
        qy = queries[i, 1]
        inside = True
        for j in range(m):
            ax = hx[j]
            ay = hy[j]
            bx = hx[j + 1] if j + 1 < m else hx[0]
            by = hy[j + 1] if j + 1 < m else hy[0]
            ex = bx - ax
            ey = by - ay
            elen = np.sqrt(ex * ex + ey * ey)
            cross = ex * (qy - ay) - ey * (qx - ax)
            if cross < -tol * elen:
                inside = False
                break
        out[i] = 1 if inside else 0
    return out


try:  # optional JIT for the batch kernel; identical semantics without it
    from numba import njit

    _contains_batch = njit(cache=True)(_contains_batch_py)
except ImportError:  # pragma: no cover
    _contains_batch = _contains_batch_py


def project_points(mesh: TriMesh, points, n: int = 50):
    """Project points onto local least-squares planes of the mesh.

    For each point: fit a plane to its n nearest mesh vertices, project
    orthogonally, and accept only when the projection falls inside the
    2-D convex hull of those vertices in plane coordinates.

    Returns (projected (N, 3), normals (N, 3), accepted (N,) bool).
    Rejected rows keep the plane projection but are flagged False;
    degenerate neighborhoods are flagged False with a zero normal.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    n = min(n, len(mesh.vertices))
    if n < 3:
        raise PlaneFitError("mesh too small for plane fitting")
    _, idx = mesh.kdtree.query(pts, k=n)
    idx = idx.reshape(len(pts), n)
    neigh = mesh.vertices[idx]  # (N, k, 3)
    centroid = neigh.mean(axis=1)
    centered = neigh - centroid[:, None, :]
    cov = np.einsum("nki,nkj->nij", centered, centered)
    evals, evecs = np.linalg.eigh(cov)  # ascending
    normals = evecs[:, :, 0]
    # Same gap criterion as fit_plane, on singular values of `centered`.
    svals = np.sqrt(np.maximum(evals, 0.0))
    degenerate = (svals[:, 1] - svals[:, 0]) < SINGULAR_GAP

    # Orient with the mean vertex normal of the neighborhood.
    hints = mesh.vertex_normals[idx].mean(axis=1)
    dots = np.einsum("ni,ni->n", normals, hints)
    flip = dots < 0.0
    normals[flip] = -normals[flip]
    ambiguous = dots == 0.0
    if np.any(ambiguous):
        for i in np.nonzero(ambiguous)[0]:
            normals[i] = _orient_normal(normals[i], None)

    offs = np.einsum("ni,ni->n", pts - centroid, normals)
    projected = pts - offs[:, None] * normals

    # Plane coordinates for neighborhoods and projections.
    k_axis = np.argmin(np.abs(normals), axis=1)
    e = np.zeros_like(normals)
    e[np.arange(len(pts)), k_axis] = 1.0
    u = np.cross(normals, e)
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    w = np.cross(normals, u)
    rel = neigh - centroid[:, None, :]
    p2 = np.stack(
        [np.einsum("nki,ni->nk", rel, u), np.einsum("nki,ni->nk", rel, w)], axis=-1
    )
    relq = projected - centroid
    q2 = np.stack(
        [np.einsum("ni,ni->n", relq, u), np.einsum("ni,ni->n", relq, w)], axis=-1
    )

    # Lexicographic per-row sort (x then y) via complex argsort.
    order = np.argsort(p2[:, :, 0] + 1j * p2[:, :, 1], axis=1)
    p2s = np.take_along_axis(p2, order[:, :, None], axis=1)
    flags = np.zeros(len(pts), dtype=np.uint8)
    _contains_batch(
        np.ascontiguousarray(p2s), np.ascontiguousarray(q2), HULL_TOL, flags
    )
    accepted = (flags == 1) & ~degenerate
    normals[degenerate] = 0.0
    return projected, normals, accepted


def project_to_surface(mesh: TriMesh, p, n: int = 50):
    """Project a single point onto the mesh's local fitted plane.

    Returns the projected point, or None when the projection falls
    outside the convex hull of the n nearest vertices (past the surface
    boundary). Raises PlaneFitError for a degenerate neighborhood.
    """
    projected, normals, accepted = project_points(mesh, [p], n=n)
    if not accepted[0] and not np.any(normals[0]):
        raise PlaneFitError("nearest vertices are collinear or coincident")
    if not accepted[0]:
        return None
    return projected[0]


def write_ply_points(path, points, normals=None, layer_index=None, comment=""):
    """Write points (with optional normals and layer index) as ASCII PLY."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    lines = ["ply", "format ascii 1.0"]
    if comment:
        lines.append(f"comment {comment}")
    lines.append(f"element vertex {len(pts)}")
    lines += ["property double x", "property double y", "property double z"]
    if normals is not None:
        normals = np.asarray(normals, dtype=float).reshape(-1, 3)
        lines += ["property double nx", "property double ny", "property double nz"]
    if layer_index is not None:
        layer_index = np.asarray(layer_index, dtype=np.int64).reshape(-1)
        lines.append("property int layer")
    lines.append("end_header")
    for i in range(len(pts)):
        row = [f"{c:.12g}" for c in pts[i]]
        if normals is not None:
            row += [f"{c:.12g}" for c in normals[i]]
        if layer_index is not None:
            row.append(str(int(layer_index[i])))
        lines.append(" ".join(row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
