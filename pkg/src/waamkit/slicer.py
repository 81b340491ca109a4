"""Non-planar slicing of surface meshes into layer paths.

A layer is a set of ordered point paths on the part surface. Each point
carries a local frame: traversal tangent t, outward surface normal n,
and the increment direction a = t x n along which the next layer is
offset. Layer spacing h is measured along a, so layers follow the
surface instead of horizontal planes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import SliceError
from .geometry import Plane, TriMesh, project_points, write_ply_points

logger = logging.getLogger(__name__)

# Hard cap on layer count; hitting it means the growth loop ran away.
MAX_LAYERS = 100_000
# Runs shorter than this fraction of the sampling distance are dropped.
MIN_RUN_FRACTION = 0.25


@dataclass
class LayerPoint:
    """One path point with its local frame and path position."""

    p: np.ndarray
    t: np.ndarray
    n: np.ndarray
    a: np.ndarray
    lam: float


@dataclass
class Segment:
    """A contiguous run of layer points.

    Arrays are (N, 3) except lambdas (N,), which holds cumulative path
    length from the start of the layer (gaps between segments do not
    accumulate). `closed` marks a full loop stored without a duplicate
    end point.
    """

    points: np.ndarray
    tangents: np.ndarray
    normals: np.ndarray
    increments: np.ndarray
    lambdas: np.ndarray
    closed: bool = False
    arc_length: float = 0.0

    def __len__(self):
        return len(self.points)

    def point(self, i: int) -> LayerPoint:
        return LayerPoint(
            self.points[i],
            self.tangents[i],
            self.normals[i],
            self.increments[i],
            float(self.lambdas[i]),
        )


@dataclass
class Layer:
    segments: list = field(default_factory=list)
    index: int = 0
    closed: bool = False
    total_length: float = 0.0

    def n_points(self) -> int:
        return sum(len(s) for s in self.segments)

    def all_points(self) -> np.ndarray:
        return np.concatenate([s.points for s in self.segments])


@dataclass
class SlicePlan:
    layers: list
    h: float
    sampling: float
    source: str = ""
    warped: bool = False

    def n_points(self) -> int:
        return sum(layer.n_points() for layer in self.layers)


def _segment_lengths(points: np.ndarray, closed: bool) -> np.ndarray:
    d = np.diff(points, axis=0)
    lens = np.linalg.norm(d, axis=1)
    if closed:
        lens = np.append(lens, np.linalg.norm(points[0] - points[-1]))
    return lens


def _resample(points, spacing, closed, attrs=None, count=None):
    """Uniform arc-length resampling of a polyline.

    attrs maps names to (N, k) arrays interpolated alongside positions.
    Open paths keep both end points; closed paths store no duplicate end.
    Returns (samples, sampled_attrs, lambdas) or None when the path is
    too short to carry a layer path.
    """
    pts = np.asarray(points, dtype=float)
    lens = _segment_lengths(pts, closed)
    total = float(lens.sum())
    if total <= 0.0:
        return None
    cum = np.concatenate([[0.0], np.cumsum(lens)])
    if closed:
        n = count if count is not None else int(round(total / spacing))
        if n < 3:
            return None
        s = np.arange(n) * (total / n)
        base = np.vstack([pts, pts[:1]])
    else:
        n = count if count is not None else max(2, int(round(total / spacing)) + 1)
        s = np.arange(n) * (total / (n - 1))
        base = pts
    out = np.column_stack([np.interp(s, cum, base[:, k]) for k in range(3)])
    sampled = {}
    if attrs:
        for name, arr in attrs.items():
            arr = np.asarray(arr, dtype=float)
            abase = np.vstack([arr, arr[:1]]) if closed else arr
            sampled[name] = np.column_stack(
                [np.interp(s, cum, abase[:, k]) for k in range(arr.shape[1])]
            )
    return out, sampled, s


def _unit_rows(v: np.ndarray) -> np.ndarray:
    lens = np.linalg.norm(v, axis=1, keepdims=True)
    lens[lens == 0.0] = 1.0
    return v / lens


def _frames(samples: np.ndarray, raw_normals: np.ndarray, closed: bool):
    """Tangents by central difference, normals re-orthogonalized, a = t x n."""
    n_pts = len(samples)
    t = np.empty_like(samples)
    if closed:
        t = np.roll(samples, -1, axis=0) - np.roll(samples, 1, axis=0)
    else:
        t[1:-1] = samples[2:] - samples[:-2]
        t[0] = samples[1] - samples[0]
        t[-1] = samples[-1] - samples[-2]
    t = _unit_rows(t)
    n = _unit_rows(np.asarray(raw_normals, dtype=float))
    n = n - np.einsum("ij,ij->i", n, t)[:, None] * t
    n = _unit_rows(n)
    a = _unit_rows(np.cross(t, n))
    if n_pts != len(t):  # pragma: no cover
        raise SliceError("frame computation size mismatch")
    return t, n, a


def _build_segment(points, raw_normals, closed, spacing, lam_offset=0.0, count=None):
    """Resample a raw path and attach frames; None when degenerate."""
    res = _resample(points, spacing, closed, attrs={"n": raw_normals}, count=count)
    if res is None:
        return None
    samples, attrs, lam = res
    lens = _segment_lengths(samples, closed)
    arc = float(lens.sum())
    if arc < MIN_RUN_FRACTION * spacing:
        return None
    t, n, a = _frames(samples, attrs["n"], closed)
    return Segment(samples, t, n, a, lam + lam_offset, closed=closed, arc_length=arc)


# ---------------------------------------------------------------------------
# Plane sectioning


def _section_polylines(mesh: TriMesh, plane: Plane):
    """Intersect mesh with a plane; return chained (points, normals) paths.

    Intersection points on shared edges are computed identically for both
    incident faces (canonical low-to-high vertex order), so chaining can
    key on exact coordinates.
    """
    v = mesh.vertices
    sd = (v - plane.origin) @ plane.normal
    fnorm = mesh.face_normals()

    pos: dict = {}
    segs = []  # (key_a, key_b, face_normal)

    def edge_point(i, j):
        if i > j:
            i, j = j, i
        key = (i, j)
        if key not in pos:
            tpar = sd[i] / (sd[i] - sd[j])
            pos[key] = v[i] + tpar * (v[j] - v[i])
        return key

    def vert_point(i):
        key = ("v", i)
        if key not in pos:
            pos[key] = v[i].copy()
        return key

    for fi, face in enumerate(mesh.faces):
        keys = []
        for k in range(3):
            i = int(face[k])
            j = int(face[(k + 1) % 3])
            if sd[i] == 0.0:
                kk = vert_point(i)
                if kk not in keys:
                    keys.append(kk)
            if sd[i] * sd[j] < 0.0:
                kk = edge_point(i, j)
                if kk not in keys:
                    keys.append(kk)
        if len(keys) == 2:
            segs.append((keys[0], keys[1], fnorm[fi]))

    if not segs:
        return []

    adj: dict = {}
    for si, (a, b, _) in enumerate(segs):
        adj.setdefault(a, []).append(si)
        adj.setdefault(b, []).append(si)

    visited = [False] * len(segs)

    def walk(start_key):
        keys = [start_key]
        seg_normals = []
        cur = start_key
        closed = False
        while True:
            nxt = None
            for si in adj[cur]:
                if not visited[si]:
                    nxt = si
                    break
            if nxt is None:
                break
            visited[nxt] = True
            a, b, fn = segs[nxt]
            other = b if a == cur else a
            seg_normals.append(fn)
            if other == start_key:
                closed = True
                break
            keys.append(other)
            cur = other
        return keys, seg_normals, closed

    polylines = []

    def emit(keys, seg_normals, closed):
        if len(keys) < 2 or not seg_normals:
            return
        pts = np.array([pos[k] for k in keys])
        sn = np.asarray(seg_normals)
        vn = np.empty_like(pts)
        if closed:
            vn[0] = sn[0] + sn[-1]
            vn[1:] = sn[1:] + sn[:-1]
        else:
            vn[0] = sn[0]
            vn[-1] = sn[-1]
            vn[1:-1] = sn[1:] + sn[:-1]
        polylines.append((pts, _unit_rows(vn), closed))

    # Open chains start at degree-1 endpoints, in insertion order.
    for key, incident in adj.items():
        if len(incident) == 1 and not visited[incident[0]]:
            emit(*walk(key))
    # Whatever remains are loops.
    for si, (a, _, _) in enumerate(segs):
        if not visited[si]:
            emit(*walk(a))
    return polylines


def sample_base_layer(mesh: TriMesh, base_plane: Plane, spacing: float) -> Layer:
    """Intersect the mesh with the base plane and resample the section.

    Paths are oriented so the increment direction a = t x n points along
    the base plane normal (away from the build plate).
    """
    if spacing <= 0.0:
        raise SliceError("sampling distance must be positive")
    polylines = _section_polylines(mesh, base_plane)
    if not polylines:
        raise SliceError("base plane does not intersect the mesh")

    segments = []
    offset = 0.0
    for pts, vnorm, closed in polylines:
        # Orient traversal so a points off the plate.
        d = np.diff(pts, axis=0)
        if closed:
            d = np.vstack([d, pts[:1] - pts[-1:]])
            tl = _unit_rows(np.vstack([d[-1:] + d[:1], d[1:] + d[:-1]]))
        else:
            tl = _unit_rows(np.vstack([d[:1], d[1:] + d[:-1], d[-1:]]))
        a_raw = np.cross(tl, vnorm)
        if np.mean(a_raw @ base_plane.normal) < 0.0:
            pts = pts[::-1]
            vnorm = vnorm[::-1]
        seg = _build_segment(pts, vnorm, closed, spacing, lam_offset=offset)
        if seg is not None:
            segments.append(seg)
            offset += seg.arc_length
    if not segments:
        raise SliceError("base section is degenerate at this sampling distance")
    layer = Layer(
        segments=segments,
        index=0,
        closed=len(segments) == 1 and segments[0].closed,
        total_length=offset,
    )
    logger.debug(
        "base layer: %d segments, %d points, length %.2f",
        len(segments),
        layer.n_points(),
        offset,
    )
    return layer


# ---------------------------------------------------------------------------
# Layer growth


def _ok_runs(ok: np.ndarray, closed: bool):
    """Contiguous index runs of accepted points; wraps across the seam
    of closed paths. Returns (list_of_index_arrays, full_loop_flag)."""
    n = len(ok)
    if ok.all():
        return [np.arange(n)], True
    if not ok.any():
        return [], False
    if closed:
        shift = int(np.argmin(ok))  # first rejected index
        rolled = np.roll(ok, -shift)
        runs = []
        for start, stop in _bool_runs(rolled):
            runs.append((np.arange(start, stop) + shift) % n)
        return runs, False
    return [np.arange(start, stop) for start, stop in _bool_runs(ok)], False


def _bool_runs(mask: np.ndarray):
    idx = np.flatnonzero(np.diff(np.concatenate([[0], mask.view(np.int8), [0]])))
    return list(zip(idx[::2], idx[1::2]))


def _extend_end(mesh, pts, nrm, step, n_fit, max_len, front: bool):
    """March past a run end along the curve tangent, projecting each
    trial point; stop after two consecutive failed projections."""
    if len(pts) < 2:
        return pts, nrm
    if front:
        cur, prev = pts[0], pts[1]
    else:
        cur, prev = pts[-1], pts[-2]
    direction = cur - prev
    norm = np.linalg.norm(direction)
    if norm == 0.0:
        return pts, nrm
    direction = direction / norm

    added_p, added_n = [], []
    failures = 0
    trial = 1
    travelled = 0.0
    while failures < 2 and travelled < max_len:
        cand = cur + trial * step * direction
        proj, pn, okk = project_points(mesh, cand[None, :], n=n_fit)
        if okk[0]:
            added_p.append(proj[0])
            added_n.append(pn[0])
            direction = proj[0] - cur
            dl = np.linalg.norm(direction)
            if dl == 0.0:
                break
            direction = direction / dl
            travelled += dl
            cur = proj[0]
            failures = 0
            trial = 1
        else:
            failures += 1
            trial += 1
    if not added_p:
        return pts, nrm
    ap = np.asarray(added_p)
    an = np.asarray(added_n)
    if front:
        return np.vstack([ap[::-1], pts]), np.vstack([an[::-1], nrm])
    return np.vstack([pts, ap]), np.vstack([nrm, an])


def next_layer(mesh: TriMesh, layer: Layer, h: float, n: int = 50, spacing=None):
    """Grow the next layer by offsetting along a and projecting back.

    Points whose projection leaves the surface split the layer into
    segments; surviving run ends are extended along the curve tangent to
    recover the surface edge. Returns None when nothing survives.
    """
    if spacing is None:
        spacing = _infer_spacing(layer)
    segments = []
    offset = 0.0
    closed_child = False
    for seg in layer.segments:
        candidates = seg.points + h * seg.increments
        proj, pnorm, ok = project_points(mesh, candidates, n=n)
        runs, full = _ok_runs(ok, seg.closed)
        for run in runs:
            pts = proj[run]
            nrm = pnorm[run]
            if full and seg.closed:
                child = _build_segment(pts, nrm, True, spacing, lam_offset=offset)
                if child is not None:
                    closed_child = True
            else:
                max_ext = max(layer.total_length, 10.0 * spacing)
                pts, nrm = _extend_end(mesh, pts, nrm, spacing, n, max_ext, front=True)
                pts, nrm = _extend_end(mesh, pts, nrm, spacing, n, max_ext, front=False)
                if len(pts) < 2:
                    continue
                child = _build_segment(pts, nrm, False, spacing, lam_offset=offset)
            if child is not None:
                segments.append(child)
                offset += child.arc_length
    if not segments:
        return None
    return Layer(
        segments=segments,
        index=layer.index + 1,
        closed=closed_child and len(segments) == 1,
        total_length=offset,
    )


def _infer_spacing(layer: Layer) -> float:
    seg = layer.segments[0]
    if len(seg) > 1:
        return float(np.median(np.diff(seg.lambdas)))
    raise SliceError("cannot infer sampling distance from a 1-point segment")


def default_base_plane(mesh: TriMesh, h: float) -> Plane:
    """Base plane just above the lowest vertex, normal +z.

    The tiny offset keeps the section away from vertex-exact degeneracy
    when the mesh bottom edge lies exactly in a coordinate plane.
    """
    zmin = float(mesh.vertices[:, 2].min())
    return Plane([0.0, 0.0, zmin + 1e-3 * h], [0.0, 0.0, 1.0])


def slice_surface(
    mesh: TriMesh,
    h: float,
    sampling: float,
    n: int = 50,
    base_plane: Plane | None = None,
    max_layers: int = MAX_LAYERS,
) -> SlicePlan:
    """Slice a surface mesh into layers separated by h along a.

    Terminates when the next layer is empty; raises SliceError if the
    layer count reaches `max_layers`.
    """
    if h <= 0.0:
        raise SliceError("layer height must be positive")
    if base_plane is None:
        base_plane = default_base_plane(mesh, h)
    layers = [sample_base_layer(mesh, base_plane, sampling)]
    while True:
        child = next_layer(mesh, layers[-1], h, n=n, spacing=sampling)
        if child is None:
            break
        layers.append(child)
        if len(layers) >= max_layers:
            raise SliceError(f"layer growth did not terminate within {max_layers} layers")
    logger.info("sliced %s into %d layers", mesh.name or "mesh", len(layers))
    return SlicePlan(layers, h=h, sampling=sampling, source=mesh.name)


# ---------------------------------------------------------------------------
# Axisymmetric slicing


def slice_axisymmetric(profile, h: float, sampling: float, source="profile") -> SlicePlan:
    """Slice a surface of revolution given its meridian profile.

    `profile` is an ordered (M, 2) array of (radius, z) pairs from base
    to top. Layers are circles about +z spaced h apart along the profile
    arc; traversal is clockwise seen from +z so a = t x n climbs the
    profile with n pointing away from the axis.
    """
    prof = np.asarray(profile, dtype=float).reshape(-1, 2)
    if len(prof) < 2:
        raise SliceError("profile needs at least two points")
    if np.any(prof[:, 0] <= 0.0):
        raise SliceError("profile radii must be positive")
    if h <= 0.0 or sampling <= 0.0:
        raise SliceError("h and sampling must be positive")

    d = np.diff(prof, axis=0)
    seg_len = np.hypot(d[:, 0], d[:, 1])
    if np.any(seg_len == 0.0):
        raise SliceError("profile has duplicate consecutive points")
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = float(cum[-1])
    n_layers = int(np.floor(total / h + 1e-9)) + 1

    layers = []
    for i in range(n_layers):
        s = min(i * h, total)
        k = min(int(np.searchsorted(cum, s, side="right")) - 1, len(seg_len) - 1)
        k = max(k, 0)
        frac = (s - cum[k]) / seg_len[k]
        r = prof[k, 0] + frac * d[k, 0]
        z = prof[k, 1] + frac * d[k, 1]
        m = d[k] / seg_len[k]  # meridian tangent (dr, dz), unit

        n_pts = max(3, int(round(2.0 * np.pi * r / sampling)))
        theta = -np.arange(n_pts) * (2.0 * np.pi / n_pts)  # clockwise from +z
        cos_t, sin_t = np.cos(theta), np.sin(theta)
        pts = np.column_stack([r * cos_t, r * sin_t, np.full(n_pts, z)])
        t = np.column_stack([sin_t, -cos_t, np.zeros(n_pts)])
        nrm = np.column_stack([m[1] * cos_t, m[1] * sin_t, np.full(n_pts, -m[0])])
        a = np.column_stack([m[0] * cos_t, m[0] * sin_t, np.full(n_pts, m[1])])
        circumference = 2.0 * np.pi * r
        lam = np.arange(n_pts) * (circumference / n_pts)
        seg = Segment(pts, t, nrm, a, lam, closed=True, arc_length=circumference)
        layers.append(Layer([seg], index=i, closed=True, total_length=circumference))
    return SlicePlan(layers, h=h, sampling=sampling, source=source)


# ---------------------------------------------------------------------------
# Spiral warping


def warp_layers(plan: SlicePlan) -> SlicePlan:
    """Blend each layer toward its predecessor to form a continuous spiral.

    Every point is moved to (1 - alpha) p_prev + alpha p_cur where alpha
    is the fractional path position along the previous layer, so each
    turn starts where the previous one ended. Defined for plans whose
    layers are all single closed loops.
    """
    if plan.warped:
        raise SliceError("plan is already warped")
    if len(plan.layers) < 2:
        raise SliceError("warping needs at least two layers")
    for layer in plan.layers:
        if not (layer.closed and len(layer.segments) == 1):
            raise SliceError(
                f"layer {layer.index} is not a single closed loop; "
                "spiral warping is defined for closed layers only"
            )

    out = [plan.layers[0]]
    for prev, cur in zip(plan.layers[:-1], plan.layers[1:]):
        ps, cs = prev.segments[0], cur.segments[0]
        m = min(len(ps), len(cs))
        prev_pts, prev_nrm = _loop_at_count(ps, m)
        cur_pts, cur_nrm = _loop_at_count(cs, m)
        # One full turn plus the closing point at alpha = 1, which lands
        # exactly on the current loop's start: the next turn begins there.
        idx = np.arange(m + 1) % m
        alpha = np.arange(m + 1) / m
        prev_pts, prev_nrm = prev_pts[idx], prev_nrm[idx]
        cur_pts, cur_nrm = cur_pts[idx], cur_nrm[idx]
        pts = (1.0 - alpha[:, None]) * prev_pts + alpha[:, None] * cur_pts
        nrm = _unit_rows((1.0 - alpha[:, None]) * prev_nrm + alpha[:, None] * cur_nrm)
        t, n, a = _frames(pts, nrm, closed=False)
        lens = _segment_lengths(pts, closed=False)
        lam = np.concatenate([[0.0], np.cumsum(lens)])
        arc = float(lens.sum())
        seg = Segment(pts, t, n, a, lam, closed=False, arc_length=arc)
        out.append(Layer([seg], index=cur.index, closed=False, total_length=arc))
    return SlicePlan(out, h=plan.h, sampling=plan.sampling, source=plan.source, warped=True)


def _loop_at_count(seg: Segment, m: int):
    if len(seg) == m:
        return seg.points, seg.normals
    res = _resample(seg.points, None, True, attrs={"n": seg.normals}, count=m)
    if res is None:
        raise SliceError("cannot resample loop")
    samples, attrs, _ = res
    return samples, _unit_rows(attrs["n"])


# ---------------------------------------------------------------------------
# Serialization


def save_plan(plan: SlicePlan, path) -> None:
    """Write a plan in the line-oriented text format.

    Header: `h <h> spacing <s> source <name> warped <0|1>`, then one
    `L <layer> S <segment> C <0|1>` line per segment followed by its
    point rows `x y z tx ty tz nx ny nz ax ay az lambda`.
    """
    src = (plan.source or "unknown").replace(" ", "_")
    lines = [f"h {plan.h:.12g} spacing {plan.sampling:.12g} source {src} warped {int(plan.warped)}"]
    for layer in plan.layers:
        for si, seg in enumerate(layer.segments):
            lines.append(f"L {layer.index} S {si} C {int(seg.closed)}")
            rows = np.column_stack(
                [seg.points, seg.tangents, seg.normals, seg.increments, seg.lambdas]
            )
            for row in rows:
                lines.append(" ".join(f"{x:.12g}" for x in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_plan(path) -> SlicePlan:
    """Read a plan written by save_plan."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise SliceError(f"empty plan file {path}")
    head = lines[0].split()
    if len(head) < 6 or head[0] != "h" or head[2] != "spacing" or head[4] != "source":
        raise SliceError(f"bad plan header in {path}")
    h = float(head[1])
    sampling = float(head[3])
    source = head[5]
    warped = False
    if len(head) >= 8 and head[6] == "warped":
        warped = bool(int(head[7]))

    blocks = []  # (layer_idx, closed, rows)
    current = None
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "L":
            if len(parts) != 6 or parts[2] != "S" or parts[4] != "C":
                raise SliceError(f"bad segment header on line {lineno}")
            current = (int(parts[1]), bool(int(parts[5])), [])
            blocks.append(current)
        else:
            if current is None:
                raise SliceError(f"point row before segment header on line {lineno}")
            if len(parts) != 13:
                raise SliceError(f"expected 13 values on line {lineno}")
            current[2].append([float(x) for x in parts])

    layers: dict = {}
    for layer_idx, closed, rows in blocks:
        arr = np.asarray(rows, dtype=float)
        if len(arr) < 2:
            raise SliceError(f"segment in layer {layer_idx} has fewer than 2 points")
        pts = arr[:, 0:3]
        lens = _segment_lengths(pts, closed)
        seg = Segment(
            pts,
            arr[:, 3:6],
            arr[:, 6:9],
            arr[:, 9:12],
            arr[:, 12],
            closed=closed,
            arc_length=float(lens.sum()),
        )
        layers.setdefault(layer_idx, []).append(seg)

    out = []
    for idx in sorted(layers):
        segs = layers[idx]
        out.append(
            Layer(
                segments=segs,
                index=idx,
                closed=len(segs) == 1 and segs[0].closed,
                total_length=float(sum(s.arc_length for s in segs)),
            )
        )
    if not out:
        raise SliceError(f"no layers in {path}")
    if [l.index for l in out] != list(range(len(out))):
        raise SliceError("layer indices are not contiguous from 0")
    return SlicePlan(out, h=h, sampling=sampling, source=source, warped=warped)


def plan_to_ply(plan: SlicePlan, path, every: int = 1) -> None:
    """Dump plan points (with normals and layer index) as ASCII PLY."""
    pts, nrm, idx = [], [], []
    for layer in plan.layers:
        if layer.index % every:
            continue
        for seg in layer.segments:
            pts.append(seg.points)
            nrm.append(seg.normals)
            idx.append(np.full(len(seg), layer.index))
    if not pts:
        raise SliceError("nothing to export")
    write_ply_points(
        path,
        np.concatenate(pts),
        normals=np.concatenate(nrm),
        layer_index=np.concatenate(idx),
        comment=f"slice plan {plan.source}",
    )
