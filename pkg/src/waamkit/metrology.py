"""Quantitative part evaluation against the design surface.

Scans are aligned to the CAD mid-surface with trimmed point-to-point
ICP, every point gets an exact distance to its nearest triangle, the
cloud is split into the two bead edges by signed distance, and bead
width is measured as the perpendicular sum distance across the
mid-surface. The report carries the three accuracy criteria: e_avg,
e_max, and width variation.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptySide, InsufficientCoverage, MetrologyError
from .geometry import TriMesh
from .slicer import SlicePlan

log = logging.getLogger(__name__)

AMBIGUOUS_BAND = 0.05  # mm; closer than this to the mid-surface is neither side
TRIM_FRACTION = 0.2
ICP_TOL = 1e-6
ICP_MAX_ITER = 100
CONE_DEG = 30.0
SEARCH_RADIUS = 5.0
MIN_EVAL_POINTS = 10


@dataclass
class PointCloud:
    points: np.ndarray
    normals: np.ndarray = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if self.normals is not None:
            self.normals = np.asarray(self.normals, dtype=float).reshape(-1, 3)
            if len(self.normals) != len(self.points):
                raise MetrologyError("normals and points differ in length")

    def __len__(self):
        return len(self.points)


@dataclass
class RigidTransform:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=float).reshape(3)
        if not np.allclose(self.rotation @ self.rotation.T, np.eye(3), atol=1e-6):
            raise MetrologyError("rotation is not orthonormal")

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    def apply(self, points):
        return np.asarray(points, dtype=float) @ self.rotation.T + self.translation

    def compose(self, other):
        """Transform equal to applying `other` first, then self."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self):
        return RigidTransform(self.rotation.T, -self.rotation.T @ self.translation)


@dataclass
class ICPResult:
    transform: RigidTransform
    residual: float  # trimmed mean correspondence distance at the best pose
    iterations: int
    diverged: bool = False
    history: list = field(default_factory=list)  # accepted means, non-increasing


@dataclass
class EvalReport:
    geometry: str
    material: str
    e_avg: float
    e_max: float
    width_mean: float
    width_std: float
    width_variation: float  # sigma(w)/mu(w) in percent
    icp_residual: float
    icp_iterations: int
    diverged: bool = False
    width_valid: bool = True
    width_count: int = 0
    width_skipped: int = 0
    # per-point deviations after alignment; carried for plotting, not reported
    distances: np.ndarray = field(default=None, repr=False, compare=False)


# --- sampling ----------------------------------------------------------------


def sample_mesh(mesh: TriMesh, density: float, seed=0, count=None) -> PointCloud:
    """Area-weighted uniform surface samples with face normals.

    `density` is points per mm^2; pass `count` to request an exact
    total instead. Deterministic for a given seed.
    """
    if count is None:
        if density <= 0:
            raise MetrologyError("sampling density must be positive")
    areas = mesh.face_areas()
    total = float(areas.sum())
    if len(mesh.faces) == 0 or total <= 0:
        raise MetrologyError("mesh has no surface area to sample")
    if count is None:
        count = int(round(total * density))
    if count < 1:
        raise MetrologyError("sampling density too low for this mesh")
    rng = np.random.default_rng(seed)
    tri = rng.choice(len(areas), size=count, p=areas / total)
    u = rng.random(count)
    v = rng.random(count)
    flip = u + v > 1.0
    u[flip] = 1.0 - u[flip]
    v[flip] = 1.0 - v[flip]
    corners = mesh.vertices[mesh.faces[tri]]
    a = corners[:, 0]
    pts = a + u[:, None] * (corners[:, 1] - a) + v[:, None] * (corners[:, 2] - a)
    return PointCloud(pts, mesh.face_normals()[tri])


# --- exact point-to-triangle distance ----------------------------------------


def _closest_on_triangles(p, a, b, c):
    """Closest point on each triangle (a, b, c) to each p; all (Q, 3)."""
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    out = np.empty_like(p)
    done = np.zeros(len(p), dtype=bool)

    m = (d1 <= 0) & (d2 <= 0)
    out[m] = a[m]
    done |= m
    m = ~done & (d3 >= 0) & (d4 <= d3)
    out[m] = b[m]
    done |= m
    m = ~done & (d6 >= 0) & (d5 <= d6)
    out[m] = c[m]
    done |= m

    def _safe(num, den):
        return num / np.where(den == 0.0, 1.0, den)

    vc = d1 * d4 - d3 * d2
    m = ~done & (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    t = _safe(d1, d1 - d3)
    out[m] = a[m] + t[m, None] * ab[m]
    done |= m

    vb = d5 * d2 - d1 * d6
    m = ~done & (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    t = _safe(d2, d2 - d6)
    out[m] = a[m] + t[m, None] * ac[m]
    done |= m

    va = d3 * d6 - d5 * d4
    m = ~done & (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
    t = _safe(d4 - d3, (d4 - d3) + (d5 - d6))
    out[m] = b[m] + t[m, None] * (c[m] - b[m])
    done |= m

    m = ~done
    denom = np.where(va + vb + vc == 0.0, 1.0, va + vb + vc)
    v = vb / denom
    w = vc / denom
    out[m] = a[m] + v[m, None] * ab[m] + w[m, None] * ac[m]
    return out


def nearest_on_mesh(mesh: TriMesh, points, k=8):
    """Exact nearest mesh point per query: (distance, closest, face index).

    Candidate triangles come from a centroid k-d tree; a radius requery
    widens the candidate set wherever the k nearest centroids cannot be
    proven sufficient, so the result is exact, not approximate.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    corners = mesh.vertices[mesh.faces]
    centroids = corners.mean(axis=1)
    reach = float(np.linalg.norm(corners - centroids[:, None, :], axis=2).max())
    tree = cKDTree(centroids)
    k0 = min(len(centroids), k)
    d_c, idx = tree.query(pts, k=k0, workers=-1)
    d_c = d_c.reshape(len(pts), k0)
    idx = idx.reshape(len(pts), k0)

    flat = idx.ravel()
    rep = np.repeat(pts, k0, axis=0)
    cl = _closest_on_triangles(rep, corners[flat, 0], corners[flat, 1], corners[flat, 2])
    dist = np.linalg.norm(rep - cl, axis=1).reshape(len(pts), k0)
    best = np.argmin(dist, axis=1)
    rows = np.arange(len(pts))
    out_d = dist[rows, best]
    out_cl = cl.reshape(len(pts), k0, 3)[rows, best]
    out_tri = idx[rows, best]

    # A triangle beyond the kth centroid by more than `reach` cannot win,
    # so widen k for the points where that proof fails.
    k_cur = k0
    unresolved = np.nonzero(out_d > d_c[:, -1] - reach)[0] if k0 < len(centroids) else []
    while len(unresolved) and k_cur < len(centroids):
        k_cur = min(len(centroids), 4 * k_cur)
        sub = pts[unresolved]
        d_c2, idx2 = tree.query(sub, k=k_cur, workers=-1)
        d_c2 = d_c2.reshape(len(sub), k_cur)
        idx2 = idx2.reshape(len(sub), k_cur)
        flat2 = idx2.ravel()
        rep2 = np.repeat(sub, k_cur, axis=0)
        cl2 = _closest_on_triangles(rep2, corners[flat2, 0], corners[flat2, 1], corners[flat2, 2])
        dist2 = np.linalg.norm(rep2 - cl2, axis=1).reshape(len(sub), k_cur)
        b2 = np.argmin(dist2, axis=1)
        r2 = np.arange(len(sub))
        out_d[unresolved] = dist2[r2, b2]
        out_cl[unresolved] = cl2.reshape(len(sub), k_cur, 3)[r2, b2]
        out_tri[unresolved] = idx2[r2, b2]
        if k_cur >= len(centroids):
            break
        unresolved = unresolved[out_d[unresolved] > d_c2[:, -1] - reach]
    return out_d, out_cl, out_tri


def signed_distance_to_mesh(mesh: TriMesh, points):
    """Unsigned distance and sign from the nearest face normal."""
    d, cl, tri = nearest_on_mesh(mesh, points)
    normals = mesh.face_normals()[tri]
    side = np.einsum("ij,ij->i", np.asarray(points, dtype=float) - cl, normals)
    return d, np.where(side >= 0.0, 1.0, -1.0), cl, tri


# --- registration --------------------------------------------------------------


def _run_icp(src, correspond, init, max_iter, tol, trim):
    """Shared trimmed-ICP loop.

    `correspond(cur)` returns (distances, matched points) for the
    currently posed source. Stops when the trimmed mean distance
    improves by less than `tol`, and falls back to the best pose seen
    if the mean grows five iterations running.
    """
    if not 0.0 <= trim < 1.0:
        raise MetrologyError("trim fraction must be in [0, 1)")
    r = init.rotation.copy()
    t = init.translation.copy()
    n_keep = max(3, int(round(len(src) * (1.0 - trim))))

    best = (math.inf, r, t)
    history = []
    prev = math.inf
    growing = 0
    diverged = False
    it = 0
    for it in range(1, max_iter + 1):
        cur = src @ r.T + t
        d, matched = correspond(cur)
        keep = np.argsort(d, kind="stable")[:n_keep]
        mean_d = float(d[keep].mean())
        if mean_d < best[0]:
            best = (mean_d, r, t)
            history.append(mean_d)
        if mean_d <= tol:
            break  # already on target; a zero cross-covariance has no usable SVD
        if mean_d > prev:
            growing += 1
            if growing >= 5:
                diverged = True
                log.warning("registration diverged; returning best pose (%.6f mm)", best[0])
                break
        else:
            growing = 0
        if prev - mean_d < tol:
            break
        prev = mean_d

        p = cur[keep]
        q = matched[keep]
        pc = p.mean(axis=0)
        qc = q.mean(axis=0)
        h = (p - pc).T @ (q - qc)
        u, _, vt = np.linalg.svd(h)
        sign = np.sign(np.linalg.det(vt.T @ u.T))
        dd = np.diag([1.0, 1.0, sign if sign != 0 else 1.0])
        rd = vt.T @ dd @ u.T
        td = qc - rd @ pc
        r = rd @ r
        t = rd @ t + td

    return ICPResult(
        transform=RigidTransform(best[1], best[2]),
        residual=best[0],
        iterations=it,
        diverged=diverged,
        history=history,
    )


def icp_register(
    source: PointCloud,
    target: PointCloud,
    init: RigidTransform = None,
    max_iter=ICP_MAX_ITER,
    tol=ICP_TOL,
    trim=TRIM_FRACTION,
) -> ICPResult:
    """Trimmed point-to-point ICP aligning source onto target.

    Correspondences are nearest neighbors; the worst `trim` fraction is
    dropped before the closed-form SVD update.
    """
    if len(source) < MIN_EVAL_POINTS or len(target) < MIN_EVAL_POINTS:
        raise MetrologyError(f"registration needs at least {MIN_EVAL_POINTS} points per cloud")
    tree = cKDTree(target.points)
    tgt = target.points

    def correspond(cur):
        d, j = tree.query(cur, workers=-1)
        return d, tgt[j]

    return _run_icp(source.points, correspond, init or RigidTransform.identity(),
                    max_iter, tol, trim)


def icp_register_mesh(
    source: PointCloud,
    cad: TriMesh,
    init: RigidTransform = None,
    max_iter=ICP_MAX_ITER,
    tol=ICP_TOL,
    trim=TRIM_FRACTION,
) -> ICPResult:
    """Trimmed ICP against the CAD surface itself.

    Correspondences are exact closest points on the mesh, so a scan
    already on the surface stays put instead of chasing the sampling
    noise of a discretized target cloud. Runs an untrimmed coarse pass
    first: trimming a clean but misposed scan can otherwise settle into
    a tilt that sacrifices the trimmed fraction.
    """
    if len(source) < MIN_EVAL_POINTS:
        raise MetrologyError(f"registration needs at least {MIN_EVAL_POINTS} points")

    def correspond(cur):
        d, cl, _ = nearest_on_mesh(cad, cur)
        return d, cl

    init = init or RigidTransform.identity()
    if trim > 0.0:
        coarse = _run_icp(source.points, correspond, init, max_iter, tol, 0.0)
        init = coarse.transform
    result = _run_icp(source.points, correspond, init, max_iter, tol, trim)
    if trim > 0.0:
        result.iterations += coarse.iterations
        result.history = coarse.history + result.history
    return result


# --- edge separation and width --------------------------------------------------


def _reference_sides(points, reference):
    if isinstance(reference, TriMesh):
        d, cl, tri = nearest_on_mesh(reference, points)
        normals = reference.face_normals()[tri]
        return np.einsum("ij,ij->i", points - cl, normals)
    if isinstance(reference, SlicePlan):
        ref_pts = []
        ref_nrm = []
        for layer in reference.layers:
            for seg in layer.segments:
                ref_pts.append(seg.points)
                ref_nrm.append(seg.normals)
        if not ref_pts:
            raise MetrologyError("reference plan has no points")
        ref_pts = np.concatenate(ref_pts)
        ref_nrm = np.concatenate(ref_nrm)
        _, j = cKDTree(ref_pts).query(points, workers=-1)
        return np.einsum("ij,ij->i", points - ref_pts[j], ref_nrm[j])
    raise MetrologyError(f"unsupported reference type {type(reference).__name__}")


def split_edges(cloud: PointCloud, reference, band=AMBIGUOUS_BAND):
    """(left, right) clouds by signed distance to the mid-surface.

    Right is the positive-normal (outer) side; points within `band` mm
    of the surface are ambiguous and dropped.
    """
    s = _reference_sides(cloud.points, reference)
    right_m = s > band
    left_m = s < -band
    if not right_m.any() or not left_m.any():
        raise EmptySide(
            f"edge split left {int(left_m.sum())} / right {int(right_m.sum())} points"
        )

    def pick(mask):
        nrm = cloud.normals[mask] if cloud.normals is not None else None
        return PointCloud(cloud.points[mask], nrm)

    return pick(left_m), pick(right_m)


def _side_hit_distance(samples, normals, side_points, sign, cos_min, radius):
    """Normal-projected distance to the nearest in-cone point; inf = miss.

    The nearest candidate is picked by Euclidean distance inside the
    cone, but the reported length is its projection onto the normal:
    the perpendicular offset, insensitive to in-plane scatter.
    """
    tree = cKDTree(side_points)
    k = min(len(side_points), 64)
    d, idx = tree.query(samples, k=k, distance_upper_bound=radius, workers=-1)
    d = d.reshape(len(samples), k)
    idx = idx.reshape(len(samples), k)
    ok = np.isfinite(d)
    q = side_points[np.where(ok, idx, 0)]
    u = q - samples[:, None, :]
    norm = np.linalg.norm(u, axis=2)
    proj = np.einsum("nkj,nj->nk", u, normals) * sign
    with np.errstate(invalid="ignore", divide="ignore"):
        inside = proj / np.where(norm > 0, norm, 1.0) >= cos_min
    good = ok & (norm > 1e-12) & inside
    ranked = np.where(good, norm, np.inf)
    best = np.argmin(ranked, axis=1)
    rows = np.arange(len(samples))
    hit = np.isfinite(ranked[rows, best])
    return np.where(hit, proj[rows, best], np.inf)


def measure_width(samples: PointCloud, left: PointCloud, right: PointCloud,
                  cone_deg=CONE_DEG, radius=SEARCH_RADIUS):
    """Perpendicular sum widths at mid-surface samples.

    Per sample, the nearest right point inside a `cone_deg` cone about
    +normal plus the nearest left point inside the mirrored cone, both
    radius-limited. Returns (widths, skipped); samples missing either
    side are skipped, and more than 50% skipped raises.
    """
    if len(left) == 0 or len(right) == 0:
        raise EmptySide("width measurement needs points on both sides")
    if samples.normals is None:
        raise MetrologyError("mid-surface samples need normals")
    if len(samples) == 0:
        raise MetrologyError("no mid-surface samples")
    cos_min = math.cos(math.radians(cone_deg))
    nrm = samples.normals / np.linalg.norm(samples.normals, axis=1, keepdims=True)
    d_right = _side_hit_distance(samples.points, nrm, right.points, +1.0, cos_min, radius)
    d_left = _side_hit_distance(samples.points, nrm, left.points, -1.0, cos_min, radius)
    hit = np.isfinite(d_right) & np.isfinite(d_left)
    skipped = int(len(samples) - hit.sum())
    if skipped > 0.5 * len(samples):
        raise InsufficientCoverage(
            f"{skipped} of {len(samples)} width samples had no hit on one side"
        )
    return d_right[hit] + d_left[hit], skipped


# --- end-to-end evaluation -------------------------------------------------------


@dataclass
class EvalConfig:
    geometry: str = ""
    material: str = ""
    density: float = 20.0  # CAD sampling, points per mm^2
    width_samples: int = 400
    seed: int = 0
    init: RigidTransform = None
    max_iter: int = ICP_MAX_ITER
    tol: float = ICP_TOL
    trim: float = TRIM_FRACTION
    band: float = AMBIGUOUS_BAND
    cone_deg: float = CONE_DEG
    radius: float = SEARCH_RADIUS


def evaluate(cad: TriMesh, scan: PointCloud, config: EvalConfig = None) -> EvalReport:
    """Align, measure distances, split edges, and report the criteria.

    Width statistics soft-fail to zeros (width_valid False) when the
    scan has no resolvable two-sided bead, e.g. a zero-thickness
    surface sample; distance criteria always report.
    """
    cfg = config or EvalConfig()
    if len(scan) < MIN_EVAL_POINTS:
        raise MetrologyError(f"scan needs at least {MIN_EVAL_POINTS} points")
    icp = icp_register_mesh(scan, cad, init=cfg.init, max_iter=cfg.max_iter,
                            tol=cfg.tol, trim=cfg.trim)
    aligned_pts = icp.transform.apply(scan.points)
    aligned_nrm = None
    if scan.normals is not None:
        aligned_nrm = scan.normals @ icp.transform.rotation.T
    aligned = PointCloud(aligned_pts, aligned_nrm)

    d, _, _ = nearest_on_mesh(cad, aligned_pts)
    e_avg = float(d.mean())
    e_max = float(d.max())

    width_mean = width_std = variation = 0.0
    width_valid = True
    width_count = 0
    skipped = 0
    try:
        left, right = split_edges(aligned, cad, band=cfg.band)
        mid = sample_mesh(cad, cfg.density, seed=cfg.seed + 1, count=cfg.width_samples)
        widths, skipped = measure_width(mid, left, right, cfg.cone_deg, cfg.radius)
        width_mean = float(widths.mean())
        width_std = float(widths.std())
        variation = 100.0 * width_std / width_mean if width_mean > 0 else 0.0
        width_count = len(widths)
    except (EmptySide, InsufficientCoverage) as exc:
        log.warning("width stage skipped: %s", exc)
        width_valid = False

    return EvalReport(
        geometry=cfg.geometry or cad.name or "part",
        material=cfg.material or "unspecified",
        e_avg=e_avg,
        e_max=e_max,
        width_mean=width_mean,
        width_std=width_std,
        width_variation=variation,
        icp_residual=icp.residual,
        icp_iterations=icp.iterations,
        diverged=icp.diverged,
        width_valid=width_valid,
        width_count=width_count,
        width_skipped=skipped,
        distances=d,
    )


def render_report(report: EvalReport) -> str:
    lines = [
        "WAAM part evaluation",
        f"  Geometry:          {report.geometry}",
        f"  Material:          {report.material}",
        f"  e_avg:             {report.e_avg:.3f} mm",
        f"  e_max:             {report.e_max:.3f} mm",
        f"  width mean:        {report.width_mean:.3f} mm",
        f"  width std:         {report.width_std:.3f} mm",
        f"  width variation:   {report.width_variation:.2f} %",
        f"  ICP residual:      {report.icp_residual:.6f} mm over {report.icp_iterations} iterations",
    ]
    if report.diverged:
        lines.append("  WARNING: registration diverged; best pose reported")
    if not report.width_valid:
        lines.append("  WARNING: width not measurable on this scan")
    elif report.width_skipped:
        lines.append(f"  width samples skipped: {report.width_skipped}")
    return "\n".join(lines) + "\n"


def report_kv(report: EvalReport) -> str:
    """Machine-readable key=value block mirroring the report columns."""
    pairs = [
        ("geometry", report.geometry),
        ("material", report.material),
        ("e_avg_mm", f"{report.e_avg:.9g}"),
        ("e_max_mm", f"{report.e_max:.9g}"),
        ("width_mean_mm", f"{report.width_mean:.9g}"),
        ("width_std_mm", f"{report.width_std:.9g}"),
        ("width_variation_pct", f"{report.width_variation:.9g}"),
        ("icp_residual_mm", f"{report.icp_residual:.9g}"),
        ("icp_iterations", str(report.icp_iterations)),
        ("diverged", str(int(report.diverged))),
        ("width_valid", str(int(report.width_valid))),
        ("width_count", str(report.width_count)),
        ("width_skipped", str(report.width_skipped)),
    ]
    return "\n".join(f"{k}={v}" for k, v in pairs) + "\n"


# --- scan I/O ---------------------------------------------------------------------


def read_xyz(path) -> PointCloud:
    """Whitespace-delimited x y z [nx ny nz] per line; # comments."""
    rows = []
    with open(path) as fh:
        for ln, raw in enumerate(fh, start=1):
            text = raw.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            if len(parts) not in (3, 6):
                raise MetrologyError(f"{path}: line {ln}: expected 3 or 6 columns")
            try:
                rows.append([float(x) for x in parts])
            except ValueError as exc:
                raise MetrologyError(f"{path}: line {ln}: {exc}") from None
    if not rows:
        raise MetrologyError(f"{path}: no points")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise MetrologyError(f"{path}: mixed column counts")
    arr = np.asarray(rows)
    if width == 6:
        return PointCloud(arr[:, :3], arr[:, 3:])
    return PointCloud(arr)


def write_xyz(path, cloud: PointCloud):
    with open(path, "w") as fh:
        for i, p in enumerate(cloud.points):
            row = [f"{c:.12g}" for c in p]
            if cloud.normals is not None:
                row += [f"{c:.12g}" for c in cloud.normals[i]]
            fh.write(" ".join(row) + "\n")


def read_ply_points(path) -> PointCloud:
    """ASCII PLY vertex cloud; x/y/z required, nx/ny/nz optional."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0].strip() != "ply":
        raise MetrologyError(f"{path}: missing ply magic")
    n_vertex = None
    props = []
    body_at = None
    in_vertex = False
    for i, ln in enumerate(lines[1:], start=1):
        tok = ln.split()
        if not tok or tok[0] == "comment":
            continue
        if tok[0] == "format":
            if tok[1] != "ascii":
                raise MetrologyError(f"{path}: only ascii PLY is supported")
        elif tok[0] == "element":
            in_vertex = tok[1] == "vertex"
            if in_vertex:
                n_vertex = int(tok[2])
        elif tok[0] == "property" and in_vertex:
            props.append(tok[-1])
        elif tok[0] == "end_header":
            body_at = i + 1
            break
    if n_vertex is None or body_at is None:
        raise MetrologyError(f"{path}: incomplete PLY header")
    for need in ("x", "y", "z"):
        if need not in props:
            raise MetrologyError(f"{path}: vertex property {need} missing")
    body = lines[body_at : body_at + n_vertex]
    if len(body) < n_vertex:
        raise MetrologyError(f"{path}: truncated vertex data")
    data = np.array([[float(v) for v in ln.split()] for ln in body])
    if data.shape[1] != len(props):
        raise MetrologyError(f"{path}: vertex arity does not match header")
    cols = {name: data[:, k] for k, name in enumerate(props)}
    pts = np.column_stack([cols["x"], cols["y"], cols["z"]])
    if all(n in cols for n in ("nx", "ny", "nz")):
        return PointCloud(pts, np.column_stack([cols["nx"], cols["ny"], cols["nz"]]))
    return PointCloud(pts)


def load_cloud(path) -> PointCloud:
    text = str(path)
    if text.endswith(".ply"):
        return read_ply_points(path)
    if text.endswith(".xyz") or text.endswith(".txt"):
        return read_xyz(path)
    raise MetrologyError(f"unrecognized scan extension on {path}")
