import numpy as np
import pytest

from waamkit.errors import EmptySide, InsufficientCoverage, MetrologyError
from waamkit.geometry import TriMesh, rotation_about, write_ply_points
from waamkit.metrology import (
    EvalConfig,
    PointCloud,
    RigidTransform,
    evaluate,
    icp_register,
    load_cloud,
    measure_width,
    nearest_on_mesh,
    read_ply_points,
    read_xyz,
    render_report,
    report_kv,
    sample_mesh,
    split_edges,
    write_xyz,
)
from waamkit.slicer import slice_surface

from meshgen import box, grid_wall, hemisphere, tube


def _unit_square():
    v = np.array([[0.0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]])
    f = np.array([[0, 1, 2], [0, 2, 3]])
    return TriMesh(v, f)


# --- transforms -----------------------------------------------------------


def test_rigid_transform_validates_rotation():
    with pytest.raises(MetrologyError):
        RigidTransform(np.eye(3) * 2.0, np.zeros(3))


def test_rigid_transform_compose_inverse():
    rng = np.random.default_rng(1)
    r = rotation_about(rng.normal(size=3), 0.7)
    t = RigidTransform(r, [1.0, -2.0, 3.0])
    back = t.inverse().compose(t)
    assert np.allclose(back.rotation, np.eye(3), atol=1e-12)
    assert np.allclose(back.translation, 0.0, atol=1e-12)
    p = rng.normal(size=(5, 3))
    assert np.allclose(t.inverse().apply(t.apply(p)), p, atol=1e-12)


# --- sampling -------------------------------------------------------------


def test_sample_unit_square_count_and_support():
    cloud = sample_mesh(_unit_square(), 100.0, seed=4)
    assert len(cloud) == 100
    assert np.all(cloud.points[:, :2] >= 0.0) and np.all(cloud.points[:, :2] <= 1.0)
    assert np.all(cloud.points[:, 2] == 0.0)
    assert np.allclose(np.abs(cloud.normals[:, 2]), 1.0)


def test_sample_deterministic_per_seed():
    m = _unit_square()
    a = sample_mesh(m, 50.0, seed=9)
    b = sample_mesh(m, 50.0, seed=9)
    c = sample_mesh(m, 50.0, seed=10)
    assert np.array_equal(a.points, b.points)
    assert not np.array_equal(a.points, c.points)


def test_sample_area_weighting():
    # disjoint triangles with areas 0.5 and 1.5 (ratio 1:3)
    v = np.array(
        [[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [10.0, 0, 0], [13, 0, 0], [10, 1, 0]]
    )
    f = np.array([[0, 1, 2], [3, 4, 5]])
    mesh = TriMesh(v, f)
    fractions = []
    for seed in range(10):
        cloud = sample_mesh(mesh, 400.0, seed=seed)
        small = np.sum(cloud.points[:, 0] < 5.0)
        fractions.append(small / len(cloud))
    mean_frac = np.mean(fractions)
    assert abs(mean_frac - 0.25) < 0.025  # 1:3 within 10% of the small share


def test_sample_degenerate_mesh_rejected():
    v = np.array([[0.0, 0, 0], [1, 0, 0], [2, 0, 0]])
    f = np.array([[0, 1, 2]])
    with pytest.raises(MetrologyError):
        sample_mesh(TriMesh(v, f), 10.0)
    with pytest.raises(MetrologyError):
        sample_mesh(_unit_square(), -1.0)


# --- exact mesh distance ----------------------------------------------------


def test_nearest_on_mesh_matches_brute_force():
    mesh = hemisphere(radius=20.0, resolution=4.0)
    rng = np.random.default_rng(3)
    pts = rng.uniform(-25, 25, size=(60, 3))
    d, cl, tri = nearest_on_mesh(mesh, pts)
    corners = mesh.vertices[mesh.faces]
    for i in range(len(pts)):
        rep = np.repeat(pts[i][None, :], len(corners), axis=0)
        from waamkit.metrology import _closest_on_triangles

        all_cl = _closest_on_triangles(rep, corners[:, 0], corners[:, 1], corners[:, 2])
        brute = np.linalg.norm(rep - all_cl, axis=1).min()
        assert d[i] == pytest.approx(brute, abs=1e-9)


def test_on_surface_points_have_zero_distance():
    mesh = grid_wall(length=20.0, height=10.0, dx=2.0, dz=2.0)
    cloud = sample_mesh(mesh, 5.0, seed=0)
    d, _, _ = nearest_on_mesh(mesh, cloud.points)
    assert d.max() <= 1e-9


# --- ICP ---------------------------------------------------------------------


def test_icp_identity_on_equal_clouds():
    mesh = hemisphere(radius=30.0, resolution=2.0)
    cloud = sample_mesh(mesh, 1.0, seed=2)
    res = icp_register(cloud, cloud)
    assert np.allclose(res.transform.rotation, np.eye(3), atol=1e-9)
    assert np.allclose(res.transform.translation, 0.0, atol=1e-9)
    assert res.residual <= 1e-9
    assert not res.diverged


def _corner_mesh():
    """Two perpendicular walls: plenty of structure in every direction."""
    w = grid_wall(length=30.0, height=20.0, dx=1.0, dz=1.0)
    r = rotation_about([0.0, 0.0, 1.0], np.radians(90.0))
    v2 = w.vertices @ r.T + np.array([15.0, -10.0, 0.0])
    return TriMesh(np.vstack([w.vertices, v2]),
                   np.vstack([w.faces, w.faces + len(w.vertices)]))


def test_icp_recovers_known_transform():
    # a single smooth sheet slides tangentially; the corner pins it down
    mesh = _corner_mesh()
    source = sample_mesh(mesh, 2.0, seed=5)
    r = rotation_about([0.0, 0.0, 1.0], np.radians(5.0))
    t = np.array([2.0, -1.0, 0.5])
    target = PointCloud(source.points @ r.T + t)
    res = icp_register(source, target)
    assert np.allclose(res.transform.rotation, r, atol=1e-3)
    assert np.allclose(res.transform.translation, t, atol=1e-3)
    # applying the recovered inverse to the target returns the source
    back = res.transform.inverse().apply(target.points)
    assert np.allclose(back, source.points, atol=1e-3)


def test_icp_robust_to_outliers():
    mesh = _corner_mesh()
    source = sample_mesh(mesh, 2.0, seed=6)
    r = rotation_about([0.0, 0.0, 1.0], np.radians(5.0))
    t = np.array([2.0, -1.0, 0.5])
    pts = source.points @ r.T + t
    rng = np.random.default_rng(7)
    n_bad = int(0.3 * len(pts))
    bad = rng.choice(len(pts), size=n_bad, replace=False)
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    pts = pts.copy()
    pts[bad] = rng.uniform(lo, hi, size=(n_bad, 3))
    res = icp_register(source, PointCloud(pts))
    # rotation error as an angle
    cos_a = (np.trace(res.transform.rotation @ r.T) - 1.0) / 2.0
    assert abs(np.arccos(np.clip(cos_a, -1, 1))) <= 0.05
    assert np.linalg.norm(res.transform.translation - t) <= 0.5


def test_icp_accepted_history_non_increasing():
    mesh = hemisphere(radius=30.0, resolution=2.0)
    source = sample_mesh(mesh, 1.0, seed=8)
    r = rotation_about([0.0, 1.0, 0.0], np.radians(4.0))
    target = PointCloud(source.points @ r.T + np.array([1.0, 0.5, -0.5]))
    res = icp_register(source, target)
    hist = np.asarray(res.history)
    assert len(hist) >= 1
    assert np.all(np.diff(hist) <= 0.0)


def test_icp_rejects_tiny_clouds():
    c = PointCloud(np.zeros((4, 3)))
    with pytest.raises(MetrologyError):
        icp_register(c, c)


# --- edge splitting -----------------------------------------------------------


def test_split_wall_offsets():
    mesh = grid_wall(length=20.0, height=10.0, dx=1.0, dz=1.0)
    base = sample_mesh(mesh, 3.0, seed=1)
    pts = np.concatenate([base.points + [0, 1.5, 0], base.points - [0, 1.5, 0]])
    left, right = split_edges(PointCloud(pts), mesh)
    assert len(left) == len(base)
    assert len(right) == len(base)
    assert np.all(right.points[:, 1] > 0)
    assert np.all(left.points[:, 1] < 0)


def test_split_cylinder_outer_radii():
    mesh = tube(radius=30.0, height=20.0, n_theta=128, dz=2.0)
    base = sample_mesh(mesh, 0.5, seed=2)
    radial = base.points.copy()
    r = np.linalg.norm(radial[:, :2], axis=1, keepdims=True)
    u = radial[:, :2] / r
    outer = base.points.copy()
    outer[:, :2] += 1.5 * u
    inner = base.points.copy()
    inner[:, :2] -= 1.5 * u
    left, right = split_edges(PointCloud(np.concatenate([outer, inner])), mesh)
    assert np.all(np.linalg.norm(right.points[:, :2], axis=1) > 30.0)
    assert np.all(np.linalg.norm(left.points[:, :2], axis=1) < 30.0)


def test_split_matches_brute_force_sign():
    mesh = grid_wall(length=20.0, height=10.0, dx=2.0, dz=2.0)
    base = sample_mesh(mesh, 5.0, seed=3, count=1000)
    rng = np.random.default_rng(4)
    s = rng.uniform(0.1, 2.0, size=len(base)) * rng.choice([-1.0, 1.0], size=len(base))
    pts = base.points + s[:, None] * base.normals
    left, right = split_edges(PointCloud(pts), mesh)
    # wall normal is +y: the sign of y must match the offset sign exactly
    assert len(left) + len(right) == len(pts)
    assert np.all(right.points[:, 1] > 0) and np.all(left.points[:, 1] < 0)
    n_pos = int(np.sum(s > 0))
    assert len(right) == n_pos


def test_split_ambiguous_band_and_empty_side():
    mesh = grid_wall(length=20.0, height=10.0, dx=2.0, dz=2.0)
    base = sample_mesh(mesh, 2.0, seed=5)
    near = base.points + [0, 0.01, 0]  # inside the 0.05 mm band
    far = base.points + [0, 1.0, 0]
    with pytest.raises(EmptySide):
        split_edges(PointCloud(np.concatenate([near, far])), mesh)


def test_split_against_slice_plan_reference():
    mesh = grid_wall(length=30.0, height=12.0, dx=1.0, dz=1.0)
    plan = slice_surface(mesh, h=2.0, sampling=1.0)
    base = sample_mesh(mesh, 2.0, seed=6)
    pts = np.concatenate([base.points + [0, 0.8, 0], base.points - [0, 0.8, 0]])
    left, right = split_edges(PointCloud(pts), plan)
    assert np.all(right.points[:, 1] > 0)
    assert np.all(left.points[:, 1] < 0)


# --- width ---------------------------------------------------------------------


def _wall_samples(nx=41, nz=11, length=20.0, height=5.0):
    xs = np.linspace(0.0, length, nx)
    zs = np.linspace(0.0, height, nz)
    gx, gz = np.meshgrid(xs, zs, indexing="ij")
    pts = np.column_stack([gx.ravel(), np.zeros(gx.size), gz.ravel()])
    nrm = np.tile([0.0, 1.0, 0.0], (len(pts), 1))
    return pts, nrm


def test_width_exact_wall():
    pts, nrm = _wall_samples()
    samples = PointCloud(pts, nrm)
    right = PointCloud(pts + [0, 1.5, 0])
    left = PointCloud(pts - [0, 1.5, 0])
    widths, skipped = measure_width(samples, left, right)
    assert skipped == 0
    assert np.all(np.abs(widths - 3.0) <= 1e-9)


def test_width_sinusoidal_ripple_statistics():
    # right edge carries the full 0.15 mm ripple; width = 3 + 0.15 sin
    pts, nrm = _wall_samples(nx=161, nz=9, length=40.0, height=4.0)
    samples = PointCloud(pts, nrm)
    ripple = 0.15 * np.sin(2.0 * np.pi * pts[:, 0] / 20.0)
    right = PointCloud(pts + np.column_stack([np.zeros_like(ripple), 1.5 + ripple, np.zeros_like(ripple)]))
    left = PointCloud(pts - [0, 1.5, 0])
    widths, skipped = measure_width(samples, left, right)
    assert skipped == 0
    mu = widths.mean()
    sigma = widths.std()
    assert mu == pytest.approx(3.0, abs=0.02)
    assert 100.0 * sigma / mu == pytest.approx(100.0 * (0.15 / np.sqrt(2.0)) / 3.0, abs=1.0)


def test_width_insufficient_coverage():
    pts, nrm = _wall_samples()
    samples = PointCloud(pts, nrm)
    right = PointCloud(pts + [0, 1.5, 0])
    far_left = PointCloud(pts - [0, 30.0, 0])  # outside the 5 mm search radius
    with pytest.raises(InsufficientCoverage):
        measure_width(samples, far_left, right)


def test_width_requires_both_sides():
    pts, nrm = _wall_samples()
    samples = PointCloud(pts, nrm)
    side = PointCloud(pts + [0, 1.5, 0])
    with pytest.raises(EmptySide):
        measure_width(samples, PointCloud(np.empty((0, 3))), side)


def test_width_cone_excludes_oblique_points():
    # a lone right point 40 degrees off-normal must not count
    samples = PointCloud(np.array([[0.0, 0, 0]]), np.array([[0.0, 1, 0]]))
    off = np.array([[np.sin(np.radians(40.0)) * 2.0, np.cos(np.radians(40.0)) * 2.0, 0.0]])
    with pytest.raises(InsufficientCoverage):
        measure_width(samples, PointCloud(np.array([[0.0, -1.5, 0]])), PointCloud(off))


# --- evaluate -------------------------------------------------------------------


def test_evaluate_self_sample_zero_error():
    mesh = grid_wall(length=30.0, height=15.0, dx=1.5, dz=1.5)
    scan = sample_mesh(mesh, 4.0, seed=11)
    report = evaluate(mesh, scan, EvalConfig(geometry="wall", material="steel"))
    assert report.e_avg <= 1e-6
    assert report.e_max <= 1e-6
    assert report.e_avg <= report.e_max
    assert not report.width_valid  # zero-thickness scan has no bead sides
    assert report.width_mean == 0.0


def test_evaluate_two_sided_scan_reports_width():
    mesh = grid_wall(length=30.0, height=15.0, dx=1.5, dz=1.5)
    base = sample_mesh(mesh, 3.0, seed=12)
    pts = np.concatenate([base.points + [0, 1.5, 0], base.points - [0, 1.5, 0]])
    report = evaluate(mesh, PointCloud(pts), EvalConfig(trim=0.05))
    assert report.width_valid
    assert report.width_mean == pytest.approx(3.0, abs=0.05)
    assert report.e_avg == pytest.approx(1.5, abs=0.05)


def test_evaluate_bulge_defect():
    # 0.4 mm bulge over ~10% of the surface: e_max 0.4, e_avg ~0.04
    mesh = grid_wall(length=40.0, height=20.0, dx=1.0, dz=1.0)
    scan = sample_mesh(mesh, 6.0, seed=13)
    pts = scan.points.copy()
    bulge = pts[:, 0] < 4.0
    pts[bulge] += np.array([0.0, 0.4, 0.0])
    report = evaluate(mesh, PointCloud(pts), EvalConfig())
    assert report.e_max == pytest.approx(0.4, abs=0.02)
    assert report.e_avg == pytest.approx(0.04, abs=0.01)


def test_evaluate_invariant_to_rigid_pretransform():
    # A closed box pins every rigid mode; curved or open parts leave
    # near-symmetries that point-pair registration cannot observe.
    mesh = box()
    scan = sample_mesh(mesh, 1.5, seed=14)
    ref = evaluate(mesh, scan, EvalConfig())
    r = rotation_about([0.3, -0.2, 0.9], np.radians(8.0))
    moved = PointCloud(scan.points @ r.T + np.array([3.0, -2.0, 1.0]))
    rep = evaluate(mesh, moved, EvalConfig())
    assert abs(rep.e_avg - ref.e_avg) <= 1e-3
    assert abs(rep.e_max - ref.e_max) <= 1e-3


def test_evaluate_rejects_tiny_scan():
    mesh = grid_wall(length=10.0, height=5.0, dx=1.0, dz=1.0)
    with pytest.raises(MetrologyError):
        evaluate(mesh, PointCloud(np.zeros((5, 3))), EvalConfig())


def test_report_rendering_and_kv():
    mesh = grid_wall(length=20.0, height=10.0, dx=2.0, dz=2.0)
    base = sample_mesh(mesh, 3.0, seed=15)
    pts = np.concatenate([base.points + [0, 1.5, 0], base.points - [0, 1.5, 0]])
    report = evaluate(mesh, PointCloud(pts), EvalConfig(geometry="wall", material="aluminum", trim=0.05))
    text = render_report(report)
    assert "Geometry:          wall" in text
    assert "e_avg" in text and "e_max" in text and "%" in text
    kv = dict(line.split("=", 1) for line in report_kv(report).strip().splitlines())
    assert kv["geometry"] == "wall"
    assert kv["material"] == "aluminum"
    assert float(kv["e_avg_mm"]) == pytest.approx(report.e_avg)
    assert float(kv["width_variation_pct"]) == pytest.approx(report.width_variation)
    assert kv["width_valid"] == "1"


# --- I/O -------------------------------------------------------------------------


def test_xyz_round_trip(tmp_path):
    rng = np.random.default_rng(20)
    cloud = PointCloud(rng.normal(size=(40, 3)), rng.normal(size=(40, 3)))
    path = tmp_path / "scan.xyz"
    write_xyz(path, cloud)
    back = read_xyz(path)
    assert np.allclose(back.points, cloud.points, atol=1e-10)
    assert np.allclose(back.normals, cloud.normals, atol=1e-10)


def test_xyz_reader_diagnostics(tmp_path):
    path = tmp_path / "bad.xyz"
    path.write_text("1 2\n")
    with pytest.raises(MetrologyError):
        read_xyz(path)
    path.write_text("# only comments\n")
    with pytest.raises(MetrologyError):
        read_xyz(path)
    path.write_text("1 2 three\n")
    with pytest.raises(MetrologyError):
        read_xyz(path)


def test_ply_round_trip(tmp_path):
    rng = np.random.default_rng(21)
    pts = rng.normal(size=(25, 3))
    nrm = rng.normal(size=(25, 3))
    path = tmp_path / "scan.ply"
    write_ply_points(path, pts, normals=nrm)
    back = read_ply_points(path)
    assert np.allclose(back.points, pts, atol=1e-10)
    assert np.allclose(back.normals, nrm, atol=1e-10)
    via_loader = load_cloud(path)
    assert np.allclose(via_loader.points, pts, atol=1e-10)


def test_ply_reader_rejects_binary_and_truncation(tmp_path):
    path = tmp_path / "bad.ply"
    path.write_text("ply\nformat binary_little_endian 1.0\nend_header\n")
    with pytest.raises(MetrologyError):
        read_ply_points(path)
    path.write_text(
        "ply\nformat ascii 1.0\nelement vertex 3\n"
        "property double x\nproperty double y\nproperty double z\n"
        "end_header\n0 0 0\n1 1 1\n"
    )
    with pytest.raises(MetrologyError):
        read_ply_points(path)


def test_load_cloud_unknown_extension(tmp_path):
    path = tmp_path / "scan.csv"
    path.write_text("1,2,3\n")
    with pytest.raises(MetrologyError):
        load_cloud(path)
