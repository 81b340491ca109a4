"""Slicer tests: base sectioning, layer growth, axisymmetric plans, warping, I/O."""

import numpy as np
import pytest

import meshgen
from waamkit.errors import SliceError
from waamkit.geometry import Plane
from waamkit.slicer import (
    Layer,
    SlicePlan,
    load_plan,
    next_layer,
    plan_to_ply,
    sample_base_layer,
    save_plan,
    slice_axisymmetric,
    slice_surface,
    warp_layers,
)

Z_PLANE = Plane([0.0, 0.0, 0.0], [0.0, 0.0, 1.0])


def test_base_layer_wall_is_straight_line():
    wall = meshgen.grid_wall(length=100.0, height=50.0)
    layer = sample_base_layer(wall, Z_PLANE, spacing=0.5)
    assert len(layer.segments) == 1
    seg = layer.segments[0]
    assert not seg.closed
    assert len(seg) == 201  # 100 mm / 0.5 mm + 1
    assert np.max(np.abs(seg.points[:, 1])) < 1e-9
    assert np.max(np.abs(seg.points[:, 2])) < 1e-9
    np.testing.assert_allclose(np.diff(seg.points[:, 0]), 0.5, atol=1e-9)
    np.testing.assert_allclose(seg.lambdas, np.arange(201) * 0.5, atol=1e-9)
    # a = t x n must point off the plate.
    np.testing.assert_allclose(seg.increments, [[0, 0, 1]] * 201, atol=1e-12)


def test_base_layer_circle_radius_exact():
    # Azimuthal resolution fine enough that chord sagitta < 1e-6 mm.
    mesh = meshgen.tube(radius=30.0, height=2.0, n_theta=12800, dz=2.0, z0=-1.0)
    layer = sample_base_layer(mesh, Z_PLANE, spacing=0.5)
    assert layer.closed
    seg = layer.segments[0]
    expected = int(round(seg.arc_length / 0.5))
    assert len(seg) == expected == 377
    radii = np.hypot(seg.points[:, 0], seg.points[:, 1])
    np.testing.assert_allclose(radii, 30.0, atol=1e-6)


def test_base_layer_misses_mesh_raises():
    wall = meshgen.grid_wall(length=10, height=5)
    with pytest.raises(SliceError):
        sample_base_layer(wall, Plane([0, 0, 99.0], [0, 0, 1]), spacing=0.5)


def test_next_layer_climbs_wall_exactly():
    wall = meshgen.grid_wall(length=100.0, height=50.0)
    base = sample_base_layer(wall, Z_PLANE, spacing=0.5)
    layer1 = next_layer(wall, base, h=1.0, spacing=0.5)
    assert layer1 is not None
    seg = layer1.segments[0]
    assert len(layer1.segments) == 1
    assert len(seg) == 201
    np.testing.assert_allclose(seg.points[:, 2], 1.0, atol=1e-9)
    np.testing.assert_allclose(seg.points[:, 1], 0.0, atol=1e-9)


def test_slice_wall_layer_count_and_bands():
    wall = meshgen.grid_wall(length=40.0, height=20.0)
    plan = slice_surface(wall, h=1.0, sampling=0.5)
    assert 20 <= len(plan.layers) <= 22
    for k, layer in enumerate(plan.layers):
        z = layer.all_points()[:, 2]
        assert np.max(np.abs(z - k * 1.0)) < 0.3
    assert [l.index for l in plan.layers] == list(range(len(plan.layers)))


def test_layer_spacing_and_monotone_build():
    wall = meshgen.grid_wall(length=40.0, height=20.0)
    plan = slice_surface(wall, h=1.0, sampling=0.5)
    h = plan.h
    for lo, hi in zip(plan.layers[:-1], plan.layers[1:]):
        a = lo.all_points()
        b = hi.all_points()
        # distance from each upper point to the nearest lower point
        d = np.sqrt(((b[:, None, :] - a[None, :, :]) ** 2).sum(-1)).min(axis=1)
        assert d.min() >= 0.5 * h
        assert d.max() <= 1.5 * h
        assert b[:, 2].min() > a[:, 2].max() - 0.5 * h


def test_point_spacing_within_band():
    for mesh in (meshgen.grid_wall(30, 10), meshgen.hemisphere(15.0, resolution=1.0)):
        plan = slice_surface(mesh, h=1.0, sampling=0.5)
        for layer in plan.layers:
            for seg in layer.segments:
                gaps = np.linalg.norm(np.diff(seg.points, axis=0), axis=1)
                if seg.closed:
                    gaps = np.append(
                        gaps, np.linalg.norm(seg.points[0] - seg.points[-1])
                    )
                assert gaps.min() >= 0.25 * plan.sampling
                assert gaps.max() <= 4.0 * plan.sampling


def test_slice_dome_layers_on_sphere():
    dome = meshgen.hemisphere(radius=20.0, resolution=1.0)
    plan = slice_surface(dome, h=1.0, sampling=0.5)
    assert len(plan.layers) >= 20
    for layer in plan.layers:
        assert layer.closed
        seg = layer.segments[0]
        r = np.linalg.norm(seg.points, axis=1)
        assert np.max(np.abs(r - 20.0)) < 0.5
        # Frame orthogonality.
        assert np.max(np.abs(np.einsum("ij,ij->i", seg.increments, seg.tangents))) < 1e-9
        assert np.max(np.abs(np.einsum("ij,ij->i", seg.increments, seg.normals))) < 1e-9


def test_slice_layer_cap_raises():
    wall = meshgen.grid_wall(20, 10)
    with pytest.raises(SliceError):
        slice_surface(wall, h=1.0, sampling=0.5, max_layers=3)


def test_layers_split_across_notch():
    mesh = meshgen.notched_wall(length=60.0, height=24.0, notch_x=(20.0, 40.0), notch_z=10.0)
    plan = slice_surface(mesh, h=1.0, sampling=0.5)
    assert len(plan.layers) >= 20
    for layer in plan.layers:
        z = np.mean(layer.all_points()[:, 2])
        if z < 9.5:
            assert len(layer.segments) == 1
        elif z > 11.5:
            assert len(layer.segments) == 2
            left, right = layer.segments
            # Hull containment over an L-shaped neighborhood accepts a
            # little past a concave corner; the bleed stays bounded and
            # never reaches the notch interior.
            assert left.points[:, 0].max() <= 26.0
            assert right.points[:, 0].min() >= 34.0
            if z > 16.5:
                assert left.points[:, 0].max() <= 20.5
                assert right.points[:, 0].min() >= 39.5
    # Cumulative path length may not decrease across a layer's segments.
    for layer in plan.layers:
        lam = np.concatenate([s.lambdas for s in layer.segments])
        assert np.all(np.diff(lam) >= -1e-12)


def test_extension_recovers_widening_edge():
    # Trapezoid wall widening with height: upper layers must extend past
    # the projected footprint of the layer below.
    top_half = 10.0
    dz = 1.0
    nz = int(24 / dz) + 1
    xs0 = np.linspace(0.0, 30.0, 31)
    verts = []
    for j, z in enumerate(np.linspace(0.0, 24.0, nz)):
        spread = 1.0 + 0.5 * z / 24.0
        for x in xs0:
            verts.append([15.0 + (x - 15.0) * spread, 0.0, z])
    verts = np.asarray(verts)
    faces = []
    for j in range(nz - 1):
        for i in range(30):
            a = j * 31 + i
            b = j * 31 + i + 1
            c = (j + 1) * 31 + i + 1
            d = (j + 1) * 31 + i
            faces.append([a, d, b])
            faces.append([b, d, c])
    from waamkit.geometry import TriMesh

    mesh = TriMesh(verts, np.asarray(faces), name="trapezoid")
    plan = slice_surface(mesh, h=1.0, sampling=0.5)
    widths = [np.ptp(l.all_points()[:, 0]) for l in plan.layers]
    assert len(plan.layers) >= 22
    assert widths[-1] > widths[0] + 8.0  # grew with the surface
    _ = top_half


def test_axisymmetric_cylinder_exact():
    plan = slice_axisymmetric([(30.0, 0.0), (30.0, 40.0)], h=1.0, sampling=0.5)
    assert len(plan.layers) == 41
    for i, layer in enumerate(plan.layers):
        seg = layer.segments[0]
        assert layer.closed
        np.testing.assert_allclose(seg.points[:, 2], float(i), atol=1e-12)
        np.testing.assert_allclose(
            np.hypot(seg.points[:, 0], seg.points[:, 1]), 30.0, atol=1e-9
        )
        np.testing.assert_allclose(seg.increments, [[0, 0, 1]] * len(seg), atol=1e-12)
        np.testing.assert_allclose(
            np.einsum("ij,ij->i", seg.normals, seg.points) / 30.0, 1.0, atol=1e-9
        )  # outward normals


def test_axisymmetric_cone_follows_profile():
    # 45 degree cone: stepping h along the meridian moves each point by
    # exactly h and the radius follows r(s) = r0 + s cos(45).
    plan = slice_axisymmetric([(10.0, 0.0), (30.0, 20.0)], h=1.0, sampling=0.5)
    s_total = np.hypot(20.0, 20.0)
    assert len(plan.layers) == int(np.floor(s_total + 1e-9)) + 1
    c45 = np.cos(np.pi / 4)
    for i, layer in enumerate(plan.layers):
        seg = layer.segments[0]
        r = np.hypot(seg.points[0, 0], seg.points[0, 1])
        np.testing.assert_allclose(r, 10.0 + i * c45, atol=1e-9)
    for lo, hi in zip(plan.layers[:-1], plan.layers[1:]):
        p0 = lo.segments[0].points[0]
        p1 = hi.segments[0].points[0]
        np.testing.assert_allclose(np.linalg.norm(p1 - p0), 1.0, atol=1e-6)


def test_axisymmetric_rejects_bad_profile():
    with pytest.raises(SliceError):
        slice_axisymmetric([(0.0, 0.0), (10.0, 5.0)], h=1.0, sampling=0.5)
    with pytest.raises(SliceError):
        slice_axisymmetric([(10.0, 0.0)], h=1.0, sampling=0.5)


def test_warp_cylinder_makes_exact_helix():
    plan = slice_axisymmetric([(30.0, 0.0), (30.0, 5.0)], h=1.0, sampling=0.5)
    spiral = warp_layers(plan)
    assert spiral.warped
    assert len(spiral.layers) == len(plan.layers)
    turns = spiral.layers[1:]
    for turn in turns:
        seg = turn.segments[0]
        assert not seg.closed
        radii = np.hypot(seg.points[:, 0], seg.points[:, 1])
        np.testing.assert_allclose(radii, 30.0, atol=1e-9)
        dz = np.diff(seg.points[:, 2])
        assert np.all(dz > 0)  # strictly climbing
    # Exact continuity: each turn ends where the next begins.
    for a, b in zip(turns[:-1], turns[1:]):
        assert np.array_equal(a.segments[0].points[-1], b.segments[0].points[0])
    # z rises by exactly h per revolution.
    starts = [t.segments[0].points[0, 2] for t in turns]
    np.testing.assert_allclose(np.diff(starts), 1.0, atol=1e-6)
    rises = [
        t.segments[0].points[-1, 2] - t.segments[0].points[0, 2] for t in turns
    ]
    np.testing.assert_allclose(rises, 1.0, atol=1e-6)


def test_warp_gap_bounded_by_sampling():
    plan = slice_axisymmetric([(30.0, 0.0), (30.0, 4.0)], h=1.0, sampling=0.5)
    spiral = warp_layers(plan)
    turns = spiral.layers[1:]
    gaps = [
        np.linalg.norm(b.segments[0].points[0] - a.segments[0].points[-1])
        for a, b in zip(turns[:-1], turns[1:])
    ]
    assert max(gaps) <= spiral.sampling


def test_warp_rejects_open_layers():
    wall = meshgen.grid_wall(20, 6)
    plan = slice_surface(wall, h=1.0, sampling=0.5)
    with pytest.raises(SliceError):
        warp_layers(plan)


def test_plan_roundtrip(tmp_path):
    dome = meshgen.hemisphere(radius=12.0, resolution=1.2)
    plan = slice_surface(dome, h=1.0, sampling=0.5)
    path = tmp_path / "plan.txt"
    save_plan(plan, path)
    loaded = load_plan(path)
    assert loaded.h == plan.h
    assert loaded.sampling == plan.sampling
    assert loaded.source == plan.source
    assert loaded.warped == plan.warped
    assert len(loaded.layers) == len(plan.layers)
    for a, b in zip(plan.layers, loaded.layers):
        assert a.closed == b.closed
        assert len(a.segments) == len(b.segments)
        for sa, sb in zip(a.segments, b.segments):
            np.testing.assert_allclose(sa.points, sb.points, atol=1e-8)
            np.testing.assert_allclose(sa.increments, sb.increments, atol=1e-8)
            np.testing.assert_allclose(sa.lambdas, sb.lambdas, atol=1e-8)


def test_warped_plan_roundtrip_stays_open(tmp_path):
    plan = slice_axisymmetric([(10.0, 0.0), (10.0, 3.0)], h=1.0, sampling=0.5)
    spiral = warp_layers(plan)
    path = tmp_path / "spiral.txt"
    save_plan(spiral, path)
    loaded = load_plan(path)
    assert loaded.warped
    assert all(not l.closed for l in loaded.layers[1:])


def test_plan_ply_export(tmp_path):
    plan = slice_axisymmetric([(10.0, 0.0), (10.0, 2.0)], h=1.0, sampling=1.0)
    out = tmp_path / "plan.ply"
    plan_to_ply(plan, out)
    text = out.read_text().splitlines()
    n = plan.n_points()
    assert f"element vertex {n}" in text
    assert len(text) == text.index("end_header") + 1 + n
