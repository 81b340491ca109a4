"""Planner tests: materials, discretization, speed coordination, programs."""

import numpy as np
import pytest

import meshgen
from waamkit.errors import ConfigError, PlanError
from waamkit.planner import (
    DevicePose,
    MaterialParams,
    PlanOptions,
    Waypoint,
    coordinate_speeds,
    discretize,
    get_material,
    load_materials,
    plan_print,
    program_time,
    torch_orientation,
)
from waamkit.positioner import PositionerState, base_orientation, solve_trajectory
from waamkit.slicer import slice_axisymmetric, slice_surface, warp_layers

Z = np.array([0.0, 0.0, 1.0])


def wall_plan(length=100.0, height=10.0):
    return slice_surface(meshgen.grid_wall(length, height), h=1.0, sampling=0.5)


def test_material_table_ships_three_rows():
    table = load_materials()
    assert set(table) == {"aluminum", "steel", "stainless"}
    al = table["aluminum"]
    assert al.alloy == "ER4043"
    assert al.wire_diameter == 1.2
    assert al.speed == 9.0
    assert al.feed_ipm == 110.0
    assert al.layer_height == 1.05
    assert table["steel"].layer_height == 0.85
    assert table["stainless"].feed_ipm == 130.0


def test_material_from_custom_file(tmp_path):
    p = tmp_path / "mat.ini"
    p.write_text(
        "[bronze]\nalloy = CuSn\nwire_diameter_mm = 1.0\n"
        "speed_mm_s = 7\nfeed_ipm = 90\nlayer_height_mm = 1.1\n"
    )
    m = get_material("bronze", p)
    assert m.speed == 7.0
    with pytest.raises(ConfigError):
        get_material("unobtainium", p)


def test_material_rejects_nonpositive():
    with pytest.raises(ConfigError):
        MaterialParams("x", "y", wire_diameter=0.0, speed=9, feed_ipm=110, layer_height=1)


def test_discretize_open_layer_count():
    plan = wall_plan(100.0, 3.0)
    wps = discretize(plan, d_r=5.0)
    per_layer = len(wps) // len(plan.layers)
    assert per_layer == 21  # 100 mm / 5 mm + 1
    assert len(wps) == 21 * len(plan.layers)
    assert not wps[0].arc_on
    assert wps[1].arc_on
    assert not wps[21].arc_on  # first waypoint of the next layer is a travel


def test_discretize_closed_circle():
    plan = slice_axisymmetric([(30.0, 0.0), (30.0, 1.0)], h=5.0, sampling=0.5)
    assert len(plan.layers) == 1
    wps = discretize(plan, d_r=5.0)
    assert len(wps) == 38  # round(2*pi*30 / 5)
    first = wps[0].torch.position
    last = wps[-1].torch.position
    gap = np.linalg.norm(last - first)
    assert 0 < gap <= 5.0  # one step short of closing


def test_discretize_rejects_bad_spacing():
    plan = wall_plan(20.0, 2.0)
    with pytest.raises(PlanError):
        discretize(plan, d_r=0.0)


def test_torch_frame_opposes_deposition():
    a = np.array([0.0, 0.6, 0.8])
    t = np.array([1.0, 0.0, 0.0])
    r = torch_orientation(a, t)
    np.testing.assert_allclose(r @ r.T, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(r[:, 2], -a, atol=1e-12)
    np.testing.assert_allclose(r[:, 0], t, atol=1e-12)
    with pytest.raises(PlanError):
        torch_orientation(a, a)


def _chain(positions, q=None):
    wps = []
    for i, p in enumerate(positions):
        state = PositionerState(0.0, 0.0) if q is None else q[i]
        wps.append(Waypoint(DevicePose(p, np.eye(3)), state, arc_on=i > 0))
    return wps


def test_speed_identity_case_is_exact():
    wps = _chain([[0, 0, 0], [5.0, 0, 0]])
    segs = coordinate_speeds(wps, v_r=9.0, d_r=5.0)
    assert segs[0].speed == 9.0  # approach
    assert segs[1].speed == 9.0  # d1 == d_r, bit-exact


def test_speed_scales_with_world_distance():
    segs = coordinate_speeds(_chain([[0, 0, 0], [2.5, 0, 0]]), v_r=9.0, d_r=5.0)
    assert segs[1].speed == pytest.approx(4.5, abs=1e-12)
    segs = coordinate_speeds(_chain([[0, 0, 0], [10.0, 0, 0]]), v_r=8.0, d_r=5.0)
    assert segs[1].speed == pytest.approx(16.0, abs=1e-12)


def test_speed_formula_consistency():
    rng = np.random.default_rng(3)
    pts = np.cumsum(rng.uniform(-3, 3, size=(40, 3)), axis=0)
    segs = coordinate_speeds(_chain(list(pts)), v_r=8.0, d_r=5.0)
    for i in range(1, len(segs)):
        d1 = np.linalg.norm(pts[i] - pts[i - 1])
        assert abs(segs[i].speed * (5.0 / 8.0) - d1) <= 1e-9


def test_speed_world_frame_accounts_for_table():
    # Torch fixed in the plate frame while the table rotates: the world
    # displacement is what counts.
    q = [PositionerState(0.0, 0.0), PositionerState(0.0, np.pi / 2)]
    wps = _chain([[10.0, 0, 0], [10.0, 0, 0]], q=q)
    segs = coordinate_speeds(wps, v_r=9.0, d_r=5.0)
    d1 = np.linalg.norm(
        base_orientation(q[1]) @ np.array([10.0, 0, 0])
        - base_orientation(q[0]) @ np.array([10.0, 0, 0])
    )
    assert segs[1].speed == pytest.approx(d1 * 9.0 / 5.0, abs=1e-12)


def test_stationary_torch_gets_relative_speed():
    q = [PositionerState(0.0, 0.0), PositionerState(0.0, 0.0)]
    wps = _chain([[3.0, 0, 0], [3.0, 0, 0]], q=q)
    segs = coordinate_speeds(wps, v_r=9.0, d_r=5.0)
    assert segs[1].speed == 9.0


def test_plan_print_wall_spans_per_layer():
    plan = wall_plan(60.0, 8.0)
    mat = get_material("aluminum")
    prog = plan_print(plan, mat)
    assert prog.arc_spans() == len(plan.layers)
    assert prog.segments[0].speed == mat.speed
    assert all(s.primitive == "moveL" for s in prog.segments)
    assert prog.metadata["material"] == "aluminum"
    assert prog.metadata["feed_ipm"] == "110"
    assert prog.v_r == 9.0


def test_plan_print_spiral_single_span():
    plan = slice_axisymmetric([(20.0, 0.0), (20.0, 6.0)], h=1.0, sampling=0.5)
    spiral = warp_layers(plan)
    prog = plan_print(spiral, get_material("aluminum"))
    assert prog.arc_spans() == 1
    # Every segment except the approach deposits.
    assert all(s.target.arc_on for s in prog.segments[1:])


def test_plan_print_closed_layers_close_their_loops():
    plan = slice_axisymmetric([(20.0, 0.0), (20.0, 3.0)], h=1.0, sampling=0.5)
    prog = plan_print(plan, get_material("steel"))
    assert prog.arc_spans() == len(plan.layers) == 4
    # Each span's last waypoint returns exactly to the span's first
    # deposition start (the travel target that opened the span).
    spans = []
    run = None
    for i, seg in enumerate(prog.segments):
        if seg.target.arc_on and run is None:
            run = [i]
        elif not seg.target.arc_on and run is not None:
            run.append(i - 1)
            spans.append(run)
            run = None
    if run is not None:
        run.append(len(prog.segments) - 1)
        spans.append(run)
    assert len(spans) == 4
    for start, end in spans:
        open_pos = prog.segments[start - 1].target.torch.position
        close_pos = prog.segments[end].target.torch.position
        np.testing.assert_array_equal(open_pos, close_pos)


def test_gravity_alignment_end_to_end_on_cone():
    plan = slice_axisymmetric([(10.0, 0.0), (25.0, 15.0)], h=1.0, sampling=0.5)
    prog = plan_print(plan, get_material("aluminum"))
    checked = 0
    for seg in prog.segments:
        wp = seg.target
        if wp.held or wp.a is None:
            continue
        world = base_orientation(wp.positioner) @ wp.a
        assert np.linalg.norm(world - Z) <= 1e-6
        checked += 1
    assert checked > 100


def test_torch_points_into_deposit_everywhere():
    plan = slice_axisymmetric([(10.0, 0.0), (25.0, 15.0)], h=1.0, sampling=0.5)
    prog = plan_print(plan, get_material("aluminum"))
    for seg in prog.segments:
        wp = seg.target
        if wp.a is None:
            continue
        cos = -np.dot(wp.torch.orientation[:, 2], wp.a)
        assert cos >= np.cos(np.deg2rad(2.0)) - 1e-12


def test_step_durations_equal():
    plan = slice_axisymmetric([(10.0, 0.0), (25.0, 15.0)], h=1.0, sampling=0.5)
    prog = plan_print(plan, get_material("aluminum"))
    nominal = prog.d_r / prog.v_r
    for i in range(1, len(prog.segments)):
        a = prog.segments[i - 1].target
        b = prog.segments[i].target
        d1 = np.linalg.norm(
            base_orientation(b.positioner) @ b.torch.position
            - base_orientation(a.positioner) @ a.torch.position
        )
        if d1 > 0:
            assert d1 / prog.segments[i].speed == pytest.approx(nominal, abs=1e-9)
    assert program_time(prog) == pytest.approx((len(prog.segments) - 1) * nominal)


def test_plan_print_rejects_large_torch_angles():
    plan = wall_plan(20.0, 2.0)
    with pytest.raises(PlanError):
        plan_print(plan, get_material("aluminum"), PlanOptions(work_angle=np.deg2rad(10)))


def test_discretize_carries_given_trajectory():
    plan = slice_axisymmetric([(10.0, 0.0), (25.0, 15.0)], h=1.0, sampling=0.5)
    dirs = np.vstack([seg.increments for layer in plan.layers for seg in layer.segments])
    traj = solve_trajectory(dirs)
    wps = discretize(plan, traj, d_r=5.0)
    assert len(wps) > 0
    # States vary around each loop (q2 follows the azimuth).
    q2 = [w.positioner.q2 for w in wps[:12]]
    assert np.ptp(q2) > 0.1
    for wp in wps:
        assert abs(wp.positioner.q1) > np.deg2rad(30.0)  # 45 deg cone, never flat


def test_discretize_rejects_misaligned_trajectory():
    plan = wall_plan(20.0, 2.0)
    traj = solve_trajectory(np.tile([0.0, 0.0, 1.0], (5, 1)))
    with pytest.raises(PlanError):
        discretize(plan, traj, d_r=5.0)


def test_tiny_closed_loop_still_discretizes():
    # Circumference far below d_r: fall back to the 3-point minimum.
    plan = slice_axisymmetric([(0.5, 0.0), (0.5, 1.0)], h=1.0, sampling=0.2)
    wps = discretize(plan, d_r=5.0)
    assert len(wps) == 3 * len(plan.layers)
