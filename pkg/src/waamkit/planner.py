"""Motion planning: waypoint discretization, gravity alignment, speeds.

Takes a slice plan, solves the positioner trajectory so deposition is
always flat, resamples paths into uniformly spaced waypoints, and
coordinates the torch path speed with the table motion so material lays
down at the commanded relative speed.
"""

import configparser
import logging
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import ConfigError, PlanError
from .geometry import rotation_about, unit
from .positioner import (
    SINGULAR_Q1,
    SMOOTH_WINDOW,
    PositionerState,
    PositionerTrajectory,
    base_orientation,
    smoothing_reach,
    solve_trajectory,
)
from .slicer import SlicePlan, _resample, _unit_rows

log = logging.getLogger(__name__)

D_R_DEFAULT = 5.0  # nominal waypoint spacing, mm
CHAIN_TOL = 1e-9  # mm; paths meeting this closely continue one bead
MAX_TORCH_TILT = np.deg2rad(2.0)  # torch must stay opposed to the deposit


@dataclass(frozen=True)
class MaterialParams:
    """One row of the weld schedule table."""

    name: str
    alloy: str
    wire_diameter: float  # mm
    speed: float  # torch path speed, mm/s
    feed_ipm: float  # wire feed, inches per minute
    layer_height: float  # resulting deposition height, mm

    def __post_init__(self):
        for key in ("wire_diameter", "speed", "feed_ipm", "layer_height"):
            if getattr(self, key) <= 0:
                raise ConfigError(f"material {self.name}: {key} must be positive")


def load_materials(path=None):
    """Read the material table (one INI section per material)."""
    cfg = configparser.ConfigParser()
    if path is None:
        text = resources.files("waamkit").joinpath("data/materials.ini").read_text()
        cfg.read_string(text)
    else:
        if not cfg.read(str(path)):
            raise ConfigError(f"cannot read material table {path}")
    table = {}
    for section in cfg.sections():
        s = cfg[section]
        try:
            table[section] = MaterialParams(
                name=section,
                alloy=s.get("alloy", ""),
                wire_diameter=s.getfloat("wire_diameter_mm"),
                speed=s.getfloat("speed_mm_s"),
                feed_ipm=s.getfloat("feed_ipm"),
                layer_height=s.getfloat("layer_height_mm"),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"material {section}: {exc}") from exc
    if not table:
        raise ConfigError("material table is empty")
    return table


def get_material(name, path=None) -> MaterialParams:
    table = load_materials(path)
    if name not in table:
        raise ConfigError(f"unknown material {name!r}; have {sorted(table)}")
    return table[name]


@dataclass
class DevicePose:
    position: np.ndarray  # (3,) mm
    orientation: np.ndarray  # (3,3) rotation

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(3)
        self.orientation = np.asarray(self.orientation, dtype=float).reshape(3, 3)


@dataclass
class Waypoint:
    torch: DevicePose  # in the positioner-plate frame
    positioner: PositionerState
    arc_on: bool = False
    a: np.ndarray = None  # deposition direction at this waypoint
    held: bool = False  # positioner state altered by singularity handling


@dataclass
class MotionSegment:
    primitive: str  # moveL | moveC | moveJ
    target: Waypoint
    speed: float  # torch path speed v1, mm/s
    via: np.ndarray = None  # moveC intermediate position
    sync: str = None  # group synchronized at this step


@dataclass
class MotionProgram:
    segments: list
    d_r: float
    v_r: float
    metadata: dict = field(default_factory=dict)
    cart_device: str = "torch"
    joint_device: str = "table"
    groups: list = field(default_factory=lambda: [("cell", ("torch", "table"))])
    extra_devices: dict = field(default_factory=dict)  # name -> (kind, dof)

    def validate(self):
        if not self.segments:
            raise PlanError("motion program is empty")
        if self.d_r <= 0 or self.v_r <= 0:
            raise PlanError("d_r and v_r must be positive")
        for i, seg in enumerate(self.segments):
            if seg.target.arc_on and not seg.speed > 0:
                raise PlanError(f"segment {i}: arc on with non-positive speed")
        return self

    def arc_spans(self):
        """Number of maximal deposition runs (one ignition each)."""
        count = 0
        prev = False
        for seg in self.segments:
            if seg.target.arc_on and not prev:
                count += 1
            prev = seg.target.arc_on
        return count

    def waypoints(self):
        return [seg.target for seg in self.segments]


@dataclass
class PlanOptions:
    d_r: float = D_R_DEFAULT
    policy: str = "negative"
    q1_threshold: float = SINGULAR_Q1
    window: int = SMOOTH_WINDOW
    work_angle: float = 0.0  # radians, about the travel direction
    travel_angle: float = 0.0  # radians, push/drag about the torch y axis


def _resampled_paths(plan: SlicePlan, d_r):
    """Resample every (layer, segment) path at d_r and work out chaining.

    Each entry: points/tangents/dirs arrays, closed flag, `chained` when
    the path continues the previous bead without a travel move (either
    end-to-start contact or a loop-closing continuation), and
    `drop_first` when the first sample duplicates the previous end.
    """
    if d_r <= 0:
        raise PlanError("d_r must be positive")
    if not plan.layers:
        raise PlanError("empty plan")
    paths = []
    for layer in plan.layers:
        for seg in layer.segments:
            attrs = {"t": seg.tangents, "a": seg.increments}
            got = _resample(seg.points, d_r, seg.closed, attrs=attrs)
            if got is None:
                # Paths shorter than d_r still get the minimum waypoint count.
                got = _resample(
                    seg.points, d_r, seg.closed, attrs=attrs, count=3 if seg.closed else 2
                )
            if got is None:
                raise PlanError(f"layer {layer.index}: path too short to discretize")
            pts, attrs, _ = got
            paths.append(
                {
                    "points": pts,
                    "tangents": _unit_rows(attrs["t"]),
                    "dirs": _unit_rows(attrs["a"]),
                    "closed": seg.closed,
                    "chained": False,
                    "drop_first": False,
                    "closure": False,
                }
            )
    for prev, cur in zip(paths[:-1], paths[1:]):
        end_gap = np.linalg.norm(cur["points"][0] - prev["points"][-1])
        if end_gap <= CHAIN_TOL:
            cur["chained"] = True
            cur["drop_first"] = True
        elif prev["closed"]:
            loop_gap = np.linalg.norm(cur["points"][0] - prev["points"][0])
            if loop_gap <= CHAIN_TOL:
                # Moving to the next path's start also closes this loop.
                cur["chained"] = True
            else:
                prev["closure"] = True
    if paths and paths[-1]["closed"]:
        paths[-1]["closure"] = True
    for p in paths:
        if p["drop_first"]:
            p["points"] = p["points"][1:]
            p["tangents"] = p["tangents"][1:]
            p["dirs"] = p["dirs"][1:]
    return paths


def torch_orientation(a, t, work_angle=0.0, travel_angle=0.0):
    """Torch frame: z into the deposit (-a), x along travel (t)."""
    z = unit(-np.asarray(a, dtype=float))
    t = np.asarray(t, dtype=float)
    x = t - np.dot(t, z) * z
    n = np.linalg.norm(x)
    if n < 1e-9:
        raise PlanError("travel direction parallel to deposition direction")
    x = x / n
    y = np.cross(z, x)
    r = np.column_stack([x, y, z])
    if work_angle:
        r = r @ rotation_about(np.array([1.0, 0, 0]), work_angle)
    if travel_angle:
        r = r @ rotation_about(np.array([0.0, 1.0, 0]), travel_angle)
    return r


def discretize(plan: SlicePlan, traj: PositionerTrajectory = None, d_r=D_R_DEFAULT):
    """Uniform waypoints for a plan, arc flags marking deposition moves.

    A waypoint's arc_on means the move reaching it deposits. When traj
    is given it must align 1:1 with the plan's points; its states are
    resampled onto the waypoints by arc length. Without it, waypoints
    carry the zero positioner state (plan_print solves it per waypoint
    instead).
    """
    paths = _resampled_paths(plan, d_r)
    if traj is not None and len(traj) != plan.n_points():
        raise PlanError(
            f"trajectory has {len(traj)} states for {plan.n_points()} plan points"
        )
    states, flags = _states_on_waypoints(plan, traj, paths) if traj is not None else (None, None)
    waypoints = []
    k = 0
    for path in paths:
        for j in range(len(path["points"])):
            first = j == 0 and not path["chained"]
            pose = DevicePose(
                path["points"][j], torch_orientation(path["dirs"][j], path["tangents"][j])
            )
            st = states[k] if states is not None else PositionerState(0.0, 0.0)
            held = bool(flags[k]) if flags is not None else False
            waypoints.append(
                Waypoint(pose, st, arc_on=not first, a=path["dirs"][j], held=held)
            )
            k += 1
    if waypoints:
        waypoints[0].arc_on = False
    return waypoints


def _states_on_waypoints(plan, traj, paths):
    """Linear-in-arc-length resampling of a per-plan-point trajectory."""
    states = []
    flags = []
    pos = 0
    pi = 0
    for layer in plan.layers:
        for seg in layer.segments:
            n = len(seg.points)
            q1 = traj.q1[pos : pos + n]
            q2 = traj.q2[pos : pos + n]
            sing = traj.singular[pos : pos + n]
            lam = seg.lambdas - seg.lambdas[0]
            if seg.closed:
                lam = np.append(lam, seg.arc_length)
                q1 = np.append(q1, q1[0])
                q2 = np.append(q2, q2[0])
                sing = np.append(sing, sing[0])
            path = paths[pi]
            pts = path["points"]
            # Recover waypoint arc positions from stored sample spacing.
            total = lam[-1] if not seg.closed else seg.arc_length
            m = len(pts) + (1 if path["drop_first"] else 0)
            if seg.closed:
                s = np.arange(m) * (total / m)
            else:
                s = np.arange(m) * (total / max(m - 1, 1))
            if path["drop_first"]:
                s = s[1:]
            states.extend(
                PositionerState(a, b)
                for a, b in zip(np.interp(s, lam, q1), np.interp(s, lam, q2))
            )
            flags.extend(np.interp(s, lam, sing.astype(float)) > 0.25)
            pos += n
            pi += 1
    return states, flags


def coordinate_speeds(waypoints, v_r, d_r=D_R_DEFAULT):
    """Per-segment torch speed so each step lasts d_r / v_r.

    d1 is the world-frame torch displacement after composing the table
    motion; v1 = d1 * v_r / d_r. A step with no torch displacement gets
    v_r (the table turns while the torch holds). The first segment is
    the approach and also runs at v_r.
    """
    if v_r <= 0 or d_r <= 0:
        raise PlanError("v_r and d_r must be positive")
    if not waypoints:
        raise PlanError("no waypoints")
    segments = []
    prev_world = None
    for wp in waypoints:
        world = base_orientation(wp.positioner) @ wp.torch.position
        if prev_world is None:
            speed = v_r
        else:
            d1 = float(np.linalg.norm(world - prev_world))
            speed = d1 * v_r / d_r if d1 > 0.0 else v_r
        segments.append(MotionSegment("moveL", wp, speed, sync="cell"))
        prev_world = world
    return segments


def plan_print(plan: SlicePlan, material: MaterialParams, options: PlanOptions = None):
    """Complete pipeline from slice plan to synchronized motion program."""
    opt = options or PlanOptions()
    if abs(opt.work_angle) > MAX_TORCH_TILT or abs(opt.travel_angle) > MAX_TORCH_TILT:
        raise PlanError("torch angle offsets are limited to 2 degrees")
    paths = _resampled_paths(plan, opt.d_r)
    dirs = np.vstack([p["dirs"] for p in paths])
    traj = solve_trajectory(
        dirs, policy=opt.policy, q1_threshold=opt.q1_threshold, window=opt.window
    )
    held = smoothing_reach(traj, opt.window) | traj.singular

    waypoints = []
    k = 0
    for path in paths:
        first_idx = len(waypoints)
        for j in range(len(path["points"])):
            pose = DevicePose(
                path["points"][j],
                torch_orientation(
                    path["dirs"][j], path["tangents"][j], opt.work_angle, opt.travel_angle
                ),
            )
            first = j == 0 and not path["chained"]
            waypoints.append(
                Waypoint(
                    pose,
                    traj.state(k),
                    arc_on=not first,
                    a=path["dirs"][j],
                    held=bool(held[k]),
                )
            )
            k += 1
        if path["closure"]:
            head = waypoints[first_idx]
            tail = waypoints[-1]
            q2 = head.positioner.q2
            q2 += 2 * np.pi * round((tail.positioner.q2 - q2) / (2 * np.pi))
            waypoints.append(
                Waypoint(
                    DevicePose(head.torch.position.copy(), head.torch.orientation.copy()),
                    PositionerState(head.positioner.q1, q2),
                    arc_on=True,
                    a=None if head.a is None else head.a.copy(),
                    held=head.held or tail.held,
                )
            )
    waypoints[0].arc_on = False
    segments = coordinate_speeds(waypoints, material.speed, opt.d_r)
    program = MotionProgram(
        segments,
        d_r=opt.d_r,
        v_r=material.speed,
        metadata={
            "material": material.name,
            "alloy": material.alloy,
            "feed_ipm": f"{material.feed_ipm:g}",
            "wire_diameter_mm": f"{material.wire_diameter:g}",
            "layer_height_mm": f"{material.layer_height:g}",
        },
    )
    program.validate()
    log.info(
        "planned %d segments, %d deposition spans, material %s",
        len(program.segments),
        program.arc_spans(),
        material.name,
    )
    return program


def program_time(program: MotionProgram) -> float:
    """Wall-clock estimate in seconds: every coordinated step lasts d_r/v_r."""
    step = program.d_r / program.v_r
    total = 0.0
    for i, seg in enumerate(program.segments):
        if i == 0:
            continue
        total += step
    return total
