"""Two-axis part positioner: tilt q1 and table rotation q2.

The part sits on a tilting rotary table. For a requested deposition
direction (a unit vector in the part frame) the table is driven so that
the direction points straight up in the world frame, keeping the weld
pool in the flat position regardless of surface shape.
"""

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .errors import PositionerError
from .geometry import rotation_about

log = logging.getLogger(__name__)

Q1_LIMIT = np.deg2rad(95.0)  # symmetric tilt range of the table
SINGULAR_Q1 = np.deg2rad(3.0)  # below this tilt, q2 barely matters
SMOOTH_WINDOW = 5

_Y = np.array([0.0, 1.0, 0.0])
_Z = np.array([0.0, 0.0, 1.0])
_TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class PositionerState:
    """Joint configuration in radians; q2 is continuous (no wrap)."""

    q1: float
    q2: float


@dataclass
class PositionerTrajectory:
    """Per-waypoint joint values plus near-singularity flags."""

    q1: np.ndarray
    q2: np.ndarray
    singular: np.ndarray

    def __post_init__(self):
        self.q1 = np.asarray(self.q1, dtype=float)
        self.q2 = np.asarray(self.q2, dtype=float)
        self.singular = np.asarray(self.singular, dtype=bool)
        if not (len(self.q1) == len(self.q2) == len(self.singular)):
            raise PositionerError("trajectory arrays differ in length")

    def __len__(self):
        return len(self.q1)

    def state(self, i: int) -> PositionerState:
        return PositionerState(float(self.q1[i]), float(self.q2[i]))

    @property
    def states(self):
        return [self.state(i) for i in range(len(self))]


def base_orientation(state: PositionerState) -> np.ndarray:
    """World-from-plate rotation for a given table configuration."""
    return rotation_about(-_Y, state.q1) @ rotation_about(-_Z, state.q2)


def gravity_align(a):
    """Both joint solutions that rotate direction `a` to world +z.

    Returns the tilt-toward branch (q1 >= 0) and the tilt-away branch
    (-q1, q2 + pi). At the pole a = +z any q2 works; atan2(0, 0) = 0 is
    the convention, so the pair degenerates to (0, 0) and (0, pi).
    """
    a = np.asarray(a, dtype=float)
    norm = float(np.linalg.norm(a))
    if abs(norm - 1.0) > 1e-9:
        raise PositionerError(f"direction must be a unit vector, got norm {norm:.6g}")
    q1 = float(np.arctan2(np.hypot(a[0], a[1]), a[2]))
    q2 = float(np.arctan2(a[1], a[0]))
    return PositionerState(q1, q2), PositionerState(-q1, q2 + np.pi)


def _unwrap_near(q2, prev):
    if prev is None:
        return q2
    return q2 + _TWO_PI * round((prev - q2) / _TWO_PI)


def select_solution(solutions, prev=None, policy="negative", q1_limit=Q1_LIMIT):
    """Pick one branch of the dual solution.

    The default policy prefers non-positive tilt, which swings the table
    away from the camera side of the cell; the other branch is the
    fallback when the preferred one exceeds the tilt limit. `prev` is
    the previous waypoint's q2, used to unwrap the selected q2 onto the
    nearest turn.
    """
    first, second = solutions
    if policy == "negative":
        preferred, other = (first, second) if first.q1 <= second.q1 else (second, first)
    elif policy == "positive":
        preferred, other = (first, second) if first.q1 >= second.q1 else (second, first)
    else:
        raise PositionerError(f"unknown selection policy {policy!r}")
    pick = preferred if abs(preferred.q1) <= q1_limit else other
    if abs(pick.q1) > q1_limit:
        raise PositionerError(
            f"both solutions exceed the tilt limit of {np.degrees(q1_limit):.1f} deg"
        )
    return PositionerState(pick.q1, _unwrap_near(pick.q2, prev))


def handle_singularity(traj: PositionerTrajectory, q1_threshold=SINGULAR_Q1):
    """Hold q2 constant through near-singular spans.

    Wherever |q1| < q1_threshold the table axis is nearly vertical and
    q2 is ill-conditioned; its last well-conditioned value is carried
    through and the span is flagged.
    """
    if q1_threshold <= 0:
        raise PositionerError("q1_threshold must be positive")
    q1 = traj.q1.copy()
    q2 = traj.q2.copy()
    singular = np.abs(q1) < q1_threshold
    if len(q2):
        last = q2[0]
        for i in range(len(q2)):
            if singular[i]:
                q2[i] = last
            else:
                last = q2[i]
    return PositionerTrajectory(q1, q2, singular)


def smooth_trajectory(traj: PositionerTrajectory, window=SMOOTH_WINDOW):
    """Moving-average both joints near flagged spans.

    Only states within 2*window of a singular flag are touched; the
    window shrinks symmetrically toward the ends of the trajectory so
    the filter stays centered (and the endpoints stay fixed).
    """
    if window < 3 or window % 2 == 0:
        raise PositionerError("window must be odd and >= 3")
    q1 = traj.q1.copy()
    q2 = traj.q2.copy()
    if not traj.singular.any():
        return PositionerTrajectory(q1, q2, traj.singular.copy())
    n = len(traj)
    near = np.zeros(n, dtype=bool)
    reach = 2 * window
    for i in np.flatnonzero(traj.singular):
        near[max(0, i - reach) : i + reach + 1] = True
    half = window // 2
    for i in np.flatnonzero(near):
        m = min(half, i, n - 1 - i)
        q1[i] = traj.q1[i - m : i + m + 1].mean()
        q2[i] = traj.q2[i - m : i + m + 1].mean()
    if np.any(np.abs(q1) > Q1_LIMIT + 1e-12):
        raise PositionerError("smoothed tilt exceeds the joint limit")
    return PositionerTrajectory(q1, q2, traj.singular.copy())


def solve_trajectory(
    directions,
    policy="negative",
    q1_threshold=SINGULAR_Q1,
    window=SMOOTH_WINDOW,
    q1_limit=Q1_LIMIT,
    prev=None,
):
    """Full pipeline from deposition directions to a smoothed trajectory."""
    directions = np.asarray(directions, dtype=float)
    if directions.ndim != 2 or directions.shape[1] != 3 or not len(directions):
        raise PositionerError("directions must be an (n, 3) array")
    lens = np.linalg.norm(directions, axis=1)
    if np.any(lens < 1e-12):
        raise PositionerError("zero-length direction")
    directions = directions / lens[:, None]
    q1s = np.empty(len(directions))
    q2s = np.empty(len(directions))
    for k, a in enumerate(directions):
        try:
            state = select_solution(
                gravity_align(a), prev=prev, policy=policy, q1_limit=q1_limit
            )
        except PositionerError as exc:
            raise PositionerError(f"waypoint {k}: {exc}") from exc
        q1s[k] = state.q1
        q2s[k] = state.q2
        prev = state.q2
    traj = PositionerTrajectory(q1s, q2s, np.zeros(len(q1s), dtype=bool))
    traj = handle_singularity(traj, q1_threshold)
    return smooth_trajectory(traj, window)


def smoothing_reach(traj: PositionerTrajectory, window=SMOOTH_WINDOW):
    """Boolean mask of states the smoothing pass was allowed to modify."""
    near = np.zeros(len(traj), dtype=bool)
    reach = 2 * window
    for i in np.flatnonzero(traj.singular):
        near[max(0, i - reach) : i + reach + 1] = True
    return near


def save_trajectory_csv(traj: PositionerTrajectory, path) -> None:
    """Write `index,q1_deg,q2_deg,singular` rows for inspection."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "q1_deg", "q2_deg", "singular"])
        for i in range(len(traj)):
            writer.writerow(
                [
                    i,
                    f"{np.degrees(traj.q1[i]):.12g}",
                    f"{np.degrees(traj.q2[i]):.12g}",
                    int(traj.singular[i]),
                ]
            )


def load_trajectory_csv(path) -> PositionerTrajectory:
    """Read a trajectory written by save_trajectory_csv."""
    q1, q2, flags = [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["index", "q1_deg", "q2_deg", "singular"]:
            raise PositionerError(f"unexpected trajectory header in {path}")
        for row in reader:
            if not row:
                continue
            q1.append(np.deg2rad(float(row[1])))
            q2.append(np.deg2rad(float(row[2])))
            flags.append(bool(int(row[3])))
    return PositionerTrajectory(np.array(q1), np.array(q2), np.array(flags, dtype=bool))
