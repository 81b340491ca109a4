"""Render pipeline artifacts as figure files.

Everything draws through the Agg backend so headless runs work, and the
SVG hash salt is pinned so repeated runs produce identical bytes.
"""

from __future__ import annotations

import logging

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  backend must be set first
import numpy as np  # noqa: E402

log = logging.getLogger(__name__)

plt.rcParams["svg.hashsalt"] = "waamkit"


def _save(fig, path):
    kwargs = {"dpi": 120}
    if str(path).lower().endswith(".svg"):
        # the SVG writer stamps a creation date unless told otherwise
        kwargs["metadata"] = {"Date": None}
    fig.savefig(path, **kwargs)
    plt.close(fig)
    log.info("figure %s", path)


def plot_plan(plan, path, max_drawn=80):
    """Top and side view of a slice plan, colored by layer index."""
    stride = max(1, -(-len(plan.layers) // max_drawn))
    cmap = plt.get_cmap("viridis")
    denom = max(1, len(plan.layers) - 1)
    fig, (ax_top, ax_side) = plt.subplots(1, 2, figsize=(11.0, 5.0))
    for layer in plan.layers[::stride]:
        color = cmap(layer.index / denom)
        for seg in layer.segments:
            pts = seg.points
            if seg.closed:
                pts = np.vstack([pts, pts[:1]])
            ax_top.plot(pts[:, 0], pts[:, 1], color=color, lw=0.7)
            ax_side.plot(pts[:, 0], pts[:, 2], color=color, lw=0.7)
    ax_top.set_xlabel("x [mm]")
    ax_top.set_ylabel("y [mm]")
    ax_top.set_aspect("equal")
    ax_top.set_title("top view")
    ax_side.set_xlabel("x [mm]")
    ax_side.set_ylabel("z [mm]")
    ax_side.set_title("side view")
    kind = "spiral" if plan.warped else "layers"
    fig.suptitle(f"{plan.source or 'plan'}: {len(plan.layers)} {kind}, h={plan.h:g} mm")
    fig.tight_layout()
    _save(fig, path)


def plot_trajectory(traj, path):
    """Joint angles over the waypoint sequence, flagged states marked."""
    idx = np.arange(len(traj))
    q1 = np.degrees(traj.q1)
    q2 = np.degrees(traj.q2)
    fig, ax = plt.subplots(figsize=(9.0, 4.0))
    ax.plot(idx, q1, lw=1.0, label="q1 (tilt)")
    ax.plot(idx, q2, lw=1.0, label="q2 (spin)")
    if traj.singular.any():
        ax.plot(idx[traj.singular], q2[traj.singular], ".", ms=3.0,
                color="crimson", label="flagged")
    ax.set_xlabel("waypoint")
    ax.set_ylabel("angle [deg]")
    ax.legend(loc="best", fontsize=8)
    ax.set_title("positioner trajectory")
    fig.tight_layout()
    _save(fig, path)


def plot_program(program, path):
    """Torch path colored by commanded speed plus the speed profile."""
    wps = program.waypoints()
    pos = np.array([w.torch.position for w in wps])
    speeds = np.array([seg.speed for seg in program.segments])
    arc = np.array([w.arc_on for w in wps])
    fig, (ax_path, ax_v) = plt.subplots(1, 2, figsize=(11.0, 4.5))
    ax_path.plot(pos[:, 0], pos[:, 1], lw=0.5, color="0.75", zorder=1)
    sc = ax_path.scatter(pos[:, 0], pos[:, 1], c=speeds, s=4.0,
                         cmap="plasma", zorder=2)
    fig.colorbar(sc, ax=ax_path, label="v1 [mm/s]")
    ax_path.set_xlabel("x [mm]")
    ax_path.set_ylabel("y [mm]")
    ax_path.set_aspect("equal")
    ax_path.set_title("torch path (plate frame)")
    ax_v.plot(speeds, lw=0.8)
    if (~arc).any():
        off = np.flatnonzero(~arc)
        ax_v.plot(off, speeds[off], "x", ms=4.0, color="crimson", label="arc off")
        ax_v.legend(loc="best", fontsize=8)
    ax_v.set_xlabel("segment")
    ax_v.set_ylabel("v1 [mm/s]")
    ax_v.set_title(f"speed profile (v_r={program.v_r:g} mm/s)")
    fig.tight_layout()
    _save(fig, path)


def plot_deviation(distances, path, bins=60):
    """Histogram of scan-to-surface deviations with summary markers."""
    d = np.asarray(distances, dtype=float).ravel()
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    ax.hist(d, bins=bins, color="steelblue", edgecolor="white", lw=0.3)
    ax.axvline(d.mean(), color="black", lw=1.0, ls="--",
               label=f"e_avg = {d.mean():.3f} mm")
    ax.axvline(d.max(), color="crimson", lw=1.0, ls=":",
               label=f"e_max = {d.max():.3f} mm")
    ax.set_xlabel("deviation [mm]")
    ax.set_ylabel("points")
    ax.set_title("scan deviation from CAD")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def plot_standoff(frame_ids, standoff, height, selected, path):
    """Standoff/height traces over a frame sequence plus slice selection."""
    frame_ids = np.asarray(frame_ids)
    standoff = np.asarray(standoff, dtype=float)
    height = np.asarray(height, dtype=float)
    selected = np.asarray(selected, dtype=float)
    fig, (ax_mm, ax_ix) = plt.subplots(2, 1, figsize=(9.0, 6.0), sharex=True)
    ax_mm.plot(frame_ids, standoff, lw=1.0, label="standoff")
    ax_mm.plot(frame_ids, height, lw=1.0, label="deposit height")
    ax_mm.set_ylabel("mm")
    ax_mm.legend(loc="best", fontsize=8)
    ax_mm.set_title("torch standoff and measured height")
    ok = np.isfinite(selected)
    ax_ix.step(frame_ids[ok], selected[ok], where="post", lw=1.0)
    ax_ix.set_xlabel("frame")
    ax_ix.set_ylabel("selected slice")
    fig.tight_layout()
    _save(fig, path)
