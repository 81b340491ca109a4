"""Command-line pipeline: slice, warp, plan, emit, evaluate, monitor-sim, viz.

Each subcommand consumes the previous stage's file format and writes its
artifacts into --out; all diagnostics go to stderr, artifact paths to
stdout. Identical inputs and seed produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import logging
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import plotting
from .emitter import emit, emit_ir, motion_statement_count, parse_script
from .errors import (
    ConfigError,
    FlameNotFound,
    PlanExhausted,
    TorchNotFound,
    WaamError,
)
from .geometry import load_mesh
from .metrology import EvalConfig, evaluate, load_cloud, render_report, report_kv
from .monitor import detect_flame, estimate_standoff, load_template, read_frame, select_slice
from .planner import PlanOptions, get_material, plan_print
from .positioner import PositionerTrajectory, load_trajectory_csv, save_trajectory_csv
from .slicer import load_plan, plan_to_ply, save_plan, slice_surface, warp_layers

log = logging.getLogger("waamkit.cli")

DIALECT_EXT = {"inform": ".jbi", "rapid": ".mod", "karel": ".kl"}


@dataclass
class PipelineConfig:
    """Parameters shared by the pipeline stages; see data/pipeline.ini layout."""

    mesh: str = ""
    h: float = 1.0
    sampling: float = 0.5
    n: int = 50
    d_r: float = 5.0
    material: str = "aluminum"
    dialect: str = "inform"
    spiral: bool = False
    out: str = "out"

    def validate(self, material_table=None):
        for key in ("h", "sampling", "d_r"):
            if getattr(self, key) <= 0:
                raise ConfigError(f"{key} must be positive, got {getattr(self, key)!r}")
        if self.n <= 0:
            raise ConfigError(f"n must be positive, got {self.n!r}")
        get_material(self.material, material_table)
        return self


_FLOAT_KEYS = {"h", "sampling", "d_r"}
_INT_KEYS = {"n"}
_BOOL_KEYS = {"spiral"}


def load_config(path) -> PipelineConfig:
    """Read a [pipeline] INI section into a PipelineConfig."""
    cp = configparser.ConfigParser()
    if not cp.read(str(path)):
        raise ConfigError(f"cannot read config file {path}")
    if not cp.has_section("pipeline"):
        raise ConfigError(f"config file {path} has no [pipeline] section")
    sec = cp["pipeline"]
    kwargs = {}
    known = {f.name for f in fields(PipelineConfig)}
    for key in sec:
        if key not in known:
            raise ConfigError(f"unknown config key {key!r} in {path}")
        try:
            if key in _FLOAT_KEYS:
                kwargs[key] = sec.getfloat(key)
            elif key in _INT_KEYS:
                kwargs[key] = sec.getint(key)
            elif key in _BOOL_KEYS:
                kwargs[key] = sec.getboolean(key)
            else:
                kwargs[key] = sec.get(key)
        except ValueError as exc:
            raise ConfigError(f"config key {key!r}: {exc}") from exc
    return PipelineConfig(**kwargs)


def _pipeline_config(args, need_mesh=False) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    for name in ("mesh", "h", "sampling", "n", "d_r", "material", "dialect", "spiral", "out"):
        val = getattr(args, name, None)
        if val is not None:
            cfg = replace(cfg, **{name: val})
    cfg.validate(getattr(args, "materials", None))
    if need_mesh and not cfg.mesh:
        raise ConfigError("no mesh given (flag --mesh or config key mesh)")
    return cfg


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit_artifact(path, text):
    Path(path).write_text(text)
    print(path)


def _fig_path(out: Path, stem: str, args) -> Path:
    return out / f"{stem}.{args.fig_format}"


# --- subcommands -------------------------------------------------------------


def cmd_slice(args) -> int:
    cfg = _pipeline_config(args, need_mesh=True)
    mesh = load_mesh(cfg.mesh)
    plan = slice_surface(mesh, cfg.h, cfg.sampling, n=cfg.n)
    if cfg.spiral:
        plan = warp_layers(plan)
    out = _out_dir(cfg.out)
    path = out / "plan.txt"
    save_plan(plan, path)
    log.info("%d layers -> %s", len(plan.layers), path)
    print(path)
    return 0


def cmd_warp(args) -> int:
    cfg = _pipeline_config(args)
    plan = load_plan(args.plan)
    warped = warp_layers(plan)
    out = _out_dir(cfg.out)
    path = out / "plan_warped.txt"
    save_plan(warped, path)
    print(path)
    return 0


def cmd_plan(args) -> int:
    cfg = _pipeline_config(args)
    plan = load_plan(args.plan)
    material = get_material(cfg.material, args.materials)
    program = plan_print(plan, material, PlanOptions(d_r=cfg.d_r))
    out = _out_dir(cfg.out)
    prog_path = out / "program.ir"
    _emit_artifact(prog_path, emit_ir(program))
    wps = program.waypoints()
    traj = PositionerTrajectory(
        np.array([w.positioner.q1 for w in wps]),
        np.array([w.positioner.q2 for w in wps]),
        np.array([w.held for w in wps], dtype=bool),
    )
    traj_path = out / "trajectory.csv"
    save_trajectory_csv(traj, traj_path)
    print(traj_path)
    return 0


def cmd_emit(args) -> int:
    cfg = _pipeline_config(args)
    program = parse_script(Path(args.program).read_text())
    text = emit(program, cfg.dialect)
    out = _out_dir(cfg.out)
    path = out / f"program{DIALECT_EXT.get(cfg.dialect, '.txt')}"
    _emit_artifact(path, text)
    log.info("%d motion statements in %s dialect", motion_statement_count(text, cfg.dialect), cfg.dialect)
    return 0


def cmd_evaluate(args) -> int:
    cfg = _pipeline_config(args)
    cad = load_mesh(args.cad)
    scan = load_cloud(args.scan)
    eval_cfg = EvalConfig(
        geometry=args.geometry or cad.name or Path(args.cad).stem,
        material=cfg.material,
        seed=args.seed,
        trim=args.trim,
        width_samples=args.width_samples,
    )
    report = evaluate(cad, scan, eval_cfg)
    out = _out_dir(cfg.out)
    _emit_artifact(out / "report.txt", render_report(report))
    _emit_artifact(out / "report.kv", report_kv(report))
    fig = _fig_path(out, "deviation", args)
    plotting.plot_deviation(report.distances, fig)
    print(fig)
    return 0


def cmd_monitor_sim(args) -> int:
    cfg = _pipeline_config(args)
    frames = sorted(Path(args.frames).glob("*.pgm"))
    if not frames:
        raise ConfigError(f"no .pgm frames under {args.frames}")
    template = load_template(args.template)
    dense = load_plan(args.plan)
    nominal = args.nominal_height
    if nominal is None:
        nominal = get_material(cfg.material, args.materials).layer_height
    out = _out_dir(cfg.out)
    csv_path = out / "monitor.csv"
    rows = []
    current = -1
    for i, frame_path in enumerate(frames):
        frame = read_frame(frame_path, args.px_per_mm)
        try:
            standoff = estimate_standoff(frame, template, args.threshold)
        except (TorchNotFound, FlameNotFound) as exc:
            log.warning("frame %s: %s", frame_path.name, exc)
            rows.append((i, frame_path.name, np.nan, np.nan, current))
            continue
        blob = detect_flame(frame, args.threshold)
        height = (args.base_row - blob.bbox[0]) / frame.px_per_mm
        try:
            current = select_slice(dense, height, current, nominal)
        except PlanExhausted:
            log.info("plan exhausted at frame %s", frame_path.name)
            rows.append((i, frame_path.name, standoff, height, -1))
            break
        rows.append((i, frame_path.name, standoff, height, current))
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame", "file", "standoff_mm", "height_mm", "selected_index"])
        for i, name, standoff, height, sel in rows:
            writer.writerow([i, name, f"{standoff:.6g}", f"{height:.6g}", sel])
    print(csv_path)
    fig = _fig_path(out, "monitor", args)
    plotting.plot_standoff(
        [r[0] for r in rows],
        [r[2] for r in rows],
        [r[3] for r in rows],
        [r[4] for r in rows],
        fig,
    )
    print(fig)
    return 0


def cmd_viz(args) -> int:
    cfg = _pipeline_config(args)
    if not (args.plan or args.program or args.trajectory):
        raise ConfigError("viz needs at least one of --plan/--program/--trajectory")
    out = _out_dir(cfg.out)
    if args.plan:
        plan = load_plan(args.plan)
        ply = out / "layers.ply"
        plan_to_ply(plan, ply, every=args.every)
        print(ply)
        fig = _fig_path(out, "plan", args)
        plotting.plot_plan(plan, fig)
        print(fig)
    if args.program:
        program = parse_script(Path(args.program).read_text())
        fig = _fig_path(out, "program", args)
        plotting.plot_program(program, fig)
        print(fig)
    if args.trajectory:
        traj = load_trajectory_csv(args.trajectory)
        fig = _fig_path(out, "trajectory", args)
        plotting.plot_trajectory(traj, fig)
        print(fig)
    return 0


# --- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with a [pipeline] section")
    common.add_argument("--out", help="artifact directory (default: out)")
    common.add_argument("--seed", type=int, default=0, help="seed for stochastic sampling")
    common.add_argument("--fig-format", choices=("png", "svg"), default="png",
                        help="figure file format")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    parser = argparse.ArgumentParser(
        prog="waamkit",
        description="Toolpath planning, robot program generation, and "
                    "inspection for wire arc additive manufacturing.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("slice", parents=[common], help="slice a mesh into a layer plan")
    p.add_argument("--mesh", help="STL surface mesh")
    p.add_argument("--h", type=float, help="layer height in mm")
    p.add_argument("--sampling", type=float, help="point spacing along layers in mm")
    p.add_argument("--n", type=int, help="plane-fit neighborhood size")
    p.add_argument("--spiral", action=argparse.BooleanOptionalAction,
                   help="warp closed layers into one continuous spiral")
    p.set_defaults(func=cmd_slice)

    p = sub.add_parser("warp", parents=[common], help="warp a saved plan into a spiral")
    p.add_argument("--plan", required=True, help="plan file from `slice`")
    p.set_defaults(func=cmd_warp)

    p = sub.add_parser("plan", parents=[common],
                       help="turn a slice plan into a synchronized motion program")
    p.add_argument("--plan", required=True, help="plan file from `slice` or `warp`")
    p.add_argument("--material", help="material table entry")
    p.add_argument("--materials", help="alternate material table INI")
    p.add_argument("--d-r", type=float, dest="d_r", help="waypoint spacing in mm")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("emit", parents=[common], help="render a program in a controller dialect")
    p.add_argument("--program", required=True, help="program file from `plan`")
    p.add_argument("--dialect", choices=sorted(DIALECT_EXT), help="controller dialect")
    p.set_defaults(func=cmd_emit)

    p = sub.add_parser("evaluate", parents=[common], help="compare a scan against the CAD surface")
    p.add_argument("--cad", required=True, help="CAD surface mesh (STL)")
    p.add_argument("--scan", required=True, help="scan cloud (.xyz/.txt/.ply)")
    p.add_argument("--geometry", help="label for the report")
    p.add_argument("--material", help="label for the report")
    p.add_argument("--trim", type=float, default=0.2, help="ICP trim fraction")
    p.add_argument("--width-samples", type=int, default=400, help="width probe count")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("monitor-sim", parents=[common],
                       help="replay IR frames: standoff and slice selection per frame")
    p.add_argument("--frames", required=True, help="directory of .pgm frames")
    p.add_argument("--template", required=True, help="torch template (.pgm with .anchor sidecar)")
    p.add_argument("--plan", required=True, help="dense plan file for slice selection")
    p.add_argument("--px-per-mm", type=float, required=True, help="image scale")
    p.add_argument("--threshold", type=float, required=True, help="flame intensity threshold")
    p.add_argument("--base-row", type=float, required=True,
                   help="image row of the build plate surface")
    p.add_argument("--nominal-height", type=float,
                   help="per-layer height gain in mm (default: material table)")
    p.add_argument("--material", help="material table entry for the default height")
    p.add_argument("--materials", help="alternate material table INI")
    p.set_defaults(func=cmd_monitor_sim)

    p = sub.add_parser("viz", parents=[common], help="export PLY and figures for artifacts")
    p.add_argument("--plan", help="plan file to draw")
    p.add_argument("--program", help="program file to draw")
    p.add_argument("--trajectory", help="trajectory CSV to draw")
    p.add_argument("--every", type=int, default=1, help="PLY export layer stride")
    p.set_defaults(func=cmd_viz)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except WaamError as exc:
        log.error("%s: %s", args.command, exc)
        return 1
    except OSError as exc:
        log.error("%s: %s", args.command, exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
