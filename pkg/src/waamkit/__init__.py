"""Toolpath planning, robot programs, and inspection for wire arc additive
manufacturing on a two-axis positioner.

The pipeline runs slice -> warp -> plan -> emit, with `evaluate` for
scan-to-CAD comparison and `monitor` for IR-frame standoff tracking.
"""

from .errors import (
    ConfigError,
    EmitError,
    EmptySide,
    FlameNotFound,
    HullError,
    InsufficientCoverage,
    MeshError,
    MetrologyError,
    MonitorError,
    ParseError,
    PlanError,
    PlanExhausted,
    PlaneFitError,
    PositionerError,
    SliceError,
    TorchNotFound,
    WaamError,
)
from .geometry import (
    Plane,
    TriMesh,
    convex_hull_2d,
    fit_plane,
    hull_contains,
    load_mesh,
    project_points,
    project_to_surface,
    rotation_about,
    write_ply_points,
)
from .slicer import (
    Layer,
    Segment,
    SlicePlan,
    load_plan,
    next_layer,
    plan_to_ply,
    save_plan,
    slice_axisymmetric,
    slice_surface,
    warp_layers,
)
from .positioner import (
    PositionerState,
    PositionerTrajectory,
    base_orientation,
    gravity_align,
    handle_singularity,
    select_solution,
    smooth_trajectory,
    solve_trajectory,
)
from .planner import (
    MaterialParams,
    MotionProgram,
    MotionSegment,
    PlanOptions,
    Waypoint,
    coordinate_speeds,
    discretize,
    get_material,
    load_materials,
    plan_print,
    program_time,
)
from .emitter import emit, emit_ir, parse_script, program_equal, read_dialect
from .monitor import (
    FlameBlob,
    IRFrame,
    TorchTemplate,
    detect_flame,
    estimate_standoff,
    match_template,
    read_frame,
    select_slice,
    synth_frame,
)
from .metrology import (
    EvalConfig,
    EvalReport,
    ICPResult,
    PointCloud,
    RigidTransform,
    evaluate,
    icp_register,
    icp_register_mesh,
    load_cloud,
    measure_width,
    render_report,
    report_kv,
    sample_mesh,
    split_edges,
)

__version__ = "0.1.0"
