"""Motion program text IR and multi-dialect program generation.

The IR is a line-oriented script of motion primitives (MOVL, MOVC,
MOVJ), arc control (ARCON/ARCOF), synchronization points (SYNC), and
declarations (META, DEVICE, GROUP). It round-trips losslessly: floats
are written in shortest-repr form and orientations as full rotation
matrices, so parse(emit_ir(p)) rebuilds the same program. The dialect
backends render the same program as structurally valid text in three
industrial controller styles; they are skeletons checked by our own
readers, not vendor-certified output.
"""

import logging
import re
import warnings

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import EmitError, ParseError
from .planner import DevicePose, MotionProgram, MotionSegment, Waypoint
from .positioner import PositionerState

log = logging.getLogger(__name__)

# Devices every script knows without declaration.
_WELL_KNOWN = {"torch": ("cartesian", 0), "table": ("joint", 2)}
_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
_TOKEN_RE = re.compile(r"\S+")

_KEYWORDS = "MOVL|MOVC|MOVJ|ARCON|ARCOF|SYNC|META|DEVICE|GROUP"


def _f(x) -> str:
    return str(float(x))


def _f3(x) -> str:
    return f"{float(x):.3f}"


def _tokens(line):
    return [(m.group(0), m.start() + 1) for m in _TOKEN_RE.finditer(line)]


def _num(tok, lineno, col, what="number"):
    try:
        return float(tok)
    except ValueError:
        raise ParseError(f"bad {what} {tok!r}", lineno, col, expected=what) from None


def emit_ir(program: MotionProgram) -> str:
    """Canonical IR text for a program; inverse of parse_script."""
    program.validate()
    lines = [f"META d_r {_f(program.d_r)}", f"META v_r {_f(program.v_r)}"]
    for key, value in program.metadata.items():
        lines.append(f"META {key} {value}")
    lines.append(f"DEVICE {program.cart_device} CARTESIAN")
    lines.append(f"DEVICE {program.joint_device} JOINT 2")
    for name, (kind, dof) in program.extra_devices.items():
        if kind == "joint":
            lines.append(f"DEVICE {name} JOINT {dof}")
        else:
            lines.append(f"DEVICE {name} CARTESIAN")
    for name, members in program.groups:
        lines.append("GROUP " + name + " " + " ".join(members))
    default_group = program.groups[0][0] if program.groups else None
    arc = False
    for seg in program.segments:
        if seg.target.arc_on != arc:
            lines.append("ARCON" if seg.target.arc_on else "ARCOF")
            arc = seg.target.arc_on
        pose = seg.target.torch
        pos = " ".join(_f(v) for v in pose.position)
        rot = " ".join(_f(v) for v in np.ravel(pose.orientation))
        if seg.primitive == "moveL":
            lines.append(f"MOVL {program.cart_device} {pos} {rot} {_f(seg.speed)}")
        elif seg.primitive == "moveC":
            if seg.via is None:
                raise EmitError("moveC segment lacks a via point")
            via = " ".join(_f(v) for v in seg.via)
            lines.append(f"MOVC {program.cart_device} {via} {pos} {rot} {_f(seg.speed)}")
        elif seg.primitive == "moveJ":
            pass  # joint-only step, no cartesian statement
        else:
            raise EmitError(f"unknown primitive {seg.primitive!r}")
        st = seg.target.positioner
        lines.append(
            f"MOVJ {program.joint_device} {_f(st.q1)} {_f(st.q2)} {_f(seg.speed)}"
        )
        sync = seg.sync or default_group
        if sync:
            lines.append(f"SYNC {sync}")
    if arc:
        lines.append("ARCOF")
    return "\n".join(lines) + "\n"


def parse_script(text) -> MotionProgram:
    """Parse IR text; diagnostics carry line and column."""
    devices = dict(_WELL_KNOWN)
    declared = {}
    groups = []
    group_names = set()
    metadata = {}
    d_r = 5.0
    v_r = None
    segments = []
    buffer = {}
    arc = False
    arc_line = 0
    last_pose = DevicePose(np.zeros(3), np.eye(3))
    last_state = PositionerState(0.0, 0.0)
    cart_used = None
    joint_used = None

    def flush(sync=None):
        nonlocal last_pose, last_state
        if not buffer:
            return
        cart = buffer.get("cartesian")
        joint = buffer.get("joint")
        if cart is not None:
            primitive = cart["primitive"]
            pose = DevicePose(cart["pos"], cart["rot"])
            speed = cart["speed"]
            via = cart.get("via")
        else:
            primitive = "moveJ"
            pose = DevicePose(last_pose.position.copy(), last_pose.orientation.copy())
            speed = joint["speed"]
            via = None
        state = PositionerState(joint["q"][0], joint["q"][1]) if joint else last_state
        wp = Waypoint(pose, state, arc_on=arc)
        segments.append(MotionSegment(primitive, wp, speed, via=via, sync=sync))
        last_pose = pose
        last_state = state
        buffer.clear()

    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        toks = _tokens(raw)
        kw, kw_col = toks[0]

        if kw == "META":
            if len(toks) < 3:
                raise ParseError("META needs a key and a value", lineno, kw_col, "key value")
            key = toks[1][0]
            value = " ".join(t for t, _ in toks[2:])
            if key == "d_r":
                d_r = _num(value, lineno, toks[2][1])
            elif key == "v_r":
                v_r = _num(value, lineno, toks[2][1])
            else:
                metadata[key] = value
        elif kw == "DEVICE":
            if len(toks) < 3 or not _NAME_RE.match(toks[1][0]):
                raise ParseError("bad DEVICE declaration", lineno, kw_col, "DEVICE name KIND")
            name, kind = toks[1][0], toks[2][0]
            if kind == "CARTESIAN":
                devices[name] = declared[name] = ("cartesian", 0)
            elif kind == "JOINT":
                if len(toks) != 4:
                    raise ParseError("JOINT device needs a joint count", lineno, toks[2][1])
                dof = int(_num(toks[3][0], lineno, toks[3][1], "joint count"))
                if not 1 <= dof <= 6:
                    raise ParseError("joint count out of range", lineno, toks[3][1], "1..6")
                devices[name] = declared[name] = ("joint", dof)
            else:
                raise ParseError(
                    f"unknown device kind {kind!r}", lineno, toks[2][1], "CARTESIAN|JOINT"
                )
        elif kw == "GROUP":
            if len(toks) < 3:
                raise ParseError("GROUP needs a name and members", lineno, kw_col)
            name = toks[1][0]
            members = []
            for tok, col in toks[2:]:
                if tok not in devices:
                    raise ParseError(f"unknown device {tok!r} in group", lineno, col)
                members.append(tok)
            groups.append((name, tuple(members)))
            group_names.add(name)
        elif kw in ("MOVL", "MOVC", "MOVJ"):
            if len(toks) < 2:
                raise ParseError(f"{kw} needs a device", lineno, kw_col, "device name")
            dev, dev_col = toks[1]
            if dev not in devices:
                raise ParseError(f"unknown device {dev!r}", lineno, dev_col)
            kind, dof = devices[dev]
            nums = toks[2:]
            if kw in ("MOVL", "MOVC"):
                if kind != "cartesian":
                    raise ParseError(
                        f"{kw} requires a cartesian device", lineno, dev_col, "cartesian device"
                    )
                want = 13 if kw == "MOVL" else 16
                if len(nums) != want:
                    raise ParseError(
                        f"{kw} expects {want} numeric fields, got {len(nums)}",
                        lineno,
                        nums[0][1] if nums else kw_col,
                    )
                vals = [_num(t, lineno, c) for t, c in nums]
                if kw == "MOVL":
                    via = None
                    pos = np.array(vals[0:3])
                    rot = np.array(vals[3:12]).reshape(3, 3)
                    speed = vals[12]
                else:
                    via = np.array(vals[0:3])
                    pos = np.array(vals[3:6])
                    rot = np.array(vals[6:15]).reshape(3, 3)
                    speed = vals[15]
                if np.max(np.abs(rot @ rot.T - np.eye(3))) > 1e-6:
                    raise ParseError(
                        "orientation is not orthonormal", lineno, nums[3][1], "rotation matrix"
                    )
                if "cartesian" in buffer:
                    flush()
                entry = {
                    "primitive": "moveL" if kw == "MOVL" else "moveC",
                    "pos": pos,
                    "rot": rot,
                    "speed": speed,
                }
                if via is not None:
                    entry["via"] = via
                buffer["cartesian"] = entry
                cart_used = cart_used or dev
            else:
                if kind != "joint":
                    raise ParseError(
                        "MOVJ requires a joint device", lineno, dev_col, "joint device"
                    )
                want = dof + 1
                if len(nums) != want:
                    raise ParseError(
                        f"MOVJ expects {want} numeric fields, got {len(nums)}",
                        lineno,
                        nums[0][1] if nums else kw_col,
                    )
                vals = [_num(t, lineno, c) for t, c in nums]
                if "joint" in buffer:
                    flush()
                buffer["joint"] = {"q": vals[:dof], "speed": vals[dof]}
                joint_used = joint_used or dev
        elif kw == "ARCON":
            flush()
            if arc:
                raise ParseError("ARCON while the arc is already on", lineno, kw_col)
            arc = True
            arc_line = lineno
        elif kw == "ARCOF":
            flush()
            if not arc:
                raise ParseError("ARCOF without a matching ARCON", lineno, kw_col)
            arc = False
        elif kw == "SYNC":
            if len(toks) != 2:
                raise ParseError("SYNC needs a group name", lineno, kw_col, "group name")
            gname, gcol = toks[1]
            if gname not in group_names:
                raise ParseError(f"undeclared group {gname!r}", lineno, gcol)
            if not buffer:
                raise ParseError("SYNC with no pending motion", lineno, kw_col)
            flush(sync=gname)
        else:
            raise ParseError(f"unknown statement {kw!r}", lineno, kw_col, _KEYWORDS)

    flush()
    if arc:
        raise ParseError("ARCON without a matching ARCOF", arc_line, 1)
    if not segments:
        raise ParseError("script has no motion statements", max(1, text.count("\n")), 1)
    if v_r is None:
        v_r = segments[0].speed if segments[0].speed > 0 else 1.0
    cart = cart_used or "torch"
    joint = joint_used or "table"
    extra = {n: spec for n, spec in declared.items() if n not in (cart, joint)}
    program = MotionProgram(
        segments,
        d_r=d_r,
        v_r=v_r,
        metadata=metadata,
        cart_device=cart,
        joint_device=joint,
        groups=groups or [("cell", (cart, joint))],
        extra_devices=extra,
    )
    return program.validate()


def program_equal(a: MotionProgram, b: MotionProgram, tol=1e-9) -> bool:
    """Structural equality of motion semantics.

    Planner-side annotations (deposition direction, singularity hold
    marks) are not compared; they do not survive serialization.
    """
    if len(a.segments) != len(b.segments):
        return False
    if abs(a.d_r - b.d_r) > tol or abs(a.v_r - b.v_r) > tol:
        return False
    if a.metadata != b.metadata:
        return False
    if a.cart_device != b.cart_device or a.joint_device != b.joint_device:
        return False
    if [(g, tuple(m)) for g, m in a.groups] != [(g, tuple(m)) for g, m in b.groups]:
        return False
    if a.extra_devices != b.extra_devices:
        return False
    for x, y in zip(a.segments, b.segments):
        if x.primitive != y.primitive or x.target.arc_on != y.target.arc_on:
            return False
        if x.sync != y.sync or abs(x.speed - y.speed) > tol:
            return False
        if np.max(np.abs(x.target.torch.position - y.target.torch.position)) > tol:
            return False
        if np.max(np.abs(x.target.torch.orientation - y.target.torch.orientation)) > tol:
            return False
        if abs(x.target.positioner.q1 - y.target.positioner.q1) > tol:
            return False
        if abs(x.target.positioner.q2 - y.target.positioner.q2) > tol:
            return False
        if (x.via is None) != (y.via is None):
            return False
        if x.via is not None and np.max(np.abs(x.via - y.via)) > tol:
            return False
    return True


def _euler_deg(rot):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return Rotation.from_matrix(rot).as_euler("xyz", degrees=True)


def _quat_wxyz(rot):
    q = Rotation.from_matrix(rot).as_quat()  # x, y, z, w
    q = np.array([q[3], q[0], q[1], q[2]])
    if q[0] < 0:
        q = -q
    return q


def _meta_lines(program, comment):
    out = [f"{comment}META d_r {_f(program.d_r)}", f"{comment}META v_r {_f(program.v_r)}"]
    for key, value in program.metadata.items():
        out.append(f"{comment}META {key} {value}")
    return out


def _emit_inform(program: MotionProgram) -> str:
    crecs, erecs, inst = [], [], []
    inst.append("NOP")
    inst.extend(_meta_lines(program, "'"))
    default_group = program.groups[0][0] if program.groups else "cell"
    arc = False
    for seg in program.segments:
        if seg.target.arc_on != arc:
            inst.append("ARCON" if seg.target.arc_on else "ARCOF")
            arc = seg.target.arc_on
        pose = seg.target.torch
        if seg.primitive in ("moveL", "moveC"):
            if seg.primitive == "moveC":
                if seg.via is None:
                    raise EmitError("moveC segment lacks a via point")
                vi = len(crecs)
                crecs.append(tuple(seg.via) + (0.0, 0.0, 0.0))
            ti = len(crecs)
            crecs.append(tuple(pose.position) + tuple(_euler_deg(pose.orientation)))
            if seg.primitive == "moveL":
                inst.append(f"MOVL C{ti:05d} V={_f3(seg.speed)}")
            else:
                inst.append(f"MOVC C{vi:05d} C{ti:05d} V={_f3(seg.speed)}")
        st = seg.target.positioner
        ei = len(erecs)
        erecs.append((np.degrees(st.q1), np.degrees(st.q2)))
        inst.append(f"MOVJ E{ei:05d} VJ={_f3(seg.speed)}")
        inst.append(f"'SYNC {seg.sync or default_group}")
    if arc:
        inst.append("ARCOF")
    inst.append("END")
    head = ["/JOB", "//NAME WAAM_PRINT", "//POS", f"///NPOS {len(crecs)},{len(erecs)}"]
    for i, rec in enumerate(crecs):
        head.append(f"C{i:05d}=" + ",".join(_f3(v) for v in rec))
    for i, rec in enumerate(erecs):
        head.append(f"E{i:05d}=" + ",".join(_f3(v) for v in rec))
    head.append("//INST")
    return "\n".join(head + inst) + "\n"


def _emit_rapid(program: MotionProgram) -> str:
    recs, body = [], []
    body.extend(_meta_lines(program, "    ! "))
    default_group = program.groups[0][0] if program.groups else "cell"
    arc = False
    pi = ji = 0
    for seg in program.segments:
        if seg.target.arc_on != arc:
            body.append(f"    SetDO do_arc,{1 if seg.target.arc_on else 0};")
            arc = seg.target.arc_on
        pose = seg.target.torch
        if seg.primitive in ("moveL", "moveC"):
            quat = _quat_wxyz(pose.orientation)
            if seg.primitive == "moveC":
                if seg.via is None:
                    raise EmitError("moveC segment lacks a via point")
                via_q = "1.000000,0.000000,0.000000,0.000000"
                recs.append(
                    f"  CONST robtarget p{pi} := [[{','.join(_f3(v) for v in seg.via)}],"
                    f"[{via_q}],[0,0,0,0],[9E9,9E9,9E9,9E9,9E9,9E9]];"
                )
                vname = f"p{pi}"
                pi += 1
            recs.append(
                f"  CONST robtarget p{pi} := [[{','.join(_f3(v) for v in pose.position)}],"
                f"[{','.join(f'{v:.6f}' for v in quat)}],[0,0,0,0],[9E9,9E9,9E9,9E9,9E9,9E9]];"
            )
            if seg.primitive == "moveL":
                body.append(f"    MoveL p{pi},v{_f3(seg.speed)},fine,tool0;")
            else:
                body.append(f"    MoveC {vname},p{pi},v{_f3(seg.speed)},fine,tool0;")
            pi += 1
        st = seg.target.positioner
        recs.append(
            f"  CONST jointtarget j{ji} := [[0,0,0,0,0,0],"
            f"[{_f3(np.degrees(st.q1))},{_f3(np.degrees(st.q2))},9E9,9E9,9E9,9E9]];"
        )
        body.append(f"    MoveExtJ j{ji},v{_f3(seg.speed)},fine;")
        ji += 1
        body.append(f"    ! SYNC {seg.sync or default_group}")
    if arc:
        body.append("    SetDO do_arc,0;")
    out = ["MODULE WaamPrint"] + recs + ["  PROC main()"] + body + ["  ENDPROC", "ENDMODULE"]
    return "\n".join(out) + "\n"


def _emit_karel(program: MotionProgram) -> str:
    assigns, body = [], []
    body.extend(_meta_lines(program, "  -- "))
    default_group = program.groups[0][0] if program.groups else "cell"
    arc = False
    pi = ji = 0
    for seg in program.segments:
        if seg.target.arc_on != arc:
            body.append(f"  DOUT[1] = {'ON' if seg.target.arc_on else 'OFF'}")
            arc = seg.target.arc_on
        pose = seg.target.torch
        if seg.primitive in ("moveL", "moveC"):
            if seg.primitive == "moveC":
                if seg.via is None:
                    raise EmitError("moveC segment lacks a via point")
                pi += 1
                assigns.append(
                    f"  pt[{pi}] = POS({', '.join(_f3(v) for v in seg.via)}, 0.000, 0.000, 0.000)"
                )
                vidx = pi
            wpr = _euler_deg(pose.orientation)
            pi += 1
            assigns.append(
                f"  pt[{pi}] = POS("
                + ", ".join(_f3(v) for v in pose.position)
                + ", "
                + ", ".join(_f3(v) for v in wpr)
                + ")"
            )
            body.append(f"  $SPEED = {_f3(seg.speed)}")
            if seg.primitive == "moveL":
                body.append(f"  MOVE TO pt[{pi}]")
            else:
                body.append(f"  MOVE VIA pt[{vidx}] TO pt[{pi}]")
        st = seg.target.positioner
        ji += 1
        assigns.append(
            f"  jt[{ji}] = JPOS({_f3(np.degrees(st.q1))}, {_f3(np.degrees(st.q2))})"
        )
        if seg.primitive == "moveJ":
            body.append(f"  $SPEED = {_f3(seg.speed)}")
        body.append(f"  MOVE TO jt[{ji}]")
        body.append(f"  -- SYNC {seg.sync or default_group}")
    if arc:
        body.append("  DOUT[1] = OFF")
    out = (
        ["PROGRAM WAAM_PRINT", "VAR"]
        + [f"  pt : ARRAY[{max(pi, 1)}] OF XYZWPR", f"  jt : ARRAY[{max(ji, 1)}] OF JOINTPOS"]
        + ["BEGIN"]
        + assigns
        + body
        + ["END WAAM_PRINT"]
    )
    return "\n".join(out) + "\n"


_RE_INFORM_MOVL = re.compile(r"^MOVL C(\d{5}) V=([\d.]+)$")
_RE_INFORM_MOVC = re.compile(r"^MOVC C(\d{5}) C(\d{5}) V=([\d.]+)$")
_RE_INFORM_MOVJ = re.compile(r"^MOVJ E(\d{5}) VJ=([\d.]+)$")


def _read_inform(text):
    lines = text.splitlines()
    if not lines or lines[0] != "/JOB":
        raise EmitError("inform output must start with /JOB")
    if "//POS" not in lines or "//INST" not in lines:
        raise EmitError("inform output lacks //POS or //INST")
    cart, joint = {}, {}
    moves = []
    arc_on = arc_off = 0
    in_pos = in_inst = False
    for ln in lines[1:]:
        if ln == "//POS":
            in_pos, in_inst = True, False
            continue
        if ln == "//INST":
            in_pos, in_inst = False, True
            continue
        if in_pos:
            if ln.startswith("///NPOS") or ln.startswith("//"):
                continue
            m = re.match(r"^([CE])(\d{5})=(.+)$", ln)
            if not m:
                raise EmitError(f"bad position record {ln!r}")
            vals = [float(v) for v in m.group(3).split(",")]
            (cart if m.group(1) == "C" else joint)[int(m.group(2))] = vals
        elif in_inst:
            if ln in ("NOP", "END") or ln.startswith("'"):
                continue
            if ln == "ARCON":
                arc_on += 1
                continue
            if ln == "ARCOF":
                arc_off += 1
                continue
            for rx, kind in (
                (_RE_INFORM_MOVL, "moveL"),
                (_RE_INFORM_MOVC, "moveC"),
                (_RE_INFORM_MOVJ, "moveJ"),
            ):
                m = rx.match(ln)
                if m:
                    moves.append((kind, float(m.groups()[-1])))
                    break
            else:
                raise EmitError(f"unrecognized instruction {ln!r}")
    return {
        "moves": moves,
        "cart_records": cart,
        "joint_records": joint,
        "arc_on": arc_on,
        "arc_off": arc_off,
    }


_RE_RAPID_ROB = re.compile(r"^\s*CONST robtarget p(\d+) := \[\[([^\]]+)\],\[([^\]]+)\]")
_RE_RAPID_JNT = re.compile(r"^\s*CONST jointtarget j(\d+) := \[\[[^\]]*\],\[([^\]]+)\]\];")
_RE_RAPID_MOVEL = re.compile(r"^\s*MoveL p(\d+),v([\d.]+),fine,tool0;$")
_RE_RAPID_MOVEC = re.compile(r"^\s*MoveC p(\d+),p(\d+),v([\d.]+),fine,tool0;$")
_RE_RAPID_EXTJ = re.compile(r"^\s*MoveExtJ j(\d+),v([\d.]+),fine;$")
_RE_RAPID_ARC = re.compile(r"^\s*SetDO do_arc,(0|1);$")


def _read_rapid(text):
    lines = text.splitlines()
    if not lines or lines[0] != "MODULE WaamPrint" or lines[-1] != "ENDMODULE":
        raise EmitError("rapid output must be a MODULE block")
    cart, joint = {}, {}
    moves = []
    arc_on = arc_off = 0
    for ln in lines[1:-1]:
        s = ln.strip()
        if not s or s.startswith("!") or s in ("PROC main()", "ENDPROC"):
            continue
        m = _RE_RAPID_ROB.match(ln)
        if m:
            cart[int(m.group(1))] = [float(v) for v in m.group(2).split(",")]
            continue
        m = _RE_RAPID_JNT.match(ln)
        if m:
            joint[int(m.group(1))] = [float(v) for v in m.group(2).split(",")[:2]]
            continue
        m = _RE_RAPID_MOVEL.match(ln)
        if m:
            moves.append(("moveL", float(m.group(2))))
            continue
        m = _RE_RAPID_MOVEC.match(ln)
        if m:
            moves.append(("moveC", float(m.group(3))))
            continue
        m = _RE_RAPID_EXTJ.match(ln)
        if m:
            moves.append(("moveJ", float(m.group(2))))
            continue
        m = _RE_RAPID_ARC.match(ln)
        if m:
            if m.group(1) == "1":
                arc_on += 1
            else:
                arc_off += 1
            continue
        raise EmitError(f"unrecognized rapid line {ln!r}")
    return {
        "moves": moves,
        "cart_records": cart,
        "joint_records": joint,
        "arc_on": arc_on,
        "arc_off": arc_off,
    }


_RE_KAREL_POS = re.compile(r"^\s*pt\[(\d+)\] = POS\(([^)]+)\)$")
_RE_KAREL_JPOS = re.compile(r"^\s*jt\[(\d+)\] = JPOS\(([^)]+)\)$")
_RE_KAREL_SPEED = re.compile(r"^\s*\$SPEED = ([\d.]+)$")
_RE_KAREL_MOVE = re.compile(r"^\s*MOVE TO (pt|jt)\[(\d+)\]$")
_RE_KAREL_MOVEC = re.compile(r"^\s*MOVE VIA pt\[(\d+)\] TO pt\[(\d+)\]$")
_RE_KAREL_DOUT = re.compile(r"^\s*DOUT\[1\] = (ON|OFF)$")


def _read_karel(text):
    lines = text.splitlines()
    if not lines or lines[0] != "PROGRAM WAAM_PRINT" or lines[-1] != "END WAAM_PRINT":
        raise EmitError("karel output must be a PROGRAM block")
    cart, joint = {}, {}
    moves = []
    arc_on = arc_off = 0
    speed = None
    for ln in lines[1:-1]:
        s = ln.strip()
        if not s or s.startswith("--") or s in ("VAR", "BEGIN") or " OF " in s:
            continue
        m = _RE_KAREL_POS.match(ln)
        if m:
            cart[int(m.group(1))] = [float(v) for v in m.group(2).split(",")]
            continue
        m = _RE_KAREL_JPOS.match(ln)
        if m:
            joint[int(m.group(1))] = [float(v) for v in m.group(2).split(",")]
            continue
        m = _RE_KAREL_SPEED.match(ln)
        if m:
            speed = float(m.group(1))
            continue
        m = _RE_KAREL_MOVEC.match(ln)
        if m:
            moves.append(("moveC", speed))
            continue
        m = _RE_KAREL_MOVE.match(ln)
        if m:
            moves.append(("moveL" if m.group(1) == "pt" else "moveJ", speed))
            continue
        m = _RE_KAREL_DOUT.match(ln)
        if m:
            if m.group(1) == "ON":
                arc_on += 1
            else:
                arc_off += 1
            continue
        raise EmitError(f"unrecognized karel line {ln!r}")
    return {
        "moves": moves,
        "cart_records": cart,
        "joint_records": joint,
        "arc_on": arc_on,
        "arc_off": arc_off,
    }


_DIALECTS = {
    "inform_like": (_emit_inform, _read_inform),
    "rapid_like": (_emit_rapid, _read_rapid),
    "karel_like": (_emit_karel, _read_karel),
}
_ALIASES = {"inform": "inform_like", "rapid": "rapid_like", "karel": "karel_like"}


def _dialect_key(dialect):
    key = _ALIASES.get(dialect, dialect)
    if key not in _DIALECTS:
        raise EmitError(f"unknown dialect {dialect!r}; have {sorted(_DIALECTS)}")
    return key


def emit(program: MotionProgram, dialect) -> str:
    """Render the program in one controller dialect skeleton."""
    program.validate()
    return _DIALECTS[_dialect_key(dialect)][0](program)


def read_dialect(text, dialect):
    """Structural reader for a dialect skeleton (testing/inspection)."""
    return _DIALECTS[_dialect_key(dialect)][1](text)


def motion_statement_count(text, dialect) -> int:
    return len(read_dialect(text, dialect)["moves"])
