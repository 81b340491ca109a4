"""Synthetic in-process sensing on 16-bit IR frames.

Covers the sensing loop at desk scale: locate the torch by template
matching on edge maps, find the weld flame by thresholded connected
components, convert the tip-to-flame gap into a standoff length, and
adaptively pick the next layer from a densely sliced plan.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage, signal

from .errors import FlameNotFound, MonitorError, PlanExhausted, TorchNotFound

log = logging.getLogger(__name__)

FULL_SCALE = 65535
MIN_FLAME_AREA = 25  # px; smaller bright spots are spatter, not flame
MATCH_SCORE_FLOOR = 0.5
_EIGHT = np.ones((3, 3), dtype=int)
_SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
_SOBEL_Y = _SOBEL_X.T


@dataclass
class IRFrame:
    data: np.ndarray  # (height, width) uint16
    px_per_mm: float

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise MonitorError("frame data must be a 2-d array")
        if arr.dtype != np.uint16:
            if arr.size and (arr.min() < 0 or arr.max() > FULL_SCALE):
                raise MonitorError("frame intensities must fit 16-bit range")
            arr = arr.astype(np.uint16)
        self.data = arr
        if self.px_per_mm <= 0:
            raise MonitorError("px_per_mm must be positive")

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]


@dataclass
class TorchTemplate:
    bitmap: np.ndarray  # bool edge map
    anchor: tuple  # (row, col) of the torch tip inside the bitmap

    def __post_init__(self):
        self.bitmap = np.asarray(self.bitmap, dtype=bool)
        if self.bitmap.ndim != 2 or not self.bitmap.any():
            raise MonitorError("template needs at least one set pixel")
        r, c = self.anchor
        if not (0 <= r < self.bitmap.shape[0] and 0 <= c < self.bitmap.shape[1]):
            raise MonitorError("anchor outside the template bitmap")
        self.anchor = (int(r), int(c))


@dataclass
class FlameBlob:
    centroid: tuple  # (row, col), sub-pixel
    bbox: tuple  # (row_min, col_min, row_max, col_max), inclusive
    area: int


def edge_magnitude(data):
    """3x3 gradient magnitude (Sobel pair)."""
    f = np.asarray(data, dtype=float)
    gx = ndimage.convolve(f, _SOBEL_X, mode="nearest")
    gy = ndimage.convolve(f, _SOBEL_Y, mode="nearest")
    return np.hypot(gx, gy)


def binarize_edges(mag):
    """Edges at or above half the strongest response."""
    m = float(mag.max())
    if m <= 0.0:
        return np.zeros(mag.shape, dtype=bool)
    return mag >= 0.5 * m


def match_template(frame: IRFrame, template: TorchTemplate):
    """Best placement of the template over the frame's binary edge map.

    Returns ((row, col), score): the top-left corner maximizing the
    mean-subtracted normalized cross-correlation, score in [-1, 1].
    Scores are rounded to 1e-9 before the argmax so ties resolve to the
    smallest row, then column.
    """
    th, tw = template.bitmap.shape
    if th > frame.height or tw > frame.width:
        raise MonitorError("template larger than frame")
    edges = binarize_edges(edge_magnitude(frame.data)).astype(float)
    t = template.bitmap.astype(float)
    n = t.size
    tz = t - t.mean()
    tnorm = float(np.sqrt((tz * tz).sum()))
    if tnorm == 0.0:
        return (0, 0), 0.0
    num = signal.correlate(edges, tz, mode="valid", method="direct")
    s1 = signal.correlate(edges, np.ones_like(t), mode="valid", method="direct")
    # The edge map is binary, so the window sum of squares equals s1.
    den = np.sqrt(np.maximum(s1 * (1.0 - s1 / n), 0.0)) * tnorm
    score = np.divide(num, den, out=np.zeros_like(num), where=den > 1e-12)
    score = np.round(score, 9)
    flat = int(np.argmax(score))
    loc = (flat // score.shape[1], flat % score.shape[1])
    return loc, float(score[loc])


def label_components(mask):
    """8-connected labeling; returns (labels, count)."""
    labels, count = ndimage.label(np.asarray(mask, dtype=bool), structure=_EIGHT)
    return labels, int(count)


def detect_flame(frame: IRFrame, intensity_threshold):
    """Largest bright component, or None when nothing plausible burns."""
    if not 0 < intensity_threshold < FULL_SCALE:
        raise MonitorError("intensity threshold must be inside (0, 65535)")
    mask = frame.data >= intensity_threshold
    labels, count = label_components(mask)
    if count == 0:
        return None
    areas = np.bincount(labels.ravel())[1:]
    best = int(np.argmax(areas))  # first max: deterministic on ties
    if areas[best] < MIN_FLAME_AREA:
        return None
    rows, cols = np.nonzero(labels == best + 1)
    return FlameBlob(
        centroid=(float(rows.mean()), float(cols.mean())),
        bbox=(int(rows.min()), int(cols.min()), int(rows.max()), int(cols.max())),
        area=int(areas[best]),
    )


def estimate_standoff(frame: IRFrame, template: TorchTemplate, intensity_threshold):
    """Tip-to-flame-top distance in mm; raises naming the failed stage."""
    loc, score = match_template(frame, template)
    if score < MATCH_SCORE_FLOOR:
        raise TorchNotFound(f"best template score {score:.3f} is below {MATCH_SCORE_FLOOR}")
    blob = detect_flame(frame, intensity_threshold)
    if blob is None:
        raise FlameNotFound("no bright component above the area floor")
    tip_row = loc[0] + template.anchor[0]
    return (blob.bbox[0] - tip_row) / frame.px_per_mm


def select_slice(dense_plan, measured_height, current_index, nominal_height):
    """Next layer index from a densely sliced plan.

    Picks the index above current_index whose cumulative height is
    nearest measured_height + nominal_height; near-ties (1e-9) go to
    the lower index so repeated calls cannot skip forward spuriously.
    """
    if measured_height < 0:
        raise MonitorError("measured height must be non-negative")
    if nominal_height <= 0:
        raise MonitorError("nominal height must be positive")
    n = len(dense_plan.layers)
    h = dense_plan.h
    top = (n - 1) * h
    if measured_height > top + 1e-9:
        raise PlanExhausted(f"measured {measured_height:.3f} mm is above the plan top {top:.3f} mm")
    start = current_index + 1
    if start >= n:
        raise PlanExhausted("no layers remain above the current index")
    target = measured_height + nominal_height
    heights = np.arange(start, n) * h
    d = np.abs(heights - target)
    best = float(d.min())
    return start + int(np.flatnonzero(d <= best + 1e-9)[0])


# --- synthetic frame generation -------------------------------------------

_TORCH_TIP = (27, 15)


def torch_pattern():
    """32x32 intensity stencil: nozzle body, taper, wire stickout."""
    img = np.zeros((32, 32), dtype=np.uint8)
    img[2:18, 8:24] = 200
    for k in range(8):
        img[18 + k, 8 + k : 24 - k] = 220
    img[26:28, 15:17] = 255
    return img


def make_template() -> TorchTemplate:
    """Edge template of the synthetic torch, anchored at the wire tip."""
    stencil = torch_pattern().astype(float) * 257.0
    return TorchTemplate(binarize_edges(edge_magnitude(stencil)), _TORCH_TIP)


def synth_frame(
    torch_pos,
    flame_pos,
    flame_radius,
    noise_sigma,
    px_per_mm,
    shape=(128, 160),
    seed=0,
) -> IRFrame:
    """Deterministic synthetic IR frame.

    torch_pos is the top-left corner of the pasted torch stencil,
    flame_pos the disk center (or None for no flame); noise_sigma is a
    fraction of full scale.
    """
    h, w = shape
    img = np.zeros(shape, dtype=float)
    stencil = torch_pattern().astype(float) * 257.0
    sh, sw = stencil.shape
    r0, c0 = torch_pos
    if r0 < 0 or c0 < 0 or r0 + sh > h or c0 + sw > w:
        raise MonitorError("torch stencil does not fit the frame")
    img[r0 : r0 + sh, c0 : c0 + sw] = stencil
    if flame_pos is not None:
        fr, fc = flame_pos
        if not (
            fr - flame_radius >= 0
            and fr + flame_radius < h
            and fc - flame_radius >= 0
            and fc + flame_radius < w
        ):
            raise MonitorError("flame disk does not fit the frame")
        rr, cc = np.ogrid[:h, :w]
        disk = (rr - fr) ** 2 + (cc - fc) ** 2 <= flame_radius**2
        img[disk] = 60000.0
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        img = img + rng.normal(0.0, noise_sigma * FULL_SCALE, size=shape)
    data = np.clip(np.round(img), 0, FULL_SCALE).astype(np.uint16)
    return IRFrame(data, px_per_mm)


# --- PGM I/O ---------------------------------------------------------------


def _pgm_header_tokens(fh):
    """Magic plus three integers, skipping whitespace and # comments."""
    tokens = []
    magic = fh.read(2)
    if magic != b"P5":
        raise MonitorError("not a binary PGM (P5) file")
    while len(tokens) < 3:
        ch = fh.read(1)
        if not ch:
            raise MonitorError("truncated PGM header")
        if ch == b"#":
            while ch not in (b"\n", b""):
                ch = fh.read(1)
            continue
        if ch.isspace():
            continue
        tok = ch
        while True:
            ch = fh.read(1)
            if not ch or ch.isspace():
                break
            tok += ch
        tokens.append(int(tok))
    return tokens


def write_pgm16(path, data):
    """16-bit big-endian binary PGM."""
    arr = np.asarray(data, dtype=np.uint16)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{arr.shape[1]} {arr.shape[0]}\n{FULL_SCALE}\n".encode())
        fh.write(arr.astype(">u2").tobytes())


def read_pgm(path):
    """Binary PGM of either depth; returns uint8 or uint16 array."""
    with open(path, "rb") as fh:
        width, height, maxval = _pgm_header_tokens(fh)
        if maxval <= 0 or maxval > FULL_SCALE:
            raise MonitorError(f"bad PGM maxval {maxval}")
        dt = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        raw = fh.read(width * height * dt.itemsize)
    if len(raw) != width * height * dt.itemsize:
        raise MonitorError("truncated PGM pixel data")
    arr = np.frombuffer(raw, dtype=dt).reshape(height, width)
    return arr.astype(np.uint16) if maxval > 255 else arr.copy()


def read_frame(path, px_per_mm) -> IRFrame:
    return IRFrame(read_pgm(path).astype(np.uint16), px_per_mm)


def save_template(template: TorchTemplate, path):
    """8-bit PGM bitmap plus a sidecar anchor file."""
    arr = template.bitmap.astype(np.uint8) * 255
    with open(path, "wb") as fh:
        fh.write(f"P5\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode())
        fh.write(arr.tobytes())
    with open(str(path) + ".anchor", "w") as fh:
        fh.write(f"{template.anchor[0]} {template.anchor[1]}\n")


def load_template(path) -> TorchTemplate:
    bitmap = read_pgm(path) > 0
    with open(str(path) + ".anchor") as fh:
        parts = fh.read().split()
    if len(parts) != 2:
        raise MonitorError(f"bad anchor sidecar for {path}")
    return TorchTemplate(bitmap, (int(parts[0]), int(parts[1])))
