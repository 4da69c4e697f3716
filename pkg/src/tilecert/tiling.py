"""State-space gridding and per-tile input bounding boxes.

The camera state (lateral offset, heading angle) lives in an axis-aligned
rectangle. `make_grid` splits that rectangle into cells; each cell's set of
rendered images is a tile of input space, and `bounding_box` wraps a tile
in per-pixel intensity intervals without rendering more than a handful of
images. The key fact making that cheap: for a fixed pixel, the ground
intersection is x = offset + h(angle), so over a cell the extrema of x sit
at the cell corners or where dh/dangle = 0, and that stationary angle is
the one turning the pixel's ray perpendicular to the world y axis. The box
therefore comes from evaluating a few candidate angles per pixel column.

All candidate evaluation reuses the renderer's kernel arithmetic, which is
what makes the containment guarantee exact in floating point rather than
merely approximate: a rendered pixel and its box bound share every
intermediate rounding.
"""

import math
import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _kernels
from .scene import SKY, SceneConfig, _cos_sin, _geometry, _shading

_DEG = math.pi / 180.0

# Relative slack when deciding whether a range divides evenly into cells.
# Protects counts like 80 / 0.1 (= 799.999...) from gaining a sliver cell.
_SNAP = 1e-9


@dataclass(frozen=True)
class StateSpace:
    """Axis-aligned rectangle of camera states."""

    delta: tuple = (-40.0, 40.0)
    theta: tuple = (-60.0, 60.0)

    def __post_init__(self):
        d1, d2 = self.delta
        t1, t2 = self.theta
        if not (d1 <= d2 and t1 <= t2):
            raise ValueError("state space intervals must be nonempty")

    def contains(self, offset, angle):
        return (self.delta[0] <= offset <= self.delta[1]
                and self.theta[0] <= angle <= self.theta[1])


@dataclass(frozen=True)
class StateRegion:
    """One grid cell: a rectangle of states plus its grid coordinates."""

    cell_index: tuple
    delta: tuple
    theta: tuple

    def __post_init__(self):
        if not (self.delta[0] <= self.delta[1] and self.theta[0] <= self.theta[1]):
            raise ValueError("region intervals must be nonempty")

    @property
    def area(self):
        return ((self.delta[1] - self.delta[0])
                * (self.theta[1] - self.theta[0]))

    def contains(self, offset, angle):
        return (self.delta[0] <= offset <= self.delta[1]
                and self.theta[0] <= angle <= self.theta[1])


class ClassSet(frozenset):
    """Nonempty set of ground-truth class indices for one region."""

    def __new__(cls, classes):
        s = super().__new__(cls, classes)
        if not s:
            raise ValueError("class set must be nonempty")
        if any((not isinstance(c, (int, np.integer))) or c < 0 for c in s):
            raise ValueError("class indices must be nonnegative integers")
        return s


@dataclass(frozen=True)
class PixelBox:
    """Per-pixel intensity interval [low, high] at 8-bit levels."""

    low: np.ndarray
    high: np.ndarray

    def __post_init__(self):
        low = np.asarray(self.low, dtype=np.uint8)
        high = np.asarray(self.high, dtype=np.uint8)
        if low.shape != high.shape or low.ndim != 2 or low.shape[0] != low.shape[1]:
            raise ValueError("box rasters must be equal square arrays")
        if (low > high).any():
            raise ValueError("box must satisfy low <= high element-wise")
        object.__setattr__(self, "low", low)
        object.__setattr__(self, "high", high)

    def contains(self, image):
        img = np.asarray(image)
        return bool((self.low <= img).all() and (img <= self.high).all())

    def encloses(self, other):
        return bool((self.low <= other.low).all() and (other.high <= self.high).all())


def _axis_cells(lo, hi, step):
    """Split [lo, hi] into cells of width `step`, last cell possibly ragged."""
    if step <= 0:
        raise ValueError("cell size must be positive")
    span = hi - lo
    if span == 0.0:
        return [(lo, hi)]
    ratio = span / step
    whole = math.floor(ratio)
    if whole > 0 and ratio - whole <= _SNAP * max(1.0, ratio):
        count = whole
    else:
        count = whole + 1
    cells = []
    for k in range(count):
        a = lo + k * step
        b = lo + (k + 1) * step if k < count - 1 else hi
        cells.append((min(a, hi), b))
    return cells


def make_grid(space, cell_delta, cell_theta):
    """Cover the state space with a grid of regions, ordered row-major.

    Cells are `cell_delta` x `cell_theta` except possibly the last row and
    column, which shrink so the union equals the space exactly.
    """
    if space.delta[0] > space.delta[1] or space.theta[0] > space.theta[1]:
        return []
    dcells = _axis_cells(space.delta[0], space.delta[1], cell_delta)
    tcells = _axis_cells(space.theta[0], space.theta[1], cell_theta)
    return [StateRegion((i, j), dc, tc)
            for i, dc in enumerate(dcells)
            for j, tc in enumerate(tcells)]


def ground_truth_intervals(region):
    """True-quantity bounds over a region.

    The labeling map is the identity on (offset, angle), so the bounds are
    the region's own intervals.
    """
    return region.delta, region.theta


def sign_of_offset_classes(region, boundary=0.0):
    """Ground-truth classes for the which-side-of-the-road task.

    Class 0 is offset < boundary, class 1 is offset >= boundary; a region
    straddling the boundary gets both.
    """
    cls = [0 if region.delta[0] < boundary else 1,
           0 if region.delta[1] < boundary else 1]
    return ClassSet(cls)


@lru_cache(maxsize=32)
def _perp_base_angles(cfg):
    """Per-column stationary angle (degrees, in (-180, 180]) of the ground x.

    For column j the pixel ray's world-frame y direction is
    sin(t)*xc + cos(t)*f; it vanishes at atan2(-f, xc) up to multiples of
    180 degrees, and those are exactly the stationary points of x(t).
    """
    n, d, half_w, f, _zc = _geometry(cfg)
    return tuple(math.degrees(math.atan2(-f, d * j + half_w)) for j in range(n))


def _perp_candidates(cfg, t1, t2):
    """Stationary angles inside [t1, t2] per column, as (K, n) kernel arrays."""
    bases = _perp_base_angles(cfg)
    n = len(bases)
    cols = []
    for base in bases:
        lo_k = math.ceil((t1 - base) / 180.0)
        hi_k = math.floor((t2 - base) / 180.0)
        angles = [base + 180.0 * k for k in range(lo_k - 1, hi_k + 2)]
        cols.append([a for a in angles if t1 <= a <= t2])
    depth = max((len(c) for c in cols), default=0)
    pct = np.zeros((depth, n))
    pst = np.zeros((depth, n))
    pok = np.zeros((depth, n), dtype=np.uint8)
    for j, angles in enumerate(cols):
        for k, a in enumerate(angles):
            ct, st = _cos_sin(a)
            pct[k, j] = ct
            pst[k, j] = st
            pok[k, j] = 1
    return pct, pst, pok


def _perp_for_column(cfg, col, t1, t2):
    base = _perp_base_angles(cfg)[col]
    lo_k = math.ceil((t1 - base) / 180.0)
    hi_k = math.floor((t2 - base) / 180.0)
    angles = [base + 180.0 * k for k in range(lo_k - 1, hi_k + 2)]
    return [a for a in angles if t1 <= a <= t2]


def pixel_x_span(region, row, col, cfg=SceneConfig()):
    """Range of one pixel's ground-intersection x over a region.

    Returns SKY for rows that never hit the ground. Candidate angles are
    the two cell corner angles plus any stationary angle inside the cell;
    x is monotone in the offset, so the corners in offset suffice.
    """
    n, d, half_w, f, zc = _geometry(cfg)
    if not (0 <= row < n and 0 <= col < n):
        raise ValueError("pixel index out of range")
    zpix = -(d * row + half_w)
    if zpix >= 0.0:
        return SKY
    (d1, d2), (t1, t2) = region.delta, region.theta
    xc = d * col + half_w
    hs = []
    for a in [t1, t2] + _perp_for_column(cfg, col, t1, t2):
        ct, st = _cos_sin(a)
        xf = ct * xc - st * f
        hs.append(-((zc * xf) / zpix))
    return d1 + min(hs), d2 + max(hs)


def bounding_box(region, cfg=SceneConfig()):
    """Per-pixel intensity bounds containing every rendered image of a region.

    Ground pixels get the quantized range of the road profile over their
    x-span (endpoint values plus any profile knot inside the span); sky
    pixels are constant, so their interval is degenerate.
    """
    geom = _geometry(cfg)
    (d1, d2), (t1, t2) = region.delta, region.theta
    ct1, st1 = _cos_sin(t1)
    ct2, st2 = _cos_sin(t2)
    pct, pst, pok = _perp_candidates(cfg, t1, t2)
    low, high = _kernels.active().bounding_box(
        d1, d2, [ct1, ct2], [st1, st2], pct, pst, pok, *geom, *_shading(cfg))
    return PixelBox(low, high)


# ---------------------------------------------------------------------------
# box sidecar file
# ---------------------------------------------------------------------------

_BOX_MAGIC = b"TCBX"
_BOX_VERSION = 1
_HEADER = struct.Struct("<4sHHQ")
_RECORD = struct.Struct("<II4d")


def write_boxes(path, entries):
    """Dump (StateRegion, PixelBox) pairs to a flat binary sidecar.

    Layout: magic, version, image side n, record count; then per record the
    cell index, the four interval bounds, and the low/high rasters. Fixed
    little-endian layout so the file is readable outside this process.
    """
    entries = list(entries)
    n = entries[0][1].low.shape[0] if entries else 0
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_BOX_MAGIC, _BOX_VERSION, n, len(entries)))
        for region, box in entries:
            if box.low.shape[0] != n:
                raise ValueError("inconsistent image sizes in box dump")
            fh.write(_RECORD.pack(region.cell_index[0], region.cell_index[1],
                                  region.delta[0], region.delta[1],
                                  region.theta[0], region.theta[1]))
            fh.write(box.low.tobytes())
            fh.write(box.high.tobytes())


def read_boxes(path):
    """Read a box sidecar written by `write_boxes`."""
    out = []
    with open(path, "rb") as fh:
        magic, version, n, count = _HEADER.unpack(fh.read(_HEADER.size))
        if magic != _BOX_MAGIC:
            raise ValueError(f"{path}: not a box sidecar file")
        if version != _BOX_VERSION:
            raise ValueError(f"{path}: unsupported box file version {version}")
        raster = n * n
        for _ in range(count):
            i, j, d1, d2, t1, t2 = _RECORD.unpack(fh.read(_RECORD.size))
            low = np.frombuffer(fh.read(raster), dtype=np.uint8).reshape(n, n)
            high = np.frombuffer(fh.read(raster), dtype=np.uint8).reshape(n, n)
            out.append((StateRegion((i, j), (d1, d2), (t1, t2)),
                        PixelBox(low.copy(), high.copy())))
    return out
