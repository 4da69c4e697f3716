"""World model and observation process for the road-scene case study.

The world is a straight road in the xy-plane, extending along y: a bright
centerline and two side lines on a darker road surface, with linear
intensity ramps at every line boundary. A camera at fixed height above the
road varies its lateral offset and viewing angle with respect to the
centerline. Images are produced by one-step ray tracing: one ray per pixel
through the focal point, shaded by the intensity at the road intersection
(or the sky intensity for rays that do not hit the road), then quantized
to 8-bit grayscale.

Everything here is a pure function of its arguments and renders are
bit-identical across runs; the toolkit's soundness arguments lean on that.

Interpretation notes (the underlying scene description leaves both open):
the boundary ramps are linear, and quantization rounds half away from zero.
Both choices are load-bearing for the conservative pixel-bound computation
in `tilecert.tiling` and are therefore fixed here rather than configurable.
"""

import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _kernels

_DEG = math.pi / 180.0


class _SkySentinel:
    __slots__ = ()

    def __repr__(self):
        return "SKY"


#: Returned by `project_pixel` for rays that never reach the road plane.
SKY = _SkySentinel()


@dataclass(frozen=True)
class SceneConfig:
    """All scene and camera parameters, in scene length units.

    `road_width` is measured from the center of the centerline to the
    center of each side line; both line widths are `line_width`. Intensity
    ramps extend `ramp_half_width` to each side of every line boundary.
    """

    road_width: float = 50.0
    line_width: float = 4.0
    ramp_half_width: float = 1.0
    camera_height: float = 20.0
    focal_length: float = 1.0
    pixel_side: float = 0.16
    pixel_count: int = 32
    intensity_side_line: float = 1.0
    intensity_centerline: float = 0.7
    intensity_road: float = 0.3
    intensity_sky: float = 0.0

    def __post_init__(self):
        for name in ("road_width", "line_width", "ramp_half_width",
                     "camera_height", "focal_length", "pixel_side"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.pixel_count <= 0 or self.pixel_count % 2 != 0:
            raise ValueError(f"pixel_count must be a positive even integer, "
                             f"got {self.pixel_count}")
        for name in ("intensity_side_line", "intensity_centerline",
                     "intensity_road", "intensity_sky"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        xp = _profile_knots(self)[0]
        if not np.all(np.diff(xp) > 0):
            raise ValueError("intensity ramps overlap; shrink ramp_half_width "
                             "or widen the plateaus")


@dataclass(frozen=True)
class CameraState:
    """Camera pose: lateral offset (length units) and viewing angle (degrees)."""

    offset: float
    angle: float


@lru_cache(maxsize=32)
def _profile_knots(cfg):
    """Knots of the piecewise-linear intensity profile, symmetric in x.

    Returns (x positions, values, per-segment slopes, outside value). Both
    kernel engines evaluate segments as v[k] + s[k]*(x - x[k]) with these
    exact arrays, which keeps shading bit-identical everywhere.
    """
    half = cfg.line_width / 2.0
    r = cfg.ramp_half_width
    b1, b2, b3 = half, cfg.road_width - half, cfg.road_width + half
    i1, i2, i3 = (cfg.intensity_side_line, cfg.intensity_centerline,
                  cfg.intensity_road)
    pos_x = [b1 - r, b1 + r, b2 - r, b2 + r, b3 - r, b3 + r]
    pos_v = [i2, i3, i3, i1, i1, i3]
    xp = np.array([-x for x in reversed(pos_x)] + pos_x, dtype=np.float64)
    vp = np.array(list(reversed(pos_v)) + pos_v, dtype=np.float64)
    slopes = np.zeros(len(xp) - 1)
    dv = np.diff(vp)
    dx = np.diff(xp)
    nz = dv != 0.0
    slopes[nz] = dv[nz] / dx[nz]
    return xp, vp, slopes, i3


@lru_cache(maxsize=32)
def _geometry(cfg):
    """(n, d, half_w, f, zc) handed to the kernels; half_w = d/2 - n*d/2."""
    d = cfg.pixel_side
    half_w = d * 0.5 - cfg.pixel_count * d * 0.5
    return (cfg.pixel_count, d, half_w, cfg.focal_length, cfg.camera_height)


def _shading(cfg):
    xp, vp, slopes, outside = _profile_knots(cfg)
    return xp, vp, slopes, outside, quantize(cfg.intensity_sky)


def _cos_sin(angle_deg):
    rad = angle_deg * _DEG
    return math.cos(rad), math.sin(rad)


def intensity_profile(x, cfg=SceneConfig()):
    """Grayscale intensity of the road plane at world x-coordinate `x`.

    Piecewise linear: plateaus at the centerline, side-line, and road
    intensities, with linear ramps of half-width `ramp_half_width` at each
    boundary. Symmetric under x -> -x. Total in x.
    """
    xp, vp, slopes, outside = _profile_knots(cfg)
    k = int(np.searchsorted(xp, x, side="right")) - 1
    if k < 0 or k >= len(xp) - 1:
        return float(outside)
    return float(vp[k] + slopes[k] * (x - xp[k]))


def quantize(v):
    """Map a [0,1] intensity to an integer in [0,255].

    Scales by 255 and rounds to the nearest integer with ties away from
    zero; out-of-range inputs are clamped first.
    """
    t = min(max(float(v), 0.0), 1.0) * 255.0
    return int(math.floor(t + 0.5))


def project_pixel(state, row, col, cfg=SceneConfig()):
    """Road-plane intersection (x, y) of one pixel's ray, or SKY.

    Builds the full homogeneous transform chain from pixel indices on the
    virtual image plane through camera rotation, projection through the
    focal point onto the road plane, and translation into world
    coordinates. Rays with a non-negative vertical direction component
    never reach the road and yield SKY.

    The hot render path computes the same quantity in closed form; the
    tests pin the two against each other and against an independent
    ray-plane intersection.
    """
    n = cfg.pixel_count
    if not (0 <= row < n and 0 <= col < n):
        raise ValueError(f"pixel ({row}, {col}) outside {n}x{n} image")
    d, f, zc = cfg.pixel_side, cfg.focal_length, cfg.camera_height
    ct, st = _cos_sin(state.angle)
    edge = d / 2.0 - n * d / 2.0

    pix_to_cam = np.array([
        [0.0, d, edge],
        [0.0, 0.0, f],
        [-d, 0.0, -edge],
        [0.0, 0.0, 1.0],
    ])
    cam_to_focal = np.array([
        [ct, -st, 0.0, 0.0],
        [st, ct, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ])
    drop_to_road = np.array([
        [-zc, 0.0, 0.0, 0.0],
        [0.0, -zc, 0.0, 0.0],
        [0.0, 0.0, -zc, 0.0],
        [0.0, 0.0, 1.0, 0.0],
    ])
    focal_to_world = np.array([
        [1.0, 0.0, 0.0, state.offset],
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, zc],
        [0.0, 0.0, 0.0, 1.0],
    ])

    cam = pix_to_cam @ np.array([row, col, 1.0])
    if cam[2] >= 0.0:  # ray parallel to or above the horizon
        return SKY
    world = focal_to_world @ (drop_to_road @ (cam_to_focal @ cam))
    return (world[0] / world[3], world[1] / world[3])


def render(state, cfg=SceneConfig()):
    """Render the camera image for `state`: an (n, n) uint8 array.

    Deterministic; identical inputs give bit-identical images.
    """
    ct, st = _cos_sin(state.angle)
    k = _kernels.active()
    return k.render_image(state.offset, ct, st, *_geometry(cfg), *_shading(cfg))


def sky_rows(cfg=SceneConfig()):
    """Row indices whose rays never reach the road (state-independent).

    The vertical ray direction depends only on the row, so the sky/ground
    split of the image is fixed by the config alone.
    """
    n, d, half_w, _, _ = _geometry(cfg)
    zpix = -(d * np.arange(n) + half_w)
    return np.flatnonzero(zpix >= 0.0)


# ---------------------------------------------------------------------------
# external interfaces: PGM images, config files
# ---------------------------------------------------------------------------


def write_pgm(path, image):
    """Write a grayscale image as binary PGM (P5, maxval 255)."""
    arr = np.asarray(image)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        if arr.min() < 0 or arr.max() > 255:
            raise ValueError("image values outside [0, 255]")
        arr = arr.astype(np.uint8)
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(arr.tobytes())


def read_pgm(path):
    """Read a binary PGM (P5) written by `write_pgm` or compatible tools."""
    with open(path, "rb") as fh:
        data = fh.read()
    tokens = []
    pos = 0
    while len(tokens) < 4 and pos < len(data):
        if data[pos:pos + 1].isspace():
            pos += 1
        elif data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
        else:
            end = pos
            while end < len(data) and not data[end:end + 1].isspace():
                end += 1
            tokens.append(data[pos:end])
            pos = end
    if len(tokens) < 4 or tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise ValueError(f"{path}: unsupported maxval {maxval}")
    raster = data[pos + 1:pos + 1 + w * h]
    if len(raster) != w * h:
        raise ValueError(f"{path}: truncated raster")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w).copy()


_CONFIG_KEYS = tuple(SceneConfig.__dataclass_fields__)


def load_scene_config(path):
    """Load a SceneConfig from a TOML or JSON file.

    Missing keys fall back to the defaults; unknown keys are rejected.
    """
    text = open(path, "rb").read()
    if str(path).endswith(".json"):
        raw = json.loads(text.decode("utf-8"))
    else:
        try:
            import tomllib
        except ImportError:
            import tomli as tomllib
        raw = tomllib.loads(text.decode("utf-8"))
    unknown = set(raw) - set(_CONFIG_KEYS)
    if unknown:
        raise ValueError(f"{path}: unknown scene parameters {sorted(unknown)}")
    if "pixel_count" in raw:
        raw["pixel_count"] = int(raw["pixel_count"])
    return SceneConfig(**{k: raw[k] if k == "pixel_count" else float(raw[k])
                          for k in raw})
