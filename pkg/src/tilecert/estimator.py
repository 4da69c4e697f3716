"""Empirical per-tile error maxima from sub-grid sampling.

The certified bound of a tile is an upper bound on |prediction - truth|
over the whole cell; sampling a finite sub-grid inside the cell gives a
lower bound on the same maximum. The difference is the gap, the natural
tightness measure: it can never be negative while both sides are correct,
which also makes it a cheap end-to-end soundness check.

Sub-grids include the cell corners, so adjacent tiles share boundary
samples, and halving the spacing keeps every old sample point (the new
grid is a superset, so the estimate can only grow).
"""

import multiprocessing
from dataclasses import dataclass

import numpy as np

from . import scene
from .network import forward_batch
from .tiling import make_grid

DEFAULT_SPACING = 0.05


@dataclass(frozen=True)
class TileEstimate:
    """Empirical max errors of one cell at a given sample spacing."""

    cell_index: tuple
    e_delta: float
    e_theta: float
    spacing: float

    def __post_init__(self):
        if self.e_delta < 0 or self.e_theta < 0:
            raise ValueError("empirical errors must be nonnegative")


def _axis_samples(lo, hi, spacing):
    """Corner-inclusive uniform samples; count snaps like the grid does.

    Uses linspace so that halving the spacing reproduces the coarse points
    bit-for-bit (the even-indexed fine points), keeping refinement monotone.
    """
    span = hi - lo
    if span == 0.0:
        return np.array([lo])
    ratio = span / spacing
    whole = int(np.floor(ratio))
    if whole > 0 and ratio - whole <= 1e-9 * max(1.0, ratio):
        segments = whole
    else:
        segments = whole + 1
    return np.linspace(lo, hi, segments + 1)


def empirical_max_error(region, cfg, net, spacing=DEFAULT_SPACING):
    """Max observed |prediction - truth| over the cell's sample sub-grid."""
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    offs = _axis_samples(region.delta[0], region.delta[1], spacing)
    angs = _axis_samples(region.theta[0], region.theta[1], spacing)
    images = np.empty((len(offs) * len(angs), cfg.pixel_count, cfg.pixel_count),
                      dtype=np.uint8)
    truth = np.empty((len(images), 2))
    pos = 0
    for off in offs:
        for ang in angs:
            images[pos] = scene.render(scene.CameraState(off, ang), cfg)
            truth[pos] = (off, ang)
            pos += 1
    pred = forward_batch(net, images)
    err = np.abs(pred - truth).max(axis=0)
    return TileEstimate(region.cell_index, float(err[0]), float(err[1]),
                        spacing)


def gap(tile_error, estimate):
    """Certified bound minus empirical max; negative means a broken bound."""
    return tile_error - estimate


_WORKER_STATE = {}


def _init_worker(cfg, net, spacing):
    _WORKER_STATE.update(cfg=cfg, net=net, spacing=spacing)


def _worker_batch(regions):
    s = _WORKER_STATE
    return [empirical_max_error(r, s["cfg"], s["net"], s["spacing"])
            for r in regions]


def run_estimator(space, cell_delta, cell_theta, cfg, net,
                  spacing=DEFAULT_SPACING, workers=1, on_result=None):
    """Estimate every tile of the grid; sorted, worker-count independent."""
    regions = make_grid(space, cell_delta, cell_theta)
    if not regions:
        raise ValueError("state space produced no tiles")
    return estimate_regions(regions, cfg, net, spacing, workers, on_result)


def estimate_regions(regions, cfg, net, spacing=DEFAULT_SPACING, workers=1,
                     on_result=None):
    """Estimate a given list of regions (e.g. from an existing report)."""
    estimates = []
    if workers <= 1 or len(regions) <= 1:
        for region in regions:
            est = empirical_max_error(region, cfg, net, spacing)
            estimates.append(est)
            if on_result:
                on_result(est)
    else:
        chunks = [regions[i:i + 16] for i in range(0, len(regions), 16)]
        with multiprocessing.Pool(workers, _init_worker,
                                  (cfg, net, spacing)) as pool:
            for batch in pool.imap_unordered(_worker_batch, chunks):
                for est in batch:
                    estimates.append(est)
                    if on_result:
                        on_result(est)
    estimates.sort(key=lambda e: e.cell_index)
    return estimates
