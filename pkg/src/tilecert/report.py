"""Aggregation of tile results into distributions and heatmaps.

Everything is weighted by cell area rather than cell count, so ragged edge
cells contribute proportionally; with a uniform grid the two weightings
coincide. Heatmaps are written as plain PGM (one pixel per cell) with a
text sidecar recording the value range and axes, keeping the artifacts
diffable and viewer-free.
"""

from dataclasses import dataclass

import numpy as np

from .scene import write_pgm

# Relative slack when locating a percentile in the cumulative weights;
# absorbs cumsum rounding so p=100 still lands on the maximum.
_CUM_EPS = 1e-12


@dataclass(frozen=True)
class Distribution:
    """Values with state-space-area weights, sorted by value."""

    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        wts = np.asarray(self.weights, dtype=np.float64)
        if vals.shape != wts.shape or vals.ndim != 1 or vals.size == 0:
            raise ValueError("distribution needs matching nonempty 1-d arrays")
        if (wts < 0).any() or wts.sum() <= 0:
            raise ValueError("weights must be nonnegative with positive total")
        order = np.argsort(vals, kind="stable")
        object.__setattr__(self, "values", vals[order])
        object.__setattr__(self, "weights", wts[order])

    @property
    def total(self):
        return float(self.weights.sum())


def distribution_from_results(results, quantity):
    """Area-weighted distribution of one error column of tile results.

    `quantity` indexes the per-tile error tuple (0 = first output).
    Zero-area cells (degenerate spaces) fall back to count weighting.
    """
    values = np.array([r.errors[quantity] for r in results])
    areas = np.array([r.region.area for r in results])
    if areas.sum() == 0:
        areas = np.ones_like(areas)
    return Distribution(values, areas)


def cumulative_fraction(dist, threshold):
    """Area fraction of cells whose value is <= threshold."""
    covered = dist.weights[dist.values <= threshold].sum()
    return float(covered / dist.total)


def percentile(dist, p):
    """Smallest value v with cumulative_fraction(v) >= p/100."""
    if not 0.0 <= p <= 100.0:
        raise ValueError("percentile must be in [0, 100]")
    cum = np.cumsum(dist.weights)
    target = (p / 100.0) * dist.total
    idx = int(np.searchsorted(cum, target - _CUM_EPS * dist.total))
    return float(dist.values[min(idx, len(dist.values) - 1)])


def trusted_fraction(dist, tolerance):
    """Fraction of the state space certified below the given tolerance."""
    return cumulative_fraction(dist, tolerance)


def _cell_grid(indices, values):
    idx = np.asarray(indices, dtype=np.int64)
    rows = idx[:, 0].max() + 1
    cols = idx[:, 1].max() + 1
    grid = np.full((rows, cols), np.nan)
    grid[idx[:, 0], idx[:, 1]] = values
    if np.isnan(grid).any():
        missing = np.argwhere(np.isnan(grid))[0]
        raise ValueError(f"missing cell {tuple(missing)} in heatmap input")
    return grid


def heatmap(results, quantity, path):
    """One grayscale pixel per cell, linearly scaled over the value range.

    Row = offset index, column = angle index; constant inputs map to black.
    A `.legend.txt` sidecar records the scaling and orientation.
    """
    values = [r.errors[quantity] for r in results]
    write_cell_image([r.cell_index for r in results], values, path)


def write_cell_image(indices, values, path):
    grid = _cell_grid(indices, np.asarray(values, dtype=np.float64))
    vmin = float(grid.min())
    vmax = float(grid.max())
    if vmax > vmin:
        levels = np.floor((grid - vmin) / (vmax - vmin) * 255.0 + 0.5)
    else:
        levels = np.zeros_like(grid)
    write_pgm(path, levels.astype(np.uint8))
    legend = (
        f"value range: [{vmin!r}, {vmax!r}]\n"
        "mapping: level = round(255 * (value - min) / (max - min)), "
        "0 when constant\n"
        "rows: offset cell index (top = lowest offset interval)\n"
        "cols: angle cell index (left = lowest angle interval)\n"
        f"cells: {grid.shape[0]} x {grid.shape[1]}\n")
    with open(str(path) + ".legend.txt", "w") as fh:
        fh.write(legend)


def write_distribution_csv(path, dist, thresholds):
    """Table of cumulative fractions at the given thresholds."""
    with open(path, "w") as fh:
        fh.write("threshold,fraction\n")
        for t in thresholds:
            fh.write(f"{t!r},{cumulative_fraction(dist, t)!r}\n")
