"""Tile-by-tile certification of network error bounds.

Pipeline per tile: grid cell -> ground-truth intervals -> input bounding
box -> sound output intervals -> error bound. For the regression task the
per-tile bound is e = max(u' - l, u - l'), which caps |prediction - truth|
for every state in the cell; the global bound is the maximum over tiles,
and the local bound of an image is the maximum over the tiles whose box
contains it (an image outside every box is not known feasible and gets
NOT_COVERED instead of a number). The classification variant scores a tile
0 when the ground-truth class is unique and its certified score interval
clears every other class's upper bound, else 1.

Tiles are independent, so the runner fans them out over a process pool;
results are merged by sorted cell index, making the report byte-for-byte
identical for any worker count. Rows can be streamed to a partial file
and fed back in to resume an interrupted run.

One forward bound computation serves every output entry of a tile; that is
behaviorally identical to bounding each output with its own network.
"""

import csv
import multiprocessing
import time
from dataclasses import dataclass

import numpy as np

from . import _kernels, bounds, tiling
from .scene import SceneConfig
from .tiling import ClassSet, StateRegion


class _NotCovered:
    """Result of a local-bound query on an image no box contains."""

    def __repr__(self):
        return "NOT_COVERED"

    def __bool__(self):
        return False


NOT_COVERED = _NotCovered()

_METHODS = {
    "ibp": bounds.ibp_bounds,
    "linrelax": bounds.linear_relaxation_bounds,
    # long-form alias accepted anywhere a method name is taken
    "linear_relaxation": bounds.linear_relaxation_bounds,
}


@dataclass(frozen=True)
class TileResult:
    """Certified bounds for one grid cell."""

    cell_index: tuple
    region: StateRegion
    truth: object  # (delta interval, theta interval) or ClassSet
    outputs: bounds.OutputIntervals
    errors: tuple  # per-quantity bounds; classification uses a single 0/1
    solve_time: float = None

    def __post_init__(self):
        err = np.asarray(self.errors, dtype=np.float64)
        if err.size == 0 or not np.isfinite(err).all() or (err < 0).any():
            raise ValueError("tile errors must be finite and nonnegative")


@dataclass(frozen=True)
class VerificationReport:
    """All tile results of one run plus the derived global bounds."""

    space: tiling.StateSpace
    cell_delta: float
    cell_theta: float
    method: str
    task: str
    scene: SceneConfig
    results: tuple
    global_bounds: tuple
    wall_time: float
    engine: str

    def __post_init__(self):
        expect = global_bound(self.results)
        if tuple(expect) != tuple(self.global_bounds):
            raise ValueError("global bounds must equal the max over tiles")


def tile_error_regression(gt, out):
    """Error bound of one quantity over one tile: max(u' - l, u - l')."""
    l, u = gt
    lo, hi = out
    return max(hi - l, u - lo)


def tile_error_classification(gt, scores):
    """0 when every input in the tile provably gets the unique true class.

    Requires a singleton ground-truth set whose certified score lower
    bound beats every other class's upper bound; anything else is 1.
    """
    if len(gt) == 0:
        raise ValueError("empty ground-truth class set")
    if len(scores.lo) < 2:
        raise ValueError("classification needs at least two score outputs")
    if len(gt) != 1:
        return 1
    (label,) = gt
    others = [k for k in range(len(scores.lo)) if k != label]
    if all(scores.lo[label] > scores.hi[k] for k in others):
        return 0
    return 1


def global_bound(results):
    """Per-quantity maximum of tile error bounds."""
    if not results:
        raise ValueError("no tile results")
    errs = np.asarray([r.errors for r in results], dtype=np.float64)
    return tuple(errs.max(axis=0))


def local_bound(image, results, cfg=SceneConfig(), boxes=None):
    """Max error bound over the tiles whose box contains the image.

    `boxes` may be a sequence aligned with `results` (e.g. read from a box
    sidecar) to avoid recomputing; with it the scan is vectorized in
    chunks. Returns NOT_COVERED when no box contains the image.
    """
    img = np.asarray(image, dtype=np.uint8)
    best = None
    if boxes is None:
        for res in results:
            box = tiling.bounding_box(res.region, cfg)
            if box.contains(img):
                err = np.asarray(res.errors, dtype=np.float64)
                best = err if best is None else np.maximum(best, err)
        return best if best is not None else NOT_COVERED

    if len(boxes) != len(results):
        raise ValueError("boxes must align with results")
    chunk = 4096
    for start in range(0, len(results), chunk):
        sub = boxes[start:start + chunk]
        lows = np.stack([b.low for b in sub])
        highs = np.stack([b.high for b in sub])
        hit = ((lows <= img).all(axis=(1, 2))
               & (img <= highs).all(axis=(1, 2)))
        for off in np.flatnonzero(hit):
            err = np.asarray(results[start + off].errors, dtype=np.float64)
            best = err if best is None else np.maximum(best, err)
    return best if best is not None else NOT_COVERED


def compute_tile(region, cfg, net, method="ibp", task="regression",
                 boundary=0.0, timings=False):
    """Run the per-tile pipeline for one region."""
    fn = _METHODS[method] if isinstance(method, str) else method
    t0 = time.perf_counter() if timings else None
    try:
        box = tiling.bounding_box(region, cfg)
        out = fn(net, box)
        if task == "regression":
            d_int, t_int = tiling.ground_truth_intervals(region)
            truth = (d_int, t_int)
            errors = (tile_error_regression(d_int, (out.lo[0], out.hi[0])),
                      tile_error_regression(t_int, (out.lo[1], out.hi[1])))
        else:
            truth = tiling.sign_of_offset_classes(region, boundary)
            errors = (float(tile_error_classification(truth, out)),)
    except Exception as exc:
        raise RuntimeError(f"tile {region.cell_index}: {exc}") from exc
    elapsed = time.perf_counter() - t0 if timings else None
    return TileResult(region.cell_index, region, truth, out, errors, elapsed)


_WORKER_STATE = {}


def _init_worker(cfg, net, method, task, boundary, timings):
    _WORKER_STATE.update(cfg=cfg, net=net, method=method, task=task,
                         boundary=boundary, timings=timings)


def _worker_batch(regions):
    s = _WORKER_STATE
    return [compute_tile(r, s["cfg"], s["net"], s["method"], s["task"],
                         s["boundary"], s["timings"]) for r in regions]


def _chunks(seq, size):
    for start in range(0, len(seq), size):
        yield seq[start:start + size]


def run_tiler(space, cell_delta, cell_theta, cfg, net, method="ibp",
              task="regression", workers=1, boundary=0.0, timings=False,
              on_result=None, prior=None):
    """Certify every tile of the gridded state space.

    `prior` maps cell_index to an already-computed TileResult (resume);
    `on_result` sees each fresh result in completion order, for streaming.
    The returned report is sorted by cell index and identical for any
    worker count.
    """
    if isinstance(method, str) and method not in _METHODS:
        raise ValueError(f"unknown bound method '{method}'")
    if task not in ("regression", "classification"):
        raise ValueError(f"unknown task '{task}'")
    if task == "regression" and net.output_dim != 2:
        raise ValueError("regression task expects exactly 2 network outputs")
    if task == "classification" and net.output_dim < 2:
        raise ValueError("classification task expects >= 2 score outputs")
    regions = tiling.make_grid(space, cell_delta, cell_theta)
    if not regions:
        raise ValueError("state space produced no tiles")
    prior = dict(prior or {})
    todo = [r for r in regions if r.cell_index not in prior]

    t0 = time.perf_counter()
    results = [prior[r.cell_index] for r in regions if r.cell_index in prior]
    if workers <= 1 or len(todo) <= 1:
        for region in todo:
            res = compute_tile(region, cfg, net, method, task, boundary, timings)
            results.append(res)
            if on_result:
                on_result(res)
    else:
        with multiprocessing.Pool(
                workers, _init_worker,
                (cfg, net, method, task, boundary, timings)) as pool:
            for batch in pool.imap_unordered(
                    _worker_batch, _chunks(todo, 64)):
                for res in batch:
                    results.append(res)
                    if on_result:
                        on_result(res)
    wall = time.perf_counter() - t0

    results.sort(key=lambda r: r.cell_index)
    return VerificationReport(
        space=space, cell_delta=cell_delta, cell_theta=cell_theta,
        method=method if isinstance(method, str) else method.__name__,
        task=task, scene=cfg, results=tuple(results),
        global_bounds=global_bound(results), wall_time=wall,
        engine=_kernels.active_name())


# ---------------------------------------------------------------------------
# report rows on disk
# ---------------------------------------------------------------------------


def csv_header(task, output_dim, timings=False):
    cols = ["cell_i", "cell_j", "delta_lo", "delta_hi", "theta_lo", "theta_hi"]
    cols += [f"out{k}_{end}" for k in range(output_dim) for end in ("lo", "hi")]
    if task == "regression":
        cols += ["e_delta", "e_theta"]
    else:
        cols += ["classes", "e"]
    if timings:
        cols.append("solve_time")
    return cols


def result_to_row(res, task, timings=False):
    """Serialize one result; floats via repr so rows are byte-stable."""
    row = [str(res.cell_index[0]), str(res.cell_index[1]),
           repr(res.region.delta[0]), repr(res.region.delta[1]),
           repr(res.region.theta[0]), repr(res.region.theta[1])]
    for k in range(len(res.outputs.lo)):
        row += [repr(float(res.outputs.lo[k])), repr(float(res.outputs.hi[k]))]
    if task == "regression":
        row += [repr(float(res.errors[0])), repr(float(res.errors[1]))]
    else:
        row += [";".join(str(c) for c in sorted(res.truth)),
                str(int(res.errors[0]))]
    if timings:
        row.append("" if res.solve_time is None else repr(res.solve_time))
    return row


def _row_to_result(header, row):
    get = dict(zip(header, row))
    cell = (int(get["cell_i"]), int(get["cell_j"]))
    region = StateRegion(cell,
                         (float(get["delta_lo"]), float(get["delta_hi"])),
                         (float(get["theta_lo"]), float(get["theta_hi"])))
    ndim = sum(1 for c in header if c.endswith("_lo") and c.startswith("out"))
    out = bounds.OutputIntervals(
        np.array([float(get[f"out{k}_lo"]) for k in range(ndim)]),
        np.array([float(get[f"out{k}_hi"]) for k in range(ndim)]))
    if "e_delta" in get:
        truth = (region.delta, region.theta)
        errors = (float(get["e_delta"]), float(get["e_theta"]))
    else:
        truth = ClassSet(int(c) for c in get["classes"].split(";"))
        errors = (float(get["e"]),)
    solve = get.get("solve_time")
    return TileResult(cell, region, truth, out, errors,
                      float(solve) if solve else None)


def write_report_csv(path, report, timings=False):
    """Final sorted CSV, one row per tile; stable bytes for fixed inputs."""
    out_dim = len(report.results[0].outputs.lo)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(csv_header(report.task, out_dim, timings))
        for res in report.results:
            writer.writerow(result_to_row(res, report.task, timings))


def read_report_csv(path):
    """Rebuild (task, results) from a report CSV (sorted on return)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        results = [_row_to_result(header, row) for row in reader if row]
    task = "regression" if "e_delta" in header else "classification"
    results.sort(key=lambda r: r.cell_index)
    return task, results
