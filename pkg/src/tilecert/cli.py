"""Command-line pipeline driver.

Subcommands: gen-dataset (render a labeled image set), verify (certify a
gridded state space), estimate (empirical per-tile maxima and gaps),
report (heatmaps, distributions, percentiles), query (local bound of one
image). Every command drops a `run_config.json` snapshot into its output
directory with enough information to replay it exactly.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

import argparse
import dataclasses
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, _kernels, estimator, network, report, scene, tiling, verifier


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(1)


def _scene_from(args):
    if getattr(args, "config", None):
        return scene.load_scene_config(args.config)
    return scene.SceneConfig()


def _write_snapshot(outdir, command, args, cfg):
    payload = {
        "command": command,
        "package_version": __version__,
        "engine": _kernels.active_name(),
        "scene": dataclasses.asdict(cfg),
        "args": {k: v for k, v in sorted(vars(args).items())
                 if k != "func" and v is not None},
    }
    (Path(outdir) / "run_config.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _add_common(sub, *, cells=False, method=False, workers=False,
                spacing=False, seed=False):
    sub.add_argument("--config", help="scene config file (TOML or JSON)")
    sub.add_argument("--out", required=True, help="output directory")
    if cells:
        sub.add_argument("--cell-delta", type=float, default=0.4,
                         help="cell width in offset units (default 0.4)")
        sub.add_argument("--cell-theta", type=float, default=0.4,
                         help="cell height in angle degrees (default 0.4)")
    if method:
        sub.add_argument("--method", choices=["ibp", "linrelax"],
                         default="ibp", help="bound method (default ibp)")
    if workers:
        sub.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                         help="worker processes (default: all cores)")
    if spacing:
        sub.add_argument("--spacing", type=float,
                         default=estimator.DEFAULT_SPACING,
                         help="sample spacing inside each cell (default 0.05)")
    if seed:
        sub.add_argument("--seed", type=int, default=0,
                         help="RNG seed (default 0)")


def _range_pair(sub, name, default, what):
    sub.add_argument(name, nargs=2, type=float, default=list(default),
                     metavar=("LO", "HI"), help=f"{what} (default {default})")


def cmd_gen_dataset(args):
    cfg = _scene_from(args)
    outdir = Path(args.out)
    (outdir / "images").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    rows = []
    for idx in range(args.count):
        off = rng.uniform(args.delta_range[0], args.delta_range[1])
        ang = rng.uniform(args.theta_range[0], args.theta_range[1])
        name = f"img_{idx:06d}.pgm"
        img = scene.render(scene.CameraState(off, ang), cfg)
        scene.write_pgm(outdir / "images" / name, img)
        rows.append((name, off, ang))
    with open(outdir / "labels.csv", "w", newline="") as fh:
        fh.write("filename,delta,theta\n")
        for name, off, ang in rows:
            fh.write(f"{name},{off!r},{ang!r}\n")
    _write_snapshot(outdir, "gen-dataset", args, cfg)
    print(f"wrote {args.count} images to {outdir}")
    return 0


def _stream_writer(path, header):
    """Append rows to a partial CSV, creating the header when new."""
    fresh = not path.exists() or path.stat().st_size == 0
    fh = open(path, "a", newline="")
    if fresh:
        fh.write(",".join(header) + "\n")
        fh.flush()

    def write(res, task, timings):
        fh.write(",".join(verifier.result_to_row(res, task, timings)) + "\n")
        fh.flush()

    return fh, write


def _read_partial(path):
    """Parse resumable rows from an interrupted run, skipping torn tails."""
    prior = {}
    try:
        import csv as _csv
        with open(path, newline="") as fh:
            reader = _csv.reader(fh)
            header = next(reader)
            for row in reader:
                if len(row) != len(header):
                    continue
                try:
                    res = verifier._row_to_result(header, row)
                except (ValueError, KeyError):
                    continue
                prior[res.cell_index] = res
    except (OSError, StopIteration):
        return {}
    return prior


def cmd_verify(args):
    cfg = _scene_from(args)
    net = network.load_weights(args.weights)
    space = tiling.StateSpace(tuple(args.delta_range), tuple(args.theta_range))
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    _write_snapshot(outdir, "verify", args, cfg)

    prior = {}
    partial = outdir / "partial.csv"
    if args.resume and partial.exists():
        prior = _read_partial(partial)
        print(f"resuming: {len(prior)} tiles already done")
    elif partial.exists():
        partial.unlink()

    header = verifier.csv_header(args.task, net.output_dim, args.timings)
    fh, write_row = _stream_writer(partial, header)
    try:
        rep = verifier.run_tiler(
            space, args.cell_delta, args.cell_theta, cfg, net,
            method=args.method, task=args.task, workers=args.workers,
            boundary=args.boundary, timings=args.timings,
            on_result=lambda res: write_row(res, args.task, args.timings),
            prior=prior)
    finally:
        fh.close()

    verifier.write_report_csv(outdir / "results.csv", rep, args.timings)
    if args.boxes:
        tiling.write_boxes(
            outdir / "boxes.bin",
            ((r.region, tiling.bounding_box(r.region, cfg))
             for r in rep.results))
    summary = {
        "task": rep.task,
        "method": rep.method,
        "cell_delta": rep.cell_delta,
        "cell_theta": rep.cell_theta,
        "space": {"delta": list(space.delta), "theta": list(space.theta)},
        "global": ({"delta": rep.global_bounds[0],
                    "theta": rep.global_bounds[1]}
                   if rep.task == "regression"
                   else {"class": rep.global_bounds[0]}),
        "tiles": len(rep.results),
        "wall_time": rep.wall_time,
        "workers": args.workers,
        "engine": rep.engine,
        "weights": str(Path(args.weights).resolve()),
        "scene": dataclasses.asdict(cfg),
        "boundary": args.boundary,
        "timings": args.timings,
    }
    (outdir / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n")
    partial.unlink(missing_ok=True)
    if rep.task == "regression":
        print(f"{len(rep.results)} tiles; global bounds: "
              f"offset {rep.global_bounds[0]:.6g}, "
              f"angle {rep.global_bounds[1]:.6g}")
    else:
        frac = np.mean([r.errors[0] for r in rep.results])
        print(f"{len(rep.results)} tiles; uncertified fraction {frac:.4f}")
    return 0


def _load_run(outdir):
    outdir = Path(outdir)
    summary = json.loads((outdir / "summary.json").read_text())
    task, results = verifier.read_report_csv(outdir / "results.csv")
    if task != summary["task"]:
        raise ValueError("summary.json and results.csv disagree on task")
    cfg = scene.SceneConfig(**summary["scene"])
    return outdir, summary, cfg, results


def cmd_estimate(args):
    outdir, summary, cfg, results = _load_run(args.out)
    if summary["task"] != "regression":
        raise ValueError("estimation applies to the regression task")
    weights = args.weights or summary["weights"]
    net = network.load_weights(weights)
    t0 = time.perf_counter()
    ests = estimator.estimate_regions(
        [r.region for r in results], cfg, net,
        spacing=args.spacing, workers=args.workers)
    wall = time.perf_counter() - t0
    by_cell = {r.cell_index: r for r in results}
    with open(outdir / "estimates.csv", "w", newline="") as fh:
        fh.write("cell_i,cell_j,est_e_delta,est_e_theta,"
                 "gap_delta,gap_theta,spacing\n")
        for est in ests:
            res = by_cell[est.cell_index]
            gd = estimator.gap(res.errors[0], est.e_delta)
            gt = estimator.gap(res.errors[1], est.e_theta)
            fh.write(f"{est.cell_index[0]},{est.cell_index[1]},"
                     f"{est.e_delta!r},{est.e_theta!r},"
                     f"{gd!r},{gt!r},{est.spacing!r}\n")
    emax = (max(e.e_delta for e in ests), max(e.e_theta for e in ests))
    (outdir / "estimate_summary.json").write_text(json.dumps({
        "spacing": args.spacing,
        "empirical_max": {"delta": emax[0], "theta": emax[1]},
        "tiles": len(ests),
        "wall_time": wall,
        "weights": str(Path(weights).resolve()),
    }, indent=2, sort_keys=True) + "\n")
    print(f"empirical maxima: offset {emax[0]:.6g}, angle {emax[1]:.6g}")
    return 0


def _read_estimates(path):
    rows = {}
    with open(path, newline="") as fh:
        header = fh.readline().strip().split(",")
        for line in fh:
            parts = line.rstrip("\n").split(",")
            rec = dict(zip(header, parts))
            key = (int(rec["cell_i"]), int(rec["cell_j"]))
            rows[key] = rec
    return rows


def cmd_report(args):
    outdir, summary, cfg, results = _load_run(args.out)
    task = summary["task"]
    if task == "regression":
        names = ["delta", "theta"]
        spans = [summary["space"]["delta"], summary["space"]["theta"]]
    else:
        names = ["class"]
        spans = [None]

    stats = {}
    for q, name in enumerate(names):
        report.heatmap(results, q, outdir / f"heatmap_{name}.pgm")
        dist = report.distribution_from_results(results, q)
        vmax = float(dist.values.max())
        thresholds = np.linspace(0.0, vmax if vmax > 0 else 1.0, 21)
        report.write_distribution_csv(
            outdir / f"distribution_{name}.csv", dist, thresholds)
        entry = {
            "global": float(dist.values.max()),
            "percentiles": {str(p): report.percentile(dist, p)
                            for p in (50, 90, 99, 100)},
        }
        if spans[q] is not None:
            tol = 0.03 * (spans[q][1] - spans[q][0])
            entry["trusted_tolerance"] = tol
            entry["trusted_fraction"] = report.trusted_fraction(dist, tol)
        else:
            entry["certified_fraction"] = report.cumulative_fraction(dist, 0.0)
        stats[name] = entry

    est_path = outdir / "estimates.csv"
    if task == "regression" and est_path.exists():
        ests = _read_estimates(est_path)
        for q, name in enumerate(names):
            gaps = [float(ests[r.cell_index][f"gap_{name}"])
                    for r in results if r.cell_index in ests]
            if len(gaps) == len(results):
                report.write_cell_image(
                    [r.cell_index for r in results], gaps,
                    outdir / f"heatmap_gap_{name}.pgm")
                stats[name]["max_gap"] = max(gaps)

    (outdir / "report_summary.json").write_text(
        json.dumps(stats, indent=2, sort_keys=True) + "\n")
    for name, entry in stats.items():
        print(f"{name}: global {entry['global']:.6g}, "
              f"p99 {entry['percentiles']['99']:.6g}")
    return 0


def cmd_query(args):
    outdir, summary, cfg, results = _load_run(args.out)
    img = scene.read_pgm(args.image)
    boxes_path = outdir / "boxes.bin"
    boxes = None
    if boxes_path.exists():
        stored = {r.cell_index: b for r, b in tiling.read_boxes(boxes_path)}
        if all(r.cell_index in stored for r in results):
            boxes = [stored[r.cell_index] for r in results]
    out = verifier.local_bound(img, results, cfg, boxes)
    if out is verifier.NOT_COVERED:
        print("NOT_COVERED")
        return 0
    if summary["task"] == "regression":
        print(f"offset: {float(out[0])!r}")
        print(f"angle: {float(out[1])!r}")
    else:
        print(f"e: {float(out[0])!r}")
    return 0


def build_parser():
    parser = _Parser(prog="tilecert",
                     description="Certified error bounds for a tiled "
                                 "vision-based state estimator.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("gen-dataset", help="render a labeled image dataset")
    _add_common(p, seed=True)
    p.add_argument("--count", type=int, default=1000,
                   help="number of images (default 1000)")
    _range_pair(p, "--delta-range", (-50.0, 50.0), "offset sampling range")
    _range_pair(p, "--theta-range", (-70.0, 70.0), "angle sampling range")
    p.set_defaults(func=cmd_gen_dataset)

    p = subs.add_parser("verify", help="certify per-tile error bounds")
    _add_common(p, cells=True, method=True, workers=True)
    p.add_argument("--weights", required=True, help="network weight file")
    p.add_argument("--task", choices=["regression", "classification"],
                   default="regression")
    _range_pair(p, "--delta-range", (-40.0, 40.0), "offset range")
    _range_pair(p, "--theta-range", (-60.0, 60.0), "angle range")
    p.add_argument("--boundary", type=float, default=0.0,
                   help="class boundary offset for classification")
    p.add_argument("--timings", action="store_true",
                   help="record per-tile solve times (breaks byte-stable CSV)")
    p.add_argument("--resume", action="store_true",
                   help="continue from an interrupted run's partial.csv")
    p.add_argument("--boxes", action="store_true",
                   help="also write boxes.bin for fast local-bound queries")
    p.set_defaults(func=cmd_verify)

    p = subs.add_parser("estimate", help="empirical per-tile error maxima")
    _add_common(p, workers=True, spacing=True)
    p.add_argument("--weights", help="weight file (default: from summary)")
    p.set_defaults(func=cmd_estimate)

    p = subs.add_parser("report", help="heatmaps, distributions, percentiles")
    _add_common(p)
    p.set_defaults(func=cmd_report)

    p = subs.add_parser("query", help="local error bound for one image")
    _add_common(p)
    p.add_argument("image", help="PGM image to query")
    p.set_defaults(func=cmd_query)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # runtime failures map to exit code 2
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
