"""Throughput comparison of the two kernel engines.

Times the hot per-tile kernels (render, pixel bounding box, network
forward, interval sweep) on the shipped fixture network under each
available engine and prints ms/op plus the compiled-over-python speedup.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import time
from pathlib import Path

import numpy as np

from tilecert import _kernels, bounds, network, scene, tiling

ASSETS = Path(__file__).resolve().parent.parent / "assets"


def timeit(fn, repeat):
    fn()  # warm caches and JIT-free import costs
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - t0) / repeat * 1000.0


def bench(engine, repeat, cfg, net, states, regions, images, box):
    _kernels.use(engine)
    rows = {}
    rows["render"] = timeit(
        lambda: [scene.render(s, cfg) for s in states], repeat) / len(states)
    rows["bounding_box"] = timeit(
        lambda: [tiling.bounding_box(r, cfg) for r in regions],
        repeat) / len(regions)
    rows["forward"] = timeit(
        lambda: [network.forward(net, img) for img in images],
        repeat) / len(images)
    rows["ibp_bounds"] = timeit(lambda: bounds.ibp_bounds(net, box), repeat)
    rows["linear_relaxation"] = timeit(
        lambda: bounds.linear_relaxation_bounds(net, box), repeat)
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5,
                        help="timing repetitions per kernel (default 5)")
    args = parser.parse_args()

    cfg = scene.SceneConfig()
    net = network.load_weights(ASSETS / "estimator.json")
    rng = np.random.default_rng(0)
    states = [scene.CameraState(o, a)
              for o, a in zip(rng.uniform(-40, 40, 100),
                              rng.uniform(-60, 60, 100))]
    regions = tiling.make_grid(
        tiling.StateSpace((0.0, 4.0), (0.0, 4.0)), 0.4, 0.4)[:50]
    images = [scene.render(s, cfg) for s in states[:50]]
    box = tiling.bounding_box(regions[0], cfg)

    results = {}
    for engine in _kernels.available():
        results[engine] = bench(engine, args.repeat, cfg, net,
                                states, regions, images, box)

    kernels = list(next(iter(results.values())))
    engines = list(results)
    header = f"{'kernel':<18}" + "".join(f"{e + ' ms/op':>14}" for e in engines)
    if len(engines) == 2:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for kernel in kernels:
        line = f"{kernel:<18}"
        for engine in engines:
            line += f"{results[engine][kernel]:>14.4f}"
        if len(engines) == 2:
            slow, fast = results["python"][kernel], results["ext"][kernel]
            line += f"{slow / fast:>9.1f}x"
        print(line)


if __name__ == "__main__":
    main()
