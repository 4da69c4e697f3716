#!/usr/bin/env python3
"""Generate the committed demo estimator weight file.

Seeded random weights in the case-study architecture. The file exists so
the pipeline and its acceptance checks run end to end without a training
step; swap in trained weights (same format) for meaningful bound values.
"""

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from tilecert.network import (Conv2D, Dense, Flatten, LinearOutput, Network,
                              ReLU, save_weights)

SEED = 20240817
OUT = Path(__file__).resolve().parents[1] / "assets" / "estimator.json"


def main():
    rng = np.random.default_rng(SEED)
    # scale ~ 1/fan_in keeps interval growth through the stack moderate
    layers = [
        Conv2D(rng.normal(size=(16, 1, 4, 4)) * 0.10,
               rng.normal(size=16) * 0.05, stride=2, padding=1),
        ReLU(),
        Conv2D(rng.normal(size=(32, 16, 4, 4)) * 0.05,
               rng.normal(size=32) * 0.05, stride=2, padding=1),
        ReLU(),
        Flatten(),
        Dense(rng.normal(size=(100, 2048)) * 0.02,
              rng.normal(size=100) * 0.05),
        ReLU(),
        LinearOutput(rng.normal(size=(2, 100)) * 0.10,
                     rng.normal(size=2) * 0.05),
    ]
    net = Network(layers, {"height": 32, "width": 32, "channels": 1,
                           "scale": 255.0})
    OUT.parent.mkdir(parents=True, exist_ok=True)
    save_weights(OUT, net, metadata={
        "task": "regression",
        "outputs": ["offset", "angle"],
        "origin": f"seeded random weights (this script, seed {SEED})",
    })
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
