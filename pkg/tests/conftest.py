import sys
from pathlib import Path

import numpy as np
import pytest

TESTS = Path(__file__).resolve().parent
ROOT = TESTS.parent
FIXTURES = TESTS / "fixtures"
ASSETS = ROOT / "assets"

sys.path.insert(0, str(TESTS))

from tilecert.network import Dense, Flatten, LinearOutput, Network, ReLU  # noqa: E402
from tilecert.scene import SceneConfig  # noqa: E402


@pytest.fixture(scope="session")
def cfg():
    return SceneConfig()


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES


@pytest.fixture(scope="session")
def assets_dir():
    return ASSETS


def make_tiny_net(rng, in_dim=None, out_dim=None):
    """Random small dense/ReLU stack over a flat input of <= 4 values."""
    in_dim = in_dim or int(rng.integers(1, 5))
    out_dim = out_dim or int(rng.integers(1, 4))
    layers = [Flatten()]
    prev = in_dim
    for _ in range(int(rng.integers(0, 3))):
        width = int(rng.integers(1, 9))
        layers.append(Dense(rng.normal(size=(width, prev)), rng.normal(size=width)))
        layers.append(ReLU())
        prev = width
    layers.append(LinearOutput(rng.normal(size=(out_dim, prev)), rng.normal(size=out_dim)))
    spec = {"height": 1, "width": in_dim, "channels": 1, "scale": 1.0}
    return Network(layers, spec)


def tiny_box(rng, in_dim, width=None):
    """Random already-scaled interval box for a flat tiny-net input."""
    center = rng.uniform(-2.0, 2.0, size=in_dim)
    if width is None:
        half = rng.uniform(0.0, 1.0, size=in_dim)
    else:
        half = np.full(in_dim, width / 2.0)
    return center - half, center + half


def read_pgm_raw(path):
    """Minimal standalone P5 reader so fixture loading never depends on the
    code under test."""
    data = Path(path).read_bytes()
    fields = []
    idx = 0
    while len(fields) < 4:
        while idx < len(data) and data[idx:idx + 1].isspace():
            idx += 1
        if data[idx:idx + 1] == b"#":
            while data[idx:idx + 1] not in (b"\n", b""):
                idx += 1
            continue
        start = idx
        while idx < len(data) and not data[idx:idx + 1].isspace():
            idx += 1
        fields.append(data[start:idx])
    idx += 1
    assert fields[0] == b"P5"
    width, height = int(fields[1]), int(fields[2])
    assert int(fields[3]) == 255
    return np.frombuffer(data, dtype=np.uint8, count=width * height, offset=idx).reshape(height, width)
