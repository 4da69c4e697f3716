"""Freeze golden fixtures from the independent oracles in tests/oracles.py.

Run once; outputs are committed under tests/fixtures/.  The test suite then
compares the package's optimized implementations against these files, so the
fixtures must never be regenerated from the package itself.
"""

import json
import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "tests"))

import oracles  # noqa: E402
from tilecert.scene import CameraState, SceneConfig  # noqa: E402

FIXTURES = ROOT / "tests" / "fixtures"

GOLDEN_STATE = CameraState(offset=5.0, angle=10.0)
EXTRA_STATE = CameraState(offset=-3.7, angle=22.5)

PROJECT_CASES = [
    (5.0, 10.0, 24, 8),
    (5.0, 10.0, 31, 0),
    (0.0, 0.0, 31, 0),
    (-12.25, -33.5, 20, 17),
    (40.0, 60.0, 16, 31),
]


def write_pgm(path, img):
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (img.shape[1], img.shape[0]))
        fh.write(img.tobytes())


def main():
    FIXTURES.mkdir(parents=True, exist_ok=True)
    cfg = SceneConfig()

    golden = oracles.oracle_render(GOLDEN_STATE, cfg)
    write_pgm(FIXTURES / "golden_render_d5_t10.pgm", golden)
    print("golden render:", golden.shape, "sum", int(golden.sum()))

    cases = []
    for off, ang, row, col in PROJECT_CASES:
        hit = oracles.oracle_project(CameraState(off, ang), row, col, cfg)
        entry = {"offset": off, "angle": ang, "row": row, "col": col}
        if hit == oracles.SKY:
            entry["sky"] = True
        else:
            entry["x"], entry["y"] = hit
        cases.append(entry)
    (FIXTURES / "golden_project.json").write_text(json.dumps(cases, indent=1))
    print("projection cases:", len(cases))

    extra = oracles.oracle_render(EXTRA_STATE, cfg)
    forward_cases = []
    for name, img in [
        ("zero", np.zeros((32, 32), dtype=np.uint8)),
        ("render_d5_t10", golden),
        ("render_d-3.7_t22.5", extra),
    ]:
        out = oracles.oracle_forward(ROOT / "assets" / "estimator.json", img)
        forward_cases.append({"image": name, "outputs": [float(v) for v in out]})
        print(f"forward[{name}] =", out)
    (FIXTURES / "golden_forward.json").write_text(json.dumps(forward_cases, indent=1))


if __name__ == "__main__":
    main()
