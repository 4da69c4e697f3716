"""Dataset loading: PGM images plus a labels CSV.

The on-disk layout is the verifier CLI's gen-dataset output:

    <dir>/labels.csv          header "filename,delta,theta"
    <dir>/images/<filename>   binary (P5) PGM, maxval 255

Everything is loaded eagerly into two arrays; a full desk-scale training
set is ~20 MB of pixels, far below the cost of a file-per-item loader.
"""

import csv
from pathlib import Path

import numpy as np


def read_pgm(path):
    """Binary PGM (P5, maxval 255) to a uint8 (height, width) array."""
    data = Path(path).read_bytes()
    fields = []
    idx = 0
    while len(fields) < 4:
        while idx < len(data) and data[idx:idx + 1].isspace():
            idx += 1
        if data[idx:idx + 1] == b"#":
            while idx < len(data) and data[idx:idx + 1] != b"\n":
                idx += 1
            continue
        start = idx
        while idx < len(data) and not data[idx:idx + 1].isspace():
            idx += 1
        fields.append(data[start:idx])
    if fields[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM (magic {fields[0]!r})")
    width, height, maxval = (int(f) for f in fields[1:])
    if maxval != 255:
        raise ValueError(f"{path}: expected maxval 255, got {maxval}")
    idx += 1  # single whitespace byte after the header
    if len(data) - idx < height * width:
        raise ValueError(f"{path}: truncated pixel data")
    pixels = np.frombuffer(data, dtype=np.uint8, count=height * width,
                           offset=idx)
    return pixels.reshape(height, width)


def load_dataset(directory):
    """Images and labels of one dataset directory.

    Returns (images uint8 (N, H, W), labels float64 (N, 2)) in CSV row
    order. All images must share one shape.
    """
    directory = Path(directory)
    names, labels = [], []
    with open(directory / "labels.csv", newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            names.append(row["filename"])
            labels.append((float(row["delta"]), float(row["theta"])))
    if not names:
        raise ValueError(f"{directory}: empty dataset")
    images = [read_pgm(directory / "images" / name) for name in names]
    shapes = {img.shape for img in images}
    if len(shapes) != 1:
        raise ValueError(f"{directory}: mixed image shapes {sorted(shapes)}")
    return np.stack(images), np.asarray(labels, dtype=np.float64)
