import shutil
import subprocess

import pytest

GEN = shutil.which("tilecert")


def generate_dataset(outdir, count, seed, extra=()):
    """Produce a dataset with the verifier CLI, the real upstream writer."""
    if GEN is None:
        pytest.skip("tilecert CLI not installed; dataset generation "
                    "is its job")
    subprocess.run([GEN, "gen-dataset", "--out", str(outdir),
                    "--count", str(count), "--seed", str(seed), *extra],
                   check=True, capture_output=True)
    return outdir


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """200 images; the overfit and reproducibility tests share it."""
    return generate_dataset(tmp_path_factory.mktemp("small"), 200, 10)


@pytest.fixture(scope="session")
def val_dataset(tmp_path_factory):
    return generate_dataset(tmp_path_factory.mktemp("val"), 50, 11)
