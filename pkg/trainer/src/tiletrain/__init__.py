"""Training side of the road-scene estimator toolchain.

This package only ever talks to the verifier through files: it reads the
PGM + CSV datasets that `tilecert gen-dataset` writes and exports weights
in the shared JSON format. It never imports the verifier.
"""

__version__ = "0.1.0"
