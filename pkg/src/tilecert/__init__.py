"""Sound per-tile error certification for a vision-based state estimator.

A camera on a straight road renders one-ray-per-pixel images; a ConvNet
regresses the camera state back out of the image. This package tiles the
state space, wraps each tile's images in per-pixel intensity intervals,
pushes the intervals through the network with sound bound methods, and
turns the result into certified per-tile, local, and global error bounds.
"""

__version__ = "0.1.0"

from . import _kernels, bounds, estimator, network, report, scene, tiling, verifier

__all__ = ["bounds", "estimator", "network", "report", "scene", "tiling",
           "verifier", "_kernels", "__version__"]
