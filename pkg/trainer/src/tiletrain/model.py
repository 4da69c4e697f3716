"""The estimator architecture, in the training framework's terms.

Two 4x4 stride-2 convolutions (16 then 32 filters, padding 1), ReLUs, a
100-unit fully connected layer, and a linear 2-output head for (offset,
angle). Inputs are grayscale images scaled into [0, 1]; torch's flatten
of a (N, C, H, W) tensor is channel-major, which is exactly the order the
weight-file contract prescribes, so export needs no permutation.
"""

import torch
from torch import nn

INPUT_SIDE = 32
INPUT_SCALE = 255.0


def build_model(side=INPUT_SIDE):
    flat = 32 * (side // 4) * (side // 4)
    return nn.Sequential(
        nn.Conv2d(1, 16, kernel_size=4, stride=2, padding=1),
        nn.ReLU(),
        nn.Conv2d(16, 32, kernel_size=4, stride=2, padding=1),
        nn.ReLU(),
        nn.Flatten(),
        nn.Linear(flat, 100),
        nn.ReLU(),
        nn.Linear(100, 2),
    )


def to_inputs(images):
    """uint8 (N, H, W) images to the scaled (N, 1, H, W) float tensor."""
    x = torch.from_numpy(images).to(torch.float32)
    return x.unsqueeze(1) / INPUT_SCALE


@torch.no_grad()
def predict(model, images, batch_size=512):
    """Model outputs for uint8 images, as a (N, 2) numpy array."""
    model.eval()
    outs = []
    x = to_inputs(images)
    for start in range(0, len(x), batch_size):
        outs.append(model(x[start:start + batch_size]))
    return torch.cat(outs).numpy()
