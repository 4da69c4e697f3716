"""Training loop: Adam on l1 loss with validation early stopping.

Hyperparameter defaults follow the estimator's training recipe where one
is stated (learning rate 0.01, early-stopping patience 5 on validation
loss, best-validation-epoch weights kept). Batch size and the Adam betas
are unstated there; the defaults chosen here (128, (0.9, 0.999)) are
recorded in the run log and the exported metadata so no run is ambiguous.
"""

import copy
import csv
import math
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
import torch
from torch import nn

from . import __version__, data, model as model_mod


class DivergenceError(RuntimeError):
    """Training hit a non-finite loss; partial log is still on disk."""


@dataclass
class TrainConfig:
    train_dir: str
    val_dir: str
    learning_rate: float = 0.01
    batch_size: int = 128
    max_epochs: int = 100
    patience: int = 5
    seed: int = 0
    betas: tuple = (0.9, 0.999)

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1:
            raise ValueError("learning rate and batch size must be positive")
        if self.max_epochs < 1 or self.patience < 1:
            raise ValueError("max_epochs and patience must be at least 1")


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    val_mae_delta: float
    val_mae_theta: float


@dataclass
class TrainResult:
    model: object
    log: list           # EpochStats per completed epoch
    best_epoch: int
    stopped_early: bool
    input_side: int


def _validation_stats(model, x_val, y_val):
    with torch.no_grad():
        model.eval()
        preds = []
        for start in range(0, len(x_val), 1024):
            preds.append(model(x_val[start:start + 1024]))
        pred = torch.cat(preds)
        abserr = (pred - y_val).abs()
        return (abserr.mean().item(),
                abserr[:, 0].mean().item(),
                abserr[:, 1].mean().item())


def train(config, log_path=None):
    """Run the full loop; returns the best-validation model plus the log.

    The log CSV (when `log_path` is given) gains one row per epoch as it
    happens, so an aborted run still documents itself.
    """
    torch.manual_seed(config.seed)

    train_images, train_labels = data.load_dataset(config.train_dir)
    val_images, val_labels = data.load_dataset(config.val_dir)
    side = train_images.shape[1]
    if train_images.shape[1] != train_images.shape[2]:
        raise ValueError("expected square images")

    x_train = model_mod.to_inputs(train_images)
    y_train = torch.from_numpy(train_labels).to(torch.float32)
    x_val = model_mod.to_inputs(val_images)
    y_val = torch.from_numpy(val_labels).to(torch.float32)

    net = model_mod.build_model(side)
    opt = torch.optim.Adam(net.parameters(), lr=config.learning_rate,
                           betas=config.betas)
    loss_fn = nn.L1Loss()

    log = []
    writer = _LogWriter(log_path) if log_path else None
    best_val = math.inf
    best_epoch = -1
    best_state = None
    since_best = 0
    stopped_early = False
    order_gen = torch.Generator().manual_seed(config.seed)

    for epoch in range(config.max_epochs):
        net.train()
        perm = torch.randperm(len(x_train), generator=order_gen)
        total = 0.0
        for start in range(0, len(perm), config.batch_size):
            idx = perm[start:start + config.batch_size]
            opt.zero_grad()
            loss = loss_fn(net(x_train[idx]), y_train[idx])
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        train_loss = total / len(x_train)
        val_loss, mae_d, mae_t = _validation_stats(net, x_val, y_val)

        stats = EpochStats(epoch, train_loss, val_loss, mae_d, mae_t)
        log.append(stats)
        if writer:
            writer.write(stats)
        if not (math.isfinite(train_loss) and math.isfinite(val_loss)):
            raise DivergenceError(
                f"non-finite loss at epoch {epoch} "
                f"(train {train_loss}, val {val_loss}); see log")

        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_state = copy.deepcopy(net.state_dict())
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                stopped_early = True
                break

    net.load_state_dict(best_state)
    return TrainResult(net, log, best_epoch, stopped_early, side)


class _LogWriter:
    def __init__(self, path):
        self.fh = open(Path(path), "w", newline="")
        self.writer = csv.writer(self.fh)
        self.writer.writerow(["epoch", "train_loss", "val_loss",
                              "val_mae_delta", "val_mae_theta"])
        self.fh.flush()

    def write(self, stats):
        self.writer.writerow([stats.epoch, repr(stats.train_loss),
                              repr(stats.val_loss),
                              repr(stats.val_mae_delta),
                              repr(stats.val_mae_theta)])
        self.fh.flush()


def run_metadata(config, result):
    """Provenance block stored in the exported weight file."""
    cfg = asdict(config)
    cfg["train_dir"] = str(cfg["train_dir"])
    cfg["val_dir"] = str(cfg["val_dir"])
    meta = {"trainer": f"tiletrain {__version__}",
            "config": cfg,
            "best_epoch": result.best_epoch,
            "epochs_run": len(result.log),
            "stopped_early": result.stopped_early,
            "best_val_loss": result.log[result.best_epoch].val_loss}
    return meta


def evaluate(weight_path, dataset_dir):
    """Mean absolute error per quantity of an exported model on a dataset.

    Returns (mae_delta, mae_theta) as floats.
    """
    from . import export

    net, spec = export.import_weights(weight_path)
    images, labels = data.load_dataset(dataset_dir)
    if images.shape[1:] != (spec["height"], spec["width"]):
        raise ValueError(
            f"dataset images {images.shape[1:]} do not match the model's "
            f"input {(spec['height'], spec['width'])}")
    pred = model_mod.predict(net, images)
    err = np.abs(pred - labels)
    return float(err[:, 0].mean()), float(err[:, 1].mean())
