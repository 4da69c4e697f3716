import csv
import math
import shutil

import numpy as np
import pytest

from tiletrain import data, export, model as model_mod, train as T


class TestConfig:
    def test_defaults_match_recipe(self):
        cfg = T.TrainConfig("a", "b")
        assert cfg.learning_rate == 0.01
        assert cfg.patience == 5
        assert cfg.betas == (0.9, 0.999)

    @pytest.mark.parametrize("kwargs", [
        {"learning_rate": 0.0}, {"batch_size": 0},
        {"max_epochs": 0}, {"patience": 0},
    ])
    def test_invalid_values_rejected(self, kwargs):
        with pytest.raises(ValueError):
            T.TrainConfig("a", "b", **kwargs)


class TestTrainLoop:
    def test_overfit_smoke(self, small_dataset):
        # threshold calibrated on the committed seed: observed 3.30 at
        # 50 epochs, asserted with margin
        cfg = T.TrainConfig(small_dataset, small_dataset, batch_size=32,
                            max_epochs=50, patience=50, seed=0)
        res = T.train(cfg)
        assert min(s.train_loss for s in res.log) < 4.5
        assert res.log[0].train_loss > 10.0

    def test_early_stopping_keeps_best_epoch(self, small_dataset,
                                             val_dataset):
        cfg = T.TrainConfig(small_dataset, val_dataset, batch_size=32,
                            max_epochs=50, patience=3, seed=0)
        res = T.train(cfg)
        assert res.stopped_early
        assert len(res.log) < 50
        val_losses = [s.val_loss for s in res.log]
        assert res.best_epoch == int(np.argmin(val_losses))
        # the tail after the best epoch is exactly the patience window
        assert len(res.log) - 1 - res.best_epoch == cfg.patience

        # returned model really is the best epoch's snapshot
        images, labels = data.load_dataset(val_dataset)
        pred = model_mod.predict(res.model, images)
        recomputed = float(np.abs(pred - labels).mean())
        assert math.isclose(recomputed, min(val_losses),
                            rel_tol=0, abs_tol=1e-5)

    def test_seeded_runs_identical(self, small_dataset, val_dataset):
        cfg = T.TrainConfig(small_dataset, val_dataset, batch_size=32,
                            max_epochs=3, patience=5, seed=4)
        a = T.train(cfg)
        b = T.train(cfg)
        assert a.log == b.log

    def test_log_written_incrementally(self, small_dataset, val_dataset,
                                       tmp_path):
        log = tmp_path / "log.csv"
        cfg = T.TrainConfig(small_dataset, val_dataset, batch_size=32,
                            max_epochs=2, patience=5, seed=0)
        res = T.train(cfg, log_path=log)
        rows = list(csv.DictReader(open(log)))
        assert len(rows) == len(res.log) == 2
        assert float(rows[1]["val_mae_delta"]) == res.log[1].val_mae_delta

    def test_divergence_aborts_with_log(self, val_dataset, tmp_path):
        bad = tmp_path / "bad"
        shutil.copytree(val_dataset, bad)
        rows = list(csv.DictReader(open(bad / "labels.csv")))
        with open(bad / "labels.csv", "w", newline="") as fh:
            fh.write("filename,delta,theta\n")
            for row in rows:
                fh.write(f"{row['filename']},1e300,-1e300\n")
        log = tmp_path / "log.csv"
        cfg = T.TrainConfig(bad, bad, batch_size=16, max_epochs=5,
                            patience=5, seed=0)
        with pytest.raises(T.DivergenceError, match="non-finite"):
            T.train(cfg, log_path=log)
        assert len(list(csv.DictReader(open(log)))) >= 1


class TestEvaluate:
    def test_matches_direct_prediction(self, small_dataset, tmp_path):
        cfg = T.TrainConfig(small_dataset, small_dataset, batch_size=32,
                            max_epochs=5, patience=10, seed=0)
        res = T.train(cfg)
        path = tmp_path / "w.json"
        export.export_weights(path, res.model, res.input_side,
                              model_mod.INPUT_SCALE)
        mae_d, mae_t = T.evaluate(path, small_dataset)
        images, labels = data.load_dataset(small_dataset)
        err = np.abs(model_mod.predict(res.model, images) - labels)
        assert math.isclose(mae_d, err[:, 0].mean(), abs_tol=1e-6)
        assert math.isclose(mae_t, err[:, 1].mean(), abs_tol=1e-6)

    def test_untrained_model_has_large_error(self, small_dataset, tmp_path):
        import torch

        torch.manual_seed(0)
        net = model_mod.build_model()
        path = tmp_path / "w.json"
        export.export_weights(path, net, 32, model_mod.INPUT_SCALE)
        mae_d, mae_t = T.evaluate(path, small_dataset)
        assert mae_d > 5.0 and mae_t > 5.0

    def test_shape_mismatch_rejected(self, small_dataset, tmp_path):
        import torch

        torch.manual_seed(0)
        net = model_mod.build_model(16)
        path = tmp_path / "w.json"
        export.export_weights(path, net, 16, model_mod.INPUT_SCALE)
        with pytest.raises(ValueError, match="do not match"):
            T.evaluate(path, small_dataset)
