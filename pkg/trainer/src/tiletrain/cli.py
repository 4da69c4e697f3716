"""Command line: train a model, evaluate an exported weight file."""

import argparse
import sys

from . import __version__, export, model as model_mod, train as train_mod


def cmd_train(args):
    config = train_mod.TrainConfig(
        train_dir=args.train_dir, val_dir=args.val_dir,
        learning_rate=args.learning_rate, batch_size=args.batch_size,
        max_epochs=args.max_epochs, patience=args.patience, seed=args.seed)
    result = train_mod.train(config, log_path=args.log)
    export.export_weights(args.out, result.model, result.input_side,
                          model_mod.INPUT_SCALE,
                          metadata=train_mod.run_metadata(config, result))
    best = result.log[result.best_epoch]
    why = "early stop" if result.stopped_early else "epoch limit"
    print(f"trained {len(result.log)} epochs ({why}); "
          f"best epoch {result.best_epoch}: "
          f"val mae offset {best.val_mae_delta:.4f}, "
          f"angle {best.val_mae_theta:.4f}")
    print(f"wrote {args.out}")
    return 0


def cmd_evaluate(args):
    mae_d, mae_t = train_mod.evaluate(args.weights, args.dataset)
    print(f"mae offset {mae_d:.6f}")
    print(f"mae angle {mae_t:.6f}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="tiletrain",
        description="Train the road-scene state estimator and export "
                    "portable JSON weights.")
    parser.add_argument("--version", action="version",
                        version=f"tiletrain {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train and export a weight file")
    p.add_argument("--train-dir", required=True)
    p.add_argument("--val-dir", required=True)
    p.add_argument("--out", required=True, help="weight file to write")
    p.add_argument("--log", help="per-epoch CSV log path")
    p.add_argument("--learning-rate", type=float, default=0.01)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--max-epochs", type=int, default=100)
    p.add_argument("--patience", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="MAE of a weight file on a dataset")
    p.add_argument("--weights", required=True)
    p.add_argument("--dataset", required=True)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
