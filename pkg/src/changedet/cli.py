"""Command-line interface: train, eval, predict, synth, import-weights."""

from __future__ import annotations

import argparse
import sys

from .checkpoint import import_pretrained, load_checkpoint, restore_model, save_checkpoint
from .config import PROFILES, load_config_file
from .data import synth_generate, write_samples
from .inference import predict_files
from .metrics import to_kv_lines
from .training import evaluate_checkpoint, train


def _profile_config(args):
    cfg = PROFILES[args.profile]()
    if args.config:
        cfg = load_config_file(args.config, base=cfg)
    return cfg


def cmd_train(args) -> int:
    cfg = _profile_config(args)
    result = train(cfg, log_fn=lambda row: print(
        f"epoch {row['epoch']:4d}  lr {row['lr']:.2e}  "
        f"loss {row['train_loss']:.4f}  val_f1 {row['val_f1']:.4f}"
    ))
    print(f"steps={result.steps}")
    print(f"best_epoch={result.best_epoch}")
    print(f"best_val_f1={result.best_val_f1:.6f}")
    if result.best_path:
        print(f"best_checkpoint={result.best_path}")
        print(f"last_checkpoint={result.last_path}")
        print(f"log={result.log_path}")
    return 0


def cmd_eval(args) -> int:
    metrics = evaluate_checkpoint(args.ckpt, args.split, root=args.root)
    print(to_kv_lines(metrics))
    return 0


def cmd_predict(args) -> int:
    model, _ = restore_model(load_checkpoint(args.ckpt))
    paths = predict_files(model, args.a, args.b, args.out)
    for kind, path in paths.items():
        print(f"{kind}={path}")
    return 0


def cmd_synth(args) -> int:
    samples = synth_generate(args.seed, args.count, args.size)
    base = write_samples(samples, args.out, args.split)
    print(f"wrote={len(samples)}")
    print(f"dir={base}")
    return 0


def cmd_import_weights(args) -> int:
    cfg = _profile_config(args)
    model, report = import_pretrained(args.src, cfg)
    print(report.summary())
    if args.out:
        path = save_checkpoint(args.out, model, cfg, epoch=-1)
        print(f"checkpoint={path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="changedet",
                                     description="Dual-phase change detection")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--profile", choices=sorted(PROFILES), default="desk")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--root", help="override the dataset root recorded in the checkpoint")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("predict", help="predict change maps for one image pair")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--a", required=True, help="phase-1 image")
    p.add_argument("--b", required=True, help="phase-2 image")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="train")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("import-weights", help="load pretrained backbone tensors")
    p.add_argument("--src", required=True, help="weight container file")
    p.add_argument("--config")
    p.add_argument("--profile", choices=sorted(PROFILES), default="desk")
    p.add_argument("--out", help="write the initialised model as a checkpoint")
    p.set_defaults(fn=cmd_import_weights)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
