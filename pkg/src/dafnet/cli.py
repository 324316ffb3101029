"""Command line front end: ``dafnet {train,predict,evaluate,selftest}``."""

from __future__ import annotations

import argparse
import logging
import sys
import tempfile
from pathlib import Path

from .config import TrainConfig, parse_bool
from .data import IMAGE_SUFFIXES

log = logging.getLogger("dafnet")


def _config(args) -> TrainConfig:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.input_size is not None:
        overrides["input_size"] = args.input_size
    for name in ("gfa", "cpa", "daf"):
        value = getattr(args, f"toggle_{name}")
        if value is not None:
            overrides[f"use_{name}"] = value
    if args.config:
        return TrainConfig.load(args.config, **overrides)
    return TrainConfig(**overrides)


def _image_paths(target: Path) -> list[Path]:
    if target.is_dir():
        images = target / "images" if (target / "images").is_dir() else target
        return sorted(p for p in images.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    return [target]


def cmd_train(args) -> int:
    from .train import train

    config = _config(args)
    ckpt = train(config, args.dataset, out_dir=args.out)
    path = ckpt.save(Path(args.out) / "final.safetensors")
    print(f"saved {path} (epoch {ckpt.epoch}, iteration {ckpt.iteration})")
    return 0


def cmd_predict(args) -> int:
    from .train import predict

    paths = [p for target in args.images for p in _image_paths(Path(target))]
    written = predict(args.checkpoint, paths, args.out, export_edges=args.edges)
    print(f"wrote {len(written)} maps to {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    from .metrics import evaluate_dataset
    from .train import evaluate

    if args.pred:
        report = evaluate_dataset(args.pred, Path(args.dataset) / args.split / "GT")
        if args.out:
            report.write(args.out)
    else:
        report = evaluate(args.checkpoint, args.dataset, args.split, args.out, self_check=args.self_check)
    sys.stdout.write(report.to_text())
    return 0


def cmd_selftest(args) -> int:
    """GT-vs-GT check on ``--dataset``, or a tiny synthetic train/predict/evaluate round."""
    from .synthetic import write_dataset
    from .train import evaluate, train

    failures = 0

    def check(name: str, ok: bool, detail: str = "") -> None:
        nonlocal failures
        failures += not ok
        print(f"[{'PASS' if ok else 'FAIL'}] {name} {detail}".rstrip())

    with tempfile.TemporaryDirectory() as tmp:
        root = Path(args.dataset) if args.dataset else Path(tmp) / "data"
        if not args.dataset:
            write_dataset(root, "train", 4, size=32, seed=1)
            write_dataset(root, "test", 2, size=32, seed=2)
        gt = evaluate(None, root, args.split, self_check=True)
        check("gt-vs-gt", gt.f_beta == 1.0 and gt.mae == 0.0 and abs(gt.s_measure - 1.0) < 1e-9,
              f"F={gt.f_beta:.4f} MAE={gt.mae:.4f} S={gt.s_measure:.4f}")
        if not args.dataset:
            config = TrainConfig(epochs=2, lr_constant_epochs=1, ohem_start_epoch=2, batch_size=2,
                                 input_size=32, stage_channels=[6, 6, 9, 9, 9],
                                 stage_convs=[1, 1, 1, 1, 1], max_iters=4, seed=args.seed or 0)
            ckpt = train(config, root)
            check("train", ckpt.iteration == 4, f"iterations={ckpt.iteration}")
            report = evaluate(ckpt, root, "test", Path(tmp) / "eval")
            check("evaluate", 0.0 <= report.mae <= 1.0, f"MAE={report.mae:.4f}")
    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dafnet", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--dataset", help="dataset root with <split>/images and <split>/GT")
        p.add_argument("--checkpoint")
        p.add_argument("--out")
        p.add_argument("--seed", type=int)
        p.add_argument("--input-size", type=int)
        for name in ("gfa", "cpa", "daf"):
            p.add_argument(f"--toggle-{name}", type=parse_bool, metavar="BOOL")

    p = sub.add_parser("train", help="train a model")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="write saliency PNGs")
    common(p)
    p.add_argument("images", nargs="+", help="image files or directories")
    p.add_argument("--edges", action="store_true", help="also export edge maps")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score predictions against ground truth")
    common(p)
    p.add_argument("--split", default="test")
    p.add_argument("--pred", help="score an existing prediction directory instead")
    p.add_argument("--self-check", action="store_true", help="score GT against itself")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("selftest", help="quick end-to-end sanity run")
    common(p)
    p.add_argument("--split", default="test")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    for required in {"train": ("dataset", "out"), "predict": ("checkpoint", "out")}.get(args.command, ()):
        if getattr(args, required) is None:
            raise SystemExit(f"dafnet {args.command}: --{required} is required")
    if args.command == "evaluate" and not (args.self_check or args.pred) and not args.checkpoint:
        raise SystemExit("dafnet evaluate: --checkpoint, --pred or --self-check is required")
    if args.command == "evaluate" and not args.dataset:
        raise SystemExit("dafnet evaluate: --dataset is required")
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
