"""asta3d command line: generate | train | eval | infer."""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
from dataclasses import replace
from pathlib import Path

from .data import generate, write_sequence
from .trainer import load_config, run_eval, run_infer, run_training, write_report

log = logging.getLogger("asta3d")


def cmd_generate(config, out=None, seed=None, force=False):
    spec = config.data if seed is None else replace(config.data, seed=seed)
    root = Path(out or config.paths.dataset)
    if root.exists() and any(root.iterdir()):
        if not force:
            raise FileExistsError(f"{root} exists and is not empty (use --force to overwrite)")
        for split in ("train", "test"):
            shutil.rmtree(root / split, ignore_errors=True)
    splits = {"train": generate(spec),
              "test": generate(replace(spec, seed=spec.seed + 1, count=config.test_count))}
    for name, seqs in splits.items():
        d = root / name
        d.mkdir(parents=True, exist_ok=True)
        for i, seq in enumerate(seqs):
            write_sequence(seq, d / f"{i:05d}.seq")
    return {name: len(seqs) for name, seqs in splits.items()}


def _parser():
    p = argparse.ArgumentParser(prog="asta3d", description=__doc__)
    sub = p.add_subparsers(dest="verb", required=True)

    g = sub.add_parser("generate", help="write a synthetic toy dataset")
    g.add_argument("--config", required=True)
    g.add_argument("--seed", type=int)
    g.add_argument("--out", help="dataset directory (default: paths.dataset)")
    g.add_argument("--force", action="store_true")

    t = sub.add_parser("train", help="train and write checkpoint + report")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int, help="overrides the init and shuffle seeds")
    t.add_argument("--out", help="directory for model.ckpt and report.json")

    e = sub.add_parser("eval", help="metrics of a checkpoint on a dataset")
    e.add_argument("checkpoint")
    e.add_argument("dataset", help="dataset root, split directory, or one .seq file")
    e.add_argument("--split")
    e.add_argument("--out", help="report path (default: stdout)")

    i = sub.add_parser("infer", help="predictions for one sequence file")
    i.add_argument("checkpoint")
    i.add_argument("sequence")
    i.add_argument("--out", help="predictions path (default: stdout)")

    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _emit(obj, out):
    text = json.dumps(obj, indent=2, sort_keys=True)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        print(text)


def run(args):
    if args.verb == "generate":
        counts = cmd_generate(load_config(args.config), args.out, args.seed, args.force)
        log.info("wrote %s", counts)
    elif args.verb == "train":
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seeds.init = cfg.seeds.shuffle = args.seed
        if args.out:
            cfg.paths.checkpoint = str(Path(args.out) / "model.ckpt")
            cfg.paths.report = str(Path(args.out) / "report.json")
        report = run_training(cfg, progress=lambda ep, h: log.info(
            "epoch %d  loss %.5f%s", ep + 1, h["loss"][-1],
            f"  val {h['val'][-1]:.4f}" if h["val"] else ""))
        log.info("final %s", json.dumps(report["final_metrics"]))
    elif args.verb == "eval":
        report = run_eval(args.checkpoint, args.dataset, args.split)
        if args.out:
            write_report(report, args.out)
        else:
            _emit(report, None)
    elif args.verb == "infer":
        _emit(run_infer(args.checkpoint, args.sequence), args.out)


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    threads = os.environ.get("ASTA3D_THREADS")
    try:
        if threads:
            from threadpoolctl import threadpool_limits
            with threadpool_limits(limits=int(threads)):
                run(args)
        else:
            run(args)
    except Exception as exc:  # one-line diagnostic, nonzero exit
        print(f"asta3d {args.verb}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
