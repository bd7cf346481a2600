"""Command-line entry point: ``lea <subcommand> [options]``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from lea.data import DatasetError, load_tsv
from lea.harness import commands as cmd
from lea.harness.config import ConfigSyntaxError, KNOWN_KEYS, load_config
from lea.harness.report import ExperimentReport, sweep_gap
from lea.model import ManifestMismatch
from lea.noise import NoiseConfig


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="flat key = value config file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key (repeatable)")
    p.add_argument("--data", type=Path, help="directory with train/val/test.tsv (default: synthetic)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lea", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("corrupt", help="write typo replicas of a TSV file")
    p.add_argument("input", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--replicas", type=int, default=3)
    p.add_argument("--p-word", type=float, default=0.2)
    p.add_argument("--p-sentence", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", help="train one model and save checkpoint + report")
    _common(p)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("eval", help="evaluate a checkpoint on clean and typo test splits")
    p.add_argument("checkpoint", type=Path)
    p.add_argument("--test", type=Path, help="test TSV (default: synthetic test split)")
    p.add_argument("--config", type=Path, help="config the checkpoint must match")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--replicas", type=int, default=3)
    p.add_argument("--p-word", type=float, default=0.2)
    p.add_argument("--out", type=Path, help="report stem (writes .json and .txt)")

    p = sub.add_parser("sweep", help="F1 versus p_word for vanilla, DA and DA+LEA")
    _common(p)
    p.add_argument("--checkpoints", nargs=3, type=Path, metavar=("VANILLA", "DA", "LEA"),
                   help="evaluate saved models instead of training them")
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--grid", type=float, nargs="+", default=list(cmd.DEFAULT_GRID))
    p.add_argument("--out", type=Path, required=True, help="output directory")

    p = sub.add_parser("ablate", help="vary one LEA design axis")
    _common(p)
    p.add_argument("axis", choices=cmd.ABLATION_AXES)
    p.add_argument("--out", type=Path, help="report stem")

    p = sub.add_parser("gradcheck", help="finite-difference check of the toy model")
    p.add_argument("--coords", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("describe", help="print parameter counts for a config")
    _common(p)
    p.add_argument("--keyboard", action="store_true", help="also print the keyboard adjacency table")
    p.add_argument("--keys", action="store_true", help="list the accepted config keys")
    p.add_argument("--json", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _dispatch(args)
    except (DatasetError, ConfigSyntaxError, ManifestMismatch, OSError, ValueError) as exc:
        print(f"lea {args.command}: {exc}", file=sys.stderr)
        return 2


def _dispatch(args) -> int:
    if args.command == "corrupt":
        noise = NoiseConfig(p_word=args.p_word, p_sentence=args.p_sentence, seed=args.seed)
        for path in cmd.cmd_corrupt(args.input, noise, args.replicas, args.out):
            print(path)
        return 0

    if args.command == "gradcheck":
        report = cmd.cmd_gradcheck(n_coords=args.coords, seed=args.seed)
        print(report.summary())
        return 0 if report.passed else 1

    exp = load_config(getattr(args, "config", None), args.overrides)

    if args.command == "describe":
        if args.keys:
            print("\n".join(KNOWN_KEYS))
            return 0
        cfg = exp.effective_model
        print(cmd.describe_json(cfg) if args.json else cmd.cmd_describe(cfg, keyboard=args.keyboard))
        return 0

    if args.command == "train":
        splits = cmd.load_splits(exp, args.data)
        _, report = cmd.cmd_train(exp, args.out, splits)
        print(report.table())
        return 0

    if args.command == "eval":
        test = load_tsv(args.test, "test") if args.test else cmd.load_splits(exp).test
        expected = None
        if args.config or args.overrides:
            from lea.tokenizer import Vocab
            vocab_size = len(Vocab.load(args.checkpoint / "vocab.txt"))
            expected = dataclasses.replace(exp.effective_model, vocab_size=vocab_size)
        report = cmd.cmd_eval(args.checkpoint, test, args.replicas, args.p_word, expected,
                              name=args.checkpoint.name)
        if args.out:
            report.save(args.out)
        print(report.table())
        return 0

    if args.command == "sweep":
        splits = cmd.load_splits(exp, args.data)
        args.out.mkdir(parents=True, exist_ok=True)
        if args.checkpoints:
            models = {k: [cmd.load_checkpoint(p)] for k, p in zip(cmd.MODEL_KINDS, args.checkpoints)}
            rows = cmd.cmd_sweep(models, splits.test, args.grid)
            report = ExperimentReport({"checkpoints": [str(p) for p in args.checkpoints]}, sweep=rows)
        else:
            comp = cmd.run_comparison(exp, args.seeds, splits=splits, grid=args.grid)
            rows, report = comp.sweep, comp.report
            print(report.table())
        cmd.write_sweep(rows, args.out / "sweep.csv")
        report.save(args.out / "report")
        gaps = sweep_gap(rows)
        print("p_word  lea-da gap")
        for p, g in gaps:
            print(f"{p:<6.2f}  {100 * g:+.2f}")
        return 0

    if args.command == "ablate":
        rows = cmd.cmd_ablate(exp, args.axis, cmd.load_splits(exp, args.data))
        table = cmd.ablation_table(args.axis, rows)
        print(table)
        if args.out:
            args.out.parent.mkdir(parents=True, exist_ok=True)
            args.out.with_suffix(".txt").write_text(table + "\n", encoding="utf-8")
            args.out.with_suffix(".json").write_text(
                json.dumps([dataclasses.asdict(r) for r in rows], indent=2) + "\n", encoding="utf-8")
        return 0

    raise AssertionError(args.command)


if __name__ == "__main__":
    sys.exit(main())
