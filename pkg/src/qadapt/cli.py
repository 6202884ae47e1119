"""Command-line front end: transform, pretrain, finetune, predict, evaluate
and inspect-checkpoint.

Exit status: 0 success, 1 usage error, 2 data or format error, 3 training
error. Every command writes a run manifest (``<out>.manifest.json``) and
leaves no partial outputs behind when it fails.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass, field

from .adapt import ArgumentError, Checkpoint, TrainConfig, finetune, load_checkpoint, pretrain, save_checkpoint
from .corpus.dataset import FormatError, atomic_write, save_native
from .corpus.formats import FORMATS, load_dataset
from .corpus.transform import transform_counts, transform_openqa, transform_rc
from .metrics import compute_metrics, save_report
from .numerics.optim import TrainingError
from .numerics.tensor import NumericalError
from .ranking import STRATEGIES, AnswerList, loads_predictions, predict_dataset, save_predictions

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_TRAIN = 0, 1, 2, 3


class UsageError(Exception):
    pass


@dataclass
class RunManifest:
    command: str
    config: dict
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: list[str] = field(default_factory=list)
    seed: int | None = None
    started_at: float = 0.0
    duration_s: float = 0.0

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=1, sort_keys=True) + "\n"


def file_digest(path) -> str:
    h = hashlib.sha256()
    try:
        with open(path, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                h.update(chunk)
    except OSError as e:
        raise FormatError(path, None, f"cannot read: {e.strerror or e}") from None
    return h.hexdigest()


class _Run:
    """Tracks written outputs so a failing command can remove them."""

    def __init__(self, command: str, args: argparse.Namespace):
        cfg = {k: v for k, v in vars(args).items() if k not in ("func", "command")}
        self.manifest = RunManifest(command, cfg, started_at=time.time())
        self.written: list[str] = []

    def input(self, path) -> None:
        self.manifest.inputs[str(path)] = file_digest(path)

    def wrote(self, path) -> None:
        self.written.append(str(path))
        self.manifest.outputs.append(str(path))

    def finish(self, out) -> None:
        self.manifest.duration_s = round(time.time() - self.manifest.started_at, 6)
        text = self.manifest.to_json()
        if out is None:
            sys.stderr.write(text)
            return
        path = f"{out}.manifest.json"
        atomic_write(path, text)
        self.written.append(path)

    def rollback(self) -> None:
        for path in self.written:
            try:
                os.unlink(path)
            except FileNotFoundError:
                pass


def _load_config(args) -> TrainConfig:
    doc = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as e:
            raise FormatError(args.config, None, f"cannot read: {e.strerror or e}") from None
        except json.JSONDecodeError as e:
            raise FormatError(args.config, e.pos, f"invalid JSON: {e.msg}") from None
        if not isinstance(doc, dict):
            raise FormatError(args.config, 0, "config must be a JSON object")
    if args.seed is not None:
        doc["seed"] = args.seed
    try:
        return TrainConfig.from_dict(doc)
    except TypeError as e:
        raise ArgumentError(f"config: {e}") from None


# ---------------------------------------------------------------- commands


def cmd_transform(args, run: _Run) -> None:
    run.input(args.input)
    ds = load_dataset(args.input, args.format)
    out = transform_rc(ds) if args.mode == "rc" else transform_openqa(ds)
    save_native(out, args.out)
    run.wrote(args.out)
    for k, v in transform_counts(ds, out).items():
        print(f"{k} {v}")


def _train(args, run: _Run, ckpt: Checkpoint | None) -> None:
    cfg = _load_config(args)
    if args.config:
        run.input(args.config)
    run.input(args.data)
    ds = load_dataset(args.data, args.format)
    run.manifest.seed = cfg.seed
    run.manifest.config["train_config"] = cfg.to_dict()
    if ckpt is None:
        out = pretrain(ds, cfg, logger=print)
    else:
        out = finetune(ckpt, ds, cfg, logger=print)
    if out.log is not None and out.log.skipped_questions:
        run.manifest.config["skipped_questions"] = out.log.skipped_questions
    save_checkpoint(out, args.out)
    run.wrote(args.out)


def cmd_pretrain(args, run: _Run) -> None:
    _train(args, run, None)


def cmd_finetune(args, run: _Run) -> None:
    run.input(args.checkpoint)
    _train(args, run, load_checkpoint(args.checkpoint))


def cmd_predict(args, run: _Run) -> None:
    if args.k < 1:
        raise UsageError("--k must be >= 1")
    if args.reader is None and args.selector is None:
        raise UsageError("predict needs --reader (and --selector for selector strategies)")
    if args.strategy != "reader_only" and args.selector is None:
        raise UsageError(f"strategy {args.strategy} needs a --selector checkpoint")
    reader_path = args.reader or args.selector
    run.input(reader_path)
    reader = load_checkpoint(reader_path).reader()
    selector = None
    if args.selector is not None:
        run.input(args.selector)
        try:
            selector = load_checkpoint(args.selector).selector()
        except ArgumentError as e:
            raise UsageError(f"--selector: {e}") from None
    run.input(args.data)
    ds = load_dataset(args.data, args.format)
    lists = predict_dataset(ds, args.strategy, reader, selector, args.k)
    save_predictions(lists, args.strategy, args.out)
    run.wrote(args.out)
    print(f"predicted {len(lists)} question(s) with strategy {args.strategy}")


def cmd_evaluate(args, run: _Run) -> None:
    run.input(args.predictions)
    run.input(args.gold)
    try:
        with open(args.predictions, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise FormatError(args.predictions, None, f"cannot read: {e.strerror or e}") from None
    lists: list[AnswerList] = []
    if text.strip():
        try:
            _, lists = loads_predictions(text)
        except json.JSONDecodeError as e:
            raise FormatError(args.predictions, e.pos, f"invalid JSON: {e.msg}") from None
        except (KeyError, TypeError, ValueError) as e:
            raise FormatError(args.predictions, None, f"malformed prediction file: {e}") from None
    gold = load_dataset(args.gold, args.format).gold()
    unknown = sorted({al.question_id for al in lists} - set(gold))
    if unknown:
        raise FormatError(args.predictions, None, f"predictions for unknown question ids: {', '.join(unknown)}")
    report = compute_metrics(lists, gold)
    save_report(report, args.out)
    run.wrote(args.out)
    s, l, m = report.percentages()
    print(f"S.Acc {s}")
    print(f"L.Acc {l}")
    print(f"MRR {m}")


def cmd_inspect(args, run: _Run) -> None:
    run.input(args.checkpoint)
    c = load_checkpoint(args.checkpoint)
    info = {
        "version": c.version,
        "kind": c.kind,
        "config": c.config.to_dict(),
        "provenance": c.provenance,
        "vocab_size": len(c.vocab),
        "tensors": [{"name": n, "shape": list(a.shape)} for n, a in c.tensors.items()],
        "parameter_count": int(sum(a.size for a in c.tensors.values())),
    }
    text = json.dumps(info, indent=1) + "\n"
    sys.stdout.write(text)
    if args.out:
        atomic_write(args.out, text)
        run.wrote(args.out)


# ---------------------------------------------------------------- parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="qadapt", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def common(sp, out_required=True):
        sp.add_argument("--out", required=out_required, help="output path")
        sp.add_argument("--format", choices=FORMATS, default="native", help="input dataset format")

    t = sub.add_parser("transform", help="annotate answer spans (rc or openqa)")
    t.add_argument("input")
    t.add_argument("--mode", choices=("rc", "openqa"), required=True)
    common(t)
    t.set_defaults(func=cmd_transform)

    for name, func in (("pretrain", cmd_pretrain), ("finetune", cmd_finetune)):
        s = sub.add_parser(name, help=f"{name} a model")
        s.add_argument("data")
        s.add_argument("--config", help="JSON file with training config fields")
        s.add_argument("--seed", type=int)
        if name == "finetune":
            s.add_argument("--checkpoint", required=True, help="checkpoint to continue from")
        common(s)
        s.set_defaults(func=func)

    pr = sub.add_parser("predict", help="top-k answer lists")
    pr.add_argument("data")
    pr.add_argument("--reader", help="checkpoint providing the reader")
    pr.add_argument("--selector", help="pspr checkpoint providing the selector")
    pr.add_argument("--strategy", choices=STRATEGIES, default="reader_only")
    pr.add_argument("--k", type=int, default=5)
    pr.add_argument("--seed", type=int, help="recorded in the manifest; prediction is deterministic")
    common(pr)
    pr.set_defaults(func=cmd_predict)

    ev = sub.add_parser("evaluate", help="S.Acc, L.Acc and MRR of a prediction file")
    ev.add_argument("predictions")
    ev.add_argument("gold", help="dataset with gold answers")
    common(ev)
    ev.set_defaults(func=cmd_evaluate)

    ins = sub.add_parser("inspect-checkpoint", help="print a checkpoint summary")
    ins.add_argument("checkpoint")
    ins.add_argument("--out", help="also write the summary here")
    ins.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    run = _Run(args.command, args)
    try:
        args.func(args, run)
        run.finish(getattr(args, "out", None))
        return EXIT_OK
    except (UsageError, ArgumentError) as e:
        run.rollback()
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, ValueError, KeyError) as e:
        run.rollback()
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingError, NumericalError) as e:
        run.rollback()
        print(f"training error: {e}", file=sys.stderr)
        return EXIT_TRAIN
    except BaseException:
        run.rollback()
        raise


if __name__ == "__main__":
    sys.exit(main())
