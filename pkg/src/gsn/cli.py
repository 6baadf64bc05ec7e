"""``gsn`` command-line entry point.

Errors are reported on stderr as a single ``error:<category>: <message>``
line; configuration and usage problems exit with status 2, everything else
with status 1.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .classify import count_parameters, evaluate, predict_prepared, train
from .config import PipelineConfig
from .data import gen_synth, load_dataset
from .errors import ConfigError, EvalError, GsnError
from .imagegraph import load_image
from .model import load_model, model_tensors, save_model
from .pipeline import feature_source, prepare_image, prepare_paths

LOG_COLUMNS = ("epoch", "lr", "train_loss", "val_loss", "val_accuracy")


class UsageError(GsnError):
    category = "usage"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def write_log(path, log) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for row in log:
            w.writerow([row["epoch"]] + [repr(float(row[c])) for c in LOG_COLUMNS[1:]])


def metrics_table(metrics: dict) -> str:
    lines = [f"accuracy {metrics['accuracy']:.4f} ({metrics['correct']}/{metrics['total']})",
             f"{'class':<16}{'precision':>10}{'recall':>10}{'support':>9}"]
    for row in metrics["per_class"]:
        lines.append(f"{row['class']:<16}{row['precision']:>10.4f}{row['recall']:>10.4f}{row['support']:>9d}")
    lines.append("confusion (rows = true, cols = predicted):")
    lines += [" ".join(f"{v:4d}" for v in r) for r in metrics["confusion"]]
    return "\n".join(lines)


def cmd_gen_synth(args) -> int:
    gen_synth(args.out, args.classes, args.per_class, args.size, args.seed, args.test_per_class)
    return 0


def cmd_train(args) -> int:
    config = PipelineConfig.load(args.config)
    manifest = load_dataset(args.data)
    if len(manifest.class_to_id) < 2:
        raise ConfigError("training needs at least two classes")
    preps = prepare_paths(manifest.paths, config)
    model, log = train(preps, manifest.labels, config, manifest.class_names)
    save_model(model, args.out)
    log_path = args.log or str(args.out) + ".log.csv"
    write_log(log_path, log)
    print(f"wrote {args.out} ({count_parameters(model)} trainable parameters, {len(log)} epochs)", file=sys.stderr)
    return 0


def run_eval(model, data_dir) -> dict:
    manifest = load_dataset(data_dir)
    names = manifest.class_names
    if len(names) != len(model.class_names):
        raise EvalError(f"dataset has {len(names)} classes, model has {len(model.class_names)}")
    unknown = sorted(set(names) - set(model.class_names))
    if unknown:
        raise EvalError(f"dataset classes {unknown} unknown to the model")
    ids = {c: i for i, c in enumerate(model.class_names)}
    labels = [ids[c] for _, c in manifest.entries]
    preps = prepare_paths(manifest.paths, model.config)
    return evaluate(model, preps, labels)


def cmd_eval(args) -> int:
    metrics = run_eval(load_model(args.model), args.data)
    if args.format == "table":
        print(metrics_table(metrics))
    else:
        print(json.dumps(metrics, sort_keys=True))
    return 0


def cmd_predict(args) -> int:
    model = load_model(args.model)
    prep = prepare_image(load_image(args.image), model.config, feature_source(model.config, args.image))
    cls, probs = predict_prepared(model, prep)
    print(f"{model.class_names[cls]}\t{probs[cls]:.6f}")
    return 0


def cmd_inspect(args) -> int:
    model = load_model(args.model)
    tensors = model_tensors(model)
    trainable = model.parameters()
    print("config:")
    for key, value in model.config.to_dict().items():
        print(f"  {key} = {json.dumps(value)}")
    print("tensors:")
    for name, value in tensors.items():
        tag = "" if name in trainable else "  (frozen)"
        print(f"  {name:<16} {' x '.join(str(d) for d in np.shape(value))}{tag}")
    d = model.dictionary.atoms
    print(f"dictionary: {d.shape[0]} x {d.shape[1]}")
    print("classes: " + ", ".join(f"{i}={n}" for i, n in enumerate(model.class_names)))
    print(f"trainable parameters: {count_parameters(model)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gsn", description="Graph sub-graph network image classifier")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("gen-synth", help="write a synthetic texture dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--classes", type=int, default=4)
    s.add_argument("--per-class", type=int, default=50)
    s.add_argument("--test-per-class", type=int, default=0)
    s.add_argument("--size", type=int, default=64)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_gen_synth)

    s = sub.add_parser("train", help="train a model")
    s.add_argument("--config", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--log", help="training log CSV (default: <out>.log.csv)")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="evaluate a model on a labelled dataset")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--format", choices=("json", "table"), default="json")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("predict", help="classify one image")
    s.add_argument("--model", required=True)
    s.add_argument("--image", required=True)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("inspect", help="summarize a model file")
    s.add_argument("--model", required=True)
    s.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except GsnError as exc:
        print(f"error:{exc.category}: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, (ConfigError, UsageError)) else 1
    except FileNotFoundError as exc:
        print(f"error:io: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error:io: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
