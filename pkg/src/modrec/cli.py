"""Command-line entry point: gen / train / eval / report.

Experiments are JSON-configured; `--set section.key=value` overrides any
config file entry, and a few sugar flags (--ablation, --augment, --ratio)
map onto the common experiment axes. All randomness in a run derives from
the single top-level seed. Exit codes: 0 ok, 2 config error, 3 numeric
failure, 4 I/O error.
"""

import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path

from .checkpoint import load_params
from .evaluate import compare_runs, complexity_report, evaluate, load_report, write_report
from .model import Model, ModelConfig
from .preprocess import to_ap_dataset
from .seeding import child_seed
from .sigfile import read_sigf, write_sigf
from .siggen import GenSpec, generate_dataset
from .train import TrainConfig, train_loop

ABLATIONS = {
    "no-se": "use_se",
    "no-transformer": "use_transformer",
    "no-lstm": "use_lstm",
    "no-talking-heads": "use_talking_heads",
    "no-reglu": "use_reglu",
}


def _parse_ratio(text):
    try:
        return float(Fraction(text))
    except (ValueError, ZeroDivisionError) as err:
        raise ValueError(f"bad ratio {text!r}: {err}") from None


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _apply_overrides(config, overrides):
    for item in overrides or ():
        if "=" not in item:
            raise ValueError(f"--set expects key=value, got {item!r}")
        dotted, raw = item.split("=", 1)
        keys = dotted.split(".")
        target = config
        for key in keys[:-1]:
            if key not in target or not isinstance(target[key], dict):
                target[key] = {}
            target = target[key]
        target[keys[-1]] = _parse_value(raw)
    return config


def _load_json(path):
    with open(path) as fh:
        return json.load(fh)


def _write_json(path, data):
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_gen(args) -> int:
    spec_dict = _load_json(args.spec) if args.spec else {}
    if args.seed is not None:
        spec_dict["seed"] = args.seed
    spec = GenSpec.from_dict(spec_dict)
    dataset = generate_dataset(spec)
    if args.domain == "ap":
        dataset = to_ap_dataset(dataset)
    write_sigf(args.out, dataset, spec=spec, seed=spec.seed)
    print(f"wrote {len(dataset.frames)} frames ({args.domain}) to {args.out}")
    return 0


def _resolve_experiment(args):
    config = _load_json(args.config) if args.config else {}
    _apply_overrides(config, args.set)
    if args.ablation:
        config.setdefault("model", {})[ABLATIONS[args.ablation]] = False
    if args.augment:
        config.setdefault("augment", {})["strategy"] = args.augment.replace("-", "_")
    if args.ratio:
        config.setdefault("augment", {})["ratio"] = _parse_ratio(args.ratio)
    if args.seed is not None:
        config["seed"] = args.seed
    if args.out_dir:
        config["output_dir"] = args.out_dir
    return config


def cmd_train(args) -> int:
    config = _resolve_experiment(args)
    seed = int(config.get("seed", 0))

    dataset_cfg = config.get("dataset", {})
    if not isinstance(dataset_cfg, dict) or not ("path" in dataset_cfg or "spec" in dataset_cfg):
        raise ValueError("config needs dataset.path (SIGF file) or dataset.spec")

    model_cfg = ModelConfig.from_dict(config.get("model", {}))
    train_cfg_dict = dict(config.get("train", {}))
    if "augment" in config:
        train_cfg_dict["augment"] = dict(config["augment"])
    train_cfg_dict.setdefault("seed", child_seed(seed, "train"))
    train_cfg = TrainConfig.from_dict(train_cfg_dict)

    out_dir = config.get("output_dir")
    if out_dir is None:
        raise ValueError("config needs output_dir")
    out_dir = Path(out_dir)

    if "path" in dataset_cfg:
        dataset = read_sigf(dataset_cfg["path"])
    else:
        spec_dict = dict(dataset_cfg["spec"])
        spec_dict.setdefault("seed", child_seed(seed, "gen"))
        dataset = generate_dataset(GenSpec.from_dict(spec_dict))
    dataset = to_ap_dataset(dataset)

    if model_cfg.input_len != dataset.frames[0].n:
        raise ValueError(f"model input_len {model_cfg.input_len} != dataset frame "
                         f"length {dataset.frames[0].n}")
    if model_cfg.num_classes != len(dataset.class_names):
        raise ValueError(f"model num_classes {model_cfg.num_classes} != dataset "
                         f"classes {len(dataset.class_names)}")

    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(out_dir / "config.json", {
        "seed": seed,
        "dataset": dataset_cfg,
        "model": model_cfg.to_dict(),
        "train": train_cfg.to_dict(),
        "output_dir": str(out_dir),
    })

    model = Model(model_cfg, seed=child_seed(seed, "init"))
    result = train_loop(model, dataset, train_cfg, out_dir=out_dir,
                        log=None if args.quiet else _print_epoch)
    print(f"best val loss {result.best_val_loss:.4f} at epoch {result.best_epoch}; "
          f"artifacts in {out_dir}")
    return 0


def _print_epoch(row):
    print(f"epoch {row['epoch']:3d}  train {row['train_loss']:.4f}  "
          f"val {row['val_loss']:.4f}  acc {row['val_acc']:.3f}  lr {row['lr']:g}")


def cmd_eval(args) -> int:
    arrays, extra = load_params(args.checkpoint)
    if not extra or "model_config" not in extra:
        raise ValueError(f"{args.checkpoint}: no model_config in checkpoint header")
    model_cfg = ModelConfig.from_dict(extra["model_config"])
    model = Model(model_cfg, seed=0).load_state(arrays)

    dataset = to_ap_dataset(read_sigf(args.data))
    report = evaluate(model, dataset, which=args.split, low_snr_ref=args.low_snr_ref)
    write_report(report, args.out_dir)
    complexity = complexity_report(model_cfg)
    _write_json(Path(args.out_dir) / "complexity.json", complexity)
    print(f"avg {report.avg_acc:.4f}  max {report.max_acc:.4f}  "
          f"low({report.low_snr_ref:g}dB) "
          f"{'n/a' if report.low_snr_acc is None else f'{report.low_snr_acc:.4f}'}  "
          f"params {report.params}  macs {report.macs}")
    return 0


def cmd_report(args) -> int:
    reports = []
    for run_dir in args.run_dirs:
        path = Path(run_dir) / "report.json"
        if not path.exists():
            raise FileNotFoundError(f"{path} not found")
        reports.append((Path(run_dir).name, load_report(path)))

    grid = sorted(reports[0][1]["per_snr_accuracy"], key=float)
    header = ["run"] + [f"{float(s):g}dB" for s in grid] + ["max", "low", "avg"]
    rows = [header]
    for name, rep in reports:
        low = rep.get("low_snr_acc")
        rows.append([name]
                    + [f"{rep['per_snr_accuracy'][s]:.3f}" for s in grid]
                    + [f"{rep['max_acc']:.3f}",
                       "n/a" if low is None else f"{low:.3f}",
                       f"{rep['avg_acc']:.3f}"])
    if len(reports) > 1:
        base = reports[0][1]
        for name, rep in reports[1:]:
            delta = compare_runs(base, rep)
            rows.append([f"{name}-delta"]
                        + [f"{delta['per_snr_delta'][s]:+.3f}" for s in grid]
                        + [f"{delta['max_delta']:+.3f}",
                           "n/a" if delta["low_snr_delta"] is None
                           else f"{delta['low_snr_delta']:+.3f}",
                           f"{delta['avg_delta']:+.3f}"])

    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    for row in rows:
        print("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
    if args.out:
        with open(args.out, "w") as fh:
            for row in rows:
                fh.write(",".join(row) + "\n")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="modrec",
                                     description="modulation recognition toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a SIGF dataset")
    gen.add_argument("--spec", help="generation spec JSON file (defaults used if omitted)")
    gen.add_argument("--out", required=True, help="output SIGF path")
    gen.add_argument("--domain", choices=("iq", "ap"), default="iq")
    gen.add_argument("--seed", type=int, default=None, help="override the spec seed")
    gen.set_defaults(fn=cmd_gen)

    train = sub.add_parser("train", help="train a model from an experiment config")
    train.add_argument("--config", help="experiment config JSON")
    train.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a dotted config key, e.g. model.tf_layers=4")
    train.add_argument("--ablation", choices=sorted(ABLATIONS))
    train.add_argument("--augment", choices=("none", "discrete-ss", "continuous-ss",
                                             "noise-add"))
    train.add_argument("--ratio", help="substitution ratio, e.g. 1/16 or 0.0625")
    train.add_argument("--seed", type=int, default=None)
    train.add_argument("--out-dir", help="override output_dir")
    train.add_argument("--quiet", action="store_true")
    train.set_defaults(fn=cmd_train)

    ev = sub.add_parser("eval", help="evaluate a checkpoint on a SIGF dataset")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--data", required=True, help="SIGF dataset path")
    ev.add_argument("--out-dir", required=True)
    ev.add_argument("--split", default="test", choices=("train", "val", "test"))
    ev.add_argument("--low-snr-ref", type=float, default=-6.0)
    ev.set_defaults(fn=cmd_eval)

    rep = sub.add_parser("report", help="tabulate and compare run reports")
    rep.add_argument("run_dirs", nargs="+")
    rep.add_argument("--out", help="also write the table as CSV")
    rep.set_defaults(fn=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, KeyError, TypeError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except (FloatingPointError, ZeroDivisionError, RuntimeError) as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return 3
    except OSError as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
