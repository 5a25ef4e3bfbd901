"""Command-line front door for the full pipeline.

Subcommands: verify-data, train-base, train-gates, eval, gradcheck,
export-figures.  Every run is driven by a JSON config whose defaults match
the published experiment settings; unknown config keys are rejected.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, fields

from . import data as data_mod
from . import persist
from .errors import ConfigError, GatedNetError, MissingGatesError
from .evaluation import (
    GateSnapshot,
    evaluate,
    export_gate_histograms,
    export_gate_images,
    write_confusion_csv,
)
from .ndcore import RngStream
from .nn import MlpConfig
from .optim import finite_diff_check
from .train import TrainSchedule, train_base, train_gates


@dataclass(frozen=True)
class RunConfig:
    data_dir: str = "./data"
    out_dir: str = "./out"
    seed: int = 0
    hidden_sizes: tuple[int, ...] = (256, 128)
    dropout: float = 0.5
    lr: float = 0.01
    batch_size: int = 32
    epochs_base: int = 30
    epochs_gates: int = 15
    val_fraction: float = 0.1
    val_interval_updates: int = 200
    rmsprop_rho: float = 0.99
    rmsprop_eps: float = 1e-8

    def mlp_config(self) -> MlpConfig:
        return MlpConfig(hidden_sizes=tuple(self.hidden_sizes), dropout_rate=self.dropout)

    def schedule(self) -> TrainSchedule:
        return TrainSchedule(
            epochs_base=self.epochs_base,
            epochs_gates=self.epochs_gates,
            batch_size=self.batch_size,
            val_interval_updates=self.val_interval_updates,
            lr=self.lr,
            seed=self.seed,
            rmsprop_rho=self.rmsprop_rho,
            rmsprop_eps=self.rmsprop_eps,
        )


_CONFIG_TYPES = {f.name: f.type for f in fields(RunConfig)}


def load_config(path: str | None) -> RunConfig:
    """Strict JSON config: unknown keys rejected, missing keys take defaults."""
    if path is None:
        return RunConfig()
    with open(path, encoding="utf-8") as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: not valid JSON ({e})") from e
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    kwargs = {}
    for key, value in raw.items():
        if key not in _CONFIG_TYPES:
            raise ConfigError(f"{path}: unknown config key {key!r}")
        kwargs[key] = _coerce(path, key, value)
    return RunConfig(**kwargs)


def _coerce(path: str, key: str, value):
    expected = _CONFIG_TYPES[key]
    if key == "hidden_sizes":
        if not isinstance(value, list) or not all(
            isinstance(v, int) and not isinstance(v, bool) for v in value
        ):
            raise ConfigError(f"{path}: {key} must be a list of integers")
        return tuple(value)
    if expected in ("int", int.__name__):
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(f"{path}: {key} must be an integer, got {value!r}")
        return value
    if expected in ("float", float.__name__):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: {key} must be a number, got {value!r}")
        return float(value)
    if expected in ("str", str.__name__):
        if not isinstance(value, str):
            raise ConfigError(f"{path}: {key} must be a string, got {value!r}")
        return value
    raise ConfigError(f"{path}: {key} has unsupported type")  # pragma: no cover


def _load_split(config: RunConfig):
    train, test = data_mod.load_cifar_dir(config.data_dir)
    rng = RngStream(config.seed).child("split")
    return data_mod.split_train_val(train, config.val_fraction, rng, test=test)


def _write_metrics(path, report) -> None:
    payload = report.as_dict()
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2)
        f.write("\n")


def _ensure_parent(path: str) -> None:
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)


def _cmd_verify_data(args) -> int:
    config = load_config(args.config)
    data_dir = args.data or config.data_dir
    problems = data_mod.verify_data(data_dir)
    if problems:
        for p in problems:
            print(f"verify-data: {p}", file=sys.stderr)
        return 1
    print(f"verify-data: ok ({data_dir})")
    return 0


def _cmd_train_base(args) -> int:
    config = load_config(args.config)
    split = _load_split(config)
    taxonomy = data_mod.default_taxonomy()
    rng = RngStream(config.seed).child("base")
    params, stats, curve = train_base(split, config.mlp_config(), config.schedule(), rng)
    _ensure_parent(args.out)
    persist.save(args.out, persist.encode_base(params, stats, taxonomy))
    os.makedirs(config.out_dir, exist_ok=True)
    curve.write_csv(os.path.join(config.out_dir, "loss_curve.csv"), append=False)
    print(f"train-base: saved {args.out} (best val loss {curve.min_val_loss('base'):.4f})")
    return 0


def _cmd_train_gates(args) -> int:
    config = load_config(args.config)
    base = persist.load_base(args.base)
    split = _load_split(config)
    rng = RngStream(config.seed).child(f"gates:{args.category}")
    biases, curve = train_gates(
        base.params,
        base.norm_stats,
        args.category,
        split,
        base.taxonomy,
        config.mlp_config(),
        config.schedule(),
        rng,
    )
    blob = persist.encode_gates(
        args.category, biases, base.digest, base.taxonomy, base.layer_sizes
    )
    _ensure_parent(args.out)
    persist.save(args.out, blob)
    os.makedirs(config.out_dir, exist_ok=True)
    curve.write_csv(os.path.join(config.out_dir, "loss_curve.csv"), append=True)
    tag = f"gates_{args.category}"
    print(f"train-gates: saved {args.out} (best val loss {curve.min_val_loss(tag):.4f})")
    return 0


def _load_bank(args, base):
    if not args.gates:
        return None
    gate_ckpts = [persist.load_gates(p) for p in args.gates]
    return persist.build_gate_bank(base, gate_ckpts)


def _cmd_eval(args) -> int:
    config = load_config(args.config)
    base = persist.load_base(args.base)
    bank = _load_bank(args, base)
    _, test = data_mod.load_cifar_dir(config.data_dir)
    report = evaluate(base.params, base.norm_stats, test, base.taxonomy, gates=bank)
    os.makedirs(args.report, exist_ok=True)
    _write_metrics(os.path.join(args.report, "metrics.json"), report)
    write_confusion_csv(
        os.path.join(args.report, f"confusion_{report.model}.csv"),
        report.confusion,
        base.taxonomy,
    )
    if bank is not None:
        snapshot = GateSnapshot.from_bank(bank)
        export_gate_images(snapshot, args.report)
        export_gate_histograms(snapshot, os.path.join(args.report, "gate_raw.csv"))
    print(
        f"eval[{report.model}]: loss {report.test_loss:.4f} "
        f"acc {report.test_accuracy:.4f} isolation {report.categorical_isolation:.4f}"
    )
    return 0


def _cmd_gradcheck(args) -> int:
    report = finite_diff_check()
    for line in report.lines(args.tolerance):
        print(line)
    if report.passed(args.tolerance):
        print(f"gradcheck: ok (worst {report.worst():.3e} < {args.tolerance})")
        return 0
    print(f"gradcheck: FAILED (worst {report.worst():.3e})", file=sys.stderr)
    return 1


def _cmd_export_figures(args) -> int:
    if not args.gates:
        raise MissingGatesError("export-figures needs at least one --gates checkpoint")
    base = persist.load_base(args.base)
    bank = _load_bank(args, base)
    os.makedirs(args.report, exist_ok=True)
    snapshot = GateSnapshot.from_bank(bank)
    paths = export_gate_images(snapshot, args.report)
    paths.append(export_gate_histograms(snapshot, os.path.join(args.report, "gate_raw.csv")))
    for p in paths:
        print(f"export-figures: wrote {p}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gatednet",
        description="Task-gated feedforward classifier: train, evaluate, introspect.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify-data", help="check CIFAR-10 binary files are present and sized")
    p.add_argument("--config", default=None)
    p.add_argument("--data", default=None, help="override config data_dir")
    p.set_defaults(fn=_cmd_verify_data)

    p = sub.add_parser("train-base", help="phase one: train the ungated network")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True, help="output base checkpoint path")
    p.set_defaults(fn=_cmd_train_base)

    p = sub.add_parser("train-gates", help="phase two: train one category's gate biases")
    p.add_argument("--config", default=None)
    p.add_argument("--base", required=True, help="base checkpoint path")
    p.add_argument("--category", required=True)
    p.add_argument("--out", required=True, help="output gates checkpoint path")
    p.set_defaults(fn=_cmd_train_gates)

    p = sub.add_parser("eval", help="evaluate on the test split, cued by true labels")
    p.add_argument("--config", default=None)
    p.add_argument("--base", required=True)
    p.add_argument("--gates", nargs="*", default=[])
    p.add_argument("--report", required=True, help="report output directory")
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of every gradient path")
    p.add_argument("--tolerance", type=float, default=1e-3)
    p.set_defaults(fn=_cmd_gradcheck)

    p = sub.add_parser("export-figures", help="re-emit gate CSVs from checkpoints")
    p.add_argument("--base", required=True)
    p.add_argument("--gates", nargs="*", default=[])
    p.add_argument("--report", required=True)
    p.set_defaults(fn=_cmd_export_figures)

    return parser


def dispatch(argv=None) -> int:
    """Parse and run; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.fn(args)
    except GatedNetError as e:
        print(f"gatednet: error: {e}", file=sys.stderr)
        return 1
    except FileNotFoundError as e:
        print(f"gatednet: error: {e}", file=sys.stderr)
        return 1


def main() -> None:
    raise SystemExit(dispatch())
