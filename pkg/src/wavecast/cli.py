"""Command-line entry point.

Commands: train, evaluate, predict, decompose, synth, bench. Runs are driven
by a TOML config file with strict unknown-key rejection; individual values
can be overridden on the command line with repeated ``--set section.key=value``
flags. Every command is deterministic under a fixed seed and config. Exit
codes: 0 success, 1 internal or numeric error, 2 configuration error.
"""

from __future__ import annotations

import argparse
import copy
import statistics
import sys
import time
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import data as data_mod
from . import dwt
from . import wavelet_layer as wl
from .model import ModelConfig, init_model_params, load_checkpoint, model_forward, save_checkpoint
from .training import TrainConfig, evaluate, fit, write_report

__all__ = ["main", "ConfigError", "load_run_config"]


class ConfigError(Exception):
    """Invalid or missing configuration; maps to exit code 2."""


DEFAULTS: dict = {
    "data": {
        "csv": None,
        "train_ratio": 0.7,
        "val_ratio": 0.1,
        "test_ratio": 0.2,
        "synthetic": None,
    },
    "model": {
        "lookback": 96,
        "horizon": 96,
        "model_dim": 32,
        "heads": 4,
        "levels": 1,
        "depth": 2,
        "ffn_dim": 128,
        "init_sigma": 0.0,
        "instance_norm": True,
    },
    "train": {
        "lr0": 1e-3,
        "decay_gamma": 0.9,
        "weight_decay": 1e-2,
        "beta1": 0.9,
        "beta2": 0.999,
        "eps": 1e-8,
        "batch_size": 16,
        "max_epochs": 30,
        "patience": 5,
        "seed": 0,
    },
    "output": {
        "dir": "runs",
    },
}

SYNTH_KEYS = {"length", "channels", "frequencies", "amplitudes", "noise_std", "trend_slope", "seed"}


def _config_help() -> str:
    lines = ["config keys and defaults:"]
    for section, entries in DEFAULTS.items():
        for key, value in entries.items():
            if key == "synthetic":
                lines.append(f"  [data.synthetic]  table with keys {sorted(SYNTH_KEYS)} (default: absent)")
                continue
            shown = "required for dataset commands (or [data.synthetic])" if value is None else repr(value)
            lines.append(f"  {section}.{key} = {shown}")
    return "\n".join(lines)


def _apply_section(target: dict, provided: dict, path: str) -> None:
    for key, value in provided.items():
        if path == "data" and key == "synthetic":
            if not isinstance(value, dict):
                raise ConfigError("data.synthetic must be a table")
            unknown = set(value) - SYNTH_KEYS
            if unknown:
                raise ConfigError(f"unknown key data.synthetic.{sorted(unknown)[0]}")
            target["synthetic"] = {**(target["synthetic"] or {}), **value}
            continue
        if key not in target:
            raise ConfigError(f"unknown config key {path}.{key}")
        if isinstance(target[key], dict) and isinstance(value, dict):
            _apply_section(target[key], value, f"{path}.{key}")
        else:
            target[key] = value


def _parse_set_value(raw: str):
    try:
        return tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        return raw  # bare string


def load_run_config(config_path: str | None, sets: list[str] | None) -> dict:
    """Defaults, overlaid by the TOML file, overlaid by --set flags."""
    cfg = copy.deepcopy(DEFAULTS)
    if config_path:
        try:
            with open(config_path, "rb") as fh:
                loaded = tomllib.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {config_path}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config file {config_path}: {exc}") from None
        for section, entries in loaded.items():
            if section not in cfg:
                raise ConfigError(f"unknown config section [{section}]")
            if not isinstance(entries, dict):
                raise ConfigError(f"[{section}] must be a table")
            _apply_section(cfg[section], entries, section)
    for item in sets or []:
        if "=" not in item:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        dotted, raw = item.split("=", 1)
        parts = dotted.strip().split(".")
        if len(parts) < 2:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        value = _parse_set_value(raw.strip())
        node: dict = {}
        leaf = node
        for p in parts[:-1][1:]:
            leaf[p] = {}
            leaf = leaf[p]
        leaf[parts[-1]] = value
        if parts[0] not in cfg:
            raise ConfigError(f"unknown config section [{parts[0]}]")
        _apply_section(cfg[parts[0]], node, parts[0])
    return cfg


def _load_series(cfg: dict) -> data_mod.RawSeries:
    csv_path = cfg["data"]["csv"]
    synth = cfg["data"]["synthetic"]
    if csv_path and synth:
        raise ConfigError("provide either data.csv or [data.synthetic], not both")
    if csv_path:
        return data_mod.load_csv(csv_path)
    if synth:
        return data_mod.synth_series(data_mod.SynthSpec(**synth))
    raise ConfigError("no dataset source: set data.csv or a [data.synthetic] table")


def _ratios(cfg: dict) -> tuple[float, float, float]:
    d = cfg["data"]
    return (d["train_ratio"], d["val_ratio"], d["test_ratio"])


def _model_config(cfg: dict, channels: int) -> ModelConfig:
    m = cfg["model"]
    try:
        return ModelConfig(
            lookback=m["lookback"],
            horizon=m["horizon"],
            channels=channels,
            model_dim=m["model_dim"],
            heads=m["heads"],
            levels=m["levels"],
            depth=m["depth"],
            ffn_dim=m["ffn_dim"],
            init_sigma=m["init_sigma"],
            instance_norm=m["instance_norm"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _train_config(cfg: dict) -> TrainConfig:
    try:
        return TrainConfig(**cfg["train"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def cmd_train(args) -> int:
    cfg = load_run_config(args.config, args.set)
    series = _load_series(cfg)
    model_cfg = _model_config(cfg, series.channels)
    train_cfg = _train_config(cfg)
    train_ds, val_ds, test_ds = data_mod.prepare_datasets(
        series, model_cfg.lookback, model_cfg.horizon, _ratios(cfg)
    )
    ckpt, report = fit(model_cfg, train_ds, val_ds, test_ds, train_cfg)
    out_dir = Path(args.out or cfg["output"]["dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_path = out_dir / "model.ckpt"
    save_checkpoint(ckpt, ckpt_path)
    write_report(report, out_dir / "report.csv")
    print(
        f"RESULT command=train test_mse={report.final_test[0]:.6f} "
        f"test_mae={report.final_test[1]:.6f} best_epoch={report.best_epoch} "
        f"epochs={len(report.epoch_losses)} stopped_early={report.stopped_early} "
        f"levels={model_cfg.levels} lookback={model_cfg.lookback} checkpoint={ckpt_path}"
    )
    return 0


def cmd_evaluate(args) -> int:
    cfg = load_run_config(args.config, args.set)
    ckpt = load_checkpoint(args.checkpoint)
    series = _load_series(cfg)
    if series.channels != ckpt.config.channels:
        raise ConfigError(
            f"dataset has {series.channels} channels but the checkpoint was "
            f"trained with {ckpt.config.channels}"
        )
    horizon = args.horizon
    if horizon is not None and horizon > ckpt.config.horizon:
        raise ConfigError(
            f"horizon override {horizon} exceeds the checkpoint's forecast head "
            f"size {ckpt.config.horizon}; retrain with a larger horizon instead"
        )
    _, _, test_ds = data_mod.prepare_datasets(
        series, ckpt.config.lookback, ckpt.config.horizon, _ratios(cfg)
    )
    m, a = evaluate(ckpt.parameters, ckpt.config, test_ds,
                    batch_size=cfg["train"]["batch_size"], horizon=horizon)
    print(
        f"RESULT command=evaluate mse={m:.6f} mae={a:.6f} "
        f"windows={test_ds.inputs.shape[0]} horizon={horizon or ckpt.config.horizon}"
    )
    return 0


def cmd_predict(args) -> int:
    cfg = load_run_config(args.config, args.set)
    ckpt = load_checkpoint(args.checkpoint)
    series = _load_series(cfg)
    if series.channels != ckpt.config.channels:
        raise ConfigError(
            f"dataset has {series.channels} channels but the checkpoint was "
            f"trained with {ckpt.config.channels}"
        )
    if series.length < ckpt.config.lookback:
        raise ConfigError(
            f"dataset has {series.length} rows; prediction needs at least the "
            f"lookback window of {ckpt.config.lookback}"
        )
    train_seg, _, _ = data_mod.chronological_split(series, _ratios(cfg))
    scaler = data_mod.standardize(train_seg)
    window = data_mod.apply_scaler(scaler, series.values[-ckpt.config.lookback :])
    pred = model_forward(window[None], ckpt.parameters, ckpt.config)[0]
    pred = data_mod.invert_scaler(scaler, pred)
    out = data_mod.RawSeries(column_names=list(series.column_names), values=pred)
    data_mod.write_csv(out, args.output)
    print(
        f"RESULT command=predict horizon={ckpt.config.horizon} "
        f"channels={ckpt.config.channels} output={args.output}"
    )
    return 0


def cmd_decompose(args) -> int:
    series = data_mod.load_csv(args.csv)
    if args.column not in series.column_names:
        raise ConfigError(
            f"column {args.column!r} not found; available: {', '.join(series.column_names)}"
        )
    x = series.values[:, series.column_names.index(args.column)]
    try:
        coeffs = dwt.wavedec(x, L=args.levels)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    recon = dwt.waverec(coeffs)
    err = float(np.max(np.abs(recon - x)))
    sections = [(f"A{coeffs.levels}", coeffs.approx)]
    sections += [(f"D{l + 1}", d) for l, d in enumerate(coeffs.details)]
    with open(args.output, "w", encoding="utf-8") as fh:
        fh.write("section,index,value\n")
        for name, arr in sections:
            for i, v in enumerate(arr):
                fh.write(f"{name},{i},{float(v)!r}\n")
        fh.write(f"reconstruction_error,,{err!r}\n")
    lengths = " ".join(f"{name}={arr.shape[0]}" for name, arr in sections)
    print(f"RESULT command=decompose reconstruction_error={err:.3e} {lengths} output={args.output}")
    return 0


def cmd_synth(args) -> int:
    cfg = load_run_config(args.config, args.set)
    synth = cfg["data"]["synthetic"]
    if not synth:
        raise ConfigError("synth requires a [data.synthetic] table in the config")
    series = data_mod.synth_series(data_mod.SynthSpec(**synth))
    data_mod.write_csv(series, args.output)
    print(
        f"RESULT command=synth rows={series.length} channels={series.channels} "
        f"output={args.output}"
    )
    return 0


def cmd_bench(args) -> int:
    cfg = load_run_config(args.config, args.set)
    sizes = [int(s) for s in args.sizes.split(",") if s]
    if sizes != sorted(sizes):
        raise ConfigError(f"--sizes must be ascending, got {sizes}")
    m = cfg["model"]
    batch = args.batch
    rng = np.random.default_rng(cfg["train"]["seed"])
    rows = []
    for T in sizes:
        model_cfg = ModelConfig(
            lookback=T,
            horizon=m["horizon"],
            channels=args.channels,
            model_dim=m["model_dim"],
            heads=m["heads"],
            levels=m["levels"],
            depth=m["depth"],
            ffn_dim=m["ffn_dim"],
            instance_norm=m["instance_norm"],
        )
        params = init_model_params(model_cfg, seed=cfg["train"]["seed"])
        x = rng.standard_normal((batch, T, args.channels))
        model_forward(x, params, model_cfg)  # warm up
        times = []
        for _ in range(5):
            t0 = time.perf_counter()
            model_forward(x, params, model_cfg)
            times.append((time.perf_counter() - t0) * 1e3)
        t_prime = wl.output_length(T, m["levels"])
        median = statistics.median(times)
        rows.append((T, t_prime, median))
        print(f"BENCH T={T} T_prime={t_prime} median_ms={median:.3f}")
    for (t0, _, m0), (t1, _, m1) in zip(rows, rows[1:]):
        print(f"BENCH_RATIO T={t1}/{t0} ratio={m1 / m0:.3f}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wavecast",
        description="Train and evaluate wavelet-mixing forecasters on multivariate series.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_args(p):
        p.add_argument("--config", help="TOML run config path")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                       help="override one config value (repeatable)")

    p = sub.add_parser("train", help="train a model and write checkpoint + report",
                       epilog=_config_help(),
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    add_config_args(p)
    p.add_argument("--out", help="output directory (default: output.dir)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="test-split MSE/MAE for a checkpoint",
                       epilog=_config_help(),
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    add_config_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--horizon", type=int, help="evaluate a shorter horizon than trained")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="forecast beyond the end of a series",
                       epilog=_config_help(),
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    add_config_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--output", required=True, help="forecast CSV path")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("decompose", help="classical multi-level DWT of one CSV column")
    p.add_argument("--csv", required=True)
    p.add_argument("--column", required=True)
    p.add_argument("--levels", type=int, default=1)
    p.add_argument("--output", required=True, help="coefficient CSV path")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("synth", help="write a synthetic series as CSV",
                       epilog=_config_help(),
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    add_config_args(p)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("bench", help="forward-pass wall time across lookback lengths",
                       epilog=_config_help(),
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    add_config_args(p)
    p.add_argument("--sizes", default="128,256,512,1024", help="ascending lookback list")
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--channels", type=int, default=4)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
