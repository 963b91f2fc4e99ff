"""Batch command-line interface.

Subcommands: train, eval, forecast, ablate, synth.  Machine-readable
output (reports as JSON, forecasts as CSV) goes to standard output or the
--out target; progress and diagnostics go to standard error.  Exit codes:
0 success, 1 internal or training failure, 2 usage or data errors.

Settings resolve in precedence order: flags, then environment (DCTNET_SEED
and DCTNET_LOG only), then the --config JSON file, then defaults.  The
config file has optional sections "model", "train", "data", and a "seed"
key; every field is optional.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from .data_io import (SPLIT_PRESETS, SYNTH_KINDS, NormStats, SynthParams,
                      checkpoint_load, checkpoint_save, compute_stats,
                      load_csv, make_windows, save_csv, split_chronological,
                      synth_series)
from .errors import (CheckpointError, ConfigError, DataError, DCTNetError,
                     TrainingError)
from .model import ABLATION_STAGES, ModelConfig, ablation_variant, forward, \
    init_params
from .numeric_engine import Tensor
from .trainer import TrainSettings, evaluate, fit

logger = logging.getLogger("dctnet")

_JSON_KW = dict(sort_keys=True, indent=2)


def _emit_json(payload: dict, out_path: Optional[Path] = None) -> None:
    text = json.dumps(payload, **_JSON_KW) + "\n"
    if out_path is not None:
        out_path.write_text(text, encoding="utf-8")
    sys.stdout.write(text)


def _setup_logging(args) -> None:
    env = os.environ.get("DCTNET_LOG", "info").lower()
    level = {"debug": logging.DEBUG, "info": logging.INFO,
             "warning": logging.WARNING, "quiet": logging.ERROR}.get(
                 env, logging.INFO)
    if getattr(args, "verbose", False):
        level = logging.DEBUG
    if getattr(args, "quiet", False):
        level = logging.ERROR
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(message)s"))
    logger.handlers.clear()
    logger.addHandler(handler)
    logger.setLevel(level)


def _load_config_file(path: Optional[str]) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        cfg = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {p} is not valid JSON: {exc}")
    if not isinstance(cfg, dict):
        raise ConfigError(f"config file {p} must hold a JSON object")
    unknown = set(cfg) - {"model", "train", "data", "seed"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    return cfg


def _resolve_seed(args, file_cfg: dict) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("DCTNET_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"DCTNET_SEED must be an integer, got {env!r}")
    return int(file_cfg.get("seed", 0))


def _resolve_ratios(args, file_cfg: dict) -> tuple[float, float, float]:
    data_section = file_cfg.get("data", {})
    if getattr(args, "preset", None) is not None:
        return SPLIT_PRESETS[args.preset]
    if "ratios" in data_section:
        r = data_section["ratios"]
        if not (isinstance(r, (list, tuple)) and len(r) == 3):
            raise ConfigError(f"data.ratios must be three numbers, got {r!r}")
        return tuple(float(v) for v in r)
    if "preset" in data_section:
        preset = data_section["preset"]
        if preset not in SPLIT_PRESETS:
            raise ConfigError(
                f"unknown preset {preset!r}; choose from "
                f"{sorted(SPLIT_PRESETS)}"
            )
        return SPLIT_PRESETS[preset]
    return SPLIT_PRESETS["ett"]


def _resolve_model_config(args, file_cfg: dict, channels: int,
                          seed: int) -> ModelConfig:
    section = dict(file_cfg.get("model", {}))
    if "channels" in section and section["channels"] != channels:
        raise DataError(
            f"config expects {section['channels']} channels, data has "
            f"{channels}"
        )
    section["channels"] = channels
    section["seed"] = seed
    if getattr(args, "seq_len", None) is not None:
        section["seq_len"] = args.seq_len
    if getattr(args, "horizon", None) is not None:
        section["pred_len"] = args.horizon
    return ModelConfig.from_dict(section)


def _resolve_train_settings(args, file_cfg: dict) -> TrainSettings:
    section = dict(file_cfg.get("train", {}))
    for flag, key in (("epochs", "epochs"), ("lr", "lr"),
                      ("batch_size", "batch_size"), ("patience", "patience")):
        if getattr(args, flag, None) is not None:
            section[key] = getattr(args, flag)
    known = {f.name for f in dataclasses.fields(TrainSettings)}
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"unknown train settings: {sorted(unknown)}")
    return TrainSettings(**section)


def _resolve_window_stride(args, file_cfg: dict) -> int:
    if getattr(args, "window_stride", None) is not None:
        return args.window_stride
    return int(file_cfg.get("data", {}).get("window_stride", 1))


def _data_path(args, file_cfg: dict) -> Path:
    path = getattr(args, "data", None) or file_cfg.get("data", {}).get("path")
    if path is None:
        raise ConfigError("no data file given (flag --data or config data.path)")
    return Path(path)


def _prepare_splits(table, ratios, cfg: ModelConfig, stride: int):
    need = cfg.seq_len + cfg.pred_len
    train_t, val_t, test_t = split_chronological(table, ratios, min_rows=need)
    stats = compute_stats(train_t)
    mk = lambda t, tag: make_windows(t, cfg.seq_len, cfg.pred_len, stats,
                                     stride=stride, split_tag=tag)
    return mk(train_t, "train"), mk(val_t, "val"), mk(test_t, "test"), stats


def _train_once(cfg: ModelConfig, settings: TrainSettings, datasets,
                label: str = ""):
    train_ds, val_ds, test_ds = datasets
    params = init_params(cfg)
    tag = f"[{label}] " if label else ""
    params, report = fit(params, cfg, train_ds, val_ds, settings,
                         log=lambda msg: logger.info("%s%s", tag, msg))
    score = evaluate(params, cfg, test_ds, batch_size=settings.batch_size)
    return params, report, score


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_train(args) -> int:
    file_cfg = _load_config_file(args.config)
    seed = _resolve_seed(args, file_cfg)
    data_path = _data_path(args, file_cfg)
    table = load_csv(data_path)
    cfg = _resolve_model_config(args, file_cfg, table.channels, seed)
    settings = _resolve_train_settings(args, file_cfg)
    ratios = _resolve_ratios(args, file_cfg)
    stride = _resolve_window_stride(args, file_cfg)

    train_ds, val_ds, test_ds, stats = _prepare_splits(table, ratios, cfg,
                                                       stride)
    logger.info("training on %s: %d/%d/%d windows, %d channels, horizon %d",
                data_path.name, len(train_ds), len(val_ds), len(test_ds),
                cfg.channels, cfg.pred_len)
    params, report, test_score = _train_once(cfg, settings,
                                             (train_ds, val_ds, test_ds))

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    metadata = {
        "dataset": data_path.stem,
        "horizon": cfg.pred_len,
        "seed": seed,
        "split_ratios": list(ratios),
        "window_stride": stride,
        "norm_mean": stats.mean.tolist(),
        "norm_std": stats.std.tolist(),
        "channel_names": table.channel_names,
        "best_epoch": report.best_epoch,
        "best_val_mse": report.val_mse[report.best_epoch],
    }
    ckpt_path = out_dir / "checkpoint.dct"
    checkpoint_save(params, cfg, ckpt_path, metadata=metadata)
    payload = dict(report.to_json_dict(),
                   dataset=data_path.stem,
                   test_mse=test_score.mse, test_mae=test_score.mae,
                   checkpoint=str(ckpt_path))
    _emit_json(payload, out_dir / "train_report.json")
    logger.info("checkpoint written to %s", ckpt_path)
    return 0


def _load_eval_inputs(args):
    params, cfg, metadata = checkpoint_load(args.checkpoint)
    table = load_csv(args.data)
    if table.channels != cfg.channels:
        raise DataError(
            f"data has {table.channels} channels, checkpoint expects "
            f"{cfg.channels}"
        )
    if "norm_mean" not in metadata or "norm_std" not in metadata:
        raise CheckpointError(
            "checkpoint metadata lacks normalization statistics"
        )
    stats = NormStats(mean=np.asarray(metadata["norm_mean"]),
                      std=np.asarray(metadata["norm_std"]))
    return params, cfg, metadata, table, stats


def cmd_eval(args) -> int:
    params, cfg, metadata, table, stats = _load_eval_inputs(args)
    ratios = tuple(metadata.get("split_ratios", SPLIT_PRESETS["ett"]))
    stride = int(metadata.get("window_stride", 1))
    need = cfg.seq_len + cfg.pred_len
    splits = dict(zip(("train", "val", "test"),
                      split_chronological(table, ratios, min_rows=need)))
    dataset = make_windows(splits[args.split], cfg.seq_len, cfg.pred_len,
                           stats, stride=stride, split_tag=args.split)
    score = evaluate(params, cfg, dataset, batch_size=args.batch_size)
    logger.info("%s split: %d windows, mse %.6f, mae %.6f, mean alpha %.4f",
                args.split, score.num_windows, score.mse, score.mae,
                score.alpha_mean)
    _emit_json({
        "mse": score.mse,
        "mae": score.mae,
        "horizon": cfg.pred_len,
        "dataset": Path(args.data).stem,
        "config": cfg.to_dict(),
        "seed": metadata.get("seed", cfg.seed),
        "split": args.split,
        "alpha_mean": score.alpha_mean,
        "num_windows": score.num_windows,
    })
    return 0


def cmd_forecast(args) -> int:
    params, cfg, metadata, table, stats = _load_eval_inputs(args)
    rows = table.rows
    if args.origin is not None:
        origin = args.origin
    elif rows >= cfg.seq_len + cfg.pred_len:
        origin = rows - cfg.pred_len
    else:
        origin = rows
    if origin < cfg.seq_len or origin > rows:
        raise DataError(
            f"forecast origin {origin} needs between {cfg.seq_len} and "
            f"{rows} observed rows"
        )
    window = stats.apply(table.values[origin - cfg.seq_len:origin])
    fc = forward(Tensor(window[None]), params, cfg, training=False)
    pred = stats.invert(fc.values.data[0])                  # [T, C] raw scale
    truth = table.values[origin:origin + cfg.pred_len]
    has_truth = truth.shape[0] > 0

    header = ["step"]
    if has_truth:
        header += [f"truth_{c}" for c in table.channel_names]
    header += [f"pred_{c}" for c in table.channel_names]
    lines = [header]
    for t in range(cfg.pred_len):
        row = [str(t)]
        if has_truth:
            row += [repr(float(v)) for v in truth[t]] if t < truth.shape[0] \
                else [""] * cfg.channels
        row += [repr(float(v)) for v in pred[t]]
        lines.append(row)

    alpha = fc.diagnostics.alpha.data
    logger.info("forecast from row %d over %d steps; mean alpha %.4f",
                origin, cfg.pred_len, float(np.mean(alpha)))
    if args.out is not None:
        with Path(args.out).open("w", newline="", encoding="utf-8") as fh:
            csv.writer(fh).writerows(lines)
    else:
        csv.writer(sys.stdout).writerows(lines)
    return 0


_VARIANT_LABELS = {"dbct": "w/o-DBCT", "gpaf": "w/o-GPAF", "fsc": "w/o-FSC"}


def cmd_ablate(args) -> int:
    file_cfg = _load_config_file(args.config)
    seed = _resolve_seed(args, file_cfg)
    data_path = _data_path(args, file_cfg)
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    unknown = [v for v in variants if v not in ABLATION_STAGES]
    if unknown:
        raise ConfigError(
            f"unknown variant {unknown[0]!r}; choose from "
            f"{','.join(ABLATION_STAGES)}"
        )
    table = load_csv(data_path)
    cfg = _resolve_model_config(args, file_cfg, table.channels, seed)
    settings = _resolve_train_settings(args, file_cfg)
    ratios = _resolve_ratios(args, file_cfg)
    stride = _resolve_window_stride(args, file_cfg)
    train_ds, val_ds, test_ds, _stats = _prepare_splits(table, ratios, cfg,
                                                        stride)

    rows = []
    runs = [("full", cfg)] + [(_VARIANT_LABELS[v], ablation_variant(cfg, v))
                              for v in variants]
    for label, variant_cfg in runs:
        logger.info("=== training %s ===", label)
        _params, report, score = _train_once(
            variant_cfg, settings, (train_ds, val_ds, test_ds), label=label)
        rows.append({
            "name": label,
            "mse": score.mse,
            "mae": score.mae,
            "alpha_mean": score.alpha_mean,
            "best_epoch": report.best_epoch,
        })
        logger.info("%s: test mse %.6f mae %.6f", label, score.mse, score.mae)

    _emit_json({
        "dataset": data_path.stem,
        "horizon": cfg.pred_len,
        "seed": seed,
        "config": cfg.to_dict(),
        "variants": rows,
    }, Path(args.out) if args.out else None)
    return 0


def cmd_synth(args) -> int:
    params = SynthParams(period=args.period, amplitude=args.amplitude,
                         noise=args.noise, slope=args.slope,
                         shift_row=args.shift_row, magnitude=args.magnitude,
                         period2=args.period2)
    table = synth_series(args.kind, args.rows, args.channels, args.seed,
                         params)
    save_csv(table, args.out)
    logger.info("wrote %d rows x %d channels to %s", table.rows,
                table.channels, args.out)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dctnet",
        description="Train, evaluate, and run the dual-branch "
                    "channel-temporal forecaster.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--verbose", action="store_true",
                        help="debug logging on standard error")
    common.add_argument("--quiet", action="store_true",
                        help="errors only on standard error")
    sub = parser.add_subparsers(dest="command", required=True)

    run_common = argparse.ArgumentParser(add_help=False)
    run_common.add_argument("--config", help="JSON config file")
    run_common.add_argument("--data", help="input CSV")
    run_common.add_argument("--seed", type=int, help="run seed")
    run_common.add_argument("--horizon", type=int, help="prediction length T")
    run_common.add_argument("--seq-len", type=int, dest="seq_len",
                            help="history length L")
    run_common.add_argument("--epochs", type=int)
    run_common.add_argument("--lr", type=float)
    run_common.add_argument("--batch-size", type=int, dest="batch_size")
    run_common.add_argument("--patience", type=int)
    run_common.add_argument("--preset", choices=sorted(SPLIT_PRESETS),
                            help="split ratios: ett 6:2:2, standard 7:1:2")
    run_common.add_argument("--window-stride", type=int, dest="window_stride",
                            help="offset between consecutive windows")

    p = sub.add_parser("train", parents=[common, run_common],
                       help="train a model and write checkpoint + report")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common],
                       help="score a checkpoint on one split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("train", "val", "test"),
                   default="test")
    p.add_argument("--batch-size", type=int, dest="batch_size", default=64)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("forecast", parents=[common],
                       help="emit a T-step forecast as CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", help="output CSV (default: standard output)")
    p.add_argument("--origin", type=int,
                   help="row the forecast starts at (default: last window "
                        "with ground truth)")
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("ablate", parents=[common, run_common],
                       help="train the full model against bypass variants")
    p.add_argument("--variants", default=",".join(ABLATION_STAGES),
                   help="comma list from dbct,gpaf,fsc")
    p.add_argument("--out", help="also write the comparison JSON here")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("synth", parents=[common],
                       help="generate a synthetic series CSV")
    p.add_argument("--kind", required=True, choices=SYNTH_KINDS)
    p.add_argument("--rows", type=int, required=True)
    p.add_argument("--channels", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--period", type=float, default=24.0)
    p.add_argument("--amplitude", type=float, default=1.0)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--slope", type=float, default=0.001)
    p.add_argument("--shift-row", type=int, dest="shift_row")
    p.add_argument("--magnitude", type=float, default=1.0)
    p.add_argument("--period2", type=float, default=12.0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging(args)
    try:
        return args.func(args)
    except (ConfigError, DataError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TrainingError as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return 1
    except DCTNetError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
