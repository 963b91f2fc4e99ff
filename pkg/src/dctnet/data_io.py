"""Data ingestion, windowing, synthesis, and checkpoint persistence.

CSV tables come in with an optional header and an optional leading
timestamp column; numeric columns become channels.  Splits are
chronological, standardisation statistics come from the train split only,
and sliding windows pair an L-step history with the T steps after it.
Checkpoints are a single self-describing binary file: magic, version,
JSON header, then named float64 tensors.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import CheckpointError, ConfigError, DataError
from .model import DCTNetParams, ModelConfig, init_params, param_shapes
from .rng import make_rng

SPLIT_PRESETS = {"ett": (6.0, 2.0, 2.0), "standard": (7.0, 1.0, 2.0)}
SYNTH_KINDS = ("sine", "sine_trend", "level_shift", "freq_shift")

_MAGIC = b"DCTN"
_VERSION = 1


@dataclass
class SeriesTable:
    """One multivariate series: [rows, C] values plus column bookkeeping."""

    values: np.ndarray
    channel_names: list[str]
    timestamps: Optional[list[str]] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DataError(f"table values must be 2-D, got {self.values.shape}")
        if len(self.channel_names) != self.values.shape[1]:
            raise DataError(
                f"{len(self.channel_names)} channel names for "
                f"{self.values.shape[1]} columns"
            )

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def channels(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class NormStats:
    """Per-channel mean/std captured on the train split."""

    mean: np.ndarray
    std: np.ndarray

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (values - self.mean) / self.std

    def invert(self, values: np.ndarray) -> np.ndarray:
        return values * self.std + self.mean


@dataclass
class WindowedDataset:
    """Stacked (input, target) windows of one split, already standardised."""

    inputs: np.ndarray     # [W, L, C]
    targets: np.ndarray    # [W, T, C]
    split: str
    stats: NormStats

    def __len__(self) -> int:
        return self.inputs.shape[0]


def _parse_cell(text: str) -> Optional[float]:
    try:
        v = float(text)
    except ValueError:
        return None
    return v


def load_csv(path, has_header: Optional[bool] = None,
             timestamp_col: Optional[bool] = None) -> SeriesTable:
    """Read a comma-separated series; channels are the numeric columns.

    ``has_header`` and ``timestamp_col`` default to auto-detection: a first
    row with no numeric cell is a header, and a non-numeric first cell in
    the first data row marks a leading timestamp column.  Pass booleans to
    override either guess.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"data file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if not rows:
        raise DataError(f"empty data file: {path}")
    width = len(rows[0])
    for i, row in enumerate(rows):
        if len(row) != width:
            raise DataError(
                f"ragged row {i + 1}: {len(row)} cells, expected {width}"
            )

    if has_header is None:
        has_header = all(_parse_cell(c) is None for c in rows[0])
    header = rows[0] if has_header else None
    data_rows = rows[1:] if has_header else rows
    if not data_rows:
        raise DataError(f"no data rows in {path}")

    if timestamp_col is None:
        timestamp_col = _parse_cell(data_rows[0][0]) is None
    first_channel = 1 if timestamp_col else 0
    if width - first_channel < 1:
        raise DataError(f"no numeric columns in {path}")

    values = np.empty((len(data_rows), width - first_channel))
    timestamps = [] if timestamp_col else None
    header_offset = 2 if has_header else 1
    for i, row in enumerate(data_rows):
        if timestamp_col:
            timestamps.append(row[0])
        for j, cell in enumerate(row[first_channel:]):
            v = _parse_cell(cell)
            if v is None or not np.isfinite(v):
                raise DataError(
                    f"non-numeric value {cell!r} at row {i + header_offset}, "
                    f"column {first_channel + j + 1}"
                )
            values[i, j] = v

    if header is not None:
        names = [c.strip() for c in header[first_channel:]]
    else:
        names = [f"ch{j}" for j in range(width - first_channel)]
    return SeriesTable(values=values, channel_names=names, timestamps=timestamps)


def save_csv(table: SeriesTable, path) -> None:
    """Write a table with header; float cells use repr for exact round-trips."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if table.timestamps is not None:
            writer.writerow(["date"] + table.channel_names)
            for ts, row in zip(table.timestamps, table.values):
                writer.writerow([ts] + [repr(float(v)) for v in row])
        else:
            writer.writerow(table.channel_names)
            for row in table.values:
                writer.writerow([repr(float(v)) for v in row])


def split_chronological(table: SeriesTable, ratios: tuple[float, float, float],
                        min_rows: int = 0
                        ) -> tuple[SeriesTable, SeriesTable, SeriesTable]:
    """Cut into contiguous train/val/test by floor on cumulative proportions.

    The remainder lands in test.  ``min_rows`` (typically L+T) makes a
    too-short split a hard error naming the offending split.
    """
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ConfigError(f"ratios must be three positive numbers, got {ratios}")
    total = sum(ratios)
    n = table.rows
    cut1 = int(n * ratios[0] / total)
    cut2 = int(n * (ratios[0] + ratios[1]) / total)
    bounds = {"train": (0, cut1), "val": (cut1, cut2), "test": (cut2, n)}
    parts = []
    for name, (lo, hi) in bounds.items():
        if hi - lo < max(min_rows, 1):
            raise DataError(
                f"{name} split has {hi - lo} rows, needs at least "
                f"{max(min_rows, 1)}"
            )
        ts = table.timestamps[lo:hi] if table.timestamps is not None else None
        parts.append(SeriesTable(values=table.values[lo:hi],
                                 channel_names=list(table.channel_names),
                                 timestamps=ts))
    return tuple(parts)


def compute_stats(table: SeriesTable) -> NormStats:
    """Per-channel mean/std of one split; zero spread falls back to std 1."""
    mean = table.values.mean(axis=0)
    std = table.values.std(axis=0)
    std = np.where(std == 0.0, 1.0, std)
    return NormStats(mean=mean, std=std)


def make_windows(split: SeriesTable, seq_len: int, pred_len: int,
                 stats: NormStats, stride: int = 1,
                 split_tag: str = "train") -> WindowedDataset:
    """Standardise, then slide (L history, T target) pairs across the split."""
    if stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")
    n = split.rows
    need = seq_len + pred_len
    if n < need:
        raise DataError(
            f"{split_tag} split has {n} rows, needs at least {need} "
            f"for one window"
        )
    values = stats.apply(split.values)
    count = (n - need) // stride + 1
    inputs = np.stack([values[i * stride:i * stride + seq_len]
                       for i in range(count)])
    targets = np.stack([values[i * stride + seq_len:i * stride + need]
                        for i in range(count)])
    return WindowedDataset(inputs=inputs, targets=targets, split=split_tag,
                           stats=stats)


@dataclass(frozen=True)
class SynthParams:
    """Shape of generated series; fields are used per kind as documented."""

    period: float = 24.0
    amplitude: float = 1.0
    noise: float = 0.0
    slope: float = 0.001
    shift_row: Optional[int] = None
    magnitude: float = 1.0
    period2: float = 12.0


def synth_series(kind: str, rows: int, channels: int, seed: int,
                 params: Optional[SynthParams] = None) -> SeriesTable:
    """Deterministic synthetic series for smoke tests and ablations.

    sine: amplitude * sin(2*pi*t/period + phase_c) + noise, where channel c
    leads by phase 2*pi*c/C (channel 0 has zero phase, matching the closed
    form sin(2*pi*t/period)).  sine_trend adds slope*t.  level_shift adds
    magnitude from shift_row on (default midpoint).  freq_shift switches
    the period to period2 at shift_row.
    """
    if kind not in SYNTH_KINDS:
        raise ConfigError(f"unknown kind {kind!r}; choose from {SYNTH_KINDS}")
    if rows < 1:
        raise ConfigError(f"rows must be >= 1, got {rows}")
    if channels < 1:
        raise ConfigError(f"channels must be >= 1, got {channels}")
    p = params or SynthParams()
    shift = p.shift_row if p.shift_row is not None else rows // 2
    t = np.arange(rows, dtype=np.float64)[:, None]
    phase = 2.0 * np.pi * np.arange(channels)[None, :] / channels

    if kind == "freq_shift":
        period = np.where(t < shift, p.period, p.period2)
        base = p.amplitude * np.sin(2.0 * np.pi * t / period + phase)
    else:
        base = p.amplitude * np.sin(2.0 * np.pi * t / p.period + phase)
        if kind == "sine_trend":
            base = base + p.slope * t
        elif kind == "level_shift":
            base = base + p.magnitude * (t >= shift)

    if p.noise > 0:
        base = base + p.noise * make_rng(seed, "synth", kind).standard_normal(
            (rows, channels))
    names = [f"ch{j}" for j in range(channels)]
    return SeriesTable(values=base, channel_names=names)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def checkpoint_save(params: DCTNetParams, cfg: ModelConfig, path,
                    metadata: Optional[dict] = None) -> None:
    """Write magic, version, JSON header, then named float64 tensor bytes.

    The header is serialized with sorted keys, so two identical states
    produce identical files byte for byte.
    """
    registry = params.named_parameters()
    header = {
        "config": cfg.to_dict(),
        "metadata": metadata or {},
        "tensors": [{"name": k, "shape": list(t.data.shape)}
                    for k, t in registry.items()],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IQ", _VERSION, len(blob)))
        fh.write(blob)
        for t in registry.values():
            fh.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())


def checkpoint_load(path) -> tuple[DCTNetParams, ModelConfig, dict]:
    """Rebuild (params, config, metadata); every mismatch names its offender."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    raw = path.read_bytes()
    if len(raw) < 16 or raw[:4] != _MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint file")
    version, blob_len = struct.unpack("<IQ", raw[4:16])
    if version != _VERSION:
        raise CheckpointError(
            f"unsupported checkpoint version {version}, expected {_VERSION}"
        )
    if len(raw) < 16 + blob_len:
        raise CheckpointError(f"truncated checkpoint header in {path}")
    try:
        header = json.loads(raw[16:16 + blob_len].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header in {path}: {exc}")
    cfg = ModelConfig.from_dict(header["config"])

    expected = param_shapes(cfg)
    stored = {entry["name"]: tuple(entry["shape"])
              for entry in header["tensors"]}
    for name in expected:
        if name not in stored:
            raise CheckpointError(f"checkpoint missing parameter {name!r}")
    for name, shape in stored.items():
        if name not in expected:
            raise CheckpointError(f"checkpoint has unknown parameter {name!r}")
        if shape != expected[name]:
            raise CheckpointError(
                f"parameter {name!r} has shape {shape}, config requires "
                f"{expected[name]}"
            )

    params = init_params(cfg)
    registry = params.named_parameters()
    offset = 16 + blob_len
    for entry in header["tensors"]:
        name, shape = entry["name"], tuple(entry["shape"])
        nbytes = 8 * int(np.prod(shape, dtype=np.int64))
        chunk = raw[offset:offset + nbytes]
        if len(chunk) < nbytes:
            raise CheckpointError(
                f"truncated checkpoint: parameter {name!r} is incomplete"
            )
        registry[name].data = np.frombuffer(
            chunk, dtype="<f8").reshape(shape).copy()
        offset += nbytes
    if offset != len(raw):
        raise CheckpointError(
            f"checkpoint has {len(raw) - offset} trailing bytes"
        )
    return params, cfg, header.get("metadata", {})
