"""Dataset ingestion and preparation.

CSV loading with strict numeric validation, chronological train/val/test
splitting, train-only standardization, stride-1 sliding-window pair
generation, and a seeded synthetic-signal generator used for fast CI runs.
Everything here is pure construction; built datasets are immutable in use.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "RawSeries",
    "WindowedDataset",
    "Scaler",
    "SynthSpec",
    "load_csv",
    "write_csv",
    "chronological_split",
    "standardize",
    "apply_scaler",
    "invert_scaler",
    "make_windows",
    "synth_series",
    "prepare_datasets",
]


@dataclass
class RawSeries:
    column_names: list[str]
    values: np.ndarray  # [timesteps, channels], finite float64
    timestamps: list[str] | None = None

    @property
    def length(self) -> int:
        return self.values.shape[0]

    @property
    def channels(self) -> int:
        return self.values.shape[1]


@dataclass
class Scaler:
    mean: np.ndarray  # [channels]
    std: np.ndarray  # [channels]


@dataclass
class WindowedDataset:
    inputs: np.ndarray  # [num_windows, T, C]
    targets: np.ndarray  # [num_windows, T_pred, C]
    scaler: Scaler | None = None
    split_tag: str = ""


@dataclass
class SynthSpec:
    length: int = 5000
    channels: int = 3
    frequencies: list[float] = field(default_factory=lambda: [1.0 / 24, 1.0 / 60])
    amplitudes: list[float] = field(default_factory=lambda: [1.0, 0.5])
    noise_std: float = 0.1
    trend_slope: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.length < 1:
            raise ValueError("synthetic length must be >= 1")
        if len(self.frequencies) != len(self.amplitudes):
            raise ValueError("frequencies and amplitudes must have equal length")


def load_csv(path) -> RawSeries:
    """Parse a comma-separated file with a header row into a numeric matrix.

    A leading date column is detected (its first data cell fails to parse as
    a number) and kept as timestamps only. Rows with unparseable or
    non-finite cells abort the load; the error lists up to 10 offending file
    line numbers.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        rows = list(reader)
    rows = [r for r in rows if r]  # tolerate a trailing blank line
    if not rows:
        raise ValueError(f"{path}: no data rows")

    def parses_as_number(cell: str) -> bool:
        # "NaN"/"inf" parse as floats: they stay numeric columns and are
        # rejected later by the finite check, rather than hiding as dates
        try:
            float(cell)
            return True
        except ValueError:
            return False

    has_date = not parses_as_number(rows[0][0])
    col_start = 1 if has_date else 0
    names = [c.strip() for c in header[col_start:]]
    n_cols = len(header)

    values = np.empty((len(rows), n_cols - col_start))
    timestamps = [] if has_date else None
    bad_lines: list[int] = []
    for i, row in enumerate(rows):
        line_no = i + 2  # header is line 1
        if len(row) != n_cols:
            bad_lines.append(line_no)
            continue
        try:
            vals = [float(c) for c in row[col_start:]]
        except ValueError:
            bad_lines.append(line_no)
            continue
        if not all(np.isfinite(v) for v in vals):
            bad_lines.append(line_no)
            continue
        values[i] = vals
        if has_date:
            timestamps.append(row[0])
    if bad_lines:
        shown = ", ".join(str(n) for n in bad_lines[:10])
        more = "" if len(bad_lines) <= 10 else f" (+{len(bad_lines) - 10} more)"
        raise ValueError(f"{path}: unparseable or non-finite rows at lines {shown}{more}")
    return RawSeries(column_names=names, values=values, timestamps=timestamps)


def write_csv(series: RawSeries, path) -> None:
    """Write a RawSeries back out in the format load_csv consumes, bit-faithfully."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if series.timestamps is not None:
            writer.writerow(["date"] + series.column_names)
            for ts, row in zip(series.timestamps, series.values):
                writer.writerow([ts] + [repr(float(v)) for v in row])
        else:
            writer.writerow(series.column_names)
            for row in series.values:
                writer.writerow([repr(float(v)) for v in row])


def chronological_split(
    series: RawSeries, ratios: tuple[float, float, float] = (0.7, 0.1, 0.2)
) -> tuple[RawSeries, RawSeries, RawSeries]:
    """Contiguous ordered train/val/test segments; floor the first two counts,
    remainder goes to test."""
    if any(r <= 0 for r in ratios):
        raise ValueError(f"split ratios must be positive, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"split ratios must sum to 1, got {sum(ratios)}")
    n = series.length
    n_train = int(n * ratios[0])
    n_val = int(n * ratios[1])
    n_test = n - n_train - n_val
    bounds = [(0, n_train), (n_train, n_train + n_val), (n_train + n_val, n)]
    if n_test < 0 or n_train < 1:
        raise ValueError(f"cannot split {n} rows with ratios {ratios}")
    segments = []
    for lo, hi in bounds:
        segments.append(
            RawSeries(
                column_names=list(series.column_names),
                values=series.values[lo:hi],
                timestamps=series.timestamps[lo:hi] if series.timestamps is not None else None,
            )
        )
    return segments[0], segments[1], segments[2]


def standardize(train_segment: RawSeries) -> Scaler:
    """Fit per-channel mean/std on the train segment only."""
    mean = train_segment.values.mean(axis=0)
    std = train_segment.values.std(axis=0)
    flat = np.flatnonzero(std == 0)
    if flat.size:
        name = train_segment.column_names[flat[0]]
        raise ValueError(f"channel '{name}' has zero variance in the train segment")
    return Scaler(mean=mean, std=std)


def apply_scaler(scaler: Scaler, values: np.ndarray) -> np.ndarray:
    return (values - scaler.mean) / scaler.std


def invert_scaler(scaler: Scaler, values: np.ndarray) -> np.ndarray:
    return values * scaler.std + scaler.mean


def make_windows(
    segment_values: np.ndarray,
    T: int,
    T_pred: int,
    scaler: Scaler | None = None,
    split_tag: str = "",
) -> WindowedDataset:
    """All maximal-overlap (stride 1) lookback/target pairs from one segment.

    Each target starts exactly where its input ends; a segment of length n
    yields n - T - T_pred + 1 windows.
    """
    n = segment_values.shape[0]
    needed = T + T_pred
    if n < needed:
        raise ValueError(
            f"segment{' ' + repr(split_tag) if split_tag else ''} has {n} rows; "
            f"windowing needs at least T + T_pred = {needed}"
        )
    sliding = np.lib.stride_tricks.sliding_window_view(segment_values, needed, axis=0)
    # sliding is [num_windows, C, needed]; restore time-major layout
    windows = np.ascontiguousarray(sliding.transpose(0, 2, 1))
    return WindowedDataset(
        inputs=windows[:, :T],
        targets=windows[:, T:],
        scaler=scaler,
        split_tag=split_tag,
    )


def synth_series(spec: SynthSpec) -> RawSeries:
    """Seeded sum-of-sinusoids generator with per-channel random phases.

    channel c(t) = sum_j amp_j * sin(2 pi f_j t + phase_cj)
                   + trend_slope * t + Normal(0, noise_std^2)
    """
    rng = np.random.default_rng(spec.seed)
    t = np.arange(spec.length, dtype=np.float64)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=(spec.channels, len(spec.frequencies)))
    values = np.zeros((spec.length, spec.channels))
    for c in range(spec.channels):
        for j, (f, a) in enumerate(zip(spec.frequencies, spec.amplitudes)):
            values[:, c] += a * np.sin(2.0 * np.pi * f * t + phases[c, j])
    values += spec.trend_slope * t[:, None]
    if spec.noise_std > 0:
        values += spec.noise_std * rng.standard_normal(values.shape)
    names = [f"c{c}" for c in range(spec.channels)]
    return RawSeries(column_names=names, values=values, timestamps=None)


def prepare_datasets(
    series: RawSeries,
    T: int,
    T_pred: int,
    ratios: tuple[float, float, float] = (0.7, 0.1, 0.2),
) -> tuple[WindowedDataset, WindowedDataset, WindowedDataset]:
    """Split, standardize on train stats, and window all three segments."""
    train_seg, val_seg, test_seg = chronological_split(series, ratios)
    scaler = standardize(train_seg)
    out = []
    for tag, seg in (("train", train_seg), ("val", val_seg), ("test", test_seg)):
        out.append(make_windows(apply_scaler(scaler, seg.values), T, T_pred, scaler, tag))
    return out[0], out[1], out[2]
