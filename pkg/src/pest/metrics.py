"""Per-epoch run metrics and the CSV formats the harness writes.

Floats are serialized with ``repr``, the shortest representation that parses
back to the identical double, so files produced by identical runs are
byte-identical.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError

RUN_METRICS_COLUMNS = (
    "epoch",
    "mode",
    "target_accuracy",
    "pseudo_label_accuracy",
    "mean_loss",
    "lr",
)

SUMMARY_COLUMNS = (
    "run",
    "mode",
    "lambda",
    "final_target_accuracy",
    "final_pseudo_label_accuracy",
)

PRETRAIN_METRICS_COLUMNS = ("epoch", "loss", "source_zero_shot_acc")


@dataclass(frozen=True)
class MetricsRow:
    """One logged adaptation epoch."""

    epoch: int
    mode: str
    target_accuracy: float
    pseudo_label_accuracy: float
    mean_loss: float
    lr: float


def validate_rows(rows) -> None:
    """Epochs must strictly increase and every numeric value must be finite."""
    if not rows:
        raise ConfigError("metrics need at least one row")
    last_epoch = None
    for row in rows:
        if last_epoch is not None and row.epoch <= last_epoch:
            raise ConfigError(
                f"epochs must strictly increase, got {row.epoch} after {last_epoch}"
            )
        last_epoch = row.epoch
        for name in ("target_accuracy", "pseudo_label_accuracy", "mean_loss", "lr"):
            value = getattr(row, name)
            if not np.isfinite(value):
                raise ConfigError(f"row {row.epoch} has non-finite {name}: {value!r}")


def _fmt(value) -> str:
    return repr(float(value))


def write_run_metrics(path, rows) -> None:
    validate_rows(rows)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RUN_METRICS_COLUMNS)
        for row in rows:
            writer.writerow(
                [
                    row.epoch,
                    row.mode,
                    _fmt(row.target_accuracy),
                    _fmt(row.pseudo_label_accuracy),
                    _fmt(row.mean_loss),
                    _fmt(row.lr),
                ]
            )


def read_run_metrics(path) -> list:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != RUN_METRICS_COLUMNS:
            raise ConfigError(f"unexpected metrics header: {header!r}")
        rows = []
        for record in reader:
            rows.append(
                MetricsRow(
                    epoch=int(record[0]),
                    mode=record[1],
                    target_accuracy=float(record[2]),
                    pseudo_label_accuracy=float(record[3]),
                    mean_loss=float(record[4]),
                    lr=float(record[5]),
                )
            )
    return rows


def write_pretrain_metrics(path, rows) -> None:
    """Rows are ``{"epoch", "loss", "source_zero_shot_acc"}`` dicts."""
    if not rows:
        raise ConfigError("pretrain metrics need at least one row")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PRETRAIN_METRICS_COLUMNS)
        for row in rows:
            for name in ("loss", "source_zero_shot_acc"):
                if not np.isfinite(row[name]):
                    raise ConfigError(f"epoch {row['epoch']} has non-finite {name}")
            writer.writerow(
                [row["epoch"], _fmt(row["loss"]), _fmt(row["source_zero_shot_acc"])]
            )


def read_pretrain_metrics(path) -> list:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != PRETRAIN_METRICS_COLUMNS:
            raise ConfigError(f"unexpected pretrain metrics header: {header!r}")
        return [
            {
                "epoch": int(record[0]),
                "loss": float(record[1]),
                "source_zero_shot_acc": float(record[2]),
            }
            for record in reader
        ]


def write_summary(path, entries) -> None:
    """Write summary rows; each entry maps SUMMARY_COLUMNS to values.

    Non-applicable cells hold the empty string; numeric cells are formatted
    like run metrics.
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_COLUMNS)
        for entry in entries:
            record = []
            for column in SUMMARY_COLUMNS:
                value = entry.get(column, "")
                if isinstance(value, (int, float)) and not isinstance(value, bool):
                    record.append(_fmt(value))
                else:
                    record.append(str(value))
            writer.writerow(record)


def read_summary(path) -> list:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != SUMMARY_COLUMNS:
            raise ConfigError(f"unexpected summary header: {header!r}")
        entries = []
        for record in reader:
            entry = dict(zip(SUMMARY_COLUMNS, record))
            for key in ("final_target_accuracy", "final_pseudo_label_accuracy"):
                if entry[key] != "":
                    entry[key] = float(entry[key])
            if entry["lambda"] != "":
                entry["lambda"] = float(entry["lambda"])
            entries.append(entry)
    return entries
