# SPDX-FileCopyrightText: 2026 mmfusion contributors
#
# SPDX-License-Identifier: Apache-2.0

"""Metric files and the approach comparison table."""

import csv
import json
import logging
from collections.abc import Mapping, Sequence
from pathlib import Path

import numpy as np

from .fusion import Approach
from .training import EpochMetrics
from .utils import format_percent

METRICS_COLUMNS = ("epoch", "train_loss", "train_acc", "val_loss", "val_acc")
COMPARISON_COLUMNS = ("approach", "mean_accuracy", "std_accuracy", "runs")
# Single modalities first, then the fusion approaches
COMPARISON_ORDER = (
    Approach.VIDEO,
    Approach.AUDIO,
    Approach.TEXT,
    Approach.A0,
    Approach.A1,
    Approach.A2,
)


def write_metrics_csv(history: Sequence[EpochMetrics], path: str | Path) -> None:
    """Write one row per epoch; an empty history gives a file with the header row only."""
    with Path(path).open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(METRICS_COLUMNS)
        for record in history:
            writer.writerow(
                [
                    record.epoch,
                    repr(record.train_loss),
                    repr(record.train_accuracy),
                    repr(record.val_loss),
                    repr(record.val_accuracy),
                ]
            )


def write_summary_json(  # noqa: PLR0913
    path: str | Path,
    *,
    approach: Approach,
    seed: int,
    test_accuracy: float | None,
    epochs: int,
    config_echo: Mapping[str, object],
    unimodal: Mapping[str, float] | None = None,
) -> dict[str, object]:
    """Write the run summary and return it."""
    summary: dict[str, object] = {
        "approach": approach.value,
        "seed": seed,
        "test_accuracy": test_accuracy,
        "epochs": epochs,
        "config_echo": dict(config_echo),
    }
    if unimodal:
        summary["unimodal_accuracy"] = dict(unimodal)
    Path(path).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return summary


def comparison_rows(
    accuracies: Mapping[Approach, Sequence[float]],
) -> list[dict[str, object]]:
    """
    Aggregate per-seed test accuracies into one row per approach in fixed order.

    Args:
        accuracies (Mapping[Approach, Sequence[float]]): Test accuracy of every seed

    Returns:
        list[dict[str, object]]: Rows with mean, population standard deviation and run count;
            approaches without runs are reported as NaN
    """
    rows = []
    for approach in COMPARISON_ORDER:
        values = np.asarray(accuracies.get(approach, ()), dtype=np.float64)
        if values.size == 0:
            logging.warning("No runs for approach %s", approach.value)
        rows.append(
            {
                "approach": approach.value,
                "mean_accuracy": float(values.mean()) if values.size else float("nan"),
                "std_accuracy": float(values.std()) if values.size else float("nan"),
                "runs": int(values.size),
            }
        )
    return rows


def write_comparison_csv(rows: Sequence[Mapping[str, object]], path: str | Path) -> None:
    """Write the comparison table as CSV."""
    with Path(path).open("w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=COMPARISON_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def format_comparison(rows: Sequence[Mapping[str, object]]) -> str:
    """Render the comparison table for the terminal."""
    lines = [f"{'approach':<10}{'accuracy':>10}{'std':>10}{'runs':>6}"]
    lines.extend(
        f"{row['approach']:<10}"
        f"{format_percent(float(row['mean_accuracy'])):>10}"  # type: ignore[arg-type]
        f"{format_percent(float(row['std_accuracy'])):>10}"  # type: ignore[arg-type]
        f"{row['runs']:>6}"
        for row in rows
    )
    return "\n".join(lines)
