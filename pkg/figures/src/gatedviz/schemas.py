"""Readers and validators for the report-directory file schemas.

Every reader checks headers and cell types and reports violations with the
file, row number (1-based, header = row 1) and column name, so a bad export
is diagnosed rather than silently misplotted.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np


class SchemaError(Exception):
    """An input file does not conform to its schema."""


class MissingInputError(Exception):
    """A required input file is absent."""


def _open_rows(path: str) -> list[list[str]]:
    if not os.path.isfile(path):
        raise MissingInputError(f"missing input file: {path}")
    with open(path, newline="") as f:
        return list(csv.reader(f))


def _check_header(path: str, header: list[str], required: list[str]) -> None:
    missing = [c for c in required if c not in header]
    if missing:
        raise SchemaError(f"{path}: header misses column(s) {', '.join(missing)}")


def _cell(path: str, row_num: int, column: str, raw: str, kind):
    try:
        return kind(raw)
    except (TypeError, ValueError):
        raise SchemaError(
            f"{path} row {row_num} column {column!r}: cannot parse {raw!r}"
        ) from None


@dataclass
class LossCurveTable:
    steps: np.ndarray
    phases: list[str]
    splits: list[str]
    losses: np.ndarray

    def series(self) -> list[tuple[str, str, np.ndarray, np.ndarray]]:
        """(phase, split, steps, losses) tuples in first-appearance order."""
        seen: list[tuple[str, str]] = []
        for key in zip(self.phases, self.splits):
            if key not in seen:
                seen.append(key)
        out = []
        for phase, split in seen:
            mask = np.array(
                [p == phase and s == split for p, s in zip(self.phases, self.splits)]
            )
            out.append((phase, split, self.steps[mask], self.losses[mask]))
        return out


def read_loss_curve(path: str) -> LossCurveTable:
    rows = _open_rows(path)
    if not rows:
        raise SchemaError(f"{path}: empty file")
    _check_header(path, rows[0], ["step", "phase", "split", "loss"])
    col = {name: rows[0].index(name) for name in rows[0]}
    steps, phases, splits, losses = [], [], [], []
    for i, row in enumerate(rows[1:], start=2):
        steps.append(_cell(path, i, "step", row[col["step"]], int))
        phase = row[col["phase"]]
        split = row[col["split"]]
        if split not in ("train", "val"):
            raise SchemaError(f"{path} row {i} column 'split': {split!r} is not train|val")
        phases.append(phase)
        splits.append(split)
        losses.append(_cell(path, i, "loss", row[col["loss"]], float))
    if not steps:
        raise SchemaError(f"{path}: no data rows")
    return LossCurveTable(np.array(steps), phases, splits, np.array(losses))


@dataclass
class ConfusionTable:
    class_names: list[str]
    matrix: np.ndarray  # (C, C) rows = true class


def read_confusion(path: str) -> ConfusionTable:
    rows = _open_rows(path)
    if not rows or rows[0][:1] != ["true_class"]:
        raise SchemaError(f"{path}: first header column must be 'true_class'")
    class_names = rows[0][1:]
    n = len(class_names)
    if len(rows) - 1 != n:
        raise SchemaError(f"{path}: expected {n} data rows, found {len(rows) - 1}")
    matrix = np.zeros((n, n))
    for i, row in enumerate(rows[1:], start=2):
        if row[0] != class_names[i - 2]:
            raise SchemaError(
                f"{path} row {i} column 'true_class': {row[0]!r} out of order"
            )
        for j, name in enumerate(class_names):
            matrix[i - 2, j] = _cell(path, i, name, row[1 + j], float)
    return ConfusionTable(class_names, matrix)


@dataclass
class GateLayerTable:
    tasks: list[str]
    rows: np.ndarray
    cols: np.ndarray
    bias: dict[str, np.ndarray]
    norm_bias: dict[str, np.ndarray]
    abs_diff: np.ndarray | None
    norm_abs_diff: np.ndarray | None

    @property
    def grid_shape(self) -> tuple[int, int]:
        return int(self.rows.max()) + 1, int(self.cols.max()) + 1

    def grid(self, values: np.ndarray) -> np.ndarray:
        shape = self.grid_shape
        out = np.full(shape, np.nan)
        out[self.rows, self.cols] = values
        return out


def read_gate_layer(path: str) -> GateLayerTable:
    rows = _open_rows(path)
    if not rows:
        raise SchemaError(f"{path}: empty file")
    header = rows[0]
    _check_header(path, header, ["neuron_index", "row", "col"])
    tasks = [c[len("bias_") :] for c in header if c.startswith("bias_")]
    if not tasks:
        raise SchemaError(f"{path}: no bias_<task> columns found")
    for task in tasks:
        _check_header(path, header, [f"sigma_{task}", f"norm_bias_{task}"])
    col = {name: header.index(name) for name in header}
    n = len(rows) - 1
    if n == 0:
        raise SchemaError(f"{path}: no data rows")
    rr = np.zeros(n, int)
    cc = np.zeros(n, int)
    bias = {t: np.zeros(n) for t in tasks}
    norm = {t: np.zeros(n) for t in tasks}
    has_diff = "abs_diff" in col
    diff = np.zeros(n) if has_diff else None
    norm_diff = np.zeros(n) if "norm_abs_diff" in col else None
    for i, row in enumerate(rows[1:], start=2):
        k = i - 2
        rr[k] = _cell(path, i, "row", row[col["row"]], int)
        cc[k] = _cell(path, i, "col", row[col["col"]], int)
        for t in tasks:
            bias[t][k] = _cell(path, i, f"bias_{t}", row[col[f"bias_{t}"]], float)
            norm[t][k] = _cell(path, i, f"norm_bias_{t}", row[col[f"norm_bias_{t}"]], float)
        if diff is not None:
            diff[k] = _cell(path, i, "abs_diff", row[col["abs_diff"]], float)
        if norm_diff is not None:
            norm_diff[k] = _cell(path, i, "norm_abs_diff", row[col["norm_abs_diff"]], float)
    return GateLayerTable(tasks, rr, cc, bias, norm, diff, norm_diff)


def read_gate_raw(path: str) -> dict[tuple[str, int], np.ndarray]:
    rows = _open_rows(path)
    if not rows:
        raise SchemaError(f"{path}: empty file")
    _check_header(path, rows[0], ["task", "layer", "neuron_index", "bias"])
    col = {name: rows[0].index(name) for name in rows[0]}
    out: dict[tuple[str, int], list[float]] = {}
    for i, row in enumerate(rows[1:], start=2):
        task = row[col["task"]]
        layer = _cell(path, i, "layer", row[col["layer"]], int)
        value = _cell(path, i, "bias", row[col["bias"]], float)
        out.setdefault((task, layer), []).append(value)
    if not out:
        raise SchemaError(f"{path}: no data rows")
    return {key: np.array(vals) for key, vals in out.items()}
