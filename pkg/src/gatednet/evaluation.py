"""Cued test-time evaluation, categorical isolation, and gate introspection.

At test time the cue comes from the true label: its category selects which
gate slice the forward pass uses (the base model runs ungated).  Samples
are grouped by cue for batching; because the numeric core's row results do
not depend on batch composition, grouped results equal per-sample
sequential evaluation exactly.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from .data import LabeledImage, NormStats, Taxonomy, batch_arrays, normalize_images
from .errors import DatasetError, MissingGatesError, ShapeError
from .nn import EVAL, BaseParams, GateBank, forward, predict, sigmoid


@dataclass
class MetricsReport:
    model: str  # base | gated
    test_loss: float
    test_accuracy: float
    categorical_isolation: float
    n_test: int
    confusion: np.ndarray  # (C, C) row-normalized

    def as_dict(self) -> dict:
        return {
            "model": self.model,
            "test_loss": self.test_loss,
            "test_accuracy": self.test_accuracy,
            "categorical_isolation": self.categorical_isolation,
            "n_test": self.n_test,
        }


def categorical_isolation(
    predictions: np.ndarray, labels: np.ndarray, taxonomy: Taxonomy
) -> float:
    """Fraction of predictions whose class shares the true label's category."""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape or predictions.ndim != 1:
        raise ValueError(
            f"predictions {predictions.shape} and labels {labels.shape} must be equal-length 1-D"
        )
    cat = taxonomy.category_index_array()
    matches = int(np.count_nonzero(cat[predictions] == cat[labels]))
    return matches / predictions.size


def confusion_matrix(
    predictions: np.ndarray, labels: np.ndarray, num_classes: int = 10
) -> np.ndarray:
    """Row-normalized confusion: entry (i, j) = P(pred=j | label=i).

    Rows for classes absent from `labels` are all zero.
    """
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape or predictions.ndim != 1:
        raise ValueError(
            f"predictions {predictions.shape} and labels {labels.shape} must be equal-length 1-D"
        )
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (labels, predictions), 1)
    out = np.zeros((num_classes, num_classes), dtype=np.float64)
    support = counts.sum(axis=1)
    nonzero = support > 0
    out[nonzero] = counts[nonzero] / support[nonzero, None]
    return out


def evaluate(
    params: BaseParams,
    stats: NormStats,
    test_images: list[LabeledImage],
    taxonomy: Taxonomy,
    *,
    gates: GateBank | None = None,
    batch_size: int = 512,
) -> MetricsReport:
    """Evaluate on the test set with per-sample task cues from the true labels."""
    if not test_images:
        raise DatasetError("cannot evaluate on an empty test set")
    images = normalize_images(test_images, stats)
    labels = np.array([img.label for img in images], dtype=np.int64)
    n = len(images)

    needed = sorted({taxonomy.category_of_class(int(y)) for y in labels})
    if gates is not None:
        missing = [c for c in needed if c not in gates.tasks]
        if missing:
            raise MissingGatesError(
                f"no trained gates for category {missing[0]!r} (have: {', '.join(gates.tasks)})"
            )

    preds = np.empty(n, dtype=np.int64)
    nll = np.empty(n, dtype=np.float64)
    if gates is None:
        groups = [(None, np.arange(n))]
    else:
        cat_ids = taxonomy.category_index_array()[labels]
        groups = [
            (cat, np.nonzero(cat_ids == i)[0])
            for i, cat in enumerate(taxonomy.categories)
        ]
    for task, idx in groups:
        for start in range(0, idx.size, batch_size):
            chunk = idx[start : start + batch_size]
            x, y = batch_arrays([images[i] for i in chunk])
            logp, _ = forward(params, x, gates=gates, task=task, mode=EVAL)
            preds[chunk] = predict(logp)
            nll[chunk] = -logp[np.arange(len(chunk)), y].astype(np.float64)

    return MetricsReport(
        model="base" if gates is None else "gated",
        test_loss=float(nll.mean()),
        test_accuracy=float(np.count_nonzero(preds == labels)) / n,
        categorical_isolation=categorical_isolation(preds, labels, taxonomy),
        n_test=n,
        confusion=confusion_matrix(preds, labels, taxonomy.num_classes),
    )


def write_confusion_csv(path, confusion: np.ndarray, taxonomy: Taxonomy) -> None:
    """Header of class names; one row per true class, first column its name."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["true_class", *taxonomy.class_names])
        for i, name in enumerate(taxonomy.class_names):
            writer.writerow([name, *[repr(float(v)) for v in confusion[i]]])


def grid_layout(width: int) -> tuple[int, int]:
    """2-D (rows, cols) layout for a gate vector; 256 -> 16x16, 128 -> 16x8.

    Columns are the largest power of two not above sqrt(width) that divides
    it; rows take the rest.  Row-major by neuron index.
    """
    cols = 1
    while cols * 2 <= int(np.sqrt(width)) and width % (cols * 2) == 0:
        cols *= 2
    return width // cols, cols


@dataclass
class GateSnapshot:
    """Raw gate biases plus derived sigmoid factors and 2-D layouts."""

    tasks: list[str]
    biases: list[dict[str, np.ndarray]]  # per hidden layer: task -> vector

    @classmethod
    def from_bank(cls, bank: GateBank) -> "GateSnapshot":
        if not bank.tasks:
            raise ValueError("empty gate bank")
        widths = [tuple(b.shape[0] for b in bank.slice_for(t)) for t in bank.tasks]
        if len(set(widths)) != 1:
            raise ShapeError(f"tasks disagree on layer widths: {widths}")
        layers = []
        for layer in range(len(widths[0])):
            layers.append({t: bank.slice_for(t)[layer].copy() for t in bank.tasks})
        return cls(tasks=list(bank.tasks), biases=layers)

    def layer_width(self, layer: int) -> int:
        return next(iter(self.biases[layer].values())).shape[0]


def _minmax_norm(v: np.ndarray) -> np.ndarray:
    lo, hi = float(v.min()), float(v.max())
    if hi == lo:
        return np.zeros_like(v, dtype=np.float64)
    return (v.astype(np.float64) - lo) / (hi - lo)


def export_gate_images(snapshot: GateSnapshot, out_dir) -> list[str]:
    """Per-layer CSV grids of raw biases, sigmoid factors, the absolute
    difference between the two task vectors, and min-max normalized
    parallels (per layer, per grid)."""
    paths = []
    two_tasks = len(snapshot.tasks) == 2
    for layer, by_task in enumerate(snapshot.biases):
        width = snapshot.layer_width(layer)
        rows, cols = grid_layout(width)
        header = ["neuron_index", "row", "col"]
        header += [f"bias_{t}" for t in snapshot.tasks]
        if two_tasks:
            header.append("abs_diff")
        header += [f"sigma_{t}" for t in snapshot.tasks]
        header += [f"norm_bias_{t}" for t in snapshot.tasks]
        if two_tasks:
            header.append("norm_abs_diff")

        columns = [by_task[t].astype(np.float64) for t in snapshot.tasks]
        sig = [sigmoid(c) for c in columns]
        norm = [_minmax_norm(c) for c in columns]
        if two_tasks:
            diff = np.abs(columns[0] - columns[1])
            norm_diff = _minmax_norm(diff)

        path = os.path.join(out_dir, f"gate_biases_layer{layer + 1}.csv")
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(header)
            for m in range(width):
                row = [m, m // cols, m % cols]
                row += [repr(float(c[m])) for c in columns]
                if two_tasks:
                    row.append(repr(float(diff[m])))
                row += [repr(float(s[m])) for s in sig]
                row += [repr(float(nv[m])) for nv in norm]
                if two_tasks:
                    row.append(repr(float(norm_diff[m])))
                writer.writerow(row)
        paths.append(path)
    return paths


def export_gate_histograms(snapshot: GateSnapshot, path) -> str:
    """Raw per-(task, layer) bias values for the histogram renderer."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["task", "layer", "neuron_index", "bias"])
        for task in snapshot.tasks:
            for layer, by_task in enumerate(snapshot.biases):
                vec = by_task[task]
                for m in range(vec.shape[0]):
                    writer.writerow([task, layer + 1, m, repr(float(vec[m]))])
    return str(path)
