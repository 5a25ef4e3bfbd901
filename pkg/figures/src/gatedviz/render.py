"""Render report exports into the four experiment figures.

Strictly a consumer: every plotted value is read from an input cell.  The
four kinds are loss curves (one panel per phase/split series), the base vs
gated confusion heatmap pair, per-layer gate bias grids with the absolute
task difference, and per-layer per-task histograms of raw biases.
"""

from __future__ import annotations

from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .schemas import (
    read_confusion,
    read_gate_layer,
    read_gate_raw,
    read_loss_curve,
)

KINDS = ("loss_curves", "confusion_pair", "gate_images", "gate_histograms")


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    inputs: tuple[str, ...]
    output: str
    bins: int = 30

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; valid: {KINDS}")


def render(spec: FigureSpec) -> str:
    fn = {
        "loss_curves": _render_loss_curves,
        "confusion_pair": _render_confusion_pair,
        "gate_images": _render_gate_images,
        "gate_histograms": _render_gate_histograms,
    }[spec.kind]
    fig = fn(spec)
    fig.savefig(spec.output, dpi=120)
    plt.close(fig)
    return spec.output


def _render_loss_curves(spec: FigureSpec):
    (path,) = spec.inputs
    table = read_loss_curve(path)
    series = table.series()
    ncols = 2 if any(s == "val" for _, s, _, _ in series) else 1
    phases = []
    for phase, _, _, _ in series:
        if phase not in phases:
            phases.append(phase)
    nrows = len(phases)
    fig, axes = plt.subplots(
        nrows, ncols, figsize=(4.2 * ncols, 2.6 * nrows), squeeze=False
    )
    used = set()
    for phase, split, steps, losses in series:
        r = phases.index(phase)
        c = 0 if split == "train" else ncols - 1
        ax = axes[r][c]
        ax.plot(steps, losses, lw=1.2)
        ax.set_title(f"{phase} / {split}", fontsize=9)
        ax.set_xlabel("recorded step")
        ax.set_ylabel("loss")
        used.add((r, c))
    for r in range(nrows):
        for c in range(ncols):
            if (r, c) not in used:
                axes[r][c].axis("off")
    fig.tight_layout()
    return fig


def _render_confusion_pair(spec: FigureSpec):
    base_path, gated_path = spec.inputs
    base = read_confusion(base_path)
    gated = read_confusion(gated_path)
    fig, axes = plt.subplots(1, 2, figsize=(11, 4.6))
    for ax, table, title in ((axes[0], base, "base"), (axes[1], gated, "gated")):
        im = ax.imshow(table.matrix, vmin=0.0, vmax=1.0, cmap="viridis")
        ax.set_xticks(range(len(table.class_names)))
        ax.set_yticks(range(len(table.class_names)))
        ax.set_xticklabels(table.class_names, rotation=90, fontsize=7)
        ax.set_yticklabels(table.class_names, fontsize=7)
        ax.set_xlabel("predicted")
        ax.set_ylabel("true")
        ax.set_title(title)
        fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    return fig


def _render_gate_images(spec: FigureSpec):
    layers = [read_gate_layer(p) for p in spec.inputs]
    tasks = layers[0].tasks
    ncols = len(tasks) + (1 if layers[0].norm_abs_diff is not None else 0)
    fig, axes = plt.subplots(
        len(layers), ncols, figsize=(3.2 * ncols, 2.9 * len(layers)), squeeze=False
    )
    for li, layer in enumerate(layers):
        panels = [(t, layer.grid(layer.norm_bias[t])) for t in layer.tasks]
        if layer.norm_abs_diff is not None:
            panels.append(("abs diff", layer.grid(layer.norm_abs_diff)))
        for ci, (title, grid) in enumerate(panels):
            ax = axes[li][ci]
            im = ax.imshow(grid, vmin=0.0, vmax=1.0, cmap="viridis")
            ax.set_title(f"layer {li + 1}: {title}", fontsize=9)
            ax.set_xticks([])
            ax.set_yticks([])
            fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    return fig


def _render_gate_histograms(spec: FigureSpec):
    (path,) = spec.inputs
    data = read_gate_raw(path)
    layers = sorted({layer for _, layer in data})
    tasks = []
    for task, _ in data:
        if task not in tasks:
            tasks.append(task)
    fig, axes = plt.subplots(
        len(layers),
        len(tasks),
        figsize=(3.6 * len(tasks), 2.6 * len(layers)),
        squeeze=False,
    )
    for li, layer in enumerate(layers):
        for ti, task in enumerate(tasks):
            ax = axes[li][ti]
            values = data.get((task, layer))
            if values is None:
                ax.axis("off")
                continue
            ax.hist(values, bins=spec.bins)
            ax.set_title(f"layer {layer}: {task}", fontsize=9)
            ax.set_xlabel("gate bias")
            ax.set_ylabel("count")
    fig.tight_layout()
    return fig
