"""Two-phase training: base network on all classes, then per-category gates.

Phase one trains every dense parameter with dropout active.  Phase two
freezes the base bit-for-bit and trains only the selected category's gate
biases on that category's images, keeping the same train-mode regime.
Both phases validate every `val_interval_updates` updates and retain the
snapshot with the lowest validation loss; train-loss curve points are the
mean over the preceding interval.  If a run ends mid-interval, one final
validation covers the tail so the retention contract always has at least
one measurement.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .data import (
    DataSplit,
    LabeledImage,
    NormStats,
    Taxonomy,
    batch_arrays,
    compute_norm_stats,
    filter_by_category,
    minibatches,
    normalize_images,
)
from .errors import DatasetError
from .ndcore import RngStream
from .nn import (
    EVAL,
    TRAIN,
    BaseParams,
    GateBank,
    MlpConfig,
    backward,
    forward,
)
from .optim import RmspropState, nll_loss, rmsprop_step

PHASE_BASE = "base"


def gate_phase_tag(category: str) -> str:
    return f"gates_{category}"


@dataclass(frozen=True)
class TrainSchedule:
    epochs_base: int = 30
    epochs_gates: int = 15
    batch_size: int = 32
    val_interval_updates: int = 200
    lr: float = 1e-2
    seed: int = 0
    rmsprop_rho: float = 0.99
    rmsprop_eps: float = 1e-8

    def __post_init__(self):
        for name in ("epochs_base", "epochs_gates", "batch_size", "val_interval_updates"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")


@dataclass(frozen=True)
class CurveRecord:
    step: int
    phase: str
    split: str  # train | val
    loss: float


@dataclass
class LossCurve:
    records: list[CurveRecord] = field(default_factory=list)

    def add(self, step: int, phase: str, split: str, loss: float) -> None:
        for rec in reversed(self.records):
            if rec.phase == phase and rec.split == split:
                if step <= rec.step:
                    raise ValueError(
                        f"curve steps must increase per series: {step} after {rec.step}"
                    )
                break
        self.records.append(CurveRecord(step, phase, split, loss))

    def series(self, phase: str, split: str) -> list[CurveRecord]:
        return [r for r in self.records if r.phase == phase and r.split == split]

    def min_val_loss(self, phase: str) -> float:
        return min(r.loss for r in self.series(phase, "val"))

    def write_csv(self, path, append: bool = False) -> None:
        """Write `step,phase,split,loss` rows; append replaces same-phase rows."""
        rows = [(r.step, r.phase, r.split, r.loss) for r in self.records]
        if append:
            phases = {r.phase for r in self.records}
            try:
                with open(path, newline="") as f:
                    old = [row for row in csv.reader(f)][1:]
            except FileNotFoundError:
                old = []
            kept = [row for row in old if row[1] not in phases]
            rows = [(int(r[0]), r[1], r[2], float(r[3])) for r in kept] + rows
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["step", "phase", "split", "loss"])
            for step, phase, split, loss in rows:
                writer.writerow([step, phase, split, repr(loss)])


def per_sample_nll(
    params: BaseParams,
    images: list[LabeledImage],
    *,
    gates: GateBank | None = None,
    task: str | None = None,
    batch_size: int = 512,
) -> np.ndarray:
    """Eval-mode per-sample NLL in input order (float64)."""
    losses = np.empty(len(images), dtype=np.float64)
    for start in range(0, len(images), batch_size):
        chunk = images[start : start + batch_size]
        x, y = batch_arrays(chunk)
        logp, _ = forward(params, x, gates=gates, task=task, mode=EVAL)
        losses[start : start + len(chunk)] = -logp[np.arange(len(chunk)), y].astype(np.float64)
    return losses


def validate(
    params: BaseParams,
    images: list[LabeledImage],
    *,
    gates: GateBank | None = None,
    task: str | None = None,
) -> float:
    """Eval-mode mean NLL over the full set, fixed iteration order."""
    if not images:
        raise DatasetError("cannot validate on an empty set")
    return float(per_sample_nll(params, images, gates=gates, task=task).mean())


class _BestTracker:
    def __init__(self):
        self.loss = np.inf
        self.snapshot = None

    def offer(self, loss: float, make_snapshot) -> None:
        if loss < self.loss:
            self.loss = loss
            self.snapshot = make_snapshot()


def _run_phase(
    *,
    phase: str,
    train_images: list[LabeledImage],
    val_images: list[LabeledImage],
    epochs: int,
    schedule: TrainSchedule,
    params: BaseParams,
    trainable: list[np.ndarray],
    snapshot_fn,
    forward_kwargs: dict,
    backward_trainable: str,
    grads_of,
    rng: RngStream,
    batch_callback=None,
) -> tuple[object, LossCurve]:
    opt = RmspropState.init(
        trainable, lr=schedule.lr, rho=schedule.rmsprop_rho, eps=schedule.rmsprop_eps
    )
    shuffle_rng = rng.child("shuffle")
    dropout_rng = rng.child("dropout")
    curve = LossCurve()
    best = _BestTracker()
    step = 0
    interval: list[float] = []

    def record_point():
        vloss = validate(params, val_images, **_val_kwargs(forward_kwargs))
        curve.add(step, phase, "train", float(np.mean(interval)))
        curve.add(step, phase, "val", vloss)
        interval.clear()
        best.offer(vloss, snapshot_fn)

    for _ in range(epochs):
        for batch in minibatches(train_images, schedule.batch_size, shuffle_rng):
            if batch_callback is not None:
                batch_callback(batch)
            x, y = batch_arrays(batch)
            logp, trace = forward(
                params, x, mode=TRAIN, rng=dropout_rng, **forward_kwargs
            )
            loss, grad_logp = nll_loss(logp, y)
            grads = backward(trace, params, grad_logp, trainable=backward_trainable)
            rmsprop_step(trainable, grads_of(grads), opt)
            step += 1
            interval.append(loss)
            if step % schedule.val_interval_updates == 0:
                record_point()
    if interval:
        record_point()
    return best.snapshot, curve


def _val_kwargs(forward_kwargs: dict) -> dict:
    return {k: forward_kwargs[k] for k in ("gates", "task") if k in forward_kwargs}


def train_base(
    split: DataSplit,
    config: MlpConfig,
    schedule: TrainSchedule,
    rng: RngStream,
) -> tuple[BaseParams, NormStats, LossCurve]:
    """Phase one: train the ungated network on all classes.

    Takes raw-luma images; normalization statistics are computed on the
    train portion and baked into the returned checkpoint data.
    """
    if not split.train:
        raise DatasetError("cannot train on an empty split")
    if not split.val:
        raise DatasetError("base training needs a validation set for best-snapshot retention")
    stats = compute_norm_stats(split.train)
    train_n = normalize_images(split.train, stats)
    val_n = normalize_images(split.val, stats)

    params = BaseParams.init(config, rng.child("init"))
    best, curve = _run_phase(
        phase=PHASE_BASE,
        train_images=train_n,
        val_images=val_n,
        epochs=schedule.epochs_base,
        schedule=schedule,
        params=params,
        trainable=params.tensors(),
        snapshot_fn=params.copy,
        forward_kwargs={"dropout_rate": config.dropout_rate},
        backward_trainable="base",
        grads_of=lambda g: [t for pair in zip(g.weights, g.biases) for t in pair],
        rng=rng,
    )
    return best, stats, curve


def train_gates(
    base: BaseParams,
    stats: NormStats,
    category: str,
    split: DataSplit,
    taxonomy: Taxonomy,
    config: MlpConfig,
    schedule: TrainSchedule,
    rng: RngStream,
) -> tuple[list[np.ndarray], LossCurve]:
    """Phase two: train one category's gate biases against a frozen base.

    Only images whose label belongs to the category are presented; the
    base parameters are read-only throughout (bit-identical before/after).
    """
    wanted = set(taxonomy.classes_in(category))
    train_c = filter_by_category(split.train, category, taxonomy)
    val_c = filter_by_category(split.val, category, taxonomy)
    if not train_c:
        raise DatasetError(f"no training images for category {category!r}")
    if not val_c:
        raise DatasetError(f"no validation images for category {category!r}")
    train_n = normalize_images(train_c, stats)
    val_n = normalize_images(val_c, stats)

    bank = GateBank.zeros([category], base.hidden_sizes)
    biases = bank.slice_for(category)

    def assert_exclusive(batch):
        for img in batch:
            if img.label not in wanted:
                raise DatasetError(
                    f"label {img.label} leaked into gate training for {category!r}"
                )

    best, curve = _run_phase(
        phase=gate_phase_tag(category),
        train_images=train_n,
        val_images=val_n,
        epochs=schedule.epochs_gates,
        schedule=schedule,
        params=base,
        trainable=biases,
        snapshot_fn=lambda: [b.copy() for b in biases],
        forward_kwargs={
            "dropout_rate": config.dropout_rate,
            "gates": bank,
            "task": category,
        },
        backward_trainable="gates",
        grads_of=lambda g: g.gate_biases,
        rng=rng,
        batch_callback=assert_exclusive,
    )
    return best, curve
