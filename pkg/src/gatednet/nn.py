"""The gated feedforward classifier.

Each hidden layer runs dense -> ReLU -> (task gate) -> (dropout, train only);
the output layer is dense -> log-softmax.  A gate multiplies each hidden
activation a_m by the logistic of a per-task trainable bias b_m, so a task
cue selects which bias vector shapes the features.  The base network is
trained without gates; gate biases start at zero (half-strength
pass-through, sigma(0) = 0.5) and are the only trainable tensors in the
gate phase.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import MissingTraceError, ShapeError, UnknownTaskError
from .ndcore import FLOAT, RngStream, Tensor, matmul, matmul_t1, matmul_t2

TRAIN = "train"
EVAL = "eval"


@dataclass(frozen=True)
class MlpConfig:
    input_size: int = 1024
    hidden_sizes: tuple[int, ...] = (256, 128)
    output_size: int = 10
    dropout_rate: float = 0.5

    def __post_init__(self):
        sizes = (self.input_size, *self.hidden_sizes, self.output_size)
        if any(s < 1 for s in sizes):
            raise ValueError(f"all layer sizes must be >= 1, got {sizes}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {self.dropout_rate}")

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.input_size, *self.hidden_sizes, self.output_size)


class BaseParams:
    """Dense weights and biases of the ungated network (the shared trunk)."""

    def __init__(self, weights: list[Tensor], biases: list[Tensor]):
        if len(weights) != len(biases):
            raise ShapeError("weights and biases must pair up layer by layer")
        self.weights = weights
        self.biases = biases

    @classmethod
    def init(cls, config: MlpConfig, rng: RngStream) -> "BaseParams":
        """Uniform [-1/sqrt(fan_in), 1/sqrt(fan_in)] weights, zero biases."""
        sizes = config.layer_sizes
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform((fan_in, fan_out), -bound, bound))
            biases.append(np.zeros(fan_out, dtype=FLOAT))
        return cls(weights, biases)

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0], *(w.shape[1] for w in self.weights))

    @property
    def hidden_sizes(self) -> tuple[int, ...]:
        return self.layer_sizes[1:-1]

    def tensors(self) -> list[Tensor]:
        """Flat trainable list in canonical (layer-major w, b) order."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def scalar_count(self) -> int:
        return sum(t.size for t in self.tensors())

    def copy(self) -> "BaseParams":
        return BaseParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def astype(self, dtype) -> "BaseParams":
        return BaseParams(
            [w.astype(dtype) for w in self.weights], [b.astype(dtype) for b in self.biases]
        )


class GateBank:
    """Per-task, per-hidden-layer trainable gate bias vectors."""

    def __init__(self, tasks: list[str], biases: dict[str, list[Tensor]]):
        self.tasks = list(tasks)
        if sorted(biases) != sorted(self.tasks):
            raise ShapeError("bank biases must cover exactly the task list")
        self.biases = biases

    @classmethod
    def zeros(cls, tasks, hidden_sizes, dtype=FLOAT) -> "GateBank":
        tasks = list(tasks)
        return cls(
            tasks,
            {t: [np.zeros(n, dtype=dtype) for n in hidden_sizes] for t in tasks},
        )

    def slice_for(self, task: str) -> list[Tensor]:
        if task not in self.biases:
            raise UnknownTaskError(f"unknown task {task!r}; trained: {', '.join(self.tasks)}")
        return self.biases[task]

    def scalar_count(self) -> int:
        return sum(b.size for slices in self.biases.values() for b in slices)

    def copy(self) -> "GateBank":
        return GateBank(
            list(self.tasks),
            {t: [b.copy() for b in bs] for t, bs in self.biases.items()},
        )


@dataclass
class ForwardTrace:
    """Backprop bookkeeping captured by a train-mode forward pass."""

    x: Tensor
    pre: list[Tensor] = field(default_factory=list)  # dense pre-activations per hidden layer
    act: list[Tensor] = field(default_factory=list)  # post-ReLU activations
    sigma: list[Tensor] | None = None  # gate factors per hidden layer (None if ungated)
    masks: list[Tensor] = field(default_factory=list)  # dropout masks (scaled)
    dropped: list[Tensor] = field(default_factory=list)  # layer outputs fed to the next dense
    logp: Tensor | None = None
    task: str | None = None

    @property
    def gated(self) -> bool:
        return self.sigma is not None


def sigmoid(x: Tensor) -> Tensor:
    """Numerically stable logistic, dtype-preserving."""
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def gate_forward(a: Tensor, b: Tensor) -> Tensor:
    """Gate output g_m = a_m * sigmoid(b_m)."""
    if a.shape[-1] != b.shape[-1]:
        raise ShapeError(f"gate width mismatch: activations {a.shape} vs biases {b.shape}")
    return a * sigmoid(b)


def gate_backward(upstream: Tensor, a: Tensor, b: Tensor) -> tuple[Tensor, Tensor]:
    """Analytic gate gradients: dg/da = sigmoid(b), dg/db = a*s*(1-s)."""
    if a.shape[-1] != b.shape[-1] or upstream.shape != a.shape:
        raise ShapeError(
            f"gate backward shape mismatch: upstream {upstream.shape}, a {a.shape}, b {b.shape}"
        )
    s = sigmoid(b)
    grad_a = upstream * s
    grad_b = upstream * a * s * (1.0 - s)
    return grad_a, grad_b


def relu(x: Tensor) -> Tensor:
    return np.maximum(x, 0)


def dropout(x: Tensor, rate: float, mode: str, rng: RngStream | None):
    """Inverted dropout: kept units are scaled by 1/(1-rate) at train time."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if mode == EVAL or rate == 0.0:
        mask = np.ones_like(x)
        return x.copy() if mode == TRAIN else x, mask
    if rng is None:
        raise ValueError("train-mode dropout needs an RngStream")
    keep = 1.0 - rate
    mask = (rng.random(x.shape) < keep).astype(x.dtype) / x.dtype.type(keep)
    return x * mask, mask


def log_softmax(x: Tensor) -> Tensor:
    """Row-wise x - logsumexp(x) with max subtraction for stability."""
    m = x.max(axis=-1, keepdims=True)
    shifted = x - m
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    return shifted - lse


def forward(
    params: BaseParams,
    x: Tensor,
    *,
    gates: GateBank | None = None,
    task: str | None = None,
    mode: str = EVAL,
    dropout_rate: float = 0.0,
    rng: RngStream | None = None,
) -> tuple[Tensor, ForwardTrace | None]:
    """Run the network; returns (log-probabilities, trace or None).

    The trace is kept only in train mode.  An ungated pass is identical to
    a gated pass whose gate factors are all one.
    """
    if x.ndim != 2 or x.shape[1] != params.weights[0].shape[0]:
        raise ShapeError(
            f"input is {tuple(x.shape)}, expected (batch, {params.weights[0].shape[0]})"
        )
    gate_slice = None
    if gates is not None:
        if task is None:
            raise UnknownTaskError("a gated forward pass needs a task name")
        gate_slice = gates.slice_for(task)
        widths = tuple(b.shape[0] for b in gate_slice)
        if widths != params.hidden_sizes:
            raise ShapeError(
                f"gate widths {widths} do not match hidden sizes {params.hidden_sizes}"
            )

    training = mode == TRAIN
    trace = ForwardTrace(x=x, sigma=[] if gate_slice is not None else None, task=task)
    h = x
    n_hidden = len(params.weights) - 1
    for layer in range(n_hidden):
        z = matmul(h, params.weights[layer]) + params.biases[layer]
        a = relu(z)
        if gate_slice is not None:
            s = sigmoid(gate_slice[layer].astype(z.dtype, copy=False))
            g = a * s
        else:
            s = None
            g = a
        if training:
            d, mask = dropout(g, dropout_rate, TRAIN, rng)
        else:
            d, mask = g, None
        if training:
            trace.pre.append(z)
            trace.act.append(a)
            if trace.sigma is not None:
                trace.sigma.append(s)
            trace.masks.append(mask)
            trace.dropped.append(d)
        h = d

    logits = matmul(h, params.weights[-1]) + params.biases[-1]
    logp = log_softmax(logits)
    if not training:
        return logp, None
    trace.logp = logp
    return logp, trace


@dataclass
class Gradients:
    """Gradient slots for the active training phase.

    Base phase fills `weights`/`biases` and leaves `gate_biases` None; the
    gate phase fills only `gate_biases`.  The finite-difference harness asks
    for everything at once.
    """

    weights: list[Tensor] | None = None
    biases: list[Tensor] | None = None
    gate_biases: list[Tensor] | None = None


def backward(
    trace: ForwardTrace | None,
    params: BaseParams,
    grad_logp: Tensor,
    *,
    trainable: str | None = None,
) -> Gradients:
    """Reverse pass over the traced forward; dropout masks are reused exactly.

    `trainable` is "base", "gates" or "all"; the default follows the trace
    (gated traces train gates, ungated traces train the base).
    """
    if trace is None or trace.logp is None:
        raise MissingTraceError("backward needs the trace of a train-mode forward pass")
    if trainable is None:
        trainable = "gates" if trace.gated else "base"
    if trainable not in ("base", "gates", "all"):
        raise ValueError(f"trainable must be base|gates|all, got {trainable!r}")
    if trainable in ("gates", "all") and not trace.gated:
        raise MissingTraceError("gate gradients requested but the forward pass was ungated")
    want_base = trainable in ("base", "all")
    want_gates = trainable in ("gates", "all")

    if grad_logp.shape != trace.logp.shape:
        raise ShapeError(
            f"grad_logp is {tuple(grad_logp.shape)}, expected {tuple(trace.logp.shape)}"
        )

    n_hidden = len(params.weights) - 1
    grads = Gradients(
        weights=[None] * len(params.weights) if want_base else None,
        biases=[None] * len(params.biases) if want_base else None,
        gate_biases=[None] * n_hidden if want_gates else None,
    )

    # log-softmax backward: dz = g - softmax(z) * sum(g) per row.
    p = np.exp(trace.logp)
    dz = grad_logp - p * grad_logp.sum(axis=1, keepdims=True)

    upstream = dz
    last_in = trace.dropped[-1] if n_hidden else trace.x
    if want_base:
        grads.weights[-1] = matmul_t1(last_in, upstream)
        grads.biases[-1] = upstream.sum(axis=0)
    d_h = matmul_t2(upstream, params.weights[-1])

    for layer in range(n_hidden - 1, -1, -1):
        d_g = d_h * trace.masks[layer]
        if trace.gated:
            s = trace.sigma[layer]
            d_a = d_g * s
            if want_gates:
                grads.gate_biases[layer] = (
                    (d_g * trace.act[layer]).sum(axis=0) * s * (1.0 - s)
                )
        else:
            d_a = d_g
        d_z = d_a * (trace.pre[layer] > 0)
        below = trace.dropped[layer - 1] if layer > 0 else trace.x
        if want_base:
            grads.weights[layer] = matmul_t1(below, d_z)
            grads.biases[layer] = d_z.sum(axis=0)
        if layer > 0:
            d_h = matmul_t2(d_z, params.weights[layer])
    return grads


def predict(logp: Tensor) -> np.ndarray:
    """Per-row argmax class index; ties break toward the lowest index."""
    if logp.ndim != 2:
        raise ShapeError(f"predict expects a batch of rows, got shape {tuple(logp.shape)}")
    return np.argmax(logp, axis=1)
