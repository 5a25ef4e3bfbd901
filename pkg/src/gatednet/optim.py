"""Negative log-likelihood loss, RMSprop updates, and the gradient checker.

RMSprop is the plain non-centered, momentum-free variant:
v <- rho*v + (1-rho)*g^2 ; theta <- theta - lr*g/(sqrt(v) + eps).
The gradient checker re-evaluates a small gated network in float64 and
compares analytic gradients against central finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import LabelError, ShapeError
from .ndcore import RngStream, Tensor
from .nn import TRAIN, BaseParams, GateBank, MlpConfig, backward, forward, log_softmax


def nll_loss(logp: Tensor, labels: np.ndarray) -> tuple[float, Tensor]:
    """Mean NLL over the batch and its gradient wrt the log-probabilities.

    The gradient is -1/batch at each (row, label) slot and zero elsewhere.
    """
    if logp.ndim != 2:
        raise ShapeError(f"logp must be a batch of rows, got shape {tuple(logp.shape)}")
    n, width = logp.shape
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise ShapeError(f"labels shape {tuple(labels.shape)} does not match batch of {n}")
    bad = np.nonzero((labels < 0) | (labels >= width))[0]
    if bad.size:
        i = int(bad[0])
        raise LabelError(f"label {int(labels[i])} out of range [0, {width}) at row {i}")
    rows = np.arange(n)
    loss = float(-logp[rows, labels].astype(np.float64).mean())
    grad = np.zeros_like(logp)
    grad[rows, labels] = -1.0 / n
    return loss, grad


@dataclass
class RmspropState:
    """Squared-gradient moving averages, one slot per trainable tensor."""

    v: list[Tensor]
    lr: float = 1e-2
    rho: float = 0.99
    eps: float = 1e-8

    @classmethod
    def init(cls, params: list[Tensor], lr=1e-2, rho=0.99, eps=1e-8) -> "RmspropState":
        return cls(v=[np.zeros_like(p) for p in params], lr=lr, rho=rho, eps=eps)


def rmsprop_step(params: list[Tensor], grads: list[Tensor], state: RmspropState) -> None:
    """One in-place RMSprop update over parallel (param, grad, v) lists."""
    if not (len(params) == len(grads) == len(state.v)):
        raise ShapeError(
            f"rmsprop lists disagree: {len(params)} params, {len(grads)} grads, "
            f"{len(state.v)} state slots"
        )
    for p, g, v in zip(params, grads, state.v):
        if p.shape != g.shape or p.shape != v.shape:
            raise ShapeError(f"rmsprop shape mismatch: p{p.shape} g{g.shape} v{v.shape}")
        v *= state.rho
        v += (1.0 - state.rho) * (g * g)
        p -= state.lr * g / (np.sqrt(v) + state.eps)


def numeric_gradient(f, x: np.ndarray, step: float = 1e-4) -> np.ndarray:
    """Central finite differences of scalar f at x, element by element."""
    grad = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = f()
        flat[i] = orig - step
        down = f()
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * step)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max |a-n| / max(|a|+|n|, 1e-8), elementwise."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.abs(a) + np.abs(n), 1e-8)
    return float(np.max(np.abs(a - n) / denom))


@dataclass
class GradCheckReport:
    """Per-path max relative errors from the finite-difference harness."""

    entries: dict[str, float] = field(default_factory=dict)
    step: float = 1e-4

    def worst(self) -> float:
        return max(self.entries.values())

    def passed(self, tolerance: float = 1e-3) -> bool:
        return self.worst() < tolerance

    def lines(self, tolerance: float = 1e-3) -> list[str]:
        out = []
        for name, err in self.entries.items():
            status = "ok" if err < tolerance else "FAIL"
            out.append(f"{name:12s} max rel err {err:.3e}  {status}")
        return out


def finite_diff_check(
    config: MlpConfig | None = None,
    *,
    step: float = 1e-4,
    seed: int = 0,
    batch: int = 5,
) -> GradCheckReport:
    """Check every analytic gradient of a gated toy net against 64-bit
    central differences.

    Covers the dense weights/biases of every layer, the gate biases, and a
    direct check of the ReLU, log-softmax and NLL local gradients.
    """
    if config is None:
        config = MlpConfig(input_size=8, hidden_sizes=(4,), output_size=3, dropout_rate=0.0)
    rng = RngStream(seed)
    params = BaseParams.init(config, rng.child("init")).astype(np.float64)
    bank = GateBank.zeros(["probe"], config.hidden_sizes, dtype=np.float64)
    # Nonzero gate biases so sigma'(b) is exercised away from the symmetric point.
    for i, b in enumerate(bank.biases["probe"]):
        b += rng.child(f"gate{i}").uniform(b.shape, -1.0, 1.0).astype(np.float64)
    x = rng.child("x").uniform((batch, config.input_size), -1.0, 1.0).astype(np.float64)
    y = rng.child("y").integers(0, config.output_size, size=batch)

    def loss_fn() -> float:
        logp, _ = forward(
            params, x, gates=bank, task="probe", mode=TRAIN, dropout_rate=0.0, rng=None
        )
        return nll_loss(logp, y)[0]

    logp, trace = forward(
        params, x, gates=bank, task="probe", mode=TRAIN, dropout_rate=0.0, rng=None
    )
    _, grad_logp = nll_loss(logp, y)
    grads = backward(trace, params, grad_logp, trainable="all")

    report = GradCheckReport(step=step)
    for layer, (gw, gb) in enumerate(zip(grads.weights, grads.biases)):
        num_w = numeric_gradient(loss_fn, params.weights[layer], step)
        num_b = numeric_gradient(loss_fn, params.biases[layer], step)
        report.entries[f"dense{layer}.w"] = max_relative_error(gw, num_w)
        report.entries[f"dense{layer}.b"] = max_relative_error(gb, num_b)
    for layer, gg in enumerate(grads.gate_biases):
        num_g = numeric_gradient(loss_fn, bank.biases["probe"][layer], step)
        report.entries[f"gate{layer}.b"] = max_relative_error(gg, num_g)

    # Local paths, checked directly on random points away from the ReLU kink.
    z = rng.child("relu").uniform((batch, 6), -1.0, 1.0).astype(np.float64)
    z[np.abs(z) < 10 * step] = 0.5
    up = rng.child("relu-up").uniform((batch, 6), -1.0, 1.0).astype(np.float64)
    analytic = up * (z > 0)
    numeric = numeric_gradient(lambda: float((up * np.maximum(z, 0)).sum()), z, step)
    report.entries["relu"] = max_relative_error(analytic, numeric)

    v = rng.child("lsm").uniform((batch, 7), -1.0, 1.0).astype(np.float64)
    uv = rng.child("lsm-up").uniform((batch, 7), -1.0, 1.0).astype(np.float64)
    p = np.exp(log_softmax(v))
    analytic = uv - p * uv.sum(axis=1, keepdims=True)
    numeric = numeric_gradient(lambda: float((uv * log_softmax(v)).sum()), v, step)
    report.entries["log_softmax"] = max_relative_error(analytic, numeric)

    lp = log_softmax(rng.child("nll").uniform((batch, 4), -1.0, 1.0).astype(np.float64))
    labels = rng.child("nll-y").integers(0, 4, size=batch)
    _, analytic = nll_loss(lp, labels)
    numeric = numeric_gradient(lambda: nll_loss(lp, labels)[0], lp, step)
    report.entries["nll"] = max_relative_error(analytic, numeric)
    return report
