import csv
import math

import numpy as np
import pytest

CLASS_NAMES = [
    "airplane", "automobile", "bird", "cat", "deer",
    "dog", "frog", "horse", "ship", "truck",
]
VEHICLES = {0, 1, 8, 9}


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def write_loss_curve(path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["step", "phase", "split", "loss"])
        for phase, start in (("base", 2.3), ("gates_vehicles", 1.4), ("gates_animals", 1.5)):
            for i in range(1, 9):
                step = i * 200
                w.writerow([step, phase, "train", repr(start * math.exp(-0.12 * i))])
                w.writerow([step, phase, "val", repr(start * math.exp(-0.09 * i) + 0.05)])


def write_confusion(path, matrix):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["true_class", *CLASS_NAMES])
        for i, name in enumerate(CLASS_NAMES):
            w.writerow([name, *[repr(float(v)) for v in matrix[i]]])


def base_confusion(rng):
    m = rng.uniform(0.0, 1.0, (10, 10)) + 3.0 * np.eye(10)
    return m / m.sum(axis=1, keepdims=True)


def gated_confusion(rng):
    """Near-identity with cross-category blocks under 0.05."""
    m = np.zeros((10, 10))
    for i in range(10):
        same = [j for j in range(10) if (j in VEHICLES) == (i in VEHICLES)]
        leak = rng.uniform(0.0, 0.03, len(same))
        m[i, same] = leak
        m[i, i] = 0.0
        cross = [j for j in range(10) if j not in same]
        m[i, cross] = rng.uniform(0.0, 0.04, len(cross))
        m[i, i] = 1.0 - m[i].sum()
    return m


def write_gate_layer(path, width, rows, cols, rng):
    bias_v = rng.normal(0.0, 1.5, width)
    bias_a = rng.normal(0.5, 1.5, width)
    diff = np.abs(bias_v - bias_a)

    def norm(v):
        return (v - v.min()) / (v.max() - v.min())

    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(
            ["neuron_index", "row", "col", "bias_vehicles", "bias_animals", "abs_diff",
             "sigma_vehicles", "sigma_animals", "norm_bias_vehicles", "norm_bias_animals",
             "norm_abs_diff"]
        )
        nv, na, nd = norm(bias_v), norm(bias_a), norm(diff)
        for m in range(width):
            w.writerow(
                [m, m // cols, m % cols, repr(float(bias_v[m])), repr(float(bias_a[m])),
                 repr(float(diff[m])), repr(float(_sigmoid(bias_v[m]))),
                 repr(float(_sigmoid(bias_a[m]))), repr(float(nv[m])), repr(float(na[m])),
                 repr(float(nd[m]))]
            )
    return bias_v, bias_a


def write_gate_raw(path, layer_vectors):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["task", "layer", "neuron_index", "bias"])
        for task, layer, vec in layer_vectors:
            for m, v in enumerate(vec):
                w.writerow([task, layer, m, repr(float(v))])


def build_report_dir(root) -> str:
    rng = np.random.default_rng(0)
    write_loss_curve(root / "loss_curve.csv")
    write_confusion(root / "confusion_base.csv", base_confusion(rng))
    write_confusion(root / "confusion_gated.csv", gated_confusion(rng))
    v1, a1 = write_gate_layer(root / "gate_biases_layer1.csv", 256, 16, 16, rng)
    v2, a2 = write_gate_layer(root / "gate_biases_layer2.csv", 128, 16, 8, rng)
    write_gate_raw(
        root / "gate_raw.csv",
        [("vehicles", 1, v1), ("vehicles", 2, v2), ("animals", 1, a1), ("animals", 2, a2)],
    )
    return str(root)


@pytest.fixture(scope="session")
def report_dir(tmp_path_factory):
    return build_report_dir(tmp_path_factory.mktemp("report"))
