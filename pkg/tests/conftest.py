import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from _synth import write_synthetic_cifar

from gatednet.data import default_taxonomy, load_cifar_dir, split_train_val
from gatednet.ndcore import RngStream
from gatednet.nn import GateBank, MlpConfig
from gatednet.train import TrainSchedule, train_base, train_gates


@pytest.fixture(scope="session")
def synth_dir(tmp_path_factory):
    """Synthetic CIFAR-format dataset with cross-category confusable pairs."""
    d = tmp_path_factory.mktemp("cifar-synth")
    return write_synthetic_cifar(str(d), train_per_class=100, test_per_class=40)


@pytest.fixture(scope="session")
def synth_data(synth_dir):
    train, test = load_cifar_dir(synth_dir)
    return train, test


@pytest.fixture(scope="session")
def synth_split(synth_data):
    train, test = synth_data
    rng = RngStream(0).child("split")
    return split_train_val(train, 0.1, rng, test=test)


SMALL_SCHEDULE = TrainSchedule(epochs_base=8, epochs_gates=25, val_interval_updates=25)


@pytest.fixture(scope="session")
def trained(synth_split):
    """One small but real two-phase training run, shared across tests."""
    taxonomy = default_taxonomy()
    config = MlpConfig()
    rng = RngStream(0)
    params, stats, base_curve = train_base(synth_split, config, SMALL_SCHEDULE, rng.child("base"))
    bank = GateBank.zeros(list(taxonomy.categories), params.hidden_sizes)
    gate_curves = {}
    for cat in taxonomy.categories:
        biases, curve = train_gates(
            params, stats, cat, synth_split, taxonomy, config, SMALL_SCHEDULE,
            rng.child(f"gates:{cat}"),
        )
        bank.biases[cat] = biases
        gate_curves[cat] = curve
    return {
        "taxonomy": taxonomy,
        "config": config,
        "schedule": SMALL_SCHEDULE,
        "params": params,
        "stats": stats,
        "bank": bank,
        "base_curve": base_curve,
        "gate_curves": gate_curves,
        "split": synth_split,
    }


# --- acceptance summary: one line per criterion at the end of the run ---

_acceptance_results: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call":
        _acceptance_results[name] = "PASS" if report.passed else "FAIL"
    elif report.when == "setup" and report.skipped:
        _acceptance_results[name] = "SKIP"
    elif report.when == "setup" and report.failed:
        _acceptance_results[name] = "ERROR"


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_acceptance_results):
        terminalreporter.write_line(f"{_acceptance_results[name]:5s} {name}")
