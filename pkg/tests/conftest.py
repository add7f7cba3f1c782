from pathlib import Path

import numpy as np
import pytest

from phasetherm.config import load_config, parse_config

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"

ACCEPTANCE_LINES: list[str] = []


def small_config_dict(**overrides) -> dict:
    data = {
        "model": {
            "system": {"levels": [0.0, 0.3]},
            "bath": {"density": {"model": "tabulated", "energies": [-1.0, 2.0], "values": [30.0, 30.0]},
                     "window": [-1.0, 2.0]},
            "shell": {"center": 0.8, "width": 1.0},
            "interaction": {"coupling": 0.02, "profile": {"kind": "gaussian", "sigma_band": 0.5},
                            "base_phase_seed": 7},
        },
        "dynamics": {"t_final": 40.0, "dt_output": 1.0, "initial": {"kind": "subspace", "subspace": 1}},
        "ensemble": {"n": 50, "seed_base": 1},
    }
    for dotted, value in overrides.items():
        node = data
        *head, last = dotted.split(".")
        for key in head:
            node = node.setdefault(key, {})
        node[last] = value
    return data


@pytest.fixture
def small_cfg():
    return parse_config(small_config_dict())


@pytest.fixture
def reference_cfg():
    return load_config(CONFIGS / "reference.yaml")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_hermitian(rng, n, scale=1.0):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * (a + a.conj().T) / 2


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
