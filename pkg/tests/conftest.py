import json
from pathlib import Path

import numpy as np
import pytest

from varqbm.ansatz import (
    Circuit,
    ControlledNot,
    ControlledZ,
    FixedRotation,
    Hadamard,
    PauliRotation,
)

FROZEN = json.loads((Path(__file__).parent / "oracles" / "frozen.json").read_text())

# criterion number -> (passed, detail), filled by test_acceptance.py
ACCEPTANCE_RESULTS: dict = {}


@pytest.fixture(scope="session")
def frozen():
    return FROZEN


def random_circuit(rng, n_qubits, n_params, n_fixed=3):
    """Random circuit using every gate kind; each parameter appears once."""
    gates = []
    for k in rng.permutation(n_params):
        gates.append(PauliRotation(str(rng.choice(list("XYZ"))), int(rng.integers(n_qubits)), int(k)))
        if n_qubits > 1 and rng.random() < 0.5:
            c, t = rng.choice(n_qubits, 2, replace=False)
            gates.append((ControlledNot if rng.random() < 0.5 else ControlledZ)(int(c), int(t)))
    for _ in range(n_fixed):
        pos = int(rng.integers(len(gates) + 1))
        if rng.random() < 0.5:
            gates.insert(pos, Hadamard(int(rng.integers(n_qubits))))
        else:
            gates.insert(pos, FixedRotation(str(rng.choice(list("XYZ"))), int(rng.integers(n_qubits)), float(rng.uniform(-3, 3))))
    return Circuit(n_qubits, n_params, tuple(gates))


def random_state(rng, n):
    psi = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    return psi / np.linalg.norm(psi)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
