import numpy as np
import pytest

from sla.mechanisms import AttentionConfig, GateWeights, SequenceBatch, head_gates
from sla.tensor import Rng


def make_instance(seed, L=8, H=2, dk=3, dv=None, **cfg):
    config = AttentionConfig(L, H, dk, dv, **cfg)
    rng = Rng(seed)
    batch = SequenceBatch.random(rng, config)
    weights = GateWeights.random(rng, config)
    return config, batch, weights


def gates_of(batch, weights):
    return head_gates(batch.q, weights.w_gq), head_gates(batch.k, weights.w_gk)


def one_hot_gates(L, H, head):
    g = np.zeros((L, H))
    g[:, head] = 1.0
    return g


@pytest.fixture
def instance():
    return make_instance(0)


ACCEPTANCE_LINES = []


def record_criterion(number, name, passed, detail):
    line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
