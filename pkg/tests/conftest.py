import math

import numpy as np
import pytest

from droopcert.network import InverterParams, Line, NetworkModel, SafetySpec, load_bundled

PI6 = math.pi / 6


def make_network(n_nodes, lines, **params):
    """Nodes 0..n-1 with shared parameters; ``lines`` as (i, k, g, b)."""
    p = InverterParams(**{"tau": 0.5, "lambda_p": 1.0, "lambda_q": 1.0, **params})
    nodes = tuple((i, p) for i in range(n_nodes))
    return NetworkModel(nodes, tuple(Line(i, k, g, b) for i, k, g, b in lines))


def toy_spec(**changes):
    base = dict(s_v=(-0.4, 0.2), s_omega_hz=(-3.0, 3.0), s_theta=(-PI6, PI6))
    base.update(changes)
    return SafetySpec(**base)


def random_network(rng, n_nodes=None, self_prob=0.5):
    """Connected random network on 2-4 nodes with admittance entries of either sign."""
    n = int(rng.integers(2, 5)) if n_nodes is None else n_nodes
    pairs = [(i, i + 1) for i in range(n - 1)]
    for i in range(n):
        for k in range(i + 2, n):
            if rng.random() < 0.4:
                pairs.append((i, k))
    lines = [(i, k, float(rng.uniform(-3, 3)), float(rng.uniform(-3, 3))) for i, k in pairs]
    for i in range(n):
        if rng.random() < self_prob:
            lines.append((i, i, float(rng.uniform(-1, 1)), float(rng.uniform(-1, 1))))
    return make_network(n, lines)


@pytest.fixture(scope="session")
def bundled():
    return load_bundled()


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Collects one summary line per acceptance criterion."""
    return request.config.stash.setdefault(_ACCEPTANCE, [])


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
