import math

import numpy as np
import pytest

from detloop.bits import BitString

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def sylvester_basis(x: BitString) -> np.ndarray:
    """Rows = basis vectors of setting x, built from Kronecker powers of H2."""
    d = x.length
    h = np.array([[1.0]])
    while h.shape[0] < d:
        h = np.kron(h, np.array([[1.0, 1.0], [1.0, -1.0]]))
    signs = np.array([-1.0 if c == "1" else 1.0 for c in str(x)])
    return h * signs / math.sqrt(d)


def psi_vector(d: int) -> np.ndarray:
    return np.eye(d).reshape(d * d) / math.sqrt(d)


def brute_force_table(x, y, eta, w=0.0):
    """Joint outcome table from density matrices and projectors, no shortcuts."""
    d = x.length
    bx, by = sylvester_basis(x), sylvester_basis(y)
    psi = psi_vector(d)
    rho = (1 - w) * np.outer(psi, psi) + w * np.eye(d * d) / d**2
    table = np.zeros((d + 1, d + 1))
    for i in range(d):
        for j in range(d):
            proj = np.kron(np.outer(bx[i], bx[i]), np.outer(by[j], by[j]))
            table[i + 1, j + 1] = eta**2 * np.trace(proj @ rho)
        pa = np.kron(np.outer(bx[i], bx[i]), np.eye(d))
        pb = np.kron(np.eye(d), np.outer(by[i], by[i]))
        table[i + 1, 0] = eta * (1 - eta) * np.trace(pa @ rho)
        table[0, i + 1] = eta * (1 - eta) * np.trace(pb @ rho)
    table[0, 0] = (1 - eta) ** 2
    return table


def count_distance(x: BitString, y: BitString) -> int:
    return sum(a != b for a, b in zip(str(x), str(y)))


def alpha_oracle(x, y) -> int:
    dist = count_distance(x, y)
    return 1 if dist == 0 else (-1 if 2 * dist == x.length else 0)


@pytest.fixture
def d4_labels():
    return [BitString(4, v) for v in range(16)]


def four_setting_scenario():
    """d=2, four real bases per side at multiples of pi/8; Bob's list reversed."""
    from detloop.scenario import ExplicitScenario, real_basis

    angles = [k * math.pi / 8 for k in range(4)]
    alice = np.array([real_basis(t) for t in angles])
    bob = np.array([real_basis(t) for t in reversed(angles)])
    return ExplicitScenario(alice, bob)


def chsh_value(s, eta=1.0):
    """Largest CHSH combination of correlators, non-clicks mapped to outcome +1."""
    from detloop.scenario import outcome_table

    sign = np.array([1.0, 1.0, -1.0])  # outcome 0 -> +1, outcome 1 -> +1, outcome 2 -> -1
    E = np.zeros((2, 2))
    for i, x in enumerate(s.labels_A):
        for j, y in enumerate(s.labels_B):
            E[i, j] = sign @ outcome_table(s, x, y, eta).probs @ sign
    return max(abs(E.sum() - 2 * E[a, b]) for a in range(2) for b in range(2))
