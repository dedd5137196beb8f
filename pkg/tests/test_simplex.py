import numpy as np
import pytest

from detloop.simplex import highs_feasibility, phase_one, solve_feasibility


def test_simple_feasible():
    A = np.array([[1.0, 1.0, 0.0], [0.0, 1.0, 1.0]])
    b = np.array([1.0, 0.5])
    r = phase_one(A, b)
    assert r.feasible and r.residual <= 1e-12 and np.all(r.x >= 0)


def test_simple_infeasible():
    A = np.array([[1.0, 1.0], [1.0, 1.0]])
    b = np.array([1.0, 2.0])
    assert not phase_one(A, b).feasible


def test_negative_rhs_and_redundant_rows():
    A = np.array([[-1.0, -1.0], [1.0, 1.0], [2.0, 2.0]])
    b = np.array([-1.0, 1.0, 2.0])
    r = phase_one(A, b)
    assert r.feasible and r.residual <= 1e-12


def test_agrees_with_highs_on_random_instances():
    rng = np.random.default_rng(1)
    for trial in range(40):
        m, n = rng.integers(2, 8), rng.integers(2, 12)
        A = rng.integers(-2, 3, (m, n)).astype(float)
        if trial % 2:
            b = A @ rng.random(n)
        else:
            b = rng.normal(size=m)
        ours = phase_one(A, b)
        theirs = highs_feasibility(A, b)
        assert ours.feasible == theirs.feasible
        if ours.feasible:
            assert np.all(ours.x >= 0)
            assert ours.residual <= 1e-9


def test_pluggable_solver():
    calls = []

    def fake(A, b):
        calls.append(A.shape)
        return phase_one(A, b)

    solve_feasibility(np.eye(2), np.ones(2), solver=fake)
    assert calls == [(2, 2)]
