"""Local hidden-variable models with detector non-clicks as outcome 0.

A model is a finite mixture of deterministic strategy pairs (f, g). This
module evaluates the Bell expression on such models, builds the
eta = 1/M model from the quantum table, and decides by LP whether any local
model reproduces the inefficient-detector statistics.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .bell import alpha
from .bits import BitString, all_bitstrings
from .errors import CapExceeded, SolverError, ValidationError
from .scenario import Scenario, as_efficiency, outcome_table
from .simplex import FEASIBILITY_TOL, solve_feasibility
from .zset import max_avoidance_subset

DEFAULT_PAIR_CAP = 10**6


@dataclass(frozen=True)
class DeterministicStrategyPair:
    """Outcome tables f (Alice) and g (Bob) over explicit label domains."""

    domain_A: tuple
    domain_B: tuple
    f: tuple
    g: tuple

    def __post_init__(self):
        if len(self.f) != len(self.domain_A) or len(self.g) != len(self.domain_B):
            raise ValueError("strategy tables must cover their label domains")

    def alice(self, x) -> int:
        return self.f[self.domain_A.index(x)]

    def bob(self, y) -> int:
        return self.g[self.domain_B.index(y)]


@dataclass
class LhvModel:
    strategies: list  # of (weight, DeterministicStrategyPair)

    def __post_init__(self):
        weights = np.array([w for w, _ in self.strategies], dtype=float)
        if weights.size == 0 or weights.min() < 0:
            raise ValidationError("weights must be nonnegative and nonempty")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValidationError(f"weights sum to {weights.sum()!r}, not 1")

    def distribution(self, x, y, d: int) -> np.ndarray:
        """(d+1) x (d+1) table P(a, b | x, y)."""
        table = np.zeros((d + 1, d + 1))
        for weight, pair in self.strategies:
            table[pair.alice(x), pair.bob(y)] += weight
        return table


@dataclass
class FeasibilityResult:
    feasible: bool
    eta: float
    residual: float
    strategy_count: int
    certificate: LhvModel | None = None

    def to_report(self) -> dict:
        return {
            "eta": self.eta,
            "feasible": self.feasible,
            "residual": self.residual,
            "strategy_count": self.strategy_count,
        }


@dataclass
class EtaStar:
    eta_star: float
    lo: float
    hi: float
    no_violation: bool
    evaluations: int


def alpha_matrix(domain_A, domain_B) -> np.ndarray:
    return np.array([[alpha(x, y) for y in domain_B] for x in domain_A], dtype=np.int64)


def lv_bell_value(pair: DeterministicStrategyPair, d: int | None = None) -> int:
    """sum_k sum_{x in X_k} sum_{y in Y_k} alpha(x, y) for one strategy pair."""
    M = alpha_matrix(pair.domain_A, pair.domain_B)
    f = np.asarray(pair.f)[:, None]
    g = np.asarray(pair.g)[None, :]
    return int(np.sum(M * ((f == g) & (f != 0))))


def lv_bell_values_batch(F: np.ndarray, G: np.ndarray, M: np.ndarray, d: int) -> np.ndarray:
    """Bell values of many pairs at once; rows of F and G are outcome tables."""
    out = np.empty(F.shape[0], dtype=np.int64)
    for k in range(1, d + 1):
        Fk = (F == k).astype(np.int64)
        Gk = (G == k).astype(np.int64)
        term = np.einsum("ni,ij,nj->n", Fk, M, Gk)
        out = term if k == 1 else out + term
    return out


def model_bell_value(model: LhvModel, d: int) -> float:
    return float(sum(w * lv_bell_value(pair, d) for w, pair in model.strategies))


def full_domain_pair(f, g, d: int) -> DeterministicStrategyPair:
    labels = tuple(all_bitstrings(d))
    return DeterministicStrategyPair(labels, labels, tuple(int(v) for v in f), tuple(int(v) for v in g))


def _best_response(M: np.ndarray, other: np.ndarray, d: int) -> np.ndarray:
    onehot = np.stack([other == k for k in range(1, d + 1)], axis=1).astype(np.int64)
    scores = M @ onehot
    best = scores.max(axis=1)
    return np.where(best > 0, scores.argmax(axis=1) + 1, 0)


def best_response_maximize(d: int, seed: int = 0, iterations: int = 50, init=None):
    """Alternating per-label argmax over the full {0,1}^d domain.

    Returns ``(pair, value, history)`` where ``history`` has the value after
    each half-step; it never decreases.
    """
    labels = all_bitstrings(d)
    if len(labels) > 1 << 8:
        raise ValueError("full-domain optimization is limited to d <= 8")
    M = alpha_matrix(labels, labels)
    if init is None:
        rng = np.random.default_rng(seed)
        f = rng.integers(0, d + 1, len(labels))
        g = rng.integers(0, d + 1, len(labels))
    else:
        f, g = (np.asarray(t) for t in init)
    history = [int(lv_bell_values_batch(f[None], g[None], M, d)[0])]
    for _ in range(iterations):
        f_new = _best_response(M, g, d)
        history.append(int(lv_bell_values_batch(f_new[None], g[None], M, d)[0]))
        g_new = _best_response(M.T, f_new, d)
        history.append(int(lv_bell_values_batch(f_new[None], g_new[None], M, d)[0]))
        stable = np.array_equal(f_new, f) and np.array_equal(g_new, g)
        f, g = f_new, g_new
        if stable:
            break
    return full_domain_pair(f, g, d), history[-1], history


def beta_lemma_check(x: BitString, Y: list[BitString]) -> tuple[int, bool]:
    """beta = sum_{y in Y} alpha(x, y) and whether the beta lemma holds.

    The lemma: beta <= 1, and beta <= 0 whenever x is left out of a maximum
    avoidance subset of Y + {x}.
    """
    beta = sum(alpha(x, y) for y in Y)
    domain = list({y.value: y for y in [*Y, x]}.values())
    kept = {z.value for z in max_avoidance_subset(domain)}
    holds = beta <= 1 and (x.value in kept or beta <= 0)
    return beta, holds


def popescu_model(labels_A, labels_B, s: Scenario):
    """Local model reproducing the eta = 1/M statistics exactly.

    The hidden variable is a quadruple (x, i, y, j) drawn with weight
    P(i, j | x, y) / M**2. Alice outputs i if her setting is x, else 0; Bob
    likewise with (y, j).
    """
    labels_A, labels_B = list(labels_A), list(labels_B)
    M = len(labels_A)
    if M == 0:
        raise ValueError("need at least one label per party")
    if len(labels_B) != M:
        raise ValueError(f"both parties need M labels, got {M} and {len(labels_B)}")
    dom_A, dom_B = tuple(labels_A), tuple(labels_B)
    strategies = []
    for ix, x in enumerate(labels_A):
        for iy, y in enumerate(labels_B):
            table = s.click_table(x, y)
            for i, j in zip(*np.nonzero(table)):
                f = tuple(int(i) + 1 if k == ix else 0 for k in range(M))
                g = tuple(int(j) + 1 if k == iy else 0 for k in range(M))
                strategies.append((float(table[i, j]) / M**2, DeterministicStrategyPair(dom_A, dom_B, f, g)))
    total = sum(w for w, _ in strategies)
    strategies = [(w / total, pair) for w, pair in strategies]
    return LhvModel(strategies), 1.0 / M


def verify_model_reproduces(model: LhvModel, s: Scenario, em, labels_A, labels_B=None) -> float:
    """Largest |P_model - P_quantum| over every (x, y, a, b)."""
    labels_B = labels_A if labels_B is None else labels_B
    em = as_efficiency(em)
    worst = 0.0
    for x in labels_A:
        for y in labels_B:
            target = outcome_table(s, x, y, em).probs
            worst = max(worst, float(np.max(np.abs(model.distribution(x, y, s.d) - target))))
    return worst


def strategy_tables(num_labels: int, d: int) -> np.ndarray:
    """All deterministic outcome tables, lexicographic over outcomes 0..d."""
    return np.array(list(itertools.product(range(d + 1), repeat=num_labels)), dtype=np.int64).reshape(-1, num_labels)


def local_feasibility_lp(s: Scenario, labels_A, labels_B, em, cap: int = DEFAULT_PAIR_CAP, solver="simplex") -> FeasibilityResult:
    """Search for weights on all deterministic pairs that reproduce the eta statistics."""
    em = as_efficiency(em)
    labels_A, labels_B = list(labels_A), list(labels_B)
    d = s.d
    count = (d + 1) ** len(labels_A) * (d + 1) ** len(labels_B)
    if count > cap:
        raise CapExceeded(f"{count} strategy pairs exceeds the cap of {cap}")
    FA = strategy_tables(len(labels_A), d)
    FB = strategy_tables(len(labels_B), d)

    rows, rhs = [], []
    for ix, x in enumerate(labels_A):
        for iy, y in enumerate(labels_B):
            target = outcome_table(s, x, y, em).probs
            for a in range(d + 1):
                u = (FA[:, ix] == a).astype(float)
                for b in range(d + 1):
                    v = (FB[:, iy] == b).astype(float)
                    rows.append(np.kron(u, v))
                    rhs.append(target[a, b])
    rows.append(np.ones(count))
    rhs.append(1.0)
    result = solve_feasibility(np.array(rows), np.array(rhs), solver=solver)
    if not result.feasible:
        return FeasibilityResult(False, em.eta, result.residual, count)

    weights = result.x / result.x.sum()
    dom_A, dom_B = tuple(labels_A), tuple(labels_B)
    nb = FB.shape[0]
    strategies = [
        (float(weights[k]), DeterministicStrategyPair(dom_A, dom_B, tuple(FA[k // nb]), tuple(FB[k % nb])))
        for k in np.flatnonzero(weights > 0)
    ]
    certificate = LhvModel(strategies)
    residual = verify_model_reproduces(certificate, s, em, labels_A, labels_B)
    if residual > FEASIBILITY_TOL:
        raise SolverError(f"certificate misses the targets by {residual:.3g}", residual=residual)
    return FeasibilityResult(True, em.eta, residual, count, certificate)


def eta_star_bisection(s: Scenario, labels_A, labels_B, tol: float = 1e-3, cap: int = DEFAULT_PAIR_CAP, solver="simplex") -> EtaStar:
    """Largest efficiency with a local model, by bisection on LP feasibility.

    Feasibility is downward closed in eta: each party can independently turn
    clicks into 0 with probability 1 - eta'/eta.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")

    def feasible(eta):
        return local_feasibility_lp(s, labels_A, labels_B, eta, cap=cap, solver=solver).feasible

    evaluations = 1
    if feasible(1.0):
        return EtaStar(1.0, 1.0, 1.0, True, evaluations)
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = (lo + hi) / 2
        evaluations += 1
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return EtaStar((lo + hi) / 2, lo, hi, False, evaluations)
