"""Measurement scenarios on the maximally entangled state and their outcome tables.

Outcomes are numbered 0..d; 0 means the detector did not click and outcome
``a >= 1`` corresponds to basis vector ``a - 1``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .bits import BitString, fwht
from .errors import ValidationError

ORTHONORMALITY_TOL = 1e-9


@dataclass(frozen=True)
class EfficiencyModel:
    eta: float

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")


def as_efficiency(em) -> EfficiencyModel:
    return em if isinstance(em, EfficiencyModel) else EfficiencyModel(float(em))


@dataclass
class JointTable:
    """Joint outcome distribution for one setting pair; ``probs[a, b]``."""

    d: int
    probs: np.ndarray

    def __getitem__(self, ab):
        return self.probs[ab]

    def same_click(self) -> float:
        """P(a = b and a != 0)."""
        return float(np.trace(self.probs[1:, 1:]))

    def validate(self, tol: float = 1e-12):
        p = self.probs
        if p.shape != (self.d + 1, self.d + 1):
            raise ValidationError(f"table shape {p.shape} does not match d={self.d}")
        if p.min() < -tol:
            raise ValidationError(f"negative probability {p.min()}")
        total = p.sum()
        if abs(total - 1.0) > tol:
            raise ValidationError(f"table sums to {total!r}, not 1")
        return self


class Scenario:
    """Common surface of the two scenario families.

    Subclasses provide per-setting amplitudes, single-party marginals and a
    label check; everything else is built on top of those.
    """

    d: int

    def check_label(self, label, party: str):
        raise NotImplementedError

    def amplitude(self, x, y, a: int, b: int) -> complex:
        raise NotImplementedError

    def click_table(self, x, y) -> np.ndarray:
        """d x d array of perfect-detector probabilities P(i, j | x, y)."""
        raise NotImplementedError

    def marginal(self, label, outcome: int, party: str) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class BctScenario(Scenario):
    """Labels are d-bit strings with d = 2**n.

    Basis vector ``a`` of setting ``x`` has components
    ``(-1)**(x_k + parity(a & k)) / sqrt(d)``. The family of 2**d settings is
    never listed.
    """

    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"n must be at least 2, got {self.n}")

    @property
    def d(self) -> int:
        return 1 << self.n

    @property
    def num_settings(self) -> int:
        return 1 << self.d

    def check_label(self, label, party: str = "A"):
        if not isinstance(label, BitString) or label.length != self.d:
            raise ValueError(f"party {party} label must be a {self.d}-bit BitString, got {label!r}")

    def basis(self, x: BitString) -> np.ndarray:
        """Rows are the basis vectors of setting ``x`` (d x d, real)."""
        self.check_label(x)
        k = np.arange(self.d)
        signs = (-1.0) ** x.to_array()
        had = (-1.0) ** (np.bitwise_count(np.bitwise_and.outer(k, k)) & 1)
        return had * signs / math.sqrt(self.d)

    def amplitude(self, x, y, a, b):
        self.check_label(x, "A")
        self.check_label(y, "B")
        _check_click(a, self.d)
        _check_click(b, self.d)
        z = (x ^ y).to_array().astype(np.int64)
        c = (a - 1) ^ (b - 1)
        k = np.arange(self.d)
        exponent = z ^ (np.bitwise_count(c & k).astype(np.int64) & 1)
        return float(np.sum(1 - 2 * exponent)) / self.d**1.5

    def amplitudes_by_xor(self, x, y) -> np.ndarray:
        """Amplitude for every outcome XOR c = (a-1) ^ (b-1), via one Walsh-Hadamard transform."""
        self.check_label(x, "A")
        self.check_label(y, "B")
        signs = 1.0 - 2.0 * (x ^ y).to_array()
        return fwht(signs) / self.d**1.5

    def click_table(self, x, y):
        amp = self.amplitudes_by_xor(x, y)
        idx = np.arange(self.d)
        return amp[np.bitwise_xor.outer(idx, idx)] ** 2

    def marginal(self, label, outcome, party="A"):
        self.check_label(label, party)
        _check_click(outcome, self.d)
        return 1.0 / self.d


@dataclass(frozen=True, eq=False)
class ExplicitScenario(Scenario):
    """Settings given as explicit orthonormal bases; labels are basis indices.

    ``alice_bases[x, i]`` is the vector for outcome ``i + 1`` of setting ``x``.
    """

    alice_bases: np.ndarray
    bob_bases: np.ndarray
    state: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        alice = np.asarray(self.alice_bases, dtype=complex)
        bob = np.asarray(self.bob_bases, dtype=complex)
        for name, bases in (("alice_bases", alice), ("bob_bases", bob)):
            if bases.ndim != 3 or bases.shape[1] != bases.shape[2] or bases.shape[0] == 0:
                raise ValidationError(f"{name} must have shape (settings, d, d), got {bases.shape}")
        if alice.shape[1] != bob.shape[1]:
            raise ValidationError(f"d mismatch: alice d={alice.shape[1]}, bob d={bob.shape[1]}")
        d = alice.shape[1]
        for name, bases in (("alice_bases", alice), ("bob_bases", bob)):
            for index, basis in enumerate(bases):
                gram = basis.conj() @ basis.T
                err = np.max(np.abs(gram - np.eye(d)))
                if err > ORTHONORMALITY_TOL:
                    raise ValidationError(
                        f"{name}[{index}] is not orthonormal (max deviation {err:.3g})"
                    )
        object.__setattr__(self, "alice_bases", alice)
        object.__setattr__(self, "bob_bases", bob)
        # psi = sum_k |k>|k> / sqrt(d), stored as the coefficient matrix psi[k, l]
        object.__setattr__(self, "state", np.eye(d, dtype=complex) / math.sqrt(d))

    @property
    def d(self) -> int:
        return self.alice_bases.shape[1]

    @property
    def labels_A(self) -> list[int]:
        return list(range(self.alice_bases.shape[0]))

    @property
    def labels_B(self) -> list[int]:
        return list(range(self.bob_bases.shape[0]))

    def check_label(self, label, party="A"):
        bases = self.alice_bases if party == "A" else self.bob_bases
        if isinstance(label, bool) or not isinstance(label, (int, np.integer)) or not 0 <= label < len(bases):
            raise ValueError(f"party {party} label must be an index in [0, {len(bases)}), got {label!r}")

    def amplitude(self, x, y, a, b):
        self.check_label(x, "A")
        self.check_label(y, "B")
        _check_click(a, self.d)
        _check_click(b, self.d)
        # <psi| (|x_a> |y_b>) with psi real: plain (unconjugated) component product
        xa = self.alice_bases[x, a - 1]
        yb = self.bob_bases[y, b - 1]
        return complex(np.sum(xa * yb) / math.sqrt(self.d))

    def click_table(self, x, y):
        self.check_label(x, "A")
        self.check_label(y, "B")
        amp = self.alice_bases[x] @ self.bob_bases[y].T / math.sqrt(self.d)
        return np.abs(amp) ** 2

    def reduced_state(self, party: str) -> np.ndarray:
        psi = self.state
        return psi @ psi.conj().T if party == "A" else psi.T @ psi.conj()

    def marginal(self, label, outcome, party="A"):
        self.check_label(label, party)
        _check_click(outcome, self.d)
        bases = self.alice_bases if party == "A" else self.bob_bases
        v = bases[label, outcome - 1]
        # Tr(|v><v| rho) for the reduced state; the |v><v| ⊗ 1 trace in Eq. form
        return float(np.real(v.conj() @ self.reduced_state(party) @ v))


def _check_click(outcome: int, d: int):
    if not 1 <= outcome <= d:
        raise ValueError(f"click outcome must be in 1..{d}, got {outcome}")


def build_bct_scenario(n: int) -> BctScenario:
    return BctScenario(n)


def joint_amplitude(s: Scenario, x, y, a: int, b: int) -> complex:
    """Amplitude <psi| x_a, y_b> for two click outcomes."""
    return s.amplitude(x, y, a, b)


def joint_prob(s: Scenario, x, y, a: int, b: int, em) -> float:
    """Joint outcome probability with independent detector efficiency ``eta``."""
    eta = as_efficiency(em).eta
    s.check_label(x, "A")
    s.check_label(y, "B")
    for outcome in (a, b):
        if not 0 <= outcome <= s.d:
            raise ValueError(f"outcome must be in 0..{s.d}, got {outcome}")
    if a == 0 and b == 0:
        return (1 - eta) ** 2
    if b == 0:
        return eta * (1 - eta) * s.marginal(x, a, "A")
    if a == 0:
        return eta * (1 - eta) * s.marginal(y, b, "B")
    return eta**2 * abs(s.amplitude(x, y, a, b)) ** 2


def outcome_table(s: Scenario, x, y, em) -> JointTable:
    """Full (d+1) x (d+1) table of joint probabilities for the setting pair (x, y)."""
    eta = as_efficiency(em).eta
    d = s.d
    probs = np.zeros((d + 1, d + 1))
    probs[0, 0] = (1 - eta) ** 2
    probs[1:, 0] = [eta * (1 - eta) * s.marginal(x, i, "A") for i in range(1, d + 1)]
    probs[0, 1:] = [eta * (1 - eta) * s.marginal(y, j, "B") for j in range(1, d + 1)]
    probs[1:, 1:] = eta**2 * s.click_table(x, y)
    return JointTable(d, probs)


def load_explicit_scenario(document) -> ExplicitScenario:
    """Build a validated scenario from the JSON document (dict or JSON text).

    Vectors are lists of ``[re, im]`` pairs.
    """
    if isinstance(document, (str, bytes)):
        document = json.loads(document)
    try:
        d = document["d"]
        state = document["state"]
        raw = {party: document[party] for party in ("alice_bases", "bob_bases")}
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"scenario document is missing field {exc}") from None
    if isinstance(d, bool) or not isinstance(d, int) or d < 1:
        raise ValidationError(f"d must be a positive integer, got {d!r}")
    if state != "maximally_entangled":
        raise ValidationError(f"unsupported state {state!r}")
    bases = {}
    for party, entries in raw.items():
        try:
            arr = np.asarray(entries, dtype=float)
        except (ValueError, TypeError):
            raise ValidationError(f"{party} is not a rectangular array of [re, im] pairs") from None
        if arr.ndim != 4 or arr.shape[1:] != (d, d, 2):
            raise ValidationError(f"{party} has shape {arr.shape}, expected (settings, {d}, {d}, 2)")
        bases[party] = arr[..., 0] + 1j * arr[..., 1]
    return ExplicitScenario(bases["alice_bases"], bases["bob_bases"])


def scenario_document(s: ExplicitScenario) -> dict:
    def encode(bases):
        return [[[[float(c.real), float(c.imag)] for c in vec] for vec in basis] for basis in bases]

    return {
        "d": s.d,
        "state": "maximally_entangled",
        "alice_bases": encode(s.alice_bases),
        "bob_bases": encode(s.bob_bases),
    }


def real_basis(theta: float) -> np.ndarray:
    """Qubit basis rotated by ``theta`` in the real plane."""
    return np.array([[math.cos(theta), math.sin(theta)], [-math.sin(theta), math.cos(theta)]])


def chsh_scenario() -> ExplicitScenario:
    """d=2 scenario at the CHSH-optimal real angles (0, pi/4 vs pi/8, -pi/8)."""
    alice = [real_basis(0.0), real_basis(math.pi / 4)]
    bob = [real_basis(math.pi / 8), real_basis(-math.pi / 8)]
    return ExplicitScenario(np.array(alice), np.array(bob))


def setting_labels(s: Scenario, labels=None, party: str = "A"):
    """Resolve a label list: explicit scenarios default to all their settings."""
    if labels is None:
        if isinstance(s, ExplicitScenario):
            return s.labels_A if party == "A" else s.labels_B
        raise ValueError("BCT scenarios need an explicit label list")
    for label in labels:
        s.check_label(label, party)
    return list(labels)
