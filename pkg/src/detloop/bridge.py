"""Mappings between inefficient-detector local models and communication protocols.

Two directions are implemented:

* rejection: rerun a local model on fresh hidden variables, announcing
  click/no-click each round (two bits), until both parties click;
* guessing: read a shared random tape as a guessed transcript of a
  fixed-length protocol and click only when your own bits are consistent
  with it. This direction is a heuristic bridge: it is exact conditioned on
  both clicking, but the single-click marginals are only measured.
"""

from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import stats

from .errors import IterationCapExceeded
from .lhv import LhvModel
from .scenario import Scenario

ITERATION_CAP = 10**6
HEURISTIC_LABEL = "heuristic bridge"


# ---------------------------------------------------------------- transcripts


@dataclass
class Transcript:
    bits: list = field(default_factory=list)  # of (direction, bit), direction "A->B" or "B->A"

    def send(self, direction: str, bit: int):
        self.bits.append((direction, int(bit)))

    def __len__(self):
        return len(self.bits)

    def count(self, direction: str) -> int:
        return sum(1 for d, _ in self.bits if d == direction)


class GuessTape:
    """Seeded stream of i.i.d. uniform bits, generated on demand."""

    def __init__(self, seed=0):
        self._rng = np.random.default_rng(seed)
        self._bits: list[int] = []

    @classmethod
    def fixed(cls, bits) -> GuessTape:
        """Tape whose first bits are given; reading past them is an error."""
        tape = cls.__new__(cls)
        tape._rng = None
        tape._bits = [int(b) for b in bits]
        return tape

    def __getitem__(self, i: int) -> int:
        while i >= len(self._bits):
            if self._rng is None:
                raise IndexError(f"fixed tape has only {len(self._bits)} bits")
            self._bits.extend(int(b) for b in self._rng.integers(0, 2, 64))
        return self._bits[i]

    def prefix(self, n: int) -> tuple:
        return tuple(self[i] for i in range(n))


# ------------------------------------------------------ local models with eta


class MixtureLvModel:
    """A finite local model as a source of i.i.d. hidden variables.

    The hidden variable is the index of a deterministic strategy pair, drawn
    with the model's weights.
    """

    def __init__(self, model: LhvModel):
        self.model = model
        first = model.strategies[0][1]
        self.domain_A, self.domain_B = first.domain_A, first.domain_B
        self.F = np.array([pair.f for _, pair in model.strategies], dtype=np.int64)
        self.G = np.array([pair.g for _, pair in model.strategies], dtype=np.int64)
        self.weights = np.array([w for w, _ in model.strategies])
        self._cdf = np.cumsum(self.weights)
        self._cdf[-1] = 1.0

    @property
    def click_rates(self) -> tuple[np.ndarray, np.ndarray]:
        return self.weights @ (self.F != 0), self.weights @ (self.G != 0)

    @property
    def eta(self) -> float:
        """Common click probability; raises if it varies across labels or parties."""
        rate_A, rate_B = self.click_rates
        rates = np.concatenate([rate_A, rate_B])
        if np.ptp(rates) > 1e-12:
            raise ValueError("click probability differs across labels")
        return float(rates[0])

    def sample_hidden(self, rng, size=None):
        return np.searchsorted(self._cdf, rng.random(size), side="right")

    def alice(self, x, lam) -> int:
        return int(self.F[lam, self.domain_A.index(x)])

    def bob(self, y, lam) -> int:
        return int(self.G[lam, self.domain_B.index(y)])


def simulate_rejection_protocol(model, x, y, seed=0, cap: int = ITERATION_CAP):
    """Run the click-announcement loop for one input pair.

    Each round draws a fresh hidden variable, both parties announce whether
    they clicked (one bit each way), and the loop ends at the first round
    where both clicked. Returns ``(a, b, transcript, iterations)``.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    transcript = Transcript()
    for k in range(1, cap + 1):
        lam = model.sample_hidden(rng)
        a, b = model.alice(x, lam), model.bob(y, lam)
        transcript.send("A->B", a != 0)
        transcript.send("B->A", b != 0)
        if a != 0 and b != 0:
            return a, b, transcript, k
    raise IterationCapExceeded(f"no joint click within {cap} rounds")


@dataclass
class TranscriptStats:
    trials: int
    mean_bits: float
    mean_iterations: float
    var_iterations: float
    histogram: Counter  # (pair index, a, b) -> count
    eta: float | None = None
    chi2_p: float | None = None
    seed: int = 0

    def to_report(self) -> dict:
        return {
            "eta": self.eta,
            "trials": self.trials,
            "mean_bits": self.mean_bits,
            "mean_iterations": self.mean_iterations,
            "chi2_p": self.chi2_p,
        }


def _shard_sizes(total: int, shards: int) -> list[int]:
    base, extra = divmod(total, shards)
    return [base + (i < extra) for i in range(shards)]


def _vector_shard(model: MixtureLvModel, pairs, start: int, n: int, seed_seq, cap: int):
    rng = np.random.default_rng(seed_seq)
    idx = (start + np.arange(n)) % len(pairs)
    xi = np.array([model.domain_A.index(p[0]) for p in pairs])[idx]
    yi = np.array([model.domain_B.index(p[1]) for p in pairs])[idx]
    a = np.zeros(n, dtype=np.int64)
    b = np.zeros(n, dtype=np.int64)
    rounds = np.zeros(n, dtype=np.int64)
    active = np.arange(n)
    while active.size:
        if rounds[active[0]] >= cap:
            raise IterationCapExceeded(f"no joint click within {cap} rounds")
        lam = model.sample_hidden(rng, active.size)
        fa = model.F[lam, xi[active]]
        gb = model.G[lam, yi[active]]
        rounds[active] += 1
        done = (fa != 0) & (gb != 0)
        a[active[done]] = fa[done]
        b[active[done]] = gb[done]
        active = active[~done]
    return idx, a, b, rounds


def _loop_shard(model, pairs, start: int, n: int, seed_seq, cap: int):
    rng = np.random.default_rng(seed_seq)
    idx = (start + np.arange(n)) % len(pairs)
    out = np.zeros((3, n), dtype=np.int64)
    for t, p in enumerate(idx):
        x, y = pairs[p]
        a, b, _, k = simulate_rejection_protocol(model, x, y, rng, cap)
        out[:, t] = a, b, k
    return idx, out[0], out[1], out[2]


def average_communication_stats(model, label_pairs, trials: int, seed: int = 0, reference=None, shards: int = 16, workers: int = 1, cap: int = ITERATION_CAP) -> TranscriptStats:
    """Aggregate many runs of the rejection protocol.

    Trial ``t`` uses ``label_pairs[t % len(label_pairs)]``. ``reference(x, y)``
    may return the expected conditional d x d table; a chi-square p-value
    of the outcome histogram against it is then reported.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    pairs = list(label_pairs)
    sizes = _shard_sizes(trials, shards)
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(int)
    seeds = np.random.SeedSequence(seed).spawn(shards)
    run = _vector_shard if isinstance(model, MixtureLvModel) else _loop_shard

    def job(i):
        return run(model, pairs, int(starts[i]), sizes[i], seeds[i], cap)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, range(shards)))
    else:
        parts = [job(i) for i in range(shards)]
    idx = np.concatenate([p[0] for p in parts])
    a = np.concatenate([p[1] for p in parts])
    b = np.concatenate([p[2] for p in parts])
    rounds = np.concatenate([p[3] for p in parts])

    histogram = Counter(zip(idx.tolist(), a.tolist(), b.tolist()))
    try:
        eta = model.eta
    except (AttributeError, ValueError):
        eta = None
    result = TranscriptStats(
        trials=trials,
        mean_bits=2.0 * float(rounds.mean()),
        mean_iterations=float(rounds.mean()),
        var_iterations=float(rounds.var(ddof=1)) if trials > 1 else 0.0,
        histogram=histogram,
        eta=eta,
        seed=seed,
    )
    if reference is not None:
        result.chi2_p = chi_square_p(histogram, pairs, reference)
    return result


def chi_square_p(histogram: Counter, pairs, reference) -> float:
    """Pearson goodness-of-fit p-value, one multinomial per label pair."""
    statistic = 0.0
    dof = 0
    for p, (x, y) in enumerate(pairs):
        table = np.asarray(reference(x, y))
        observed = np.zeros_like(table, dtype=float)
        for (q, a, b), count in histogram.items():
            if q == p:
                observed[a - 1, b - 1] += count
        n = observed.sum()
        if n == 0:
            continue
        expected = n * table
        if np.any(observed[expected == 0] > 0):
            return 0.0
        mask = expected > 0
        statistic += float(np.sum((observed[mask] - expected[mask]) ** 2 / expected[mask]))
        dof += int(mask.sum()) - 1
    if dof == 0:
        return 1.0
    return float(stats.chi2.sf(statistic, dof))


def conditional_click_table(s: Scenario):
    """(x, y) -> P(a, b | x, y, both clicked), i.e. the perfect-detector table."""
    return lambda x, y: s.click_table(x, y)


# ------------------------------------------------- shared randomness handling


class _NeedKey(Exception):
    def __init__(self, key):
        super().__init__(key)
        self.key = key


def enumerate_shared(distributions, fn):
    """Exact distribution of ``fn(lookup)`` over independent shared entries.

    ``distributions[key]`` lists ``(value, prob)``. Only entries that ``fn``
    actually reads are branched on, so untouched entries marginalize out.
    Returns a list of ``(prob, result)``.
    """
    results = []
    stack = [({}, 1.0)]
    while stack:
        assigned, prob = stack.pop()

        def lookup(key, assigned=assigned):
            if key not in assigned:
                raise _NeedKey(key)
            return assigned[key]

        try:
            results.append((prob, fn(lookup)))
        except _NeedKey as need:
            for value, q in distributions[need.key]:
                if q > 0:
                    stack.append(({**assigned, need.key: value}, prob * q))
    return results


class LazySample:
    """Shared table whose entries are drawn from ``rng`` the first time they are read."""

    def __init__(self, distributions, rng):
        self._dists = distributions
        self._rng = rng
        self._values = {}

    def __call__(self, key):
        if key not in self._values:
            options = self._dists[key]
            probs = np.array([q for _, q in options])
            k = int(np.searchsorted(np.cumsum(probs), self._rng.random() * probs.sum(), side="right"))
            self._values[key] = options[min(k, len(options) - 1)][0]
        return self._values[key]


# ---------------------------------------------------- fixed-length protocols


class FixedLengthProtocol:
    """Deterministic protocol with a fixed speaking schedule.

    ``schedule`` lists the sender ("A" or "B") of every bit. Subclasses give
    the bit functions and outputs; ``lam`` is a lookup into the shared table
    described by ``distributions``.
    """

    schedule: tuple = ()
    distributions: dict = {}
    variable_length = False

    @property
    def C_A(self) -> int:
        return self.schedule.count("A")

    @property
    def C_B(self) -> int:
        return self.schedule.count("B")

    def alice_bit(self, x, lam, history) -> int:
        raise NotImplementedError

    def bob_bit(self, y, lam, history) -> int:
        raise NotImplementedError

    def alice_output(self, x, lam, transcript) -> int:
        raise NotImplementedError

    def bob_output(self, y, lam, transcript) -> int:
        raise NotImplementedError

    def conversation(self, x, y, lam) -> tuple:
        history = []
        for sender in self.schedule:
            bit = self.alice_bit(x, lam, tuple(history)) if sender == "A" else self.bob_bit(y, lam, tuple(history))
            history.append(int(bit))
        return tuple(history)

    def run(self, x, y, lam):
        """``(a, b, transcript)`` for the honest conversation."""
        history = self.conversation(x, y, lam)
        transcript = Transcript([("A->B" if s == "A" else "B->A", bit) for s, bit in zip(self.schedule, history)])
        return self.alice_output(x, lam, history), self.bob_output(y, lam, history), transcript


class PaddedProtocol(FixedLengthProtocol):
    """Append constant zero bits so each side sends a target number of bits."""

    def __init__(self, inner: FixedLengthProtocol, C_A: int, C_B: int):
        if C_A < inner.C_A or C_B < inner.C_B:
            raise ValueError("padding cannot shorten a conversation")
        self.inner = inner
        self.distributions = inner.distributions
        self._n = len(inner.schedule)
        self.schedule = tuple(inner.schedule) + ("A",) * (C_A - inner.C_A) + ("B",) * (C_B - inner.C_B)

    def alice_bit(self, x, lam, history):
        return self.inner.alice_bit(x, lam, history) if len(history) < self._n else 0

    def bob_bit(self, y, lam, history):
        return self.inner.bob_bit(y, lam, history) if len(history) < self._n else 0

    def alice_output(self, x, lam, transcript):
        return self.inner.alice_output(x, lam, transcript[: self._n])

    def bob_output(self, y, lam, transcript):
        return self.inner.bob_output(y, lam, transcript[: self._n])


def _width(m: int) -> int:
    return (m - 1).bit_length()


def _encode(value: int, width: int) -> list[int]:
    return [value >> k & 1 for k in range(width)]


def _decode(bits) -> int:
    return sum(int(bit) << k for k, bit in enumerate(bits))


class FixtureProtocol(FixedLengthProtocol):
    """Perfect-detector simulation by sending Alice's setting and getting her outcome back.

    The shared table holds, for every setting pair, an outcome pair drawn
    from the perfect-detector distribution. Alice sends her label index;
    Bob looks up the entry for (that index, his setting), replies with
    Alice's outcome and outputs his own.
    """

    def __init__(self, s: Scenario, labels_A, labels_B):
        self.s = s
        self.labels_A, self.labels_B = list(labels_A), list(labels_B)
        self.wa = _width(len(self.labels_A))
        self.wb = _width(s.d)
        self.schedule = ("A",) * self.wa + ("B",) * self.wb
        self.distributions = {}
        for ix, x in enumerate(self.labels_A):
            for iy, y in enumerate(self.labels_B):
                table = s.click_table(x, y)
                self.distributions[(ix, iy)] = [
                    ((int(i) + 1, int(j) + 1), float(table[i, j])) for i, j in zip(*np.nonzero(table))
                ]

    def _entry(self, lam, history, y):
        ix = _decode(history[: self.wa])
        if ix >= len(self.labels_A):
            return None
        return lam((ix, self.labels_B.index(y)))

    def alice_bit(self, x, lam, history):
        return _encode(self.labels_A.index(x), self.wa)[len(history)]

    def bob_bit(self, y, lam, history):
        entry = self._entry(lam, history, y)
        outcome = entry[0] - 1 if entry else 0
        return _encode(outcome, self.wb)[len(history) - self.wa]

    def alice_output(self, x, lam, transcript):
        return min(_decode(transcript[self.wa :]) + 1, self.s.d)

    def bob_output(self, y, lam, transcript):
        entry = self._entry(lam, transcript, y)
        return entry[1] if entry else 1


def fixture_protocol(s: Scenario, labels_A, labels_B) -> FixtureProtocol:
    return FixtureProtocol(s, labels_A, labels_B)


def protocol_distribution(protocol: FixedLengthProtocol, x, y, d: int) -> np.ndarray:
    """Exact d x d output distribution of the honest protocol on (x, y)."""
    table = np.zeros((d, d))
    for prob, (a, b) in enumerate_shared(protocol.distributions, lambda lam: protocol.run(x, y, lam)[:2]):
        table[a - 1, b - 1] += prob
    return table


# ------------------------------------------------------ guessing construction


class GuessingModel:
    """Local model built from a protocol by guessing its transcript.

    Hidden variable: the protocol's shared table plus a tape ``mu``. Alice
    clicks iff every bit she would send, given the tape's earlier bits as
    history, equals the tape's bit at that position; then she outputs as
    if the tape were the conversation. Bob likewise.
    """

    label = HEURISTIC_LABEL

    def __init__(self, protocol: FixedLengthProtocol):
        self.protocol = protocol
        self.C = len(protocol.schedule)

    @property
    def eta_A(self) -> float:
        return 2.0 ** -self.protocol.C_A

    @property
    def eta_B(self) -> float:
        return 2.0 ** -self.protocol.C_B

    @property
    def eta(self) -> float:
        if self.eta_A != self.eta_B:
            raise ValueError("asymmetric efficiencies; pad the protocol to equalize")
        return self.eta_A

    def _party(self, who: str, label, lam, mu) -> int:
        p = self.protocol
        guess = mu.prefix(self.C) if isinstance(mu, GuessTape) else tuple(mu)
        speak = p.alice_bit if who == "A" else p.bob_bit
        for i, sender in enumerate(p.schedule):
            if sender == who and speak(label, lam, guess[:i]) != guess[i]:
                return 0
        out = p.alice_output if who == "A" else p.bob_output
        return out(label, lam, guess)

    def alice(self, x, hidden) -> int:
        return self._party("A", x, *hidden)

    def bob(self, y, hidden) -> int:
        return self._party("B", y, *hidden)

    def sample_hidden(self, rng):
        seed = int(rng.integers(0, 2**63))
        return LazySample(self.protocol.distributions, rng), GuessTape(seed)

    def exact_distribution(self, x, y, d: int) -> np.ndarray:
        """(d+1) x (d+1) table by enumerating all 2**C tapes and the shared table."""
        table = np.zeros((d + 1, d + 1))
        for m in range(1 << self.C):
            mu = tuple(_encode(m, self.C))
            for prob, (a, b) in enumerate_shared(
                self.protocol.distributions, lambda lam: (self.alice(x, (lam, mu)), self.bob(y, (lam, mu)))
            ):
                table[a, b] += prob / (1 << self.C)
        return table


def lv_from_fixed_length_protocol(protocol: FixedLengthProtocol, C_A: int | None = None, C_B: int | None = None, equalize: bool = False) -> GuessingModel:
    """Guessing model with click rates 2**-C_A and 2**-C_B.

    With ``equalize`` the shorter side is padded so both rates are
    2**-max(C_A, C_B).
    """
    if getattr(protocol, "variable_length", False):
        raise ValueError("variable-length protocol; pad it to a fixed length first")
    if C_A is not None and C_A != protocol.C_A or C_B is not None and C_B != protocol.C_B:
        raise ValueError(f"protocol sends ({protocol.C_A}, {protocol.C_B}) bits, not ({C_A}, {C_B})")
    if equalize and protocol.C_A != protocol.C_B:
        top = max(protocol.C_A, protocol.C_B)
        protocol = PaddedProtocol(protocol, top, top)
    return GuessingModel(protocol)


def asymmetric_target(s: Scenario, x, y, eta_A: float, eta_B: float) -> np.ndarray:
    """Inefficient-detector table with separate efficiencies per side."""
    d = s.d
    table = np.zeros((d + 1, d + 1))
    table[0, 0] = (1 - eta_A) * (1 - eta_B)
    table[1:, 0] = [eta_A * (1 - eta_B) * s.marginal(x, i, "A") for i in range(1, d + 1)]
    table[0, 1:] = [(1 - eta_A) * eta_B * s.marginal(y, j, "B") for j in range(1, d + 1)]
    table[1:, 1:] = eta_A * eta_B * s.click_table(x, y)
    return table


@dataclass
class GuessingReport:
    joint_click_rate: float
    expected_joint_click_rate: float
    conditional_deviation: float
    marginal_deviation: float
    eta_A: float
    eta_B: float
    label: str = HEURISTIC_LABEL

    def to_report(self) -> dict:
        return {
            "label": self.label,
            "eta": self.eta_A if self.eta_A == self.eta_B else None,
            "eta_A": self.eta_A,
            "eta_B": self.eta_B,
            "joint_click_rate": self.joint_click_rate,
            "expected_joint_click_rate": self.expected_joint_click_rate,
            "conditional_deviation": self.conditional_deviation,
            "marginal_deviation": self.marginal_deviation,
        }


def guessing_report(model: GuessingModel, s: Scenario, label_pairs) -> GuessingReport:
    """Exact comparison of the guessing model with the protocol and with the efficiency target.

    The joint-click rate and conditional deviation are maxima over the
    label pairs; the marginal deviation is reported, never expected to vanish.
    """
    d = s.d
    worst_rate = None
    cond_dev = marg_dev = 0.0
    expected = model.eta_A * model.eta_B
    for x, y in label_pairs:
        table = model.exact_distribution(x, y, d)
        rate = table[1:, 1:].sum()
        if worst_rate is None or abs(rate - expected) > abs(worst_rate - expected):
            worst_rate = rate
        conditional = table[1:, 1:] / rate
        honest = protocol_distribution(model.protocol, x, y, d)
        cond_dev = max(cond_dev, float(np.max(np.abs(conditional - honest))))
        target = asymmetric_target(s, x, y, model.eta_A, model.eta_B)
        marg_dev = max(marg_dev, float(np.max(np.abs(table - target))))
    return GuessingReport(float(worst_rate), expected, cond_dev, marg_dev, model.eta_A, model.eta_B)


# ---------------------------------------------------------- closed-form bounds


def _rounded_sqrt(q: Fraction) -> float:
    """sqrt(q) rounded to the nearest float, decided in exact arithmetic."""
    v = math.sqrt(float(q))
    while True:
        up, down = math.nextafter(v, math.inf), math.nextafter(v, 0.0)
        if ((Fraction(v) + Fraction(up)) / 2) ** 2 < q:
            v = up
        elif ((Fraction(v) + Fraction(down)) / 2) ** 2 > q:
            v = down
        else:
            return v


def bound_calculators(d=None, eta=None, C=None, M=None) -> dict:
    """Closed-form relations between efficiency, communication and dimension.

    Each entry is computed only when its inputs are given:
    ``C_from_eta = 2/eta**2``, ``eta_from_C = sqrt(2/C)``,
    ``mbcc_bits = (6 + 3 log2 d) d + 2``, ``trivial_bits = log2 M`` and
    ``mu_eta_log2 = -mbcc_bits``.
    """
    out = {}
    if eta is not None:
        if eta <= 0:
            raise ValueError("eta must be positive")
        try:
            out["C_from_eta"] = float(2 / Fraction(eta) ** 2)
        except OverflowError:
            out["C_from_eta"] = math.inf
    if C is not None:
        if not 0 < C < math.inf:
            raise ValueError("C must be positive and finite")
        out["eta_from_C"] = _rounded_sqrt(2 / Fraction(C))
    if d is not None:
        if d < 1:
            raise ValueError("d must be positive")
        bits = (6 + 3 * math.log2(d)) * d + 2
        out["mbcc_bits"] = bits
        out["mu_eta_log2"] = -bits
    if M is not None:
        if M < 1:
            raise ValueError("M must be positive")
        out["trivial_bits"] = math.log2(M)
    return out
