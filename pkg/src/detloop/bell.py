"""The Bell expression I = sum_{x,y} P(a = b, a != 0 | x, y) * alpha(x, y).

Large-d values are reported normalized, Ihat = I / 2**d, because 2**d
overflows a double long before the interesting dimensions.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .bits import BitString, all_bitstrings, hamming
from .errors import ValidationError
from .scenario import BctScenario, JointTable, as_efficiency, outcome_table

RAW_MAX_D = 64
FULL_SUM_MAX_D = 4
DEFAULT_SHARDS = 16


@dataclass
class BellValue:
    d: int
    eta: float | None
    normalized: float
    raw: float | None = None
    w: float | None = None

    def to_report(self) -> dict:
        report = {"d": self.d, "eta": self.eta, "w": self.w, "normalized_value": self.normalized}
        if self.raw is not None:
            report["raw_value"] = self.raw
        return report


@dataclass
class SampleEstimate:
    mean: float
    stderr: float
    samples: int
    seed: int
    d: int = 0
    eta: float = 0.0
    shards: int = DEFAULT_SHARDS

    def to_report(self) -> dict:
        return {
            "d": self.d,
            "eta": self.eta,
            "w": None,
            "normalized_value": self.mean,
            "samples": self.samples,
            "stderr": self.stderr,
            "seed": self.seed,
        }


def alpha(x: BitString, y: BitString) -> int:
    """+1 if x == y, -1 if they are Hamming distance d/2 apart, else 0."""
    dist = hamming(x, y)
    if dist == 0:
        return 1
    if 2 * dist == x.length:
        return -1
    return 0


def log_comb(n: int, k: int) -> float:
    """Natural log of C(n, k)."""
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def central_comb(d: int) -> float:
    """C(d, d/2) as a float; inf once it leaves double range."""
    if d <= 60:
        return float(math.comb(d, d // 2))
    try:
        return math.exp(log_comb(d, d // 2))
    except OverflowError:
        return math.inf


def _scaled_by_central_comb(d: int, value: float) -> float:
    """C(d, d/2) * value without overflowing in the intermediate."""
    if value == 0.0:
        return 0.0
    if d <= 60:
        return math.comb(d, d // 2) * value
    try:
        return math.copysign(math.exp(log_comb(d, d // 2) + math.log(abs(value))), value)
    except OverflowError:
        return math.copysign(math.inf, value)


def _require_power_of_two(d: int):
    if d < 4 or d & (d - 1):
        raise ValueError(f"d must be a power of two >= 4, got {d}")


def _half_weight(d: int) -> BitString:
    return BitString(d, (1 << (d // 2)) - 1)


def bell_value_quantum(d: int, em) -> BellValue:
    """Closed form eta**2 * 2**d, cross-checked against the translation-reduced sum."""
    _require_power_of_two(d)
    eta = as_efficiency(em).eta
    s = BctScenario(d.bit_length() - 1)
    origin = BitString.zeros(d)

    def same_click(z: BitString) -> float:
        # every diagonal entry (a, a) has outcome XOR 0
        return eta**2 * d * abs(s.amplitude(origin, z, 1, 1)) ** 2

    s_equal, s_half = same_click(origin), same_click(_half_weight(d))
    if abs(s_half) > 1e-12:
        raise AssertionError(f"distance-d/2 settings gave P(a=b) = {s_half}")
    reduced = s_equal - _scaled_by_central_comb(d, s_half)
    if abs(reduced - eta**2) > 1e-12:
        raise AssertionError(f"reduced sum {reduced} disagrees with eta^2 = {eta**2}")

    raw = eta**2 * 2.0**d if d <= RAW_MAX_D else None
    return BellValue(d=d, eta=eta, normalized=eta**2, raw=raw)


def _validated(table: JointTable) -> JointTable:
    return table.validate()


def bell_value_from_table(provider, d: int, mode: str = "auto", symmetry_checks: int = 0, seed: int = 0) -> BellValue:
    """Evaluate I from a per-setting table provider ``(x, y) -> JointTable``.

    ``mode="full"`` sums over every pair with nonzero alpha (d <= 4).
    ``mode="reduced"`` assumes the provider only depends on the Hamming
    weight of x ^ y and evaluates one representative per class;
    ``symmetry_checks`` random class members are compared against it.
    """
    if mode == "auto":
        mode = "full" if d <= FULL_SUM_MAX_D else "reduced"
    if d % 2:
        raise ValueError(f"d must be even, got {d}")

    if mode == "full":
        if d > FULL_SUM_MAX_D:
            raise ValueError(f"full double sum is limited to d <= {FULL_SUM_MAX_D}")
        labels = all_bitstrings(d)
        raw = 0.0
        for x in labels:
            for y in labels:
                weight = alpha(x, y)
                if weight:
                    raw += weight * _validated(provider(x, y)).same_click()
        return BellValue(d=d, eta=None, normalized=raw / 2.0**d, raw=raw)

    if mode != "reduced":
        raise ValueError(f"unknown mode {mode!r}")
    if d > RAW_MAX_D:
        raise ValueError(f"reduced sum is limited to d <= {RAW_MAX_D}")
    origin = BitString.zeros(d)
    s_equal = _validated(provider(origin, origin)).same_click()
    s_half = _validated(provider(origin, _half_weight(d))).same_click()
    if symmetry_checks:
        rng = np.random.default_rng(seed)
        for _ in range(symmetry_checks):
            x = BitString(d, int.from_bytes(rng.bytes((d + 7) // 8), "little") & ((1 << d) - 1))
            flips = rng.choice(d, d // 2, replace=False)
            y = x ^ BitString(d, sum(1 << int(k) for k in flips))
            for pair, expected in (((x, x), s_equal), ((x, y), s_half)):
                got = _validated(provider(*pair)).same_click()
                if abs(got - expected) > 1e-12:
                    raise ValidationError("provider is not symmetric under translation/permutation")
    normalized = s_equal - _scaled_by_central_comb(d, s_half)
    return BellValue(d=d, eta=None, normalized=normalized, raw=normalized * 2.0**d)


def quantum_provider(s, em):
    em = as_efficiency(em)
    return lambda x, y: outcome_table(s, x, y, em)


def white_noise_table(d: int, em) -> JointTable:
    """Outcome table of the maximally mixed two-party state."""
    eta = as_efficiency(em).eta
    probs = np.empty((d + 1, d + 1))
    probs[0, 0] = (1 - eta) ** 2
    probs[1:, 0] = probs[0, 1:] = eta * (1 - eta) / d
    probs[1:, 1:] = eta**2 / d**2
    return JointTable(d, probs)


def noisy_provider(s, em, w: float):
    """Tables for the state (1 - w)|psi><psi| + w * identity / d**2."""
    em = as_efficiency(em)
    noise = white_noise_table(s.d, em).probs

    def provider(x, y):
        return JointTable(s.d, (1 - w) * outcome_table(s, x, y, em).probs + w * noise)

    return provider


def bell_value_noisy(d: int, em, w: float) -> BellValue:
    """Bell value under white noise of weight ``w``.

    Only the distance-d/2 pairs see the noise, but there are C(d, d/2) of
    them per x, so any w > 0 eventually drives the value negative.
    """
    _require_power_of_two(d)
    if not 0.0 <= w <= 1.0:
        raise ValueError(f"w must lie in [0, 1], got {w}")
    eta = as_efficiency(em).eta
    normalized = eta**2 * ((1 - w) + w / d - _scaled_by_central_comb(d, w / d))
    raw = None
    if d <= RAW_MAX_D:
        raw = eta**2 * 2.0**d * ((1 - w) + w / d - math.comb(d, d // 2) * w / d)
    return BellValue(d=d, eta=eta, normalized=normalized, raw=raw, w=w)


def _shard_sizes(total: int, shards: int) -> list[int]:
    base, extra = divmod(total, shards)
    return [base + (i < extra) for i in range(shards)]


def _half_weight_rows(rng, rows: int, d: int) -> np.ndarray:
    """``rows`` uniformly random 0/1 rows of weight exactly d/2.

    Start from i.i.d. fair bits, then flip randomly chosen majority-valued
    positions until the weight is d/2. Every step commutes with permuting
    positions, so the result is uniform on the weight-d/2 layer. Expected
    cost is O(d) per row.
    """
    bits = rng.integers(0, 2, (rows, d), dtype=np.uint8)
    excess = bits.sum(axis=1, dtype=np.int64) - d // 2
    active = np.flatnonzero(excess)
    while active.size:
        pos = rng.integers(0, d, active.size)
        majority = (excess[active] > 0).astype(np.uint8)
        hit = bits[active, pos] == majority
        rows_hit, pos_hit = active[hit], pos[hit]
        bits[rows_hit, pos_hit] ^= 1
        excess[rows_hit] -= 2 * majority[hit].astype(np.int64) - 1
        active = active[excess[active] != 0]
    return bits


def _random_packed(rng, rows: int, d: int) -> np.ndarray:
    """Uniform d-bit strings in ``np.packbits`` layout; unused tail bits are zero."""
    x = rng.integers(0, 256, (rows, (d + 7) // 8), dtype=np.uint8)
    if d % 8:
        x[:, -1] &= (0xFF << (8 - d % 8)) & 0xFF
    return x


def _run_shard(seed_seq, d: int, eta: float, n_equal: int, n_half: int) -> tuple[int, int]:
    """Count same-outcome double clicks in each stratum for one shard.

    Settings are drawn as packed bit strings: x uniform, and y = x for the
    first stratum or x with a uniform d/2-subset flipped for the second.
    Given two clicks, P(b = a) is ((d - 2|x ^ y|) / d)**2.
    """
    rng = np.random.default_rng(seed_seq)
    hits = []
    chunk = max(1, (1 << 25) // d)
    for n, stratum in ((n_equal, "equal"), (n_half, "half")):
        count = 0
        done = 0
        while done < n:
            m = min(chunk, n - done)
            x = _random_packed(rng, m, d)
            if stratum == "equal":
                y = x.copy()
            else:
                y = x ^ np.packbits(_half_weight_rows(rng, m, d), axis=1)
            distance = np.bitwise_count(x ^ y).sum(axis=1, dtype=np.int64)
            clicks = (rng.random(m) < eta) & (rng.random(m) < eta)
            p_same = ((d - 2.0 * distance) / d) ** 2
            same = rng.random(m) < p_same
            count += int(np.count_nonzero(clicks & same))
            done += m
        hits.append(count)
    return hits[0], hits[1]


def estimate_bell_sampled(s: BctScenario, em, samples: int, seed: int = 0, shards: int = DEFAULT_SHARDS, workers: int = 1) -> SampleEstimate:
    """Stratified Monte Carlo estimate of the normalized Bell value.

    Half the samples go to x = y, half to pairs at distance d/2; the strata
    are recombined with their exact sizes 2**d and 2**d * C(d, d/2). Shards
    get seeds spawned from ``seed``, so the result depends on
    (seed, samples, shards) and never on ``workers``.
    """
    if not isinstance(s, BctScenario):
        raise ValueError("sampling needs a BCT scenario")
    if samples < 2:
        raise ValueError(f"samples must be at least 2, got {samples}")
    eta = as_efficiency(em).eta
    d = s.d
    n_equal = (samples + 1) // 2
    n_half = samples - n_equal
    seeds = np.random.SeedSequence(seed).spawn(shards)
    jobs = list(zip(seeds, _shard_sizes(n_equal, shards), _shard_sizes(n_half, shards)))

    def run(job):
        return _run_shard(job[0], d, eta, job[1], job[2])

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(job) for job in jobs]
    hits_equal = sum(r[0] for r in results)
    hits_half = sum(r[1] for r in results)

    mean_equal, var_equal = _bernoulli_stats(hits_equal, n_equal)
    mean_half, var_half = _bernoulli_stats(hits_half, n_half)
    mean = mean_equal - _scaled_by_central_comb(d, mean_half)
    spread_half = _scaled_by_central_comb(d, math.sqrt(var_half / n_half)) if var_half else 0.0
    stderr = math.sqrt(var_equal / n_equal + spread_half**2)
    return SampleEstimate(mean=mean, stderr=stderr, samples=samples, seed=seed, d=d, eta=eta, shards=shards)


def _bernoulli_stats(hits: int, n: int) -> tuple[float, float]:
    """Sample mean and unbiased variance of n indicators with ``hits`` ones."""
    mean = hits / n
    var = (hits - n * mean * mean) / (n - 1) if n > 1 else 0.0
    return mean, max(var, 0.0)
