import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from detloop.bell import (
    _half_weight_rows,
    alpha,
    bell_value_from_table,
    bell_value_noisy,
    bell_value_quantum,
    estimate_bell_sampled,
    noisy_provider,
    quantum_provider,
    white_noise_table,
)
from detloop.bits import BitString
from detloop.errors import ValidationError
from detloop.scenario import JointTable, build_bct_scenario

from conftest import alpha_oracle, brute_force_table


def test_alpha_examples():
    x = BitString.from_str("0110")
    assert alpha(x, x) == 1
    assert alpha(x, BitString.from_str("0000")) == -1
    assert alpha(x, BitString.from_str("0111")) == 0
    with pytest.raises(ValueError):
        alpha(x, BitString.from_str("011"))


def test_alpha_symmetric_exhaustive(d4_labels):
    for x, y in itertools.product(d4_labels, repeat=2):
        assert alpha(x, y) == alpha(y, x) == alpha_oracle(x, y)


def test_quantum_closed_form():
    assert bell_value_quantum(4, 1.0).raw == 16
    assert bell_value_quantum(4, 1.0).normalized == 1
    assert bell_value_quantum(4, 0.5).raw == 4
    assert bell_value_quantum(256, 0.0).normalized == 0
    big = bell_value_quantum(4096, 0.5)
    assert big.raw is None and big.normalized == 0.25
    for bad in (2, 6, 12):
        with pytest.raises(ValueError):
            bell_value_quantum(bad, 1.0)


@pytest.mark.parametrize("eta", [0.0, 0.25, 0.5, 1.0])
def test_table_sum_matches_closed_form(eta):
    s = build_bct_scenario(2)
    value = bell_value_from_table(quantum_provider(s, eta), 4)
    assert value.raw == pytest.approx(eta**2 * 16, abs=1e-10)


def test_no_click_provider_gives_zero():
    table = np.zeros((5, 5))
    table[0, 0] = 1.0
    assert bell_value_from_table(lambda x, y: JointTable(4, table), 4).raw == 0


def test_uniform_noise_provider_by_direct_double_sum(d4_labels):
    # oracle: explicit sum over all 256 pairs with brute-force mixed-state tables
    expected = sum(
        alpha_oracle(x, y) * np.trace(brute_force_table(x, y, 1.0, w=1.0)[1:, 1:])
        for x, y in itertools.product(d4_labels, repeat=2)
    )
    assert expected == pytest.approx(-20, abs=1e-10)
    s = build_bct_scenario(2)
    assert bell_value_from_table(noisy_provider(s, 1.0, 1.0), 4).raw == pytest.approx(expected, abs=1e-10)


def test_bad_provider_propagates_validation_error():
    with pytest.raises(ValidationError):
        bell_value_from_table(lambda x, y: JointTable(4, np.full((5, 5), 0.1)), 4)


def test_reduced_sum_agrees_with_full_sum():
    s = build_bct_scenario(2)
    for provider in (quantum_provider(s, 0.7), noisy_provider(s, 0.7, 0.3)):
        full = bell_value_from_table(provider, 4, mode="full")
        reduced = bell_value_from_table(provider, 4, mode="reduced", symmetry_checks=5)
        assert reduced.raw == pytest.approx(full.raw, abs=1e-10)


def test_reduced_sum_at_d64():
    s = build_bct_scenario(6)
    value = bell_value_from_table(quantum_provider(s, 0.5), 64, symmetry_checks=3)
    assert value.normalized == pytest.approx(0.25, abs=1e-12)


def test_reduced_sum_detects_asymmetric_provider():
    s = build_bct_scenario(3)
    good = quantum_provider(s, 1.0)

    def skewed(x, y):
        return good(x, x) if x.value == 0 else good(x, y)

    with pytest.raises(ValidationError):
        bell_value_from_table(skewed, 8, mode="reduced", symmetry_checks=10, seed=1)


def test_linearity_of_mixtures():
    s = build_bct_scenario(2)
    rng = np.random.default_rng(7)
    for _ in range(5):
        p1, p2 = quantum_provider(s, rng.random()), noisy_provider(s, rng.random(), rng.random())
        lam = rng.random()
        mix = lambda x, y: JointTable(4, lam * p1(x, y).probs + (1 - lam) * p2(x, y).probs)
        lhs = bell_value_from_table(mix, 4).raw
        rhs = lam * bell_value_from_table(p1, 4).raw + (1 - lam) * bell_value_from_table(p2, 4).raw
        assert lhs == pytest.approx(rhs, abs=1e-10)


@pytest.mark.parametrize("w, expected", [(0.0, 16.0), (0.5, -2.0), (1.0, -20.0)])
def test_noisy_examples(w, expected):
    assert bell_value_noisy(4, 1.0, w).raw == pytest.approx(expected, abs=1e-12)


def test_noisy_range_check():
    with pytest.raises(ValueError):
        bell_value_noisy(4, 1.0, 1.5)


@settings(max_examples=50, deadline=None)
@given(st.sampled_from([4, 8, 16, 64, 1024]), st.floats(0.01, 1.0), st.floats(0.0, 0.99), st.floats(1e-3, 0.01))
def test_noise_strictly_decreasing(d, eta, w, step):
    lo, hi = bell_value_noisy(d, eta, w), bell_value_noisy(d, eta, min(1.0, w + step))
    assert hi.normalized < lo.normalized


def test_noise_overwhelms_large_d():
    assert bell_value_noisy(4096, 1.0, 1e-6).normalized == -math.inf
    assert bell_value_noisy(64, 1.0, 1e-3).normalized < 0


def test_white_noise_table_normalized():
    white_noise_table(8, 0.4).validate()


@pytest.mark.parametrize("d", [4, 6])
def test_half_weight_rows_uniform(d):
    from scipy import stats

    rows = _half_weight_rows(np.random.default_rng(d), 60_000, d)
    assert np.all(rows.sum(axis=1) == d // 2)
    codes = rows @ (1 << np.arange(d))
    _, counts = np.unique(codes, return_counts=True)
    assert counts.size == math.comb(d, d // 2)
    assert stats.chisquare(counts).pvalue > 0.001


def test_sampler_zero_efficiency():
    est = estimate_bell_sampled(build_bct_scenario(4), 0.0, 1000, seed=3)
    assert est.mean == 0 and est.stderr == 0


def test_sampler_rejects_too_few_samples():
    with pytest.raises(ValueError):
        estimate_bell_sampled(build_bct_scenario(2), 0.5, 0)


def test_sampler_reproducible_and_worker_independent():
    s = build_bct_scenario(4)
    a = estimate_bell_sampled(s, 0.6, 20_000, seed=11)
    b = estimate_bell_sampled(s, 0.6, 20_000, seed=11, workers=4)
    assert (a.mean, a.stderr) == (b.mean, b.stderr)
    c = estimate_bell_sampled(s, 0.6, 20_000, seed=12)
    assert c.mean != a.mean


def test_sampler_stderr_scaling():
    s = build_bct_scenario(4)
    small = estimate_bell_sampled(s, 0.7, 100_000, seed=5)
    large = estimate_bell_sampled(s, 0.7, 200_000, seed=5)
    assert small.stderr / large.stderr == pytest.approx(math.sqrt(2), rel=0.02)
    for est in (small, large):
        assert abs(est.mean - 0.49) <= 3 * est.stderr


def test_sampler_shard_counts_statistically_equivalent():
    s = build_bct_scenario(3)
    a = estimate_bell_sampled(s, 0.8, 100_000, seed=2, shards=4)
    b = estimate_bell_sampled(s, 0.8, 100_000, seed=2, shards=16)
    assert abs(a.mean - b.mean) <= 4 * math.hypot(a.stderr, b.stderr)
