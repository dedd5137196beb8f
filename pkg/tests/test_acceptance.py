"""One test per headline acceptance criterion; each prints a PASS/FAIL line."""

import itertools
import json
import math
import time

import numpy as np
import pytest

from detloop.bell import bell_value_from_table, bell_value_noisy, estimate_bell_sampled, quantum_provider
from detloop.bits import BitString, all_bitstrings
from detloop.bridge import (
    MixtureLvModel,
    average_communication_stats,
    bound_calculators,
    conditional_click_table,
    fixture_protocol,
    guessing_report,
    lv_from_fixed_length_protocol,
)
from detloop.cli import run
from detloop.lhv import (
    beta_lemma_check,
    best_response_maximize,
    local_feasibility_lp,
    lv_bell_value,
    lv_bell_values_batch,
    alpha_matrix,
    popescu_model,
    verify_model_reproduces,
)
from detloop.scenario import build_bct_scenario, chsh_scenario, outcome_table
from detloop.zset import eta_bound_from_log2z, eta_paper_bound, first_bound_crossing, max_z_enumerate, max_z_exact

from conftest import ACCEPTANCE_LINES, alpha_oracle, brute_force_table, four_setting_scenario

CROSSING_BASELINE = 1510


def check(name, fn, limit=None):
    """Run ``fn``, time it, and log one PASS/FAIL line; ``fn`` returns a short detail string."""
    start = time.perf_counter()
    try:
        detail = fn()
    except Exception as exc:
        line = f"FAIL  {name}  ({time.perf_counter() - start:.2f}s)  {type(exc).__name__}: {exc}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        raise
    elapsed = time.perf_counter() - start
    ok = limit is None or elapsed < limit
    budget = f" / limit {limit:g}s" if limit else ""
    line = f"{'PASS' if ok else 'FAIL'}  {name}  ({elapsed:.2f}s{budget})  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_bct_click_properties():
    s = build_bct_scenario(2)
    labels = all_bitstrings(4)
    etas = (0.3, 0.75, 1.0)

    def body():
        worst = 0.0
        for eta in etas:
            for x, y in itertools.product(labels, repeat=2):
                table = outcome_table(s, x, y, eta)
                table.validate()
                same = float(np.trace(table.probs[1:, 1:]))
                dist = (x ^ y).weight()
                if dist == 0:
                    worst = max(worst, abs(same - eta**2))
                    assert abs(same / eta**2 - 1) <= 1e-12
                elif dist == 2:
                    worst = max(worst, abs(same))
                assert worst <= 1e-12, (x, y, eta, same)
        return f"256 pairs x eta {etas}, worst deviation {worst:.1e}"

    check("BCT properties at d=4 (x=y -> eta^2, distance 2 -> 0)", body, limit=1.0)
    # independent oracle: projectors on the maximally entangled state
    for x, y in itertools.product(labels, repeat=2):
        assert np.max(np.abs(outcome_table(s, x, y, 0.75).probs - brute_force_table(x, y, 0.75))) <= 1e-12


def test_bell_value_reproduction():
    s4 = build_bct_scenario(2)

    def exact():
        worst = max(abs(bell_value_from_table(quantum_provider(s4, eta), 4).raw - eta**2 * 16) for eta in (0, 0.25, 0.5, 1))
        assert worst <= 1e-10
        return f"table sum at d=4, worst |I - 16 eta^2| = {worst:.1e}"

    check("Bell value from tables equals eta^2 2^d at d=4", exact)
    for n, eta in ((4, 1.0), (4, 0.7), (12, 1.0), (12, 0.7)):
        def sampled(n=n, eta=eta):
            est = estimate_bell_sampled(build_bct_scenario(n), eta, 10**6, seed=0)
            assert abs(est.mean - eta**2) <= 3 * est.stderr, est
            return f"mean {est.mean:.6f}, stderr {est.stderr:.2e}, target {eta**2:.4f}"

        check(f"Monte Carlo at d={1 << n}, eta={eta}, 10^6 samples within 3 stderr", sampled, limit=30.0)


def test_local_model_at_one_over_m():
    s = build_bct_scenario(2)
    labels = all_bitstrings(4)[:4]

    def construction():
        model, eta = popescu_model(labels, labels, s)
        dev = verify_model_reproduces(model, s, eta, labels)
        assert eta == 0.25 and dev <= 1e-12
        return f"d=4, M=4, eta=1/4, max deviation {dev:.1e}"

    check("explicit local model reproduces the eta=1/M table", construction)

    def lp():
        chsh, four = chsh_scenario(), four_setting_scenario()
        cases = [
            (1, s, [labels[3]], [all_bitstrings(4)[6]]),
            (2, chsh, chsh.labels_A, chsh.labels_B),
            (4, four, four.labels_A, four.labels_B),
        ]
        out = []
        for m, scen, la, lb in cases:
            r = local_feasibility_lp(scen, la, lb, 1.0 / m)
            assert r.feasible and r.residual <= 1e-9, (m, r)
            out.append(f"M={m}: {r.strategy_count} pairs, residual {r.residual:.1e}")
        return "; ".join(out)

    check("LP finds a local model at eta=1/M for M in {1,2,4}", lp)


def test_rejection_protocol():
    s = build_bct_scenario(2)
    labels = all_bitstrings(4)[:2]
    model, eta = popescu_model(labels, labels, s)
    pairs = [(x, y) for x in labels for y in labels]

    def body():
        stats = average_communication_stats(
            MixtureLvModel(model), pairs, 10**6, seed=0, reference=conditional_click_table(s)
        )
        assert stats.eta == eta == 0.5
        assert abs(stats.mean_bits - 8) <= 0.02 * 8
        assert stats.chi2_p > 0.001
        return f"mean bits {stats.mean_bits:.4f} (target 8), chi-square p {stats.chi2_p:.3f}"

    check("rejection protocol at eta=0.5 over 10^6 trials", body, limit=60.0)


def test_avoidance_machinery():
    def exact():
        sizes = {}
        for d in (2, 4):
            z = max_z_exact(d)
            assert z.size == max_z_enumerate(d).size
            sizes[d] = z.size
        assert sizes[4] <= 15
        return f"|Z|(2)={sizes[2]}, |Z|(4)={sizes[4]} match subset enumeration"

    check("exact avoidance sets at d=2,4", exact)

    def bound():
        labels = all_bitstrings(4)
        M = alpha_matrix(labels, labels)
        limit = 4 * max_z_exact(4).size
        rng = np.random.default_rng(0)
        F, G = rng.integers(0, 5, (10**5, 16)), rng.integers(0, 5, (10**5, 16))
        values = lv_bell_values_batch(F, G, M, 4)
        optimized = [best_response_maximize(4, seed=r)[1] for r in range(100)]
        violations = int(np.count_nonzero(values > limit)) + sum(v > limit for v in optimized)
        assert violations == 0
        return f"bound {limit}; best random {values.max()}, best optimized {max(optimized)}; 0 violations"

    check("local value <= d|Z| on 10^5 random + 10^2 optimized pairs", bound)

    def beta():
        rng = np.random.default_rng(1)
        for _ in range(1000):
            x = BitString(4, int(rng.integers(16)))
            Y = [BitString(4, int(v)) for v in rng.choice(16, int(rng.integers(0, 17)), replace=False)]
            assert beta_lemma_check(x, Y)[1]
        # alpha and avoidance depend only on differences, so x = 0000 covers every x
        origin, count = BitString(4, 0), 0
        for size in range(13):
            for Y in itertools.combinations(all_bitstrings(4), size):
                assert beta_lemma_check(origin, list(Y))[1], Y
                count += 1
        return f"1000 random instances and {count} exhaustive subsets hold"

    check("beta lemma on random and exhaustive |Y|<=12 instances", beta)


def test_threshold_algebra(tmp_path, capsys):
    def body():
        worst = max(
            abs(eta_paper_bound(d) / eta_bound_from_log2z(d, 0.993 * d) - 1) for d in range(2, (1 << 13) + 1)
        )
        assert worst <= 1e-9
        out = tmp_path / "curve.json"
        assert run(["zset", "curve", "--out", str(out)]) == 0
        reported = json.loads(out.read_text())["first_crossing_d"]
        assert reported == first_bound_crossing() == CROSSING_BASELINE
        return f"worst relative gap {worst:.1e}; first crossing d={reported}"

    check("threshold identity and first crossing of the bound", body)


def test_bound_calculators():
    def body():
        assert bound_calculators(eta=0.5)["C_from_eta"] == 8
        assert bound_calculators(d=4)["mbcc_bits"] == 50
        grid = [k / 1000 for k in range(1, 1001)] + [2.0**-k for k in range(60)]
        misses = [e for e in grid if bound_calculators(C=bound_calculators(eta=e)["C_from_eta"])["eta_from_C"] != e]
        assert not misses, misses[:5]
        return f"C(0.5)=8, bits(4)=50, exact round trip on {len(grid)} grid points"

    check("closed-form communication bounds", body)


def test_noise_sensitivity():
    labels = all_bitstrings(4)

    def body():
        values = {}
        for w in (0.0, 0.5, 1.0):
            oracle = sum(
                alpha_oracle(x, y) * np.trace(brute_force_table(x, y, 1.0, w)[1:, 1:])
                for x, y in itertools.product(labels, repeat=2)
            )
            values[w] = bell_value_noisy(4, 1.0, w).raw
            assert abs(values[w] - oracle) <= 1e-10
        curve = [bell_value_noisy(4, 1.0, k / 1000).raw for k in range(1001)]
        assert all(b < a for a, b in zip(curve, curve[1:]))
        assert values[0.5] < 0
        return "I(w) = " + ", ".join(f"{v:g} at w={w}" for w, v in values.items())

    check("white noise at d=4 matches mixed-state oracle and decreases", body)


def test_guessing_construction():
    s = build_bct_scenario(2)
    labels = all_bitstrings(4)[:4]

    def body():
        model = lv_from_fixed_length_protocol(fixture_protocol(s, labels, labels))
        assert len(model.protocol.schedule) == 4
        r = guessing_report(model, s, [(x, y) for x in labels for y in labels])
        assert r.joint_click_rate == 2.0**-4
        assert r.conditional_deviation <= 1e-12
        return (f"joint click rate {r.joint_click_rate} (2^-4), conditional deviation "
                f"{r.conditional_deviation:.1e}, marginal deviation {r.marginal_deviation:.3g} (reported only)")

    check("transcript-guessing model on the d=4, M=4 fixture", body)


COMMANDS = [
    ["bell", "sample", "--n", "12", "--eta", "0.7", "--trials", "100000", "--seed", "7"],
    ["bell", "sample", "--n", "4", "--eta", "0.9", "--trials", "100000", "--seed", "7", "--format", "csv"],
    ["bridge", "rejection", "--n", "2", "--eta", "0.5", "--trials", "100000", "--seed", "7"],
    ["zset", "greedy", "--d", "10", "--trials", "5", "--seed", "7"],
    ["lhv", "value", "--d", "4", "--trials", "20000", "--seed", "7"],
]


@pytest.mark.parametrize("argv", COMMANDS, ids=lambda a: " ".join(a[:2]) + (" csv" if "csv" in a else ""))
def test_worker_count_invariance(argv, tmp_path):
    def body():
        outputs = []
        for workers in ("1", "4"):
            out = tmp_path / f"w{workers}"
            assert run(argv + ["--workers", workers, "--out", str(out)]) == 0
            outputs.append(out.read_bytes())
        assert outputs[0] == outputs[1]
        return f"{len(outputs[0])} bytes identical for --workers 1 and 4"

    check(f"byte-identical report across worker counts: {' '.join(argv[:2])}", body)
