"""Command-line entry point: ``detloop <group> <action> [flags]``.

Each run writes exactly one report (JSON by default). Exit codes: 0 on
success, 2 on invalid input, 3 when a budget or size cap is exhausted.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import jsonschema

from . import bell, bridge, lhv, scenario, zset
from .bits import BitString
from .errors import BudgetExhausted, CapExceeded, IterationCapExceeded, SolverError
from .schemas import CURVE_HEADER, SCHEMAS

EXIT_OK, EXIT_INVALID, EXIT_BUDGET, EXIT_FAILURE = 0, 2, 3, 1


class InvalidInput(ValueError):
    pass


# ------------------------------------------------------------------ helpers


def _dimension(args) -> int:
    if args.n is not None:
        if args.n < 2:
            raise InvalidInput(f"--n must be at least 2, got {args.n}")
        return 1 << args.n
    if args.d is not None:
        return args.d
    raise InvalidInput("give --n or --d")


def _bct(args) -> scenario.BctScenario:
    d = _dimension(args)
    if d < 4 or d & (d - 1):
        raise InvalidInput(f"BCT scenarios need d = 2**n with n >= 2, got d={d}")
    return scenario.BctScenario(d.bit_length() - 1)


def _first_labels(d: int, m: int) -> list[BitString]:
    if m < 1 or m > 1 << d:
        raise InvalidInput(f"need 1 <= labels <= 2**{d}, got {m}")
    return [BitString(d, v) for v in range(m)]


def _explicit(args) -> scenario.ExplicitScenario:
    if args.scenario in (None, "chsh"):
        return scenario.chsh_scenario()
    return scenario.load_explicit_scenario(Path(args.scenario).read_text())


def _eta_as_inverse_label_count(eta: float) -> int:
    m = round(1 / eta) if eta > 0 else 0
    if m < 1 or abs(m * eta - 1) > 1e-12:
        raise InvalidInput(f"--eta must be 1/M for an integer M, got {eta}")
    return m


def _zset_row(report: zset.ThresholdReport, **extra) -> dict:
    row = report.to_report()
    row.update(extra)
    return row


# ------------------------------------------------------------- subcommands


def cmd_scenario_validate(args):
    s = scenario.load_explicit_scenario(Path(args.file).read_text())
    return {"d": s.d, "settings_A": len(s.labels_A), "settings_B": len(s.labels_B), "valid": True}


def cmd_bell_quantum(args):
    return bell.bell_value_quantum(_dimension(args), args.eta).to_report()


def cmd_bell_table(args):
    s = _bct(args)
    w = args.w or 0.0
    provider = bell.noisy_provider(s, args.eta, w) if w else bell.quantum_provider(s, args.eta)
    value = bell.bell_value_from_table(provider, s.d)
    value.eta, value.w = args.eta, w
    return value.to_report()


def cmd_bell_noisy(args):
    return bell.bell_value_noisy(_dimension(args), args.eta, args.w or 0.0).to_report()


def cmd_bell_sample(args):
    s = _bct(args)
    est = bell.estimate_bell_sampled(s, args.eta, args.trials or 100_000, seed=args.seed, workers=args.workers)
    return est.to_report()


def cmd_zset_exact(args):
    d = _dimension(args)
    z = zset.max_z_exact(d, budget=args.budget, seed=args.seed)
    if args.witness:
        Path(args.witness).write_text(z.lines())
    if d >= 4:
        report = zset.threshold_report(d, "exact", budget=args.budget, seed=args.seed)
        row = _zset_row(report, certified=z.certified)
    else:
        row = {"d": d, "method": "exact", "z_size": z.size,
               "eta_exact_bound": zset.eta_bound_from_log2z(d, math.log2(z.size)),
               "eta_paper_bound": zset.eta_paper_bound(d), "closes_loophole": False, "certified": True}
        row["closes_loophole"] = row["eta_exact_bound"] < 1
    if args.cross_check:
        if d > 4:
            raise InvalidInput("--cross-check needs d <= 4")
        row["cross_check"] = zset.max_z_enumerate(d).size == z.size
    return row


def cmd_zset_greedy(args):
    d = _dimension(args)
    restarts = args.trials or 10
    z = zset.z_greedy(d, seed=args.seed, restarts=restarts)
    if args.witness:
        Path(args.witness).write_text(z.lines())
    eta = zset.eta_bound_from_log2z(d, math.log2(z.size))
    return {"d": d, "method": "greedy", "z_size": z.size, "eta_exact_bound": eta,
            "eta_paper_bound": zset.eta_paper_bound(d), "closes_loophole": eta < 1,
            "restarts": restarts, "seed": args.seed}


def cmd_zset_thresholds(args):
    report = zset.threshold_report(_dimension(args), args.source, budget=args.budget, seed=args.seed)
    return report.to_report()


def curve_rows(d_min: int, d_max: int, step: int, source: str = "fr_bound", seed: int = 0) -> list[dict]:
    if d_min < 4 or d_min % 2 or step < 1 or step % 2:
        raise InvalidInput("curve needs even d_min >= 4 and an even step")
    crossing = zset.first_bound_crossing(d_min, d_max, 2)
    ds = sorted(set(range(d_min, d_max + 1, step)) | ({crossing} if crossing else set()))
    rows = []
    for d in ds:
        closed_form = zset.eta_paper_bound(d)
        if source == "fr_bound":
            other = zset.eta_bound_from_log2z(d, zset.FR_EXPONENT * d)
        elif source in ("exact", "greedy") and (source == "greedy" or d <= zset.EXACT_D_CAP):
            other = zset.threshold_report(d, source, seed=seed).eta_exact_bound
        else:
            other = None
        rows.append({"d": d, "eta_paper_bound": closed_form, "eta_exact_or_greedy_bound": other,
                     "closes_loophole": closed_form < 1, "first_crossing": d == crossing})
    return rows


def emit_threshold_curve(d_min: int, d_max: int, step: int, source: str = "fr_bound") -> str:
    """CSV of the efficiency thresholds over a range of even dimensions.

    The first d whose closed-form bound falls below 1 is always included.
    """
    buf = io.StringIO()
    buf.write(CURVE_HEADER + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    for row in curve_rows(d_min, d_max, step, source):
        writer.writerow([row["d"], repr(row["eta_paper_bound"]),
                         "" if row["eta_exact_or_greedy_bound"] is None else repr(row["eta_exact_or_greedy_bound"]),
                         str(row["closes_loophole"]).lower(), str(row["first_crossing"]).lower()])
    return buf.getvalue()


def cmd_zset_curve(args):
    d_min = args.d_min
    d_max = args.d_max
    rows = curve_rows(d_min, d_max, args.step, args.source, args.seed)
    powers = [d for d in (1 << k for k in range(2, 20)) if d >= d_min and zset.eta_paper_bound(d) < 1]
    return {"rows": rows, "first_crossing_d": zset.first_bound_crossing(d_min, d_max, 2),
            "first_power_of_two_crossing_d": powers[0] if powers and powers[0] <= d_max else None}


def cmd_lhv_value(args):
    import numpy as np

    d = _dimension(args)
    if d > 4:
        raise InvalidInput("random-pair bound check runs on the full domain, d <= 4")
    trials = args.trials or 100_000
    labels = [BitString(d, v) for v in range(1 << d)]
    M = lhv.alpha_matrix(labels, labels)
    bound = d * zset.max_z_exact(d).size
    rng = np.random.default_rng(args.seed)
    best, violations = None, 0
    for start in range(0, trials, 10_000):
        n = min(10_000, trials - start)
        F = rng.integers(0, d + 1, (n, len(labels)))
        G = rng.integers(0, d + 1, (n, len(labels)))
        values = lhv.lv_bell_values_batch(F, G, M, d)
        best = int(values.max()) if best is None else max(best, int(values.max()))
        violations += int(np.count_nonzero(values > bound))
    return {"d": d, "pairs_tested": trials, "max_value": best, "bound": bound,
            "violations": violations, "seed": args.seed}


def cmd_lhv_optimize(args):
    d = _dimension(args)
    restarts = args.trials or 100
    bound = d * zset.max_z_exact(d).size
    values = [lhv.best_response_maximize(d, seed=args.seed * 1_000_003 + r)[1] for r in range(restarts)]
    return {"d": d, "restarts": restarts, "best_value": max(values), "bound": bound,
            "violations": sum(v > bound for v in values), "seed": args.seed}


def cmd_lhv_popescu(args):
    s = _bct(args)
    labels = _first_labels(s.d, args.labels or 4)
    model, eta = lhv.popescu_model(labels, labels, s)
    deviation = lhv.verify_model_reproduces(model, s, eta, labels)
    return {"d": s.d, "M": len(labels), "eta": eta, "max_deviation": deviation, "strategies": len(model.strategies)}


def cmd_lhv_lp(args):
    s = _explicit(args)
    result = lhv.local_feasibility_lp(s, s.labels_A, s.labels_B, args.eta)
    return result.to_report()


def cmd_lhv_etastar(args):
    s = _explicit(args)
    tol = args.tol or 1e-3
    r = lhv.eta_star_bisection(s, s.labels_A, s.labels_B, tol=tol)
    return {"eta_star": r.eta_star, "lo": r.lo, "hi": r.hi, "tol": tol,
            "no_violation": r.no_violation, "evaluations": r.evaluations}


def cmd_bridge_rejection(args):
    s = _bct(args)
    m = _eta_as_inverse_label_count(args.eta)
    labels = _first_labels(s.d, m)
    model, _ = lhv.popescu_model(labels, labels, s)
    pairs = [(x, y) for x in labels for y in labels]
    stats = bridge.average_communication_stats(
        bridge.MixtureLvModel(model), pairs, args.trials or 100_000, seed=args.seed,
        reference=bridge.conditional_click_table(s), workers=args.workers,
    )
    report = stats.to_report()
    report.update(seed=args.seed, var_iterations=stats.var_iterations)
    return report


def cmd_bridge_guess(args):
    s = _bct(args)
    labels = _first_labels(s.d, args.labels or 4)
    protocol = bridge.fixture_protocol(s, labels, labels)
    model = bridge.lv_from_fixed_length_protocol(protocol, equalize=True)
    report = bridge.guessing_report(model, s, [(x, y) for x in labels for y in labels]).to_report()
    report["C"] = len(model.protocol.schedule)
    return report


def cmd_bridge_bounds(args):
    M = args.labels
    return bridge.bound_calculators(d=args.d, eta=args.eta, C=args.C, M=M)


COMMANDS = {
    "scenario": {"validate": cmd_scenario_validate},
    "bell": {"quantum": cmd_bell_quantum, "table": cmd_bell_table, "noisy": cmd_bell_noisy, "sample": cmd_bell_sample},
    "zset": {"exact": cmd_zset_exact, "greedy": cmd_zset_greedy, "thresholds": cmd_zset_thresholds, "curve": cmd_zset_curve},
    "lhv": {"value": cmd_lhv_value, "optimize": cmd_lhv_optimize, "popescu": cmd_lhv_popescu,
            "lp": cmd_lhv_lp, "etastar": cmd_lhv_etastar},
    "bridge": {"rejection": cmd_bridge_rejection, "guess": cmd_bridge_guess, "bounds": cmd_bridge_bounds},
}


# ------------------------------------------------------------------ parsing


def _unit_interval(text: str) -> float:
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"{text} is outside [0, 1]")
    return value


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--n", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--eta", type=_unit_interval, default=1.0)
    p.add_argument("--w", type=_unit_interval)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--cross-check", action="store_true")
    p.add_argument("--budget", type=int)
    p.add_argument("--labels", type=int, help="number of settings per party")
    p.add_argument("--scenario", help="scenario JSON file, or 'chsh'")
    p.add_argument("--source", choices=("exact", "greedy", "fr_bound"), default="fr_bound")
    p.add_argument("--witness", help="write the avoidance set here, one bit string per line")
    p.add_argument("--d-min", type=int, default=4)
    p.add_argument("--d-max", type=int, default=4096)
    p.add_argument("--step", type=int, default=2)
    p.add_argument("--C", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="detloop", description=__doc__.splitlines()[0])
    groups = parser.add_subparsers(dest="group", required=True)
    for group, actions in COMMANDS.items():
        gp = groups.add_parser(group).add_subparsers(dest="action", required=True)
        for action in actions:
            p = gp.add_parser(action)
            if (group, action) == ("scenario", "validate"):
                p.add_argument("file")
            _add_common(p)
    return parser


def render(report: dict, key: str, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(report, indent=2, sort_keys=True) + "\n"
    if key == "zset curve":
        buf = io.StringIO()
        buf.write(CURVE_HEADER + "\n")
        writer = csv.writer(buf, lineterminator="\n")
        for row in report["rows"]:
            other = row["eta_exact_or_greedy_bound"]
            writer.writerow([row["d"], repr(row["eta_paper_bound"]), "" if other is None else repr(other),
                             str(row["closes_loophole"]).lower(), str(row["first_crossing"]).lower()])
        return buf.getvalue()
    keys = sorted(report)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(keys)
    writer.writerow(["" if report[k] is None else report[k] for k in keys])
    return buf.getvalue()


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    key = f"{args.group} {args.action}"
    try:
        if args.workers < 1:
            raise InvalidInput("--workers must be at least 1")
        report = COMMANDS[args.group][args.action](args)
        jsonschema.validate(report, SCHEMAS[key])
    except (BudgetExhausted, CapExceeded, IterationCapExceeded) as exc:
        print(f"detloop: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (ValueError, OSError) as exc:
        print(f"detloop: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SolverError as exc:
        print(f"detloop: {exc} (residual {exc.residual})", file=sys.stderr)
        return EXIT_FAILURE
    text = render(report, key, args.format)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def main():
    sys.exit(run())
