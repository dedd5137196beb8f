"""JSON schemas for every CLI report, keyed by "group action"."""

NUMBER = {"type": "number"}
OPT_NUMBER = {"type": ["number", "null"]}
INT = {"type": "integer"}
BOOL = {"type": "boolean"}


def _obj(required: dict, optional: dict | None = None) -> dict:
    props = dict(required)
    props.update(optional or {})
    return {"type": "object", "properties": props, "required": sorted(required), "additionalProperties": False}


BELL = _obj(
    {"d": INT, "eta": OPT_NUMBER, "w": OPT_NUMBER, "normalized_value": NUMBER},
    {"raw_value": NUMBER, "samples": INT, "stderr": NUMBER, "seed": INT},
)

ZSET = _obj(
    {"d": INT, "method": {"type": "string"}, "z_size": {"type": ["integer", "null"]},
     "eta_exact_bound": NUMBER, "eta_paper_bound": NUMBER, "closes_loophole": BOOL},
    {"certified": BOOL, "cross_check": BOOL, "restarts": INT, "seed": INT},
)

CURVE_ROW = _obj(
    {"d": INT, "eta_paper_bound": NUMBER, "eta_exact_or_greedy_bound": OPT_NUMBER,
     "closes_loophole": BOOL, "first_crossing": BOOL},
)

FEASIBILITY = _obj(
    {"eta": NUMBER, "feasible": BOOL, "residual": NUMBER, "strategy_count": INT},
    {"certificate_path": {"type": "string"}},
)

STATS = _obj(
    {"eta": OPT_NUMBER, "trials": INT, "mean_bits": NUMBER, "mean_iterations": NUMBER, "chi2_p": OPT_NUMBER},
    {"seed": INT, "var_iterations": NUMBER, "conditional_deviation": NUMBER, "marginal_deviation": NUMBER},
)

SCHEMAS = {
    "scenario validate": _obj({"d": INT, "settings_A": INT, "settings_B": INT, "valid": BOOL}),
    "bell quantum": BELL,
    "bell table": BELL,
    "bell noisy": BELL,
    "bell sample": BELL,
    "zset exact": ZSET,
    "zset greedy": ZSET,
    "zset thresholds": ZSET,
    "zset curve": _obj({"rows": {"type": "array", "items": CURVE_ROW}, "first_crossing_d": {"type": ["integer", "null"]},
                        "first_power_of_two_crossing_d": {"type": ["integer", "null"]}}),
    "lhv value": _obj({"d": INT, "pairs_tested": INT, "max_value": INT, "bound": INT, "violations": INT, "seed": INT}),
    "lhv optimize": _obj({"d": INT, "restarts": INT, "best_value": INT, "bound": INT, "violations": INT, "seed": INT}),
    "lhv popescu": _obj({"d": INT, "M": INT, "eta": NUMBER, "max_deviation": NUMBER, "strategies": INT}),
    "lhv lp": FEASIBILITY,
    "lhv etastar": _obj({"eta_star": NUMBER, "lo": NUMBER, "hi": NUMBER, "tol": NUMBER,
                         "no_violation": BOOL, "evaluations": INT}),
    "bridge rejection": STATS,
    "bridge guess": _obj(
        {"label": {"type": "string"}, "eta": OPT_NUMBER, "eta_A": NUMBER, "eta_B": NUMBER,
         "joint_click_rate": NUMBER, "expected_joint_click_rate": NUMBER,
         "conditional_deviation": NUMBER, "marginal_deviation": NUMBER, "C": INT},
    ),
    "bridge bounds": _obj(
        {},
        {"C_from_eta": NUMBER, "eta_from_C": NUMBER, "mbcc_bits": NUMBER, "mu_eta_log2": NUMBER, "trivial_bits": NUMBER},
    ),
}

CURVE_HEADER = "d,eta_paper_bound,eta_exact_or_greedy_bound,closes_loophole,first_crossing"
