"""Largest subsets of {0,1}^d with no two members at Hamming distance d/2.

The maximum size |Z| bounds the local-variable Bell value by d * |Z|, and
with it the efficiency threshold sqrt(d * |Z| / 2**d).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .bits import BitString
from .errors import BudgetExhausted

EXACT_D_CAP = 12
FR_EXPONENT = 0.993
DECAY_RATE = 0.0035
GREEDY_FULL_SCAN_MAX_D = 16


@dataclass
class AvoidanceSet:
    d: int
    members: list[BitString]
    certified: bool = False

    @property
    def size(self) -> int:
        return len(self.members)

    def lines(self) -> str:
        return "".join(f"{m}\n" for m in self.members)


@dataclass
class ThresholdReport:
    d: int
    method: str
    z_size: int | None
    z_size_log2: float
    eta_exact_bound: float
    eta_paper_bound: float
    fr_bound_log2: float
    notes: list[str] = field(default_factory=list)

    @property
    def closes_loophole(self) -> bool:
        return self.eta_exact_bound < 1.0

    def to_report(self) -> dict:
        return {
            "d": self.d,
            "method": self.method,
            "z_size": self.z_size,
            "eta_exact_bound": self.eta_exact_bound,
            "eta_paper_bound": self.eta_paper_bound,
            "closes_loophole": self.closes_loophole,
        }


def _check_even(d: int):
    if d < 2 or d % 2:
        raise ValueError(f"d must be a positive even integer, got {d}")


def verify_avoidance(z: AvoidanceSet) -> bool:
    """True iff members are distinct d-bit strings with no pair at distance d/2."""
    if z.d < 2 or z.d % 2:
        return False
    values = []
    for m in z.members:
        if not isinstance(m, BitString) or m.length != z.d:
            return False
        values.append(m.value)
    if len(set(values)) != len(values):
        return False
    half = z.d // 2
    return all((u ^ v).bit_count() != half for u, v in itertools.combinations(values, 2))


def _half_masks(d: int) -> list[int]:
    return [sum(1 << k for k in combo) for combo in itertools.combinations(range(d), d // 2)]


def conflict_graph(d: int) -> list[int]:
    """Adjacency bitmasks of the distance-d/2 graph on {0,1}^d."""
    _check_even(d)
    masks = _half_masks(d)
    adj = []
    for v in range(1 << d):
        row = 0
        for m in masks:
            row |= 1 << (v ^ m)
        adj.append(row)
    return adj


def induced_conflict_graph(points: list[int], d: int) -> list[int]:
    """Adjacency bitmasks over positions in ``points`` (distance-d/2 edges)."""
    half = d // 2
    adj = [0] * len(points)
    for i, j in itertools.combinations(range(len(points)), 2):
        if (points[i] ^ points[j]).bit_count() == half:
            adj[i] |= 1 << j
            adj[j] |= 1 << i
    return adj


def _bits(mask: int):
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


def _clique_cover_order(cand: int, adj: list[int]) -> tuple[list[int], list[int]]:
    """Greedy partition of ``cand`` into cliques of the conflict graph.

    An independent set takes at most one vertex per clique, so the class
    number of a vertex bounds what the vertices up to it can still add.
    """
    order, bounds = [], []
    uncovered = cand
    k = 0
    while uncovered:
        k += 1
        q = uncovered
        while q:
            v = (q & -q).bit_length() - 1
            q &= adj[v]
            uncovered &= ~(1 << v)
            order.append(v)
            bounds.append(k)
    return order, bounds


def max_independent_set(adj: list[int], budget: int | None = None, incumbent=(), forced=()) -> tuple[list[int], bool]:
    """Exact maximum independent set by branch and bound.

    ``adj`` holds one neighbour bitmask per vertex. Vertices are relabelled
    by descending degree; bounds come from greedy clique covers. Returns
    ``(vertices, complete)``; raises BudgetExhausted when ``budget`` node
    expansions are used up.
    """
    n = len(adj)
    rank = sorted(range(n), key=lambda v: (-adj[v].bit_count(), v))
    pos = {v: i for i, v in enumerate(rank)}
    radj = [0] * n
    for v in range(n):
        for u in _bits(adj[v]):
            radj[pos[v]] |= 1 << pos[u]

    best = [pos[v] for v in incumbent]
    current = [pos[v] for v in forced]
    cand = (1 << n) - 1
    for v in current:
        cand &= ~radj[v] & ~(1 << v)
    if len(current) > len(best):
        best = list(current)
    nodes = 0

    def expand(cand: int):
        nonlocal best, nodes
        nodes += 1
        if budget is not None and nodes > budget:
            raise BudgetExhausted("node budget exhausted", best=[rank[v] for v in best])
        order, bounds = _clique_cover_order(cand, radj)
        for v, bound in zip(reversed(order), reversed(bounds)):
            if len(current) + bound <= len(best):
                return
            current.append(v)
            rest = cand & ~radj[v] & ~(1 << v)
            if rest:
                expand(rest)
            elif len(current) > len(best):
                best = list(current)
            current.pop()
            cand &= ~(1 << v)

    if cand:
        expand(cand)
    return sorted(rank[v] for v in best), True


def max_z_enumerate(d: int) -> AvoidanceSet:
    """Largest avoidance set by checking every subset of {0,1}^d (d <= 4)."""
    _check_even(d)
    if d > 4:
        raise ValueError("subset enumeration is limited to d <= 4")
    n = 1 << d
    half = d // 2
    best = 0
    best_size = 0
    for subset in range(1 << n):
        size = subset.bit_count()
        if size <= best_size:
            continue
        members = [v for v in range(n) if subset >> v & 1]
        if all((u ^ v).bit_count() != half for u, v in itertools.combinations(members, 2)):
            best, best_size = subset, size
    return AvoidanceSet(d, [BitString(d, v) for v in range(n) if best >> v & 1], certified=True)


def max_z_exact(d: int, budget: int | None = None, cap: int = EXACT_D_CAP, fix_origin: bool = False, seed: int = 0) -> AvoidanceSet:
    """Certified maximum avoidance set for even ``d <= cap``.

    ``fix_origin`` forces 0^d into the set, which loses nothing because the
    problem is invariant under XOR-translation.
    """
    _check_even(d)
    if d > cap:
        raise ValueError(f"exact search is capped at d <= {cap}, got {d}")
    adj = conflict_graph(d)
    start = z_greedy(d, seed=seed, restarts=4)
    forced = (0,) if fix_origin else ()
    try:
        vertices, _ = max_independent_set(adj, budget=budget, incumbent=[m.value for m in start.members], forced=forced)
    except BudgetExhausted as exc:
        partial = AvoidanceSet(d, [BitString(d, v) for v in exc.best], certified=False)
        raise BudgetExhausted(f"exact search for d={d} incomplete; best so far has size {partial.size}", best=partial) from None
    return AvoidanceSet(d, [BitString(d, v) for v in vertices], certified=True)


def max_avoidance_subset(points: list[BitString]) -> list[BitString]:
    """Maximum avoidance subset of an arbitrary list of same-length strings."""
    if not points:
        return []
    d = points[0].length
    values = sorted({p.value for p in points})
    adj = induced_conflict_graph(values, d)
    chosen, _ = max_independent_set(adj)
    return [BitString(d, values[i]) for i in chosen]


def _greedy_once(d: int, rng, max_candidates: int) -> list[int]:
    half = d // 2
    chosen: list[int] = []
    if d <= GREEDY_FULL_SCAN_MAX_D:
        for v in rng.permutation(1 << d):
            v = int(v)
            if all((v ^ u).bit_count() != half for u in chosen):
                chosen.append(v)
        return chosen
    seen = set()
    for _ in range(max_candidates):
        v = int.from_bytes(rng.bytes((d + 7) // 8), "little") & ((1 << d) - 1)
        if v not in seen and all((v ^ u).bit_count() != half for u in chosen):
            chosen.append(v)
        seen.add(v)
    return chosen


def z_greedy(d: int, seed: int = 0, restarts: int = 1, max_candidates: int = 2000) -> AvoidanceSet:
    """Best of ``restarts`` random-order greedy avoidance sets.

    Restart ``r`` uses the generator seeded with ``[seed, r]``, so a single
    run is the first restart of any longer run. Above d=16 candidates are
    random strings rather than a full scan of {0,1}^d.
    """
    _check_even(d)
    best: list[int] = []
    for r in range(max(1, restarts)):
        found = _greedy_once(d, np.random.default_rng([seed, r]), max_candidates)
        if len(found) > len(best):
            best = found
    return AvoidanceSet(d, [BitString(d, v) for v in sorted(best)], certified=False)


def eta_bound_from_log2z(d: int, z_log2: float) -> float:
    """sqrt(d * |Z| / 2**d) evaluated in the log domain."""
    return 2.0 ** (0.5 * (math.log2(d) + z_log2 - d))


def eta_paper_bound(d: int) -> float:
    """sqrt(d) * 2**(-0.0035 d)."""
    return 2.0 ** (0.5 * math.log2(d) - DECAY_RATE * d)


def closed_form_log2_slope(d: float) -> float:
    """d/dd of log2 of the closed-form bound; negative once d > 1 / (2 * 0.0035 * ln 2)."""
    return 0.5 / (d * math.log(2)) - DECAY_RATE


def first_bound_crossing(d_min: int = 2, d_max: int = 1 << 16, step: int = 2) -> int | None:
    """Smallest d in range(d_min, d_max + 1, step) whose closed-form bound is below 1."""
    for d in range(d_min, d_max + 1, step):
        if eta_paper_bound(d) < 1.0:
            return d
    return None


def threshold_report(d: int, z_source: str = "fr_bound", budget: int | None = None, seed: int = 0, restarts: int = 10, cap: int = EXACT_D_CAP) -> ThresholdReport:
    """Efficiency thresholds at dimension ``d`` using |Z| from ``z_source``.

    ``exact`` certifies |Z|; ``greedy`` only gives a lower bound on |Z| so the
    resulting eta is not a valid closure threshold; ``fr_bound`` uses
    log2 |Z| = 0.993 d.
    """
    if d < 4 or d % 2:
        raise ValueError(f"d must be even and at least 4, got {d}")
    notes = []
    if z_source == "exact":
        z = max_z_exact(d, budget=budget, cap=cap, seed=seed)
        z_size, z_log2 = z.size, math.log2(z.size)
    elif z_source == "greedy":
        z = z_greedy(d, seed=seed, restarts=restarts)
        z_size, z_log2 = z.size, math.log2(z.size)
        notes.append("greedy |Z| is a lower bound; eta bound is not a certified threshold")
    elif z_source == "fr_bound":
        z_size, z_log2 = None, FR_EXPONENT * d
    else:
        raise ValueError(f"unknown z_source {z_source!r}")
    report = ThresholdReport(
        d=d,
        method=z_source,
        z_size=z_size,
        z_size_log2=z_log2,
        eta_exact_bound=eta_bound_from_log2z(d, z_log2),
        eta_paper_bound=eta_paper_bound(d),
        fr_bound_log2=FR_EXPONENT * d,
        notes=notes,
    )
    if not report.closes_loophole:
        report.notes.append("no closure at this d")
    return report
