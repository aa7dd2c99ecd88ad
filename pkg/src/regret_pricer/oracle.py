"""Brute-force ground truth for small instances.

Min-max regret by exhaustive reformulation: every allocation is scored by a
small linear program whose epigraph rows range over every vertex of the
interval box, with deterministic optima supplied by direct enumeration.
Shares no code with the cut-generation loop it validates.
"""

from __future__ import annotations

from typing import Iterator, List

import numpy as np

from . import milp
from .core import (
    DiscreteScenarioSet,
    IntervalUncertainty,
    PricingError,
    ValuationMatrix,
    as_allocation_array,
    as_utility_array,
    is_ic_feasible,
    build_solution,
    value_under_scenario,
)
from .det import EnumerationCapError, partial_permutations, prefer, solve_deterministic_enumerate
from .robust import Cut, RobustSolution

BRUTE_FORCE_K_CAP = 3
VERTEX_ENTRY_CAP = 16


class InfeasibleCandidateError(PricingError):
    """The candidate breaks envy-freeness at a named scenario."""


def enumerate_vertex_scenarios(s: IntervalUncertainty) -> Iterator[ValuationMatrix]:
    """All 2^(k*k) corner profiles of the box, in binary-counter order.

    Scenario index v runs from 0 to 2^(k*k) - 1; bit t of v (t = i*k + j,
    row-major) selects entry (i, j): upper bound when set, lower otherwise.
    """
    k = s.k
    cells = k * k
    if cells > VERTEX_ENTRY_CAP:
        raise EnumerationCapError(f"vertex enumeration capped at {VERTEX_ENTRY_CAP} entries, got {cells}")
    lo = s.lower.ravel()
    hi = s.upper.ravel()
    for v in range(1 << cells):
        flat = np.array([hi[t] if (v >> t) & 1 else lo[t] for t in range(cells)])
        yield ValuationMatrix(flat.reshape(k, k))


def vertex_optimum_values(s: IntervalUncertainty) -> np.ndarray:
    """Deterministic optimum value at every vertex scenario, in vertex order.

    Same enumeration-plus-minimal-utilities method as
    :func:`regret_pricer.det.solve_deterministic_enumerate`, evaluated for all
    vertices of one allocation at a time so the longest-path relaxations
    vectorize across scenarios.
    """
    k = s.k
    scenarios = list(enumerate_vertex_scenarios(s))
    xs = np.stack([x.x for x in scenarios])
    n_s = xs.shape[0]
    best = np.zeros(n_s)                     # the empty allocation scores zero
    for q in partial_permutations(k):
        if not q.any():
            continue
        bundles = np.einsum("ik,sjk->sij", q.astype(float), xs)
        own = bundles[:, np.arange(k), np.arange(k)]
        c = bundles - own[:, :, None]
        c[:, np.arange(k), np.arange(k)] = -np.inf
        u = np.zeros((n_s, k))
        for _ in range(k):
            u = np.maximum(u, (u[:, :, None] + c).max(axis=1))
        feasible = ((u[:, :, None] + c).max(axis=1) <= u + 1e-9).all(axis=1)
        values = (q * xs).sum(axis=(1, 2)) - u.sum(axis=1)
        np.maximum(best, np.where(feasible, values, -np.inf), out=best)
    return best


def _allocation_regret_lp(q: np.ndarray, s: IntervalUncertainty,
                          gains: List[float]) -> milp.MilpSolution:
    """min t over (u >= 0, t) s.t. robust pairwise rows for the fixed
    allocation plus one epigraph row per vertex scenario."""
    k = s.k
    model = milp.MilpModel()
    model.add_variable("t", None, None)
    for i in range(k):
        model.add_variable(f"u_{i}", 0.0, None)
    for i in range(k):
        for j in range(k):
            if i == j:
                continue
            rhs = float(sum(q[i, kk] * (s.upper[j, kk] - s.lower[i, kk]) for kk in range(k)))
            model.add_constraint({f"u_{j}": 1.0, f"u_{i}": -1.0}, milp.GE, rhs, name=f"robust_{i}_{j}")
    all_u = {f"u_{i}": -1.0 for i in range(k)}
    for v, g in enumerate(gains):
        coeffs = {"t": 1.0}
        coeffs.update(all_u)
        model.add_constraint(coeffs, milp.GE, float(g), name=f"vertex_{v}")
    model.set_objective("min", {"t": 1.0})
    return milp.lp_solve(model)


def brute_force_robust(s: IntervalUncertainty, max_k: int = BRUTE_FORCE_K_CAP) -> RobustSolution:
    """Exact min-max regret by scoring every allocation with its own LP.

    For each partial permutation Q the epigraph rows read
    t >= opt(X_v) - (sum Q * X_v - sum u) over every vertex scenario X_v,
    with opt() from the enumeration path. Ties between allocations follow the
    deterministic rule: more items sold, then lexicographically smallest.
    """
    if s.k > max_k:
        raise EnumerationCapError(f"brute force capped at k <= {max_k}, got {s.k}")
    k = s.k
    scenarios = list(enumerate_vertex_scenarios(s))
    opts = vertex_optimum_values(s)

    best = None
    for q in partial_permutations(k):
        gains = [opt - float((q * x.x).sum()) for opt, x in zip(opts, scenarios)]
        sol = _allocation_regret_lp(q, s, gains)
        if sol.status != "optimal":
            continue
        regret_q = float(sol.objective_value)
        u = np.array([max(sol.values[f"u_{i}"], 0.0) for i in range(k)])
        sold = int(q.sum())
        flat = tuple(int(v) for v in q.ravel())
        # minimizing regret: feed negated values through the shared tie rule
        if best is None or prefer(-regret_q, sold, flat, -best[0], best[1], best[2]):
            best = (regret_q, sold, flat, q, u)
    assert best is not None  # the empty allocation is always robust feasible
    regret_star, _, _, q_star, u_star = best
    solution = build_solution(
        u_star, q_star,
        x_ref=ValuationMatrix(s.lower),
        x_sentinel=ValuationMatrix(s.upper),
    )
    return RobustSolution(
        solution=solution,
        regret=regret_star,
        lb_trace=[regret_star],
        ub_trace=[regret_star],
        cuts=[],
        iterations=1,
        status="optimal",
    )


def regret_under_discrete_set(u, q, d: DiscreteScenarioSet, max_k: int = 5) -> float:
    """Worst regret of a fixed candidate over a finite list of scenarios.

    The candidate must be envy-free at every scenario; the first scenario
    where it is not is named in the error.
    """
    if d.k > max_k:
        raise EnumerationCapError(f"discrete-set evaluation capped at k <= {max_k}, got {d.k}")
    uu = as_utility_array(u)
    qq = as_allocation_array(q)
    worst = -np.inf
    for idx, scenario in enumerate(d.scenarios):
        if not is_ic_feasible(uu, qq, scenario):
            raise InfeasibleCandidateError(f"candidate is not envy-free at scenario {idx}")
        opt = solve_deterministic_enumerate(scenario).value
        worst = max(worst, opt - value_under_scenario(uu, qq, scenario))
    return float(worst)
