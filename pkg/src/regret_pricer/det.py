"""Exact revenue-maximizing pricing for one known valuation profile.

Two independent exact paths: a mixed-binary linear program over assignments
and utilities, and direct enumeration of partial permutations with the
componentwise-minimal utilities obtained from a longest-path computation.
The second path doubles as the ground-truth oracle for the first.
"""

from __future__ import annotations

import itertools
from typing import Iterator, Optional, Tuple

import numpy as np

from . import milp
from .core import (
    PricingError,
    PricingSolution,
    XLike,
    as_allocation_array,
    as_valuation_array,
    build_solution,
)

ENUM_K_CAP = 5


class EnumerationCapError(PricingError):
    """Instance too large for the exhaustive path."""


def build_deterministic_milp(x: XLike) -> milp.MilpModel:
    """Mixed-binary model: max sum(q * x) - sum(u) over envy-free assignments.

    Variables: binary q_i_j (buyer i gets item j), continuous u_i >= 0.
    Rows: each buyer at most one item, each item at most one buyer, and for
    every ordered pair i != j the no-envy row
    u_j - u_i >= sum_k q_ik (x[j,k] - x[i,k]).
    """
    xx = as_valuation_array(x)
    k = xx.shape[0]
    model = milp.MilpModel()
    for i in range(k):
        for j in range(k):
            model.add_variable(f"q_{i}_{j}", binary=True)
    for i in range(k):
        model.add_variable(f"u_{i}", 0.0, None)
    for i in range(k):
        model.add_constraint({f"q_{i}_{j}": 1.0 for j in range(k)}, milp.LE, 1.0, name=f"buyer_{i}")
    for j in range(k):
        model.add_constraint({f"q_{i}_{j}": 1.0 for i in range(k)}, milp.LE, 1.0, name=f"item_{j}")
    for i in range(k):
        for j in range(k):
            if i == j:
                continue
            coeffs = {f"u_{j}": 1.0, f"u_{i}": -1.0}
            for kk in range(k):
                diff = xx[j, kk] - xx[i, kk]
                if diff != 0.0:
                    coeffs[f"q_{i}_{kk}"] = coeffs.get(f"q_{i}_{kk}", 0.0) - diff
            model.add_constraint(coeffs, milp.GE, 0.0, name=f"envy_{i}_{j}")
    objective = {f"q_{i}_{j}": float(xx[i, j]) for i in range(k) for j in range(k)}
    for i in range(k):
        objective[f"u_{i}"] = -1.0
    model.set_objective("max", objective)
    return model


def extract_assignment(solution: milp.MilpSolution, k: int) -> Tuple[np.ndarray, np.ndarray]:
    """Pull (u, q) out of a solved assignment model's values."""
    q = np.zeros((k, k), dtype=np.int8)
    for i in range(k):
        for j in range(k):
            if solution.values[f"q_{i}_{j}"] > 0.5:
                q[i, j] = 1
    u = np.array([max(solution.values[f"u_{i}"], 0.0) for i in range(k)])
    return u, q


def solve_deterministic(x: XLike, gap: float = 0.0, node_limit: int = 200000,
                        time_limit: Optional[float] = None) -> PricingSolution:
    """Optimal pricing for scenario x via branch and bound."""
    xx = as_valuation_array(x)
    model = build_deterministic_milp(xx)
    sol = milp.solve(model, gap=gap, node_limit=node_limit, time_limit=time_limit)
    if sol.status in ("infeasible", "unbounded"):
        raise PricingError(f"deterministic pricing model came back {sol.status}")
    u, q = extract_assignment(sol, xx.shape[0])
    status = "ok" if sol.status == "optimal" else sol.status
    return build_solution(u, q, xx, status=status)


def min_utilities_for_allocation(q, x: XLike) -> Optional[np.ndarray]:
    """Componentwise-minimal u >= 0 satisfying every pairwise no-envy row.

    Longest paths from a virtual source: edge i -> j carries
    c_ij = sum_k q[i,k] (x[j,k] - x[i,k]); source -> j carries 0. Returns None
    when a positive cycle makes the fixed allocation unpriceable. Minimal u
    also minimizes sum(u), so it maximizes revenue for the fixed allocation.
    """
    qq = as_allocation_array(q)
    xx = as_valuation_array(x)
    k = xx.shape[0]
    if qq.shape != (k, k):
        raise PricingError(f"allocation must be {k}x{k}")
    bundles = qq.astype(float) @ xx.T          # value buyer j places on i's item
    own = np.diag(bundles).copy()
    c = bundles - own[:, None]
    np.fill_diagonal(c, -np.inf)
    u = np.zeros(k)
    for _ in range(k):
        relaxed = np.maximum(u, (u[:, None] + c).max(axis=0))
        if np.allclose(relaxed, u, rtol=0.0, atol=0.0):
            break
        u = relaxed
    if np.any((u[:, None] + c).max(axis=0) > u + 1e-9):
        return None
    return u


def partial_permutations(k: int) -> Iterator[np.ndarray]:
    """Every k x k partial permutation matrix, in a fixed documented order:
    by number of matches, then by the chosen buyer subset, then by the item
    arrangement, each in lexicographic order."""
    for r in range(k + 1):
        for rows in itertools.combinations(range(k), r):
            for cols in itertools.permutations(range(k), r):
                q = np.zeros((k, k), dtype=np.int8)
                q[list(rows), list(cols)] = 1
                yield q


def prefer(value_a: float, sold_a: int, flat_a: Tuple[int, ...],
           value_b: float, sold_b: int, flat_b: Tuple[int, ...],
           tol: float = 1e-9) -> bool:
    """Tie rule shared by the exhaustive paths: higher value, then more items
    sold, then lexicographically smallest flattened allocation."""
    if value_a > value_b + tol:
        return True
    if value_a < value_b - tol:
        return False
    if sold_a != sold_b:
        return sold_a > sold_b
    return flat_a < flat_b


def solve_deterministic_enumerate(x: XLike, max_k: int = ENUM_K_CAP) -> PricingSolution:
    """Exact optimum by enumerating all partial permutations (small k only)."""
    xx = as_valuation_array(x)
    k = xx.shape[0]
    if k > max_k:
        raise EnumerationCapError(f"enumeration capped at k <= {max_k}, got {k}")
    best = None
    for q in partial_permutations(k):
        u = min_utilities_for_allocation(q, xx)
        if u is None:
            continue
        value = float((q * xx).sum() - u.sum())
        sold = int(q.sum())
        flat = tuple(int(v) for v in q.ravel())
        if best is None or prefer(value, sold, flat, best[0], best[1], best[2]):
            best = (value, sold, flat, q, u)
    assert best is not None  # the empty allocation is always feasible
    _, _, _, q, u = best
    return build_solution(u, q, xx)
