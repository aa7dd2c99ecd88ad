"""Fast approximate pricing: maximum-weight assignment plus price repair.

Start from a maximum-weight perfect matching at full extraction prices, then
sweep over buyers lowering each matched item's price until nobody prefers a
different offered item; items whose price would have to go negative are
withdrawn from sale. Revenue is at most the exact optimum, which in turn is
at most the matching weight.
"""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import (
    Allocation,
    PricingSolution,
    XLike,
    as_valuation_array,
    build_solution,
    is_ic_feasible,
)


def matching_weight(x: XLike) -> float:
    """Value of a maximum-weight perfect matching of buyers to items."""
    xx = as_valuation_array(x)
    rows, cols = linear_sum_assignment(xx, maximize=True)
    return float(xx[rows, cols].sum())


def max_weight_assignment(x: XLike) -> Allocation:
    """A maximum-weight perfect matching, ties broken lexicographically.

    Among all maximum-weight matchings, returns the one whose item sequence
    (item of buyer 0, item of buyer 1, ...) is lexicographically smallest,
    fixed greedily row by row.
    """
    xx = as_valuation_array(x)
    k = xx.shape[0]
    total = matching_weight(xx)
    tol = 1e-9 * max(1.0, abs(total))
    chosen: list[int] = []
    free_cols = list(range(k))
    prefix = 0.0
    for i in range(k):
        for c in free_cols:
            rest_cols = [d for d in free_cols if d != c]
            if rest_cols:
                sub = xx[np.ix_(range(i + 1, k), rest_cols)]
                r2, c2 = linear_sum_assignment(sub, maximize=True)
                completion = float(sub[r2, c2].sum())
            else:
                completion = 0.0
            if prefix + xx[i, c] + completion >= total - tol:
                chosen.append(c)
                prefix += xx[i, c]
                free_cols.remove(c)
                break
        else:
            raise AssertionError("no completion preserved the matching weight")
    q = np.zeros((k, k), dtype=np.int8)
    q[range(k), chosen] = 1
    return Allocation(q)


def heuristic_solve(x: XLike, max_passes: Optional[int] = None,
                    on_pass: Optional[Callable[[np.ndarray], None]] = None) -> PricingSolution:
    """Assignment-then-repair pricing for scenario x.

    Prices start at the matched buyer's full valuation and only ever move
    down. A pass visits buyers in index order; a buyer strictly preferring
    another offered item gets their own item's price cut by exactly the gap.
    A cut that would push the price (or the buyer's utility) negative instead
    withdraws the item and leaves that buyer with the empty bundle.

    Status is "ok" for a converged, envy-free result, "non-converged" when
    ``max_passes`` ran out first, and "failed" if the final state is not
    envy-free (possible only through withdrawals, which this procedure never
    re-matches). ``on_pass`` receives a price-vector snapshot after each pass.
    """
    xx = as_valuation_array(x)
    k = xx.shape[0]
    if max_passes is None:
        max_passes = 4 * k * k
    if max_passes < 1:
        raise ValueError("max_passes must be positive")
    assignment = max_weight_assignment(xx)
    item_of = dict(assignment.matched_pairs())
    prices = np.zeros(k)
    for i, j in item_of.items():
        prices[j] = xx[i, j]
    offered = np.ones(k, dtype=bool)

    converged = False
    for _ in range(max_passes):
        changed = False
        for i in range(k):
            j0 = item_of.get(i)
            if j0 is None:
                continue
            matched_utility = xx[i, j0] - prices[j0]
            gains = np.where(offered, xx[i] - prices, -np.inf)
            best = float(gains.max())
            if best > matched_utility + 1e-12:
                prices[j0] -= best - matched_utility
                changed = True
                if prices[j0] < -1e-12 or xx[i, j0] - prices[j0] < -1e-12:
                    offered[j0] = False
                    del item_of[i]
        if on_pass is not None:
            on_pass(prices.copy())
        if not changed:
            converged = True
            break

    u = np.zeros(k)
    q = np.zeros((k, k), dtype=np.int8)
    for i, j in item_of.items():
        q[i, j] = 1
        u[i] = max(xx[i, j] - prices[j], 0.0)
    envy_free = is_ic_feasible(u, q, xx)
    if not envy_free:
        status = "failed"
    elif converged:
        status = "ok"
    else:
        status = "non-converged"
    return build_solution(u, q, xx, status=status)
