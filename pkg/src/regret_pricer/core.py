"""Domain types and feasibility arithmetic for unit-demand item pricing.

Buyers index rows, items index columns. A candidate solution is a pair
(u, Q) of buyer utilities and a partial one-to-one assignment of items to
buyers; posted item prices are derived from the utilities of matched pairs.
All types are immutable value objects and all operations are pure.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

DEFAULT_TOL = 1e-9
DEFAULT_GAP = 0.05


class PricingError(Exception):
    """Base error for pricing domain violations."""


class DimensionError(PricingError):
    """Shapes of inputs do not agree."""


class NegativePriceError(PricingError):
    """A recovered price is negative, so (u, Q) is not a valid pricing."""


def _as_float_matrix(a, name: str) -> np.ndarray:
    m = np.asarray(a, dtype=float)
    if m.ndim != 2:
        raise DimensionError(f"{name} must be a 2-d matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise PricingError(f"{name} contains non-finite entries")
    return m


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ValuationMatrix:
    """One concrete K x K profile of buyer valuations, entries >= 0."""

    x: np.ndarray

    def __post_init__(self):
        m = _as_float_matrix(self.x, "valuations")
        if m.shape[0] != m.shape[1]:
            raise DimensionError(f"valuation matrix must be square, got {m.shape}")
        if m.size and m.min() < 0:
            raise PricingError("valuations must be nonnegative")
        object.__setattr__(self, "x", _freeze(m))

    @property
    def k(self) -> int:
        return self.x.shape[0]


@dataclass(frozen=True)
class IntervalUncertainty:
    """Per-(buyer, item) valuation bounds: entry (i, j) lies in [lower, upper]."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = _as_float_matrix(self.lower, "lower bounds")
        hi = _as_float_matrix(self.upper, "upper bounds")
        if lo.shape != hi.shape or lo.shape[0] != lo.shape[1]:
            raise DimensionError(f"bound matrices must be square and equal-shaped, got {lo.shape} and {hi.shape}")
        if lo.size and lo.min() < 0:
            raise PricingError("lower bounds must be nonnegative")
        if np.any(hi < lo):
            raise PricingError("upper bounds must dominate lower bounds entrywise")
        object.__setattr__(self, "lower", _freeze(lo))
        object.__setattr__(self, "upper", _freeze(hi))

    @property
    def k(self) -> int:
        return self.lower.shape[0]

    @property
    def degenerate(self) -> bool:
        return bool(np.array_equal(self.lower, self.upper))


@dataclass(frozen=True)
class DiscreteScenarioSet:
    """A finite, nonempty collection of equally sized valuation profiles."""

    scenarios: tuple[ValuationMatrix, ...]

    def __post_init__(self):
        scen = tuple(self.scenarios)
        if not scen:
            raise PricingError("scenario set must be nonempty")
        k = scen[0].k
        if any(s.k != k for s in scen):
            raise DimensionError("all scenarios must share one dimension")
        object.__setattr__(self, "scenarios", scen)

    @property
    def k(self) -> int:
        return self.scenarios[0].k


@dataclass(frozen=True)
class Allocation:
    """K x K binary partial permutation: q[i, j] = 1 iff buyer i gets item j."""

    q: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.q)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError(f"allocation must be square, got shape {m.shape}")
        if not np.isin(m, (0, 1)).all():
            raise PricingError("allocation entries must be 0 or 1")
        m = m.astype(np.int8)
        if m.size and (m.sum(axis=1).max(initial=0) > 1 or m.sum(axis=0).max(initial=0) > 1):
            raise PricingError("allocation rows and columns must each sum to at most 1")
        object.__setattr__(self, "q", _freeze(m))

    @property
    def k(self) -> int:
        return self.q.shape[0]

    def matched_pairs(self) -> list[tuple[int, int]]:
        rows, cols = np.nonzero(self.q)
        return list(zip(rows.tolist(), cols.tolist()))


@dataclass(frozen=True)
class UtilityVector:
    """Length-K buyer utilities; nonnegative once participation is normalized to zero."""

    u: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.u, dtype=float)
        if v.ndim != 1:
            raise DimensionError(f"utilities must be a vector, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise PricingError("utilities contain non-finite entries")
        if v.size and v.min() < -DEFAULT_TOL:
            raise PricingError("utilities must be nonnegative")
        object.__setattr__(self, "u", _freeze(v))

    @property
    def k(self) -> int:
        return self.u.shape[0]


QLike = Union[Allocation, np.ndarray, Sequence]
ULike = Union[UtilityVector, np.ndarray, Sequence]
XLike = Union[ValuationMatrix, np.ndarray, Sequence]


def as_allocation_array(q: QLike) -> np.ndarray:
    if isinstance(q, Allocation):
        return q.q
    return Allocation(np.asarray(q)).q


def as_utility_array(u: ULike) -> np.ndarray:
    if isinstance(u, UtilityVector):
        return u.u
    v = np.asarray(u, dtype=float)
    if v.ndim != 1:
        raise DimensionError(f"utilities must be a vector, got shape {v.shape}")
    return v


def as_valuation_array(x: XLike) -> np.ndarray:
    if isinstance(x, ValuationMatrix):
        return x.x
    return ValuationMatrix(np.asarray(x, dtype=float)).x


def _check_dims(u: np.ndarray, q: np.ndarray, k: int) -> None:
    if q.shape != (k, k) or u.shape != (k,):
        raise DimensionError(f"expected utilities of length {k} and a {k}x{k} allocation, got {u.shape} and {q.shape}")


@dataclass(frozen=True)
class PricingSolution:
    """An assignment with utilities, derived prices and summary metrics.

    ``prices[j]`` for an unsold item j carries a sentinel strictly above every
    buyer's valuation of j, so posting it sells nothing. ``value`` is the
    objective sum(q * x_ref) - sum(u) at the reference scenario; it equals
    ``revenue`` whenever unmatched buyers carry zero utility.
    """

    allocation: Allocation
    utilities: UtilityVector
    prices: np.ndarray
    revenue: float
    welfare: float
    sold_count: int
    value: float
    status: str = "ok"

    def __post_init__(self):
        object.__setattr__(self, "prices", _freeze(np.asarray(self.prices, dtype=float)))


def normalized_empty_mask(mask: Optional[Sequence[bool]], k: int) -> np.ndarray:
    if mask is None:
        return np.ones(k, dtype=bool)
    m = np.asarray(mask, dtype=bool)
    if m.shape != (k,):
        raise DimensionError(f"mask must have length {k}")
    return m


def value_under_scenario(u: ULike, q: QLike, x: XLike) -> float:
    """Objective of a candidate at one scenario: sum(q * x) - sum(u)."""
    uu = as_utility_array(u)
    qq = as_allocation_array(q)
    xx = as_valuation_array(x)
    _check_dims(uu, qq, xx.shape[0])
    return float((qq * xx).sum() - uu.sum())


def envy_margins(u: np.ndarray, q: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Margin matrix m[i, j] = (u_j - u_i) - sum_k q[i, k] (x[j, k] - x[i, k]).

    Entry (i, j) is the slack of the constraint saying buyer j does not prefer
    buyer i's bundle at the implied prices; nonnegative everywhere means no envy.
    """
    # bundles[i, j] = value buyer j places on buyer i's assigned item (0 if none)
    bundles = q.astype(float) @ x.T
    own = np.diag(bundles)
    diff = bundles - own[:, None]
    return (u[None, :] - u[:, None]) - diff


def is_ic_feasible(u: ULike, q: QLike, x: XLike, tol: float = DEFAULT_TOL) -> bool:
    """Whether (u, Q) is envy-free and individually rational at scenario x.

    Checks every ordered pair constraint, u >= 0, and that buyers with no
    item carry zero utility (the empty bundle is worth exactly zero).
    """
    uu = as_utility_array(u)
    qq = as_allocation_array(q)
    xx = as_valuation_array(x)
    _check_dims(uu, qq, xx.shape[0])
    if uu.size == 0:
        return True
    if uu.min() < -tol:
        return False
    unmatched = qq.sum(axis=1) == 0
    if np.any(uu[unmatched] > tol):
        return False
    return bool(envy_margins(uu, qq, xx).min() >= -tol)


def robust_envy_margins(u: np.ndarray, q: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """Worst-case envy margins over the box: m[i, j] uses upper[j] against lower[i]."""
    cross = q.astype(float) @ upper.T          # cross[i, j] = buyer j's best-case value of i's item
    own_low = (q * lower).sum(axis=1)          # buyer i's worst-case value of the same item
    diff = cross - own_low[:, None]
    return (u[None, :] - u[:, None]) - diff


def is_robust_feasible(u: ULike, q: QLike, s: IntervalUncertainty, tol: float = DEFAULT_TOL) -> bool:
    """Whether (u, Q) stays envy-free for every scenario inside the interval box.

    The pairwise constraints are imposed for i != j only: at i == j both sides
    reference the same matrix entries, so the scenario-wise constraint is the
    identity 0 >= 0 and a widthwise reading would wrongly forbid every sale.
    """
    uu = as_utility_array(u)
    qq = as_allocation_array(q)
    k = s.k
    _check_dims(uu, qq, k)
    if uu.size == 0:
        return True
    if uu.min() < -tol:
        return False
    unmatched = qq.sum(axis=1) == 0
    if np.any(uu[unmatched] > tol):
        return False
    margins = robust_envy_margins(uu, qq, s.lower, s.upper)
    np.fill_diagonal(margins, 0.0)
    return bool(margins.min() >= -tol)


def unsold_sentinel_prices(x_sentinel: np.ndarray) -> np.ndarray:
    """Price vector that deters every buyer: one above the top valuation per item."""
    return 1.0 + x_sentinel.max(axis=0)


def recover_prices(
    u: ULike,
    q: QLike,
    x_ref: XLike,
    x_sentinel: Optional[XLike] = None,
) -> np.ndarray:
    """Derive item prices from utilities: p_j = x_ref[i, j] - u_i for each match.

    Unsold items get a sentinel of 1 + the largest valuation of that item in
    ``x_sentinel`` (defaults to ``x_ref``); for interval instances pass the
    upper-bound matrix so the sentinel deters buyers in every scenario.
    Raises :class:`NegativePriceError` if any matched price comes out negative.
    """
    uu = as_utility_array(u)
    qq = as_allocation_array(q)
    xx = as_valuation_array(x_ref)
    k = xx.shape[0]
    _check_dims(uu, qq, k)
    sent = xx if x_sentinel is None else as_valuation_array(x_sentinel)
    if sent.shape != xx.shape:
        raise DimensionError("sentinel matrix shape must match the reference scenario")
    prices = unsold_sentinel_prices(sent)
    for i, j in zip(*np.nonzero(qq)):
        p = xx[i, j] - uu[i]
        if p < -DEFAULT_TOL:
            raise NegativePriceError(
                f"recovered price of item {j} for buyer {i} is {p:.6g} < 0; "
                f"(u, Q) is not a valid pricing at the reference scenario"
            )
        prices[j] = max(p, 0.0)
    return prices


def regret(u: ULike, q: QLike, x: XLike, opt_value: float) -> float:
    """Shortfall of the candidate against the best revenue attainable at x."""
    return float(opt_value - value_under_scenario(u, q, x))


def build_solution(
    u: ULike,
    q: QLike,
    x_ref: XLike,
    x_sentinel: Optional[XLike] = None,
    real_rows: Optional[Sequence[bool]] = None,
    real_cols: Optional[Sequence[bool]] = None,
    status: str = "ok",
) -> PricingSolution:
    """Assemble a :class:`PricingSolution` from (u, Q) at a reference scenario.

    ``real_rows`` / ``real_cols`` mark non-padding buyers and items; matches
    involving padding do not count as sales.
    """
    uu = as_utility_array(u)
    qq = as_allocation_array(q)
    xx = as_valuation_array(x_ref)
    k = xx.shape[0]
    _check_dims(uu, qq, k)
    rows = normalized_empty_mask(real_rows, k)
    cols = normalized_empty_mask(real_cols, k)
    prices = recover_prices(uu, qq, xx, x_sentinel)
    sellable = qq * rows[:, None] * cols[None, :]
    revenue = float((sellable * (xx - uu[:, None])).sum())
    return PricingSolution(
        allocation=Allocation(qq),
        utilities=UtilityVector(np.maximum(uu, 0.0)),
        prices=prices,
        revenue=revenue,
        welfare=float(uu.sum()),
        sold_count=int(sellable.sum()),
        value=value_under_scenario(uu, qq, xx),
        status=status,
    )


@dataclass(frozen=True)
class RawInstance:
    """An unnormalized market: N buyers with demands over M items.

    Exactly one of ``valuations`` (point data) or ``lower``/``upper``
    (interval data) must be given, each of shape N x M (buyer-major).
    """

    n_buyers: int
    m_items: int
    demands: Optional[tuple[int, ...]] = None
    valuations: Optional[np.ndarray] = None
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.n_buyers < 1 or self.m_items < 1:
            raise PricingError("instance needs at least one buyer and one item")
        point = self.valuations is not None
        interval = self.lower is not None or self.upper is not None
        if point == interval:
            raise PricingError("give either point valuations or interval bounds, not both")
        shape = (self.n_buyers, self.m_items)
        if point:
            v = _as_float_matrix(self.valuations, "valuations")
            if v.shape != shape:
                raise DimensionError(f"valuations must be {shape}, got {v.shape}")
            if v.min(initial=0.0) < 0:
                raise PricingError("valuations must be nonnegative")
            object.__setattr__(self, "valuations", _freeze(v))
        else:
            if self.lower is None or self.upper is None:
                raise PricingError("interval data needs both lower and upper bounds")
            lo = _as_float_matrix(self.lower, "lower bounds")
            hi = _as_float_matrix(self.upper, "upper bounds")
            if lo.shape != shape or hi.shape != shape:
                raise DimensionError(f"bound matrices must be {shape}")
            if lo.min(initial=0.0) < 0 or np.any(hi < lo):
                raise PricingError("need 0 <= lower <= upper entrywise")
            object.__setattr__(self, "lower", _freeze(lo))
            object.__setattr__(self, "upper", _freeze(hi))
        if self.demands is not None:
            d = tuple(int(v) for v in self.demands)
            if len(d) != self.n_buyers:
                raise DimensionError("demands length must equal the number of buyers")
            if any(v < 1 or v > self.m_items for v in d):
                raise PricingError("each demand must satisfy 1 <= D_i <= number of items")
            object.__setattr__(self, "demands", d)

    @property
    def is_interval(self) -> bool:
        return self.valuations is None


@dataclass(frozen=True)
class NormalizedInstance:
    """A squared unit-demand instance plus maps back to original identities.

    ``buyer_of_row[r]`` is the original buyer index a row stands for, or None
    for a zero-valuation padding buyer; ``item_of_col`` likewise for items.
    A buyer with demand D appears as D consecutive rows.
    """

    data: Union[ValuationMatrix, IntervalUncertainty]
    buyer_of_row: tuple[Optional[int], ...]
    item_of_col: tuple[Optional[int], ...]

    @property
    def k(self) -> int:
        return self.data.k

    @property
    def real_rows(self) -> np.ndarray:
        return np.array([b is not None for b in self.buyer_of_row], dtype=bool)

    @property
    def real_cols(self) -> np.ndarray:
        return np.array([c is not None for c in self.item_of_col], dtype=bool)


def _split_rows(matrix: np.ndarray, demands: Sequence[int]) -> tuple[np.ndarray, list[int]]:
    rows = []
    owners = []
    for i, d in enumerate(demands):
        for _ in range(d):
            rows.append(matrix[i])
            owners.append(i)
    return np.array(rows, dtype=float), owners


def _pad_square(matrix: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros((k, k), dtype=float)
    out[: matrix.shape[0], : matrix.shape[1]] = matrix
    return out


def normalize_instance(raw: RawInstance) -> NormalizedInstance:
    """Reduce to a square unit-demand instance.

    A buyer demanding D items becomes D identical unit-demand rows, then the
    matrix is padded to K = max(rows, items) with zero-valuation buyers or
    zero-value items. Padding carries [0, 0] intervals in the interval case.
    """
    demands = raw.demands if raw.demands is not None else (1,) * raw.n_buyers
    if raw.is_interval:
        lo, owners = _split_rows(raw.lower, demands)
        hi, _ = _split_rows(raw.upper, demands)
    else:
        pts, owners = _split_rows(raw.valuations, demands)
    n_rows = len(owners)
    k = max(n_rows, raw.m_items)
    buyer_of_row = tuple(owners + [None] * (k - n_rows))
    item_of_col = tuple(list(range(raw.m_items)) + [None] * (k - raw.m_items))
    if raw.is_interval:
        data: Union[ValuationMatrix, IntervalUncertainty] = IntervalUncertainty(
            lower=_pad_square(lo, k), upper=_pad_square(hi, k)
        )
    else:
        data = ValuationMatrix(_pad_square(pts, k))
    return NormalizedInstance(data=data, buyer_of_row=buyer_of_row, item_of_col=item_of_col)
