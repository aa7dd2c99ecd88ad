"""Self-contained mixed-binary linear programming.

A bounded-variable revised simplex (two phases, dense numpy basis inverse)
solves LP relaxations; best-bound branch and bound on binary variables closes
integrality. Everything is deterministic: fixed pricing, ratio, and branching
rules, with Bland's rule engaged only after a long run of stalled pivots.
"""

from __future__ import annotations

import heapq
import time
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from . import _simplex_kernel as _kernel

LE, GE, EQ = "<=", ">=", "="

# column states
_BASIC, _AT_LOWER, _AT_UPPER, _FREE = 0, 1, 2, 3

_INT_TOL = 1e-7        # integrality comparisons
_FEAS_TOL = 1e-9       # constraint/bound satisfaction granularity
_PHASE1_TOL = 1e-7     # residual infeasibility that still counts as feasible
_PIV_TOL = 1e-9        # smallest pivot accepted by the ratio test
_TINY_PIV = 1e-12      # repeated pivots below this raise an error
_REFACTOR_EVERY = 64


class MilpError(Exception):
    """Invalid model or unsupported request."""


class MilpNumericalError(MilpError):
    """The simplex lost numerical footing (repeated pivots below 1e-12)."""


class _StallCycle(Exception):
    """Internal: degenerate cycling survived Bland's rule; caller perturbs."""


@dataclass
class Variable:
    name: str
    lb: Optional[float] = 0.0       # None means -inf
    ub: Optional[float] = None      # None means +inf
    binary: bool = False


@dataclass
class Constraint:
    coeffs: Dict[str, float]
    relation: str
    rhs: float
    name: str = ""


@dataclass
class Objective:
    sense: str                      # "min" or "max"
    coeffs: Dict[str, float]
    constant: float = 0.0


@dataclass
class MilpModel:
    variables: List[Variable] = field(default_factory=list)
    constraints: List[Constraint] = field(default_factory=list)
    objective: Objective = field(default_factory=lambda: Objective("min", {}))

    def add_variable(self, name: str, lb: Optional[float] = 0.0, ub: Optional[float] = None,
                     binary: bool = False) -> Variable:
        if binary:
            lb = 0.0 if lb is None else max(0.0, lb)
            ub = 1.0 if ub is None else min(1.0, ub)
        v = Variable(name, lb, ub, binary)
        self.variables.append(v)
        return v

    def add_constraint(self, coeffs: Dict[str, float], relation: str, rhs: float,
                       name: str = "") -> Constraint:
        c = Constraint(dict(coeffs), relation, float(rhs), name)
        self.constraints.append(c)
        return c

    def set_objective(self, sense: str, coeffs: Dict[str, float], constant: float = 0.0) -> None:
        self.objective = Objective(sense, dict(coeffs), float(constant))


@dataclass
class MilpSolution:
    status: str                     # optimal | infeasible | unbounded | gap-limit | iteration-limit
    values: Dict[str, float]
    objective_value: Optional[float]
    bound: Optional[float]
    nodes_explored: int = 0
    bound_trace: List[float] = field(default_factory=list)

    def __getitem__(self, name: str) -> float:
        return self.values[name]


def dump_model(model: MilpModel) -> str:
    """Plain-text dump, one objective/constraint/variable per line.

    Format: ``min|max: <coef> <var> [+ ...] + <constant>``, then one
    ``row <name>: <coef> <var> [+ ...] <rel> <rhs>`` line per constraint,
    then one ``var <name>: binary | [lb, ub]`` line per variable.
    """

    def terms(coeffs: Dict[str, float]) -> str:
        parts = []
        for k in coeffs:
            c = coeffs[k]
            sign = "-" if c < 0 else "+"
            parts.append(f"{sign} {abs(c):.9g} {k}")
        if not parts:
            return "0"
        out = " ".join(parts)
        return out[2:] if out.startswith("+ ") else out

    lines = [f"{model.objective.sense}: {terms(model.objective.coeffs)} + {model.objective.constant:.9g}"]
    for idx, con in enumerate(model.constraints):
        name = con.name or f"r{idx}"
        lines.append(f"row {name}: {terms(con.coeffs)} {con.relation} {con.rhs:.9g}")
    for v in model.variables:
        if v.binary:
            lines.append(f"var {v.name}: binary")
        else:
            lo = "-inf" if v.lb is None else f"{v.lb:.9g}"
            hi = "inf" if v.ub is None else f"{v.ub:.9g}"
            lines.append(f"var {v.name}: [{lo}, {hi}]")
    return "\n".join(lines) + "\n"


class _Prepared:
    """Validated dense arrays for one model, shared by all of its relaxations."""

    def __init__(self, model: MilpModel):
        names = [v.name for v in model.variables]
        if len(set(names)) != len(names):
            raise MilpError("duplicate variable names")
        self.names = names
        self.index = {n: j for j, n in enumerate(names)}
        n = len(names)
        self.n = n
        self.lb = np.full(n, -np.inf)
        self.ub = np.full(n, np.inf)
        self.binary = np.zeros(n, dtype=bool)
        for j, v in enumerate(model.variables):
            lo = -np.inf if v.lb is None else float(v.lb)
            hi = np.inf if v.ub is None else float(v.ub)
            if np.isnan(lo) or np.isnan(hi):
                raise MilpError(f"variable {v.name} has a NaN bound")
            if lo > hi:
                raise MilpError(f"variable {v.name} has empty bound interval [{lo}, {hi}]")
            if v.binary and (lo < -_FEAS_TOL or hi > 1 + _FEAS_TOL):
                raise MilpError(f"binary variable {v.name} must have bounds within [0, 1]")
            self.lb[j], self.ub[j] = lo, hi
            self.binary[j] = v.binary

        # empty rows are resolved here; a contradictory one marks the model infeasible
        rows = []
        self.trivially_infeasible = False
        for idx, con in enumerate(model.constraints):
            if con.relation not in (LE, GE, EQ):
                raise MilpError(f"unknown relation {con.relation!r} in row {idx}")
            if not np.isfinite(con.rhs):
                raise MilpError(f"row {idx} has non-finite rhs")
            for k, c in con.coeffs.items():
                if k not in self.index:
                    raise MilpError(f"row {idx} references unknown variable {k!r}")
                if not np.isfinite(c):
                    raise MilpError(f"row {idx} has non-finite coefficient on {k!r}")
            coeffs = {k: float(c) for k, c in con.coeffs.items() if c != 0.0}
            if not coeffs:
                ok = (con.relation == LE and 0 <= con.rhs + _FEAS_TOL) or \
                     (con.relation == GE and 0 >= con.rhs - _FEAS_TOL) or \
                     (con.relation == EQ and abs(con.rhs) <= _FEAS_TOL)
                if not ok:
                    self.trivially_infeasible = True
                continue
            rows.append((coeffs, con.relation, float(con.rhs)))
        m = len(rows)
        self.m = m
        self.A = np.zeros((m, n))
        self.rel = []
        self.b = np.zeros(m)
        for r, (coeffs, rel, rhs) in enumerate(rows):
            for k, c in coeffs.items():
                self.A[r, self.index[k]] = c
            self.rel.append(rel)
            self.b[r] = rhs

        sense = model.objective.sense
        if sense not in ("min", "max"):
            raise MilpError(f"objective sense must be min or max, got {sense!r}")
        self.sense = sense
        self.sign = 1.0 if sense == "min" else -1.0
        self.c = np.zeros(n)
        for k, c in model.objective.coeffs.items():
            if k not in self.index:
                raise MilpError(f"objective references unknown variable {k!r}")
            if not np.isfinite(c):
                raise MilpError(f"objective coefficient on {k!r} is non-finite")
            self.c[self.index[k]] = self.sign * float(c)
        self.c0 = float(model.objective.constant)

    def slack_bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        lo = np.zeros(self.m)
        hi = np.zeros(self.m)
        for r, rel in enumerate(self.rel):
            if rel == LE:
                lo[r], hi[r] = 0.0, np.inf
            elif rel == GE:
                lo[r], hi[r] = -np.inf, 0.0
            else:
                lo[r], hi[r] = 0.0, 0.0
        return lo, hi


class _Simplex:
    """Bounded-variable primal simplex over min c.x s.t. A x = b, lb <= x <= ub.

    Columns: structurals, then one slack per row, then any artificials added
    during phase 1. ``n_real`` marks where artificials start.
    """

    def __init__(self, A: np.ndarray, b: np.ndarray, lb: np.ndarray, ub: np.ndarray,
                 n_struct: int):
        self.A = A
        self.b = b
        self.lb = lb
        self.ub = ub
        self.m, self.n = A.shape
        self.n_struct = n_struct
        self.n_real = self.n
        self.iterations = 0
        self.tiny_pivots = 0
        self.art_home: Dict[int, int] = {}
        self._probe = None

    def _resting(self, j: int) -> Tuple[float, int]:
        if np.isfinite(self.lb[j]):
            return float(self.lb[j]), _AT_LOWER
        if np.isfinite(self.ub[j]):
            return float(self.ub[j]), _AT_UPPER
        return 0.0, _FREE

    def setup(self, crash_cols: Iterable[int]) -> None:
        self.status = np.empty(self.n, dtype=np.int8)
        self.val = np.zeros(self.n)
        for j in range(self.n):
            self.val[j], self.status[j] = self._resting(j)
        self.basis = np.full(self.m, -1, dtype=int)

        # crash: a free column becomes basic in the row where doing so leaves
        # the smallest total infeasibility over the slack start
        slack_lo = self.lb[self.n_struct:self.n_real]
        slack_hi = self.ub[self.n_struct:self.n_real]
        claimed = np.zeros(self.m, dtype=bool)
        for f in crash_cols:
            col = self.A[:, f]
            resid = self.b - self.A @ self.val
            best_row, best_score = -1, np.inf
            for r in range(self.m):
                if claimed[r] or abs(col[r]) <= 1e-7:
                    continue
                v = resid[r] / col[r]
                s = resid - col * v
                viol = np.maximum(s - slack_hi, 0.0) + np.maximum(slack_lo - s, 0.0)
                viol[claimed] = 0.0
                viol[r] = 0.0
                score = float(viol.sum())
                if score < best_score - 1e-12:
                    best_row, best_score = r, score
            if best_row >= 0:
                self.basis[best_row] = f
                self.status[f] = _BASIC
                claimed[best_row] = True
        for r in range(self.m):
            if self.basis[r] < 0:
                j = self.n_struct + r
                self.basis[r] = j
                self.status[j] = _BASIC
        try:
            self._factorize()
        except MilpNumericalError:
            # crashed columns turned out linearly dependent: plain slack start
            for j in range(self.n):
                self.val[j], self.status[j] = self._resting(j)
            for r in range(self.m):
                j = self.n_struct + r
                self.basis[r] = j
                self.status[j] = _BASIC
            self._factorize()

    def _factorize(self) -> float:
        """Refresh the basis inverse; returns an estimate of ||B Binv - I||.

        Bases here are usually near-identity (slacks, artificials, and a few
        structural columns), so the inverse is assembled from the small dense
        block when possible; residuals are probed with two fixed vectors
        rather than a full m^3 product.
        """
        B = self.A[:, self.basis]
        dense = self.basis < self.n_struct
        k_dense = int(dense.sum())
        self.Binv = None
        if k_dense <= max(4, self.m // 4):
            self.Binv = self._structured_inverse(dense)
        if self.Binv is None:
            try:
                self.Binv = np.linalg.inv(B)
            except np.linalg.LinAlgError:
                raise MilpNumericalError("singular basis matrix")
        self._recompute_xb()
        if not self.m:
            return 0.0
        probe = self._probe
        if probe is None or probe.shape[0] != self.m:
            rng = np.arange(1, self.m + 1, dtype=float)
            probe = np.stack([np.ones(self.m), np.cos(rng)], axis=1)
            self._probe = probe
        resid = B @ (self.Binv @ probe) - probe
        return float(np.abs(resid).max())

    _probe: Optional[np.ndarray] = None

    def _structured_inverse(self, dense: np.ndarray) -> Optional[np.ndarray]:
        """Inverse of a basis whose non-structural columns are unit vectors."""
        m = self.m
        pos_dense = np.nonzero(dense)[0]
        pos_unit = np.nonzero(~dense)[0]
        cols_unit = self.basis[pos_unit]
        rows_unit = np.empty(pos_unit.size, dtype=int)
        for t, col in enumerate(cols_unit):
            if col < self.n_real:
                rows_unit[t] = col - self.n_struct
            else:
                rows_unit[t] = self.art_home[int(col)]
        if np.unique(rows_unit).size != rows_unit.size:
            return None
        sigma = self.A[rows_unit, cols_unit]
        if np.any(np.abs(sigma) < 0.5):
            return None
        claimed = np.zeros(m, dtype=bool)
        claimed[rows_unit] = True
        unclaimed = np.nonzero(~claimed)[0]
        cols_dense = self.basis[pos_dense]
        try:
            small_inv = np.linalg.inv(self.A[np.ix_(unclaimed, cols_dense)])
        except np.linalg.LinAlgError:
            raise MilpNumericalError("singular basis matrix")
        binv = np.zeros((m, m))
        binv[np.ix_(pos_dense, unclaimed)] = small_inv
        if pos_unit.size:
            a_rp = self.A[np.ix_(rows_unit, cols_dense)]
            block = a_rp @ binv[pos_dense, :]
            binv[pos_unit, :] = -block / sigma[:, None]
            binv[pos_unit, rows_unit] += 1.0 / sigma
        return binv

    def _recompute_xb(self) -> None:
        rest = self.val.copy()
        rest[self.basis] = 0.0
        self.xb = self.Binv @ (self.b - self.A @ rest)

    def phase1_augment(self) -> int:
        """Swap out-of-bounds basic values for fresh artificials; returns count."""
        added = 0
        for _ in range(self.m + 1):
            viol_rows = [
                r for r in range(self.m)
                if self.basis[r] < self.n_real
                and (self.xb[r] < self.lb[self.basis[r]] - _FEAS_TOL
                     or self.xb[r] > self.ub[self.basis[r]] + _FEAS_TOL)
            ]
            if not viol_rows:
                break
            for r in viol_rows:
                j = int(self.basis[r])
                if np.isfinite(self.lb[j]) and self.xb[r] < self.lb[j]:
                    self.val[j], self.status[j] = float(self.lb[j]), _AT_LOWER
                elif np.isfinite(self.ub[j]) and self.xb[r] > self.ub[j]:
                    self.val[j], self.status[j] = float(self.ub[j]), _AT_UPPER
                else:
                    self.val[j], self.status[j] = self._resting(j)
                a = self._new_artificial(r)
                self.basis[r] = a
                self.status = np.append(self.status, _BASIC)
                added += 1
            self._factorize()
            flipped = False
            for r in range(self.m):
                j = int(self.basis[r])
                if j >= self.n_real and self.xb[r] < -_FEAS_TOL:
                    self.A[r, j] = -self.A[r, j]
                    flipped = True
            if flipped:
                self._factorize()
        return added

    def _new_artificial(self, row: int) -> int:
        col = np.zeros((self.m, 1))
        col[row, 0] = 1.0
        self.A = np.hstack([self.A, col])
        self.lb = np.append(self.lb, 0.0)
        self.ub = np.append(self.ub, np.inf)
        self.val = np.append(self.val, 0.0)
        self.n += 1
        self.art_home[self.n - 1] = row
        return self.n - 1

    def pin_artificials(self) -> None:
        self.lb[self.n_real:] = 0.0
        self.ub[self.n_real:] = 0.0
        self.val[self.n_real:] = 0.0

    def drive_out_artificials(self) -> None:
        for r in range(self.m):
            j = int(self.basis[r])
            if j < self.n_real:
                continue
            row = self.Binv[r] @ self.A[:, : self.n_real]
            movable = (self.status[: self.n_real] != _BASIC) & \
                      ((self.ub[: self.n_real] - self.lb[: self.n_real]) > 1e-12)
            cands = np.nonzero((np.abs(row) > 1e-7) & movable)[0]
            if cands.size:
                e = int(cands[0])
                w = self.Binv @ self.A[:, e]
                self.basis[r] = e
                self.status[e] = _BASIC
                self.status[j] = _AT_LOWER
                row_r = self.Binv[r] / w[r]
                self.Binv -= np.outer(w, row_r)
                self.Binv[r] = row_r
                self._recompute_xb()
            # a dependent row keeps its artificial pinned at zero in the basis

    def run(self, c_phase: np.ndarray, allow_unbounded: bool) -> str:
        """Pivot to optimality of c_phase. Returns "optimal" or "unbounded".

        Pricing is devex (reference weights reset to 1, Forrest-Goldfarb
        updates); Bland's rule takes over after a long stall or when the
        refreshed basis inverse shows decay. Runs the compiled kernel when
        numba is available, the numpy loop below otherwise.
        """
        if _kernel.HAVE_NUMBA and self.m:
            iter_limit = 20000 + 200 * (self.m + self.n)
            try:
                code, iters = _kernel.simplex_loop(
                    self.A, self.b, np.ascontiguousarray(c_phase), self.lb, self.ub,
                    self.basis, self.status, self.val, self.Binv, self.xb,
                    self.n_struct, allow_unbounded, iter_limit,
                )
            except np.linalg.LinAlgError:
                raise MilpNumericalError("singular basis matrix")
            self.iterations += int(iters)
            if code == _kernel.OPTIMAL:
                return "optimal"
            if code == _kernel.UNBOUNDED:
                return "unbounded"
            if code == _kernel.STALL_CYCLE:
                raise _StallCycle("compiled simplex loop stalled")
            if code == _kernel.TINY_PIVOT:
                raise MilpNumericalError("repeated pivots below 1e-12")
            if code == _kernel.ITER_LIMIT:
                raise MilpNumericalError(f"simplex exceeded {iter_limit} iterations")
            raise MilpNumericalError("basis residual blow-up")
        return self._run_numpy(c_phase, allow_unbounded)

    def _run_numpy(self, c_phase: np.ndarray, allow_unbounded: bool) -> str:
        m, n = self.m, self.n
        stall_limit = 2 * (m + self.n_struct)
        stalled = 0
        bland = False
        since_refactor = 0
        iter_limit = 20000 + 200 * (m + n)
        scale = max(1.0, float(np.max(np.abs(c_phase)))) if n else 1.0
        dj_tol = max(1e-9, 1e-10 * scale)
        movable = (self.ub - self.lb) > 1e-12
        gamma = np.ones(n)
        lo_b = self.lb[self.basis].copy()
        hi_b = self.ub[self.basis].copy()
        ratios = np.empty(m)

        while True:
            self.iterations += 1
            since_refactor += 1
            if self.iterations > iter_limit:
                raise MilpNumericalError(f"simplex exceeded {iter_limit} iterations")
            # refactor often while the objective is stalled: long degenerate
            # runs are where the basis inverse decays
            if since_refactor >= _REFACTOR_EVERY or (stalled and since_refactor >= 16):
                err = self._factorize()
                since_refactor = 0
                if err > 1e-7 and not bland:
                    bland = True
                if err > 1e-3:
                    raise MilpNumericalError(f"basis inverse residual {err:.2e}")

            y = c_phase[self.basis] @ self.Binv
            d = c_phase - y @ self.A
            st = self.status
            elig = movable & (
                ((st == _AT_LOWER) & (d < -dj_tol))
                | ((st == _AT_UPPER) & (d > dj_tol))
                | ((st == _FREE) & (np.abs(d) > dj_tol))
            )
            idx = np.nonzero(elig)[0]
            if idx.size == 0:
                return "optimal"
            if bland:
                e = int(idx[0])
            else:
                de = d[idx]
                e = int(idx[np.argmax(de * de / gamma[idx])])
            sigma = 1.0 if (self.status[e] == _AT_LOWER or d[e] < 0) else -1.0

            w = self.Binv @ self.A[:, e]
            move = sigma * w                      # basic values change by -move * t
            ratios.fill(np.inf)
            up = move > _PIV_TOL
            dn = move < -_PIV_TOL
            if up.any():
                ratios[up] = np.maximum((self.xb[up] - lo_b[up]) / move[up], 0.0)
            if dn.any():
                ratios[dn] = np.maximum((hi_b[dn] - self.xb[dn]) / (-move[dn]), 0.0)
            span = float(self.ub[e] - self.lb[e])
            t_block = float(ratios.min()) if m else np.inf
            t_star = min(t_block, span)

            if not np.isfinite(t_star):
                if allow_unbounded:
                    return "unbounded"
                raise MilpNumericalError("unbounded direction during phase 1")

            if span <= t_block:
                self.xb -= move * span
                self.val[e] = self.ub[e] if sigma > 0 else self.lb[e]
                self.status[e] = _AT_UPPER if sigma > 0 else _AT_LOWER
                improvement = abs(d[e]) * span
            else:
                tie = np.nonzero(ratios <= t_block + 1e-9)[0]
                if bland:
                    r = int(tie[np.argmin(self.basis[tie])])
                else:
                    r = int(tie[np.argmax(np.abs(w[tie]))])
                if abs(w[r]) < _TINY_PIV:
                    self.tiny_pivots += 1
                    if self.tiny_pivots > 5:
                        raise MilpNumericalError("repeated pivots below 1e-12")
                    self._factorize()
                    continue
                self.tiny_pivots = 0
                leave = int(self.basis[r])
                hit_lower = move[r] > 0
                self.xb -= move * t_star
                enter_val = self.val[e] + sigma * t_star
                self.val[leave] = float(lo_b[r]) if hit_lower else float(hi_b[r])
                self.status[leave] = _AT_LOWER if hit_lower else _AT_UPPER
                self.basis[r] = e
                self.status[e] = _BASIC
                self.xb[r] = enter_val
                lo_b[r] = self.lb[e]
                hi_b[r] = self.ub[e]
                if not bland:
                    # devex weight propagation along the pivot row
                    alpha = self.Binv[r] @ self.A
                    ref = gamma[e] / (w[r] * w[r])
                    np.maximum(gamma, alpha * alpha * ref, out=gamma)
                    gamma[leave] = max(ref, 1.0)
                    if gamma.max() > 1e8:
                        gamma[:] = 1.0
                row_r = self.Binv[r] / w[r]
                self.Binv -= np.outer(w, row_r)
                self.Binv[r] = row_r
                improvement = abs(d[e]) * t_star

            if improvement <= 1e-12:
                stalled += 1
                if stalled > stall_limit:
                    bland = True
                if stalled > stall_limit + 400:
                    # floating-point ratio ties defeat Bland's rule here;
                    # hand control back for an rhs perturbation retry
                    raise _StallCycle(f"{stalled} stalled pivots")
            else:
                stalled = 0

    def unpin_artificials(self) -> None:
        self.lb[self.n_real:] = 0.0
        self.ub[self.n_real:] = np.inf

    def extract(self) -> np.ndarray:
        self._factorize()
        x = self.val.copy()
        x[self.basis] = self.xb
        return x


def _solve_lp_arrays(prep: _Prepared, lb: np.ndarray, ub: np.ndarray,
                     ) -> Tuple[str, Optional[np.ndarray], int, Optional[np.ndarray]]:
    """Two-phase simplex over prepared arrays with given structural bounds.

    Returns (status, x, iterations, reduced costs in the internal min sense).
    """
    n_s, m = prep.n, prep.m
    if prep.trivially_infeasible:
        return "infeasible", None, 0, None
    if np.any(lb > ub + _FEAS_TOL):
        return "infeasible", None, 0, None

    if m == 0:
        x = np.zeros(n_s)
        for j in range(n_s):
            if prep.c[j] > 0:
                if not np.isfinite(lb[j]):
                    return "unbounded", None, 0, None
                x[j] = lb[j]
            elif prep.c[j] < 0:
                if not np.isfinite(ub[j]):
                    return "unbounded", None, 0, None
                x[j] = ub[j]
            else:
                x[j] = lb[j] if np.isfinite(lb[j]) else (ub[j] if np.isfinite(ub[j]) else 0.0)
        return "optimal", x, 0, prep.c.copy()

    slack_lo, slack_hi = prep.slack_bounds()
    full_lb = np.concatenate([lb, slack_lo])
    full_ub = np.concatenate([ub, slack_hi])
    A0 = np.hstack([prep.A, np.eye(m)])
    c_full = np.concatenate([prep.c, np.zeros(m)])
    crash = [j for j in range(n_s) if not np.isfinite(lb[j]) and not np.isfinite(ub[j])]
    b_tol = _PHASE1_TOL * max(1.0, float(np.abs(prep.b).max()))

    def run_phase1(sx: _Simplex) -> bool:
        """Clear bound violations via artificials; False means infeasible.

        Always leaves every artificial pinned to [0, 0] so phase 2 cannot
        re-admit one as free slack.
        """
        n_new = sx.phase1_augment()
        art_basic = [r for r in range(m) if sx.basis[r] >= sx.n_real]
        residual = float(np.abs(sx.xb[art_basic]).sum()) if art_basic else 0.0
        if n_new or residual > _FEAS_TOL:
            flipped = False
            for r in art_basic:
                if sx.xb[r] < -_FEAS_TOL:
                    j = int(sx.basis[r])
                    home = int(np.nonzero(sx.A[:, j])[0][0])
                    sx.A[home, j] = -sx.A[home, j]
                    flipped = True
            if flipped:
                sx._factorize()
            c1 = np.zeros(sx.n)
            c1[sx.n_real:] = 1.0
            sx.run(c1, allow_unbounded=False)
            positions = [r for r in range(m) if sx.basis[r] >= sx.n_real]
            art_sum = float(np.abs(sx.xb[positions]).sum()) if positions else 0.0
            if art_sum > b_tol:
                return False
            sx.pin_artificials()
            sx.drive_out_artificials()
        else:
            sx.pin_artificials()
        return True

    def run_phases(b_vec: np.ndarray) -> Tuple[str, _Simplex]:
        sx = _Simplex(A0.copy(), b_vec, full_lb.copy(), full_ub.copy(), n_struct=n_s)
        sx.setup(crash_cols=crash)
        if not run_phase1(sx):
            return "infeasible", sx
        c2 = np.zeros(sx.n)
        c2[: n_s + m] = c_full
        return sx.run(c2, allow_unbounded=True), sx

    # The matching-plus-envy polytopes these models live on are massively
    # degenerate, enough that Bland's rule alone can livelock in floating
    # point. A solve that stalls out is retried on an rhs nudged outward by a
    # tiny deterministic per-row pattern (which breaks ratio ties
    # generically); the exact rhs is then restored at the final basis and
    # repaired, so answers carry no trace of the perturbation.
    relax = np.array([1.0 if r == LE else (-1.0 if r == GE else 0.0) for r in prep.rel])
    jitter = np.array([((r * 2654435761) % 1021) / 1021.0 for r in range(m)])
    pattern = relax * (1.0 + jitter) * np.maximum(1.0, np.abs(prep.b))

    status, sx = None, None
    used_eps = 0.0
    last_exc: Optional[Exception] = None
    for eps in (0.0, 1e-9, 1e-6):
        try:
            status, sx = run_phases(prep.b + eps * pattern)
            used_eps = eps
            break
        except (_StallCycle, MilpNumericalError) as exc:
            last_exc = exc
    if status is None:
        raise MilpNumericalError(f"persistent degenerate cycling: {last_exc}")

    if used_eps != 0.0 and status != "infeasible":
        # restore the exact rhs at the final basis and repair; an unbounded
        # verdict is also re-checked here against the exact instance
        sx.b = prep.b.copy()
        sx.unpin_artificials()
        sx._factorize()
        try:
            if not run_phase1(sx):
                return "infeasible", None, sx.iterations, None
            c2 = np.zeros(sx.n)
            c2[: n_s + m] = c_full
            status = sx.run(c2, allow_unbounded=True)
        except _StallCycle as exc:
            raise MilpNumericalError(f"cycling after perturbation removal: {exc}")

    if status == "infeasible":
        return "infeasible", None, sx.iterations, None
    if status == "unbounded":
        return "unbounded", None, sx.iterations, None
    x = sx.extract()
    c_ext = np.zeros(sx.n)
    c_ext[: n_s + m] = c_full
    y = c_ext[sx.basis] @ sx.Binv
    reduced = c_full - y @ sx.A[:, : n_s + m]
    return "optimal", x[:n_s], sx.iterations, reduced[:n_s]


def lp_solve(model: MilpModel) -> MilpSolution:
    """Solve the LP relaxation (integrality dropped, bounds kept).

    Deterministic for identical inputs: largest-reduced-cost pricing with a
    fixed tie order, Bland's rule after 2 (rows + cols) stalled pivots.
    """
    prep = _Prepared(model)
    if prep.n == 0:
        if prep.trivially_infeasible:
            return MilpSolution("infeasible", {}, None, None)
        return MilpSolution("optimal", {}, prep.c0, prep.c0)
    status, x, _, _ = _solve_lp_arrays(prep, prep.lb.copy(), prep.ub.copy())
    if status != "optimal":
        return MilpSolution(status, {}, None, None)
    obj = prep.sign * float(prep.c @ x) + prep.c0
    values = {name: float(x[j]) for j, name in enumerate(prep.names)}
    return MilpSolution("optimal", values, obj, obj)


def solve(model: MilpModel, gap: float = 0.0, node_limit: int = 200000,
          time_limit: Optional[float] = None, cutoff: Optional[float] = None) -> MilpSolution:
    """Branch and bound over the binary variables.

    Best-bound node selection; branching picks the binary whose relaxation
    value sits closest to 0.5, ties to the lowest index. Returns status
    "optimal" once |incumbent - bound| <= gap, "iteration-limit" if the node
    budget runs out first, "gap-limit" if the time limit does.

    ``cutoff`` is an objective value the caller can already achieve (in the
    model's own sense); subtrees that cannot beat it are pruned, and status
    "cutoff" is returned when nothing better exists.
    """
    if gap < 0:
        raise MilpError("gap must be nonnegative")
    prep = _Prepared(model)
    if prep.n == 0:
        if prep.trivially_infeasible:
            return MilpSolution("infeasible", {}, None, None)
        return MilpSolution("optimal", {}, prep.c0, prep.c0)

    t0 = time.perf_counter()
    bin_idx = np.nonzero(prep.binary)[0]
    inc_x: Optional[np.ndarray] = None
    # internal min sense; a caller-provided cutoff acts as a virtual incumbent
    inc_val = np.inf if cutoff is None else prep.sign * (float(cutoff) - prep.c0)
    bound_floor = np.inf                  # bounds of fathomed subtrees
    explored = 0
    trace: List[float] = []
    eps = max(gap, 1e-9)

    seq = 0
    heap: List[Tuple[float, int, dict]] = [(-np.inf, seq, {})]
    status_out = "optimal"
    global_fixes: dict = {}               # reduced-cost fixings, always valid
    root_info: Optional[Tuple[float, np.ndarray, np.ndarray]] = None
    probed: set = set()

    def probe(x_frac: np.ndarray) -> None:
        """Try the rounding of a nearly integral relaxation as an incumbent."""
        nonlocal inc_val, inc_x
        pattern = tuple(int(round(x_frac[j])) for j in bin_idx)
        if pattern in probed:
            return
        probed.add(pattern)
        rlb = prep.lb.copy()
        rub = prep.ub.copy()
        for j, v in zip(bin_idx, pattern):
            rlb[j] = rub[j] = float(v)
        rst, rx, _, _ = _solve_lp_arrays(prep, rlb, rub)
        if rst == "optimal":
            rval = float(prep.c @ rx)
            if rval < inc_val - 1e-12:
                inc_val = rval
                inc_x = rx.copy()

    def refix() -> None:
        """Fix binaries whose root reduced cost proves a bound flip cannot beat
        the incumbent; safe for every later node since fixing only discards
        solutions worse than the incumbent minus the gap."""
        if root_info is None or not np.isfinite(inc_val):
            return
        root_lb_val, root_x, root_red = root_info
        slack = inc_val - eps - root_lb_val
        for j in bin_idx:
            if j in global_fixes:
                continue
            if root_x[j] < _INT_TOL and root_red[j] >= slack:
                global_fixes[j] = 0
            elif root_x[j] > 1 - _INT_TOL and -root_red[j] >= slack:
                global_fixes[j] = 1

    while heap:
        node_bound, _, fixes = heapq.heappop(heap)
        trace.append(prep.sign * node_bound + prep.c0)
        if np.isfinite(inc_val) and inc_val - node_bound <= eps:
            bound_floor = min(bound_floor, node_bound)
            break
        if explored >= node_limit:
            status_out = "iteration-limit"
            bound_floor = min(bound_floor, node_bound)
            break
        if time_limit is not None and time.perf_counter() - t0 > time_limit:
            status_out = "gap-limit"
            bound_floor = min(bound_floor, node_bound)
            break
        if any(fixes.get(j, v) != v for j, v in global_fixes.items()):
            bound_floor = min(bound_floor, node_bound)
            continue

        lb = prep.lb.copy()
        ub = prep.ub.copy()
        for j, v in fixes.items():
            lb[j] = ub[j] = float(v)
        for j, v in global_fixes.items():
            lb[j] = ub[j] = float(v)
        lp_status, x, _, reduced = _solve_lp_arrays(prep, lb, ub)
        explored += 1
        if lp_status == "infeasible":
            continue
        if lp_status == "unbounded":
            return MilpSolution("unbounded", {}, None, None, explored, trace)
        node_lb = float(prep.c @ x)
        if explored == 1:
            root_info = (node_lb, x.copy(), reduced.copy())
            refix()
        if node_lb >= inc_val - eps:
            bound_floor = min(bound_floor, node_lb)
            continue

        if bin_idx.size:
            frac = np.abs(x[bin_idx] - np.round(x[bin_idx]))
            fractional = bin_idx[frac > _INT_TOL]
        else:
            fractional = bin_idx
        if fractional.size == 0:
            if node_lb < inc_val - 1e-12:
                inc_val = node_lb
                inc_x = x.copy()
                refix()
            bound_floor = min(bound_floor, node_lb)
            continue
        if explored == 1 or fractional.size <= 6:
            probe(x)
            refix()
        dist = np.abs(x[fractional] - 0.5)
        branch_var = int(fractional[np.argmin(dist)])
        for fix_to in (0, 1):
            child = dict(fixes)
            child[branch_var] = fix_to
            seq += 1
            heapq.heappush(heap, (node_lb, seq, child))

    if inc_x is None:
        if status_out == "optimal" and cutoff is not None:
            open_bounds = [h[0] for h in heap]
            fb = min([bound_floor] + open_bounds)
            bnd = prep.sign * fb + prep.c0 if np.isfinite(fb) else None
            return MilpSolution("cutoff", {}, None, bnd, explored, trace)
        if status_out == "optimal":
            return MilpSolution("infeasible", {}, None, None, explored, trace)
        return MilpSolution(status_out, {}, None, None, explored, trace)

    open_bounds = [h[0] for h in heap]
    final_bound = min([bound_floor, inc_val] + open_bounds)
    values = {name: float(inc_x[j]) for j, name in enumerate(prep.names)}
    for j in bin_idx:
        values[prep.names[j]] = float(round(inc_x[j]))
    obj = prep.sign * inc_val + prep.c0
    bound = prep.sign * final_bound + prep.c0
    return MilpSolution(status_out, values, float(obj), float(bound), explored, trace)
