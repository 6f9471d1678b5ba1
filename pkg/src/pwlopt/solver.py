"""Branch-and-bound MILP solver over a dense bounded-variable primal simplex.

The LP core is a two-phase primal simplex on the equality form [A I]x = b
with general variable bounds, an explicitly maintained basis inverse with
periodic refactorization, Dantzig pricing, and Bland's rule engaged after a
run of degenerate pivots.  Branch and bound uses best-bound node selection,
most-fractional binary branching, and weighted-midpoint SOS2 branching.
Everything is single-threaded and deterministic.
"""

from __future__ import annotations

import heapq
import time
from dataclasses import dataclass

import numpy as np

from .milp import BINARY, MilpModel, MilpSolution

__all__ = ["SolverOptions", "LpSolution", "solve_lp", "solve_milp",
           "LpNumericalError"]


class LpNumericalError(RuntimeError):
    """Simplex hit a numerically singular basis."""


@dataclass(frozen=True)
class SolverOptions:
    feasibility_tol: float = 1e-7
    integrality_tol: float = 1e-6
    gap_limit: float = 1e-6
    node_limit: int = 1_000_000
    time_limit: float = 300.0

    def __post_init__(self):
        for name in ("feasibility_tol", "integrality_tol", "gap_limit"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class LpSolution:
    status: str  # optimal | infeasible | unbounded
    objective: float | None
    assignment: dict[str, float] | None
    duals: np.ndarray | None
    x: np.ndarray | None = None


# -- compiled arrays -------------------------------------------------------

class _ArrayForm:
    """Dense arrays for one model: min c'x + c0, A x (rel) b, lb <= x <= ub."""

    def __init__(self, model: MilpModel):
        if not model.finalized:
            raise ValueError("finalize the model before solving")
        n = model.n_variables
        m = model.n_constraints
        self.n = n
        self.m = m
        self.names = model.variable_names()
        self.lb = np.array([v.lb for v in model.variables])
        self.ub = np.array([v.ub for v in model.variables])
        self.A = np.zeros((m, n))
        self.rel = np.zeros(m, dtype=int)  # -1: <=, 0: =, +1: >=
        self.b = np.zeros(m)
        rel_code = {"<=": -1, "=": 0, ">=": 1}
        for i, con in enumerate(model.constraints):
            for j, val in con.coeffs:
                self.A[i, j] += val
            self.rel[i] = rel_code[con.relation]
            self.b[i] = con.rhs
        self.sense = 1.0 if model.objective_sense == "min" else -1.0
        self.c = np.zeros(n)
        for j, val in model.objective_coeffs:
            self.c[j] += self.sense * val
        self.offset = model.objective_offset
        self.binary_idx = np.array(model.binary_indices(), dtype=int)
        self.sos2_groups = [np.array(g, dtype=int) for g in model.sos2_groups]
        # split coefficient signs for interval-arithmetic activity bounds
        self.A_pos = np.maximum(self.A, 0.0)
        self.A_neg = np.minimum(self.A, 0.0)
        self.prescreen_ok = bool(np.all(np.isfinite(self.lb)) and np.all(np.isfinite(self.ub)))

    def obviously_infeasible(self, lb: np.ndarray, ub: np.ndarray, tol: float) -> bool:
        """One interval-arithmetic pass over the rows; never a false positive."""
        if not self.prescreen_ok or self.m == 0:
            return False
        act_min = self.A_pos @ lb + self.A_neg @ ub
        act_max = self.A_pos @ ub + self.A_neg @ lb
        bad_low = (self.rel <= 0) & (act_min > self.b + tol)   # <= or = rows
        bad_high = (self.rel >= 0) & (act_max < self.b - tol)  # >= or = rows
        return bool(np.any(bad_low) or np.any(bad_high))

    def outward_objective(self, internal_obj: float) -> float:
        return self.sense * internal_obj + self.offset


# -- bounded-variable primal simplex ----------------------------------------

_AT_LB, _AT_UB, _FREE, _BASIC = 0, 1, 2, 3
_PIVOT_TOL = 1e-9
_DEGEN_TOL = 1e-9
_REFACTOR_EVERY = 150
_BLAND_TRIGGER = 1000


class _Simplex:
    """Equality-form simplex state shared by the two phases."""

    def __init__(self, A: np.ndarray, b: np.ndarray, rel: np.ndarray,
                 lb: np.ndarray, ub: np.ndarray, feas_tol: float):
        m, n = A.shape
        self.m, self.n_struct = m, n
        slack_lb = np.where(rel == -1, 0.0, np.where(rel == 1, -np.inf, 0.0))
        slack_ub = np.where(rel == -1, np.inf, 0.0)
        # columns: structural | slack | artificial
        self.A = np.asfortranarray(np.hstack([A, np.eye(m), np.zeros((m, m))]))
        self.lb = np.concatenate([lb, slack_lb, np.zeros(m)])
        self.ub = np.concatenate([ub, slack_ub, np.full(m, np.inf)])
        self.b = b.astype(float)
        self.ncols = n + 2 * m
        self.feas_tol = feas_tol

        x = np.where(np.isfinite(self.lb), self.lb,
                     np.where(np.isfinite(self.ub), self.ub, 0.0))
        self.vstat = np.where(np.isfinite(self.lb), _AT_LB,
                              np.where(np.isfinite(self.ub), _AT_UB, _FREE))
        # start from the slack basis wherever the initial residual fits the
        # slack's bounds; only violated rows get an active artificial
        x[n:n + m] = 0.0
        residual = self.b - self.A[:, :n] @ x[:n]
        slack_ok = (residual >= slack_lb - 1e-12) & (residual <= slack_ub + 1e-12)
        art = np.arange(n + m, n + 2 * m)
        sign = np.where(residual >= 0.0, 1.0, -1.0)
        coef = np.where(slack_ok, 1.0, sign)
        self.A[np.arange(m), art] = sign
        self.basis = np.where(slack_ok, np.arange(n, n + m), art)
        x[self.basis] = np.where(slack_ok, residual, np.abs(residual))
        self.vstat[self.basis] = _BASIC
        self.ub[art[slack_ok]] = 0.0  # unused artificials never activate
        self.x = x
        self.binv = np.diag(1.0 / coef)
        self.art = art
        self.active_art = art[~slack_ok]
        self.pivots = 0

    def _refactor(self):
        try:
            self.binv = np.linalg.inv(self.A[:, self.basis])
        except np.linalg.LinAlgError as exc:
            raise LpNumericalError(f"singular basis at pivot {self.pivots}") from exc
        nonbasic_mask = self.vstat != _BASIC
        xn = np.where(self.vstat == _AT_UB, self.ub, np.where(self.vstat == _AT_LB, self.lb, 0.0))
        xn = np.where(nonbasic_mask, xn, 0.0)
        rhs = self.b - self.A @ xn
        self.x[nonbasic_mask] = xn[nonbasic_mask]
        self.x[self.basis] = self.binv @ rhs

    def run(self, c: np.ndarray, max_iter: int) -> str:
        """Minimize c'x from the current basis; returns 'optimal' or 'unbounded'."""
        # pricing only ever looks at columns whose bound interval has width;
        # reduced costs are weighted by static column norms (cheap
        # steepest-edge stand-in that cuts iteration counts on degenerate
        # piecewise models)
        cand = np.flatnonzero(self.lb < self.ub)
        A_cand = np.asfortranarray(self.A[:, cand])
        c_cand = c[cand]
        weight = 1.0 / np.sqrt(1.0 + np.sum(A_cand * A_cand, axis=0))
        with np.errstate(divide="ignore", invalid="ignore"):
            return self._iterate(c, cand, A_cand, c_cand, weight, max_iter)

    def _iterate(self, c, cand, A_cand, c_cand, weight, max_iter) -> str:
        degen_run = 0
        bland = False
        for _ in range(max_iter):
            if self.pivots and self.pivots % _REFACTOR_EVERY == 0:
                self._refactor()
            y = c[self.basis] @ self.binv
            d = c_cand - y @ A_cand
            stat = self.vstat[cand]
            can_up = ((stat == _AT_LB) | (stat == _FREE)) & (d < -self.feas_tol)
            can_dn = ((stat == _AT_UB) | (stat == _FREE)) & (d > self.feas_tol)
            eligible = can_up | can_dn
            if not np.any(eligible):
                self._refactor()
                return "optimal"
            if bland:
                pos = int(np.flatnonzero(eligible)[0])
            else:
                score = np.abs(d) * weight
                score[~eligible] = -1.0
                pos = int(np.argmax(score))
            t = int(cand[pos])
            sigma = 1.0 if can_up[pos] else -1.0

            w = self.binv @ self.A[:, t]
            g = -sigma * w  # per-unit change of basic values
            xb = self.x[self.basis]
            lb_b = self.lb[self.basis]
            ub_b = self.ub[self.basis]
            step_up = np.where(g > _PIVOT_TOL, (ub_b - xb) / g, np.inf)
            step_dn = np.where(g < -_PIVOT_TOL, (lb_b - xb) / g, np.inf)
            steps = np.minimum(step_up, step_dn)
            steps = np.where(np.isnan(steps), np.inf, steps)
            step_enter = self.ub[t] - self.lb[t] if np.isfinite(self.ub[t] - self.lb[t]) else np.inf

            min_row_step = steps.min() if steps.size else np.inf
            delta = min(step_enter, min_row_step)
            if not np.isfinite(delta):
                return "unbounded"
            delta = max(delta, 0.0)

            if step_enter <= min_row_step and np.isfinite(step_enter):
                # bound flip: entering variable crosses to its other bound
                self.x[t] = self.ub[t] if sigma > 0 else self.lb[t]
                self.x[self.basis] = xb + delta * g
                self.vstat[t] = _AT_UB if sigma > 0 else _AT_LB
            else:
                ties = np.flatnonzero(steps <= delta + _DEGEN_TOL)
                if bland:
                    r = int(ties[np.argmin(self.basis[ties])])
                else:
                    r = int(ties[np.argmax(np.abs(g[ties]))])
                leaving = self.basis[r]
                self.x[self.basis] = xb + delta * g
                self.x[t] = self.x[t] + sigma * delta
                # snap the leaving variable onto the bound it hit
                self.x[leaving] = ub_b[r] if g[r] > 0 else lb_b[r]
                self.vstat[leaving] = _AT_UB if g[r] > 0 else _AT_LB
                self.vstat[t] = _BASIC
                self.basis[r] = t
                piv = w[r]
                if abs(piv) < _PIVOT_TOL:
                    raise LpNumericalError(f"vanishing pivot at pivot {self.pivots}")
                row = self.binv[r, :] / piv
                self.binv -= np.outer(w, row)
                self.binv[r, :] = row
            self.pivots += 1

            if delta <= _DEGEN_TOL:
                degen_run += 1
                if degen_run > _BLAND_TRIGGER:
                    bland = True
            else:
                degen_run = 0
                bland = False
        raise LpNumericalError(f"iteration limit reached after {self.pivots} pivots")


def _solve_lp_arrays(A, b, rel, lb, ub, c, feas_tol: float):
    """Two-phase simplex; returns (status, x, objective, duals)."""
    m, n = A.shape
    if np.any(lb > ub):
        return "infeasible", None, None, None
    sx = _Simplex(A, b, rel, lb, ub, feas_tol)
    max_iter = 2000 + 60 * (m + n)

    if sx.active_art.size:
        c1 = np.zeros(sx.ncols)
        c1[sx.active_art] = 1.0
        sx.run(c1, max_iter)  # phase-1 objective is bounded below by zero
        infeas = float(np.sum(sx.x[sx.active_art]))
        if infeas > feas_tol * max(1.0, np.abs(b).max() if m else 1.0):
            return "infeasible", None, None, None
        # artificials are pinned at zero for phase 2
        sx.lb[sx.art] = 0.0
        sx.ub[sx.art] = 0.0
        sx.x[sx.art] = np.where(np.abs(sx.x[sx.art]) <= feas_tol, 0.0, sx.x[sx.art])

    c2 = np.zeros(sx.ncols)
    c2[:n] = c
    status = sx.run(c2, max_iter)
    if status == "unbounded":
        return "unbounded", None, None, None
    x = sx.x[:n].copy()
    duals = c2[sx.basis] @ sx.binv
    return "optimal", x, float(c @ x), duals


def solve_lp(model: MilpModel, options: SolverOptions | None = None) -> LpSolution:
    """Solve the LP relaxation of the model (integrality ignored)."""
    opts = options or SolverOptions()
    form = _ArrayForm(model)
    status, x, obj, duals = _solve_lp_arrays(
        form.A, form.b, form.rel, form.lb, form.ub, form.c, opts.feasibility_tol)
    if status != "optimal":
        return LpSolution(status, None, None, None)
    assignment = {name: float(v) for name, v in zip(form.names, x)}
    return LpSolution("optimal", form.outward_objective(obj), assignment, duals, x)


# -- branch and bound --------------------------------------------------------

def _fractional_binary(x, binary_idx, tol):
    """Index of the most fractional binary, or -1 when all are integral."""
    if binary_idx.size == 0:
        return -1
    vals = x[binary_idx]
    frac = np.abs(vals - np.round(vals))
    k = int(np.argmax(frac))
    return int(binary_idx[k]) if frac[k] > tol else -1


def _violated_sos2(x, groups, tol):
    """(group index, split position) of the most violated group, else (-1, -1).

    A group is satisfied when at most two members are nonzero and any two
    nonzeros are adjacent.  The split lands on the member index nearest the
    nonzero-weighted mean position, ties broken low, clamped so both
    children exclude part of the current support.
    """
    best_group, best_split, best_mass = -1, -1, -np.inf
    for gi, group in enumerate(groups):
        vals = x[group]
        nz = np.flatnonzero(vals > tol)
        if nz.size <= 1:
            continue
        if nz.size == 2 and nz[1] - nz[0] == 1:
            continue
        total = vals[nz].sum()
        pair_best = max(vals[k] + vals[k + 1] for k in range(len(group) - 1))
        mass = total - pair_best
        if mass > best_mass:
            mean = float(np.dot(nz, vals[nz]) / total)
            split = int(np.ceil(mean - 0.5))  # nearest index, half rounds down
            split = min(max(split, nz[0] + 1), nz[-1] - 1)
            best_group, best_split, best_mass = gi, split, mass
    return best_group, best_split


def solve_milp(model: MilpModel, options: SolverOptions | None = None,
               log=None) -> MilpSolution:
    """Best-bound branch and bound to proven optimality within the gap limit."""
    opts = options or SolverOptions()
    form = _ArrayForm(model)
    t0 = time.perf_counter()

    def gap_of(incumbent_obj, bound):
        return (incumbent_obj - bound) / max(1.0, abs(incumbent_obj))

    # best-bound selection; ties pop newest-first so flat plateaus of
    # alternate optima are dived through instead of swept breadth-first
    heap = []
    counter = 0
    heapq.heappush(heap, (-np.inf, -counter, form.lb.copy(), form.ub.copy(), 0))
    incumbent_x = None
    incumbent_obj = np.inf
    node_count = 0
    final_bound = -np.inf
    status = None

    while heap:
        bound, _, lb, ub, depth = heapq.heappop(heap)
        final_bound = bound
        if incumbent_x is not None and gap_of(incumbent_obj, bound) <= opts.gap_limit:
            status = "optimal"
            break
        if node_count >= opts.node_limit or time.perf_counter() - t0 > opts.time_limit:
            status = "gap_limit"
            break
        if form.obviously_infeasible(lb, ub, opts.feasibility_tol):
            node_count += 1
            continue
        lp_status, x, obj, _ = _solve_lp_arrays(
            form.A, form.b, form.rel, lb, ub, form.c, opts.feasibility_tol)
        node_count += 1
        if log is not None:
            inc = form.outward_objective(incumbent_obj) if incumbent_x is not None else None
            log.write(f"node {node_count} depth {depth} bound "
                      f"{form.outward_objective(obj) if obj is not None else 'none'} "
                      f"incumbent {inc}\n")
        if lp_status == "infeasible":
            continue
        if lp_status == "unbounded":
            return MilpSolution("unbounded", None, None, np.inf, node_count,
                                time.perf_counter() - t0)
        if incumbent_x is not None and gap_of(incumbent_obj, obj) <= opts.gap_limit:
            continue

        t = _fractional_binary(x, form.binary_idx, opts.integrality_tol)
        if t >= 0:
            for fix_lo, fix_hi in ((0.0, 0.0), (1.0, 1.0)):
                clb, cub = lb.copy(), ub.copy()
                clb[t] = max(clb[t], fix_lo)
                cub[t] = min(cub[t], fix_hi)
                counter += 1
                heapq.heappush(heap, (obj, -counter, clb, cub, depth + 1))
            continue

        gi, split = _violated_sos2(x, form.sos2_groups, opts.integrality_tol)
        if gi >= 0:
            group = form.sos2_groups[gi]
            left = group[split + 1:]   # zero-fixed in the left child
            right = group[:split]      # zero-fixed in the right child
            for fixed in (left, right):
                clb, cub = lb.copy(), ub.copy()
                cub[fixed] = np.minimum(cub[fixed], 0.0)
                counter += 1
                heapq.heappush(heap, (obj, -counter, clb, cub, depth + 1))
            continue

        if obj < incumbent_obj - 1e-12:
            incumbent_obj = obj
            incumbent_x = x.copy()

    wall = time.perf_counter() - t0
    if status is None:
        # tree exhausted: the incumbent is optimal, or the model is infeasible
        if incumbent_x is None:
            return MilpSolution("infeasible", None, None, np.inf, node_count, wall)
        status = "optimal"
        final_bound = incumbent_obj
    if incumbent_x is None:
        return MilpSolution(status, None, None, np.inf, node_count, wall)
    gap = max(0.0, gap_of(incumbent_obj, final_bound))
    assignment = {name: float(v) for name, v in zip(form.names, incumbent_x)}
    return MilpSolution(status, form.outward_objective(incumbent_obj), assignment,
                        gap, node_count, wall)
