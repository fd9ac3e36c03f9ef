"""Solver-agnostic MILP solve layer.

Two backends ship in-tree:

* ``highs`` — the HiGHS engine through scipy.optimize.milp (default);
* ``bnb``   — a plain best-first branch-and-bound over LP relaxations,
  intended for small reference instances and environments without a MILP
  engine.

Warm starts are honored at this layer: a feasible warm solution is handed
to backends that can exploit it (branch-and-bound seeds its incumbent) and
is always kept as the fallback incumbent, so a warm-started solve never
returns anything worse than the warm point.

The backend is chosen by ``SolveSettings.backend`` or the
``FLEETCHARGE_BACKEND`` environment variable.
"""

from __future__ import annotations

import heapq
import os
import time
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional

import numpy as np
import scipy.sparse as sp
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from .model import EQ, GE, LE, PlanningModel

OPTIMAL = "optimal"
GAP_LIMIT = "gap_limit"
TIME_LIMIT = "time_limit_incumbent"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

ROW_TOL = 1e-6
INT_TOL = 1e-6


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolveSettings:
    rel_gap: float = 0.01
    time_limit: float = 600.0
    threads: int = 1  # accepted for interface parity; both backends run single-threaded
    warm_start: Optional["Solution"] = None
    seed: int = 0
    backend: Optional[str] = None
    node_limit: int = 500_000

    def __post_init__(self) -> None:
        if self.rel_gap < 0:
            raise SolverError("rel_gap must be >= 0")
        if self.time_limit <= 0:
            raise SolverError("time_limit must be > 0")


@dataclass
class Solution:
    status: str
    objective: Optional[float]
    gap: float
    wall_time: float
    backend: str
    x: dict[tuple[int, int], float] = field(default_factory=dict)
    y: dict[tuple[int, int, int, int], int] = field(default_factory=dict)
    a: dict[tuple[int, int, int], int] = field(default_factory=dict)
    w: dict[tuple[int, int, int], float] = field(default_factory=dict)
    b: dict[tuple[int, int, int], float] = field(default_factory=dict)
    p: dict[tuple[int, int, int], float] = field(default_factory=dict)
    v: dict[tuple[int, int, int], float] = field(default_factory=dict)
    delta30: dict[tuple[int, int, int], int] = field(default_factory=dict)
    installation_cost: float = 0.0
    penalty_cost: float = 0.0

    @property
    def has_values(self) -> bool:
        return self.status in (OPTIMAL, GAP_LIMIT, TIME_LIMIT) and self.objective is not None

    def charging_type(self, i: int, d: int, t: int) -> Optional[int]:
        for (ii, dd, tt, j), val in self.y.items():
            if (ii, dd, tt) == (i, d, t) and val == 1:
                return j
        return None

    def schedule(self) -> dict[tuple[int, int, int], tuple[int, float]]:
        """(truck, day, slot) -> (charger type, charged kWh) on charging slots."""
        out: dict[tuple[int, int, int], tuple[int, float]] = {}
        for (i, d, t, j), val in self.y.items():
            if val == 1:
                out[(i, d, t)] = (j, self.p.get((i, d, t), 0.0))
        return out

    def abandon_slots(self) -> set[tuple[int, int, int]]:
        return {key for key, val in self.a.items() if val == 1}


def extract_installation(solution: Solution) -> dict[int, dict[int, int]]:
    """zone -> charger type -> integral count. Rejects fractional counts
    beyond tolerance (a sign of a non-MILP backend)."""
    if solution.status == INFEASIBLE:
        raise SolverError("cannot extract installation from an infeasible solve")
    out: dict[int, dict[int, int]] = {}
    for (z, j), val in solution.x.items():
        if abs(val - round(val)) > INT_TOL:
            raise SolverError(f"x[{z},{j}]={val} is not integral")
        out.setdefault(z, {})[j] = int(round(val))
    return out


def installation_totals(installation: Mapping[int, Mapping[int, int]]) -> dict[int, int]:
    totals: dict[int, int] = {}
    for counts in installation.values():
        for j, n in counts.items():
            totals[j] = totals.get(j, 0) + n
    return totals


# ---------------------------------------------------------------------------
# solve() entry point
# ---------------------------------------------------------------------------

def solve(model: PlanningModel, settings: SolveSettings | None = None) -> Solution:
    settings = settings or SolveSettings()
    backend = settings.backend or os.environ.get("FLEETCHARGE_BACKEND", "highs")
    t0 = time.perf_counter()

    warm_vec = None
    warm_obj = None
    if settings.warm_start is not None:
        warm_vec = _vector_from_solution(model, settings.warm_start)
        if warm_vec is not None and model.lm.check_point(warm_vec, tol=ROW_TOL):
            warm_vec = None  # infeasible for this model; ignore
        if warm_vec is not None:
            warm_obj = model.lm.objective_value(warm_vec)

    if backend == "highs":
        status, xvec, objective, gap = _solve_highs(model, settings)
    elif backend == "bnb":
        status, xvec, objective, gap = _solve_bnb(model, settings, warm_vec, warm_obj)
    else:
        raise SolverError(f"unknown backend {backend!r}")

    # warm incumbent guard: never return worse than a feasible warm start
    if warm_vec is not None and warm_obj is not None:
        if status == INFEASIBLE:
            # the warm point satisfies every row, so the model has a solution
            raise SolverError("backend reported infeasible but the warm start is feasible")
        if xvec is None or (objective is not None and objective > warm_obj + 1e-9):
            xvec, objective = warm_vec, warm_obj
            gap = np.inf if status == TIME_LIMIT else gap

    wall = time.perf_counter() - t0
    if xvec is None:
        return Solution(status=status, objective=None, gap=np.inf, wall_time=wall,
                        backend=backend)
    return _make_solution(model, xvec, status, objective, gap, wall, backend)


def _make_solution(model: PlanningModel, xvec: np.ndarray, status: str,
                   objective: float, gap: float, wall: float,
                   backend: str) -> Solution:
    cat = model.catalog
    sol = Solution(status=status, objective=float(objective), gap=float(gap),
                   wall_time=wall, backend=backend)
    sol.x = {key: float(np.round(xvec[idx], 9)) for key, idx in cat.x.items()}
    sol.y = {key: int(round(xvec[idx])) for key, idx in cat.y.items()}
    sol.a = {key: int(round(xvec[idx])) for key, idx in cat.a.items()}
    sol.delta30 = {key: int(round(xvec[idx])) for key, idx in cat.delta30.items()}
    sol.w = {key: float(xvec[idx]) for key, idx in cat.w.items()}
    sol.b = {key: float(xvec[idx]) for key, idx in cat.b.items()}
    sol.p = {key: float(xvec[idx]) for key, idx in cat.p.items()}
    sol.v = {key: float(xvec[idx]) for key, idx in cat.v.items()}
    sol.installation_cost = model.installation_cost(sol.x)
    sol.penalty_cost = float(objective) - sol.installation_cost
    return sol


def _vector_from_solution(model: PlanningModel, sol: Solution) -> Optional[np.ndarray]:
    """Map a solution's keyed values onto this model's columns; None when
    the solution does not cover the model's variables."""
    lm = model.lm
    vec = np.array(lm.lb, dtype=float)
    vec[~np.isfinite(vec)] = 0.0
    families = (
        (model.catalog.x, sol.x), (model.catalog.y, sol.y), (model.catalog.a, sol.a),
        (model.catalog.w, sol.w), (model.catalog.b, sol.b), (model.catalog.p, sol.p),
        (model.catalog.v, sol.v), (model.catalog.delta30, sol.delta30),
    )
    for cat_map, values in families:
        for key, idx in cat_map.items():
            if key not in values:
                return None
            vec[idx] = values[key]
    return vec


# ---------------------------------------------------------------------------
# HiGHS via scipy
# ---------------------------------------------------------------------------

def _solve_highs(model: PlanningModel, settings: SolveSettings):
    lm = model.lm
    c = lm.objective_array()
    A, rlb, rub = lm.constraint_arrays()
    lb, ub = lm.bounds_arrays()
    res = milp(
        c=c,
        constraints=LinearConstraint(A, rlb, rub),
        integrality=lm.integrality_array(),
        bounds=Bounds(lb, ub),
        options={
            "mip_rel_gap": settings.rel_gap,
            "time_limit": settings.time_limit,
            "node_limit": settings.node_limit,
            "disp": False,
        },
    )
    if res.status == 2:
        return INFEASIBLE, None, None, np.inf
    if res.status == 3:
        return UNBOUNDED, None, None, np.inf
    if res.status == 4 and res.x is None:
        raise SolverError(f"HiGHS failed: {res.message}")
    gap = res.mip_gap if getattr(res, "mip_gap", None) is not None else 0.0
    if res.status == 1:  # hit a limit
        if res.x is None:
            return TIME_LIMIT, None, None, np.inf
        return TIME_LIMIT, np.asarray(res.x), float(res.fun), float(gap)
    status = OPTIMAL if gap <= 1e-9 else GAP_LIMIT
    return status, np.asarray(res.x), float(res.fun), float(gap)


# ---------------------------------------------------------------------------
# Branch and bound over LP relaxations
# ---------------------------------------------------------------------------

def _split_rows(lm):
    """(A_ub, b_ub, A_eq, b_eq) in the orientation linprog expects."""
    ub_rows, ub_rhs, eq_rows, eq_rhs = [], [], [], []
    n = lm.num_vars
    for row in lm.rows:
        data = np.zeros(n)
        for idx, coef in row.coefs:
            data[idx] += coef
        if row.sense == LE:
            ub_rows.append(data)
            ub_rhs.append(row.rhs)
        elif row.sense == GE:
            ub_rows.append(-data)
            ub_rhs.append(-row.rhs)
        elif row.sense == EQ:
            eq_rows.append(data)
            eq_rhs.append(row.rhs)
    A_ub = sp.csr_matrix(np.array(ub_rows)) if ub_rows else None
    A_eq = sp.csr_matrix(np.array(eq_rows)) if eq_rows else None
    b_ub = np.array(ub_rhs) if ub_rows else None
    b_eq = np.array(eq_rhs) if eq_rows else None
    return A_ub, b_ub, A_eq, b_eq


def _solve_bnb(model: PlanningModel, settings: SolveSettings,
               warm_vec: Optional[np.ndarray], warm_obj: Optional[float]):
    lm = model.lm
    c = lm.objective_array()
    A_ub, b_ub, A_eq, b_eq = _split_rows(lm)
    lb0, ub0 = lm.bounds_arrays()
    int_idx = np.flatnonzero(lm.integrality_array())

    def lp(lo, hi):
        res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                      bounds=np.column_stack([lo, hi]), method="highs")
        if res.status == 2:
            return None, None
        if res.status != 0:
            raise SolverError(f"LP relaxation failed: {res.message}")
        return res.x, float(res.fun)

    start = time.monotonic()
    incumbent = warm_vec.copy() if warm_vec is not None else None
    inc_obj = warm_obj if warm_obj is not None else np.inf

    x0, bound0 = lp(lb0, ub0)
    if x0 is None:
        return INFEASIBLE, None, None, np.inf
    heap = [(bound0, 0, x0, lb0, ub0)]
    counter = 1
    nodes = 0
    best_bound = bound0
    reason = "exhausted"

    # best-first search: popped bounds are nondecreasing, so the bound of the
    # node at the heap top is a valid global lower bound
    while heap:
        bound, _, xrel, lo, hi = heapq.heappop(heap)
        best_bound = bound
        if inc_obj < np.inf and _gap(inc_obj, best_bound) <= settings.rel_gap:
            reason = "gap"
            break
        if bound >= inc_obj - 1e-9:
            continue
        nodes += 1
        if nodes > settings.node_limit or time.monotonic() - start > settings.time_limit:
            reason = "limit"
            break
        frac = np.abs(xrel[int_idx] - np.round(xrel[int_idx]))
        if frac.size == 0 or frac.max() <= INT_TOL:
            obj = float(c @ xrel)
            if obj < inc_obj - 1e-12:
                incumbent, inc_obj = xrel.copy(), obj
            continue
        pick = int_idx[int(np.argmax(frac))]
        val = xrel[pick]
        for child_lo, child_hi in (
            (lo, _with(hi, pick, np.floor(val))),
            (_with(lo, pick, np.ceil(val)), hi),
        ):
            if child_lo[pick] > child_hi[pick]:
                continue
            xc, bc = lp(child_lo, child_hi)
            if xc is None or bc >= inc_obj - 1e-9:
                continue
            heapq.heappush(heap, (bc, counter, xc, child_lo, child_hi))
            counter += 1

    if incumbent is None:
        return (TIME_LIMIT if reason == "limit" else INFEASIBLE), None, None, np.inf
    if reason == "exhausted":
        gap = 0.0
    else:
        gap = max(_gap(inc_obj, best_bound), 0.0)
    if reason == "limit" and gap > settings.rel_gap:
        return TIME_LIMIT, incumbent, inc_obj, gap
    status = OPTIMAL if gap <= 1e-9 else GAP_LIMIT
    return status, incumbent, inc_obj, gap


def _with(arr: np.ndarray, idx: int, value: float) -> np.ndarray:
    out = arr.copy()
    out[idx] = value
    return out


def _gap(incumbent: float, bound: float) -> float:
    if incumbent == 0.0:
        return 0.0 if bound >= -1e-9 else np.inf
    return (incumbent - bound) / max(abs(incumbent), 1e-12)


def settings_with_warm(settings: SolveSettings, warm: Optional[Solution]) -> SolveSettings:
    return replace(settings, warm_start=warm)
