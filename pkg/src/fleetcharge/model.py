"""Assembles the two-stage charger planning and scheduling MILP.

The model is held in a solver-agnostic container: named columns with bounds
and integrality, named rows with a sense and right-hand side, and a linear
objective. Every row carries a tag naming its constraint family so solver
output and replay violations can be cross-referenced.

Variable families (keys in :class:`VariableCatalog`):

* ``x[z, j]``      chargers of type j installed in zone z (integer)
* ``y[i, d, t, j]`` truck i charges with type j in slot (d, t) (binary,
  parking slots only)
* ``a[i, d, t]``   truck i has abandoned charging (binary, parking slots)
* ``w[i, d, t]``   accumulated waiting hours entering the slot (parking)
* ``b[i, d, t]``   battery SoC fraction (every slot)
* ``p[i, d, t]``   battery-side charge energy in kWh (parking slots)
* ``v[i, d, t]``   SoC shortfall below the anxiety threshold (every slot)
* ``delta30[i, d, t]`` low-SoC indicator (non-special parking slots)

Waiting accumulates along maximal same-zone parked stretches and resets on
gaps and zone changes; it carries across day boundaries. Special
(overnight) zones get no waiting cap, so waiting may grow there without
forcing abandonment.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .core import (
    FAST,
    FleetInstance,
    Stretch,
    parked_stretches,
    successor,
)
from .uncertainty import UncertaintyMoments

log = logging.getLogger(__name__)

LE, GE, EQ = "<=", ">=", "=="

CASES = ("benchmark", "full_parking", "no_overnight", "no_anxiety")


class ModelError(ValueError):
    pass


class InfeasibleTruckWarning(UserWarning):
    """A truck's data makes the model structurally infeasible (it consumes
    energy but never parks, so the cyclic SoC constraint cannot hold)."""


# ---------------------------------------------------------------------------
# Generic MILP container
# ---------------------------------------------------------------------------

@dataclass
class Row:
    name: str
    coefs: list[tuple[int, float]]
    sense: str
    rhs: float


class LinearModel:
    """Sparse MILP in named-columns/named-rows form."""

    def __init__(self) -> None:
        self.names: list[str] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.integer: list[bool] = []
        self.obj: list[float] = []
        self.rows: list[Row] = []
        self._by_name: dict[str, int] = {}

    @property
    def num_vars(self) -> int:
        return len(self.names)

    def add_var(self, name: str, lb: float = 0.0, ub: float = np.inf,
                integer: bool = False, obj: float = 0.0) -> int:
        if name in self._by_name:
            raise ModelError(f"duplicate variable {name}")
        idx = len(self.names)
        self.names.append(name)
        self.lb.append(lb)
        self.ub.append(ub)
        self.integer.append(integer)
        self.obj.append(obj)
        self._by_name[name] = idx
        return idx

    def add_row(self, name: str, coefs: Iterable[tuple[int, float]], sense: str,
                rhs: float) -> None:
        if sense not in (LE, GE, EQ):
            raise ModelError(f"bad sense {sense!r}")
        self.rows.append(Row(name, list(coefs), sense, rhs))

    def set_bounds(self, idx: int, lb: Optional[float] = None,
                   ub: Optional[float] = None) -> None:
        if lb is not None:
            self.lb[idx] = lb
        if ub is not None:
            self.ub[idx] = ub

    # -- conversions -------------------------------------------------------

    def constraint_arrays(self):
        """(A, row_lb, row_ub) with equality rows encoded as lb == ub."""
        n_rows = len(self.rows)
        data, indices, indptr = [], [], [0]
        row_lb = np.empty(n_rows)
        row_ub = np.empty(n_rows)
        for k, row in enumerate(self.rows):
            for idx, coef in row.coefs:
                indices.append(idx)
                data.append(coef)
            indptr.append(len(indices))
            if row.sense == LE:
                row_lb[k], row_ub[k] = -np.inf, row.rhs
            elif row.sense == GE:
                row_lb[k], row_ub[k] = row.rhs, np.inf
            else:
                row_lb[k] = row_ub[k] = row.rhs
        A = sp.csr_matrix((data, indices, indptr), shape=(n_rows, self.num_vars))
        return A, row_lb, row_ub

    def objective_array(self) -> np.ndarray:
        return np.asarray(self.obj, dtype=float)

    def bounds_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.lb, dtype=float), np.asarray(self.ub, dtype=float)

    def integrality_array(self) -> np.ndarray:
        return np.asarray([1 if f else 0 for f in self.integer], dtype=int)

    def objective_value(self, x: np.ndarray) -> float:
        return float(self.objective_array() @ x)

    def check_point(self, x: np.ndarray, tol: float = 1e-6) -> list[str]:
        """Names of rows/bounds/integrality requirements violated at x."""
        bad: list[str] = []
        for idx in range(self.num_vars):
            val = x[idx]
            if val < self.lb[idx] - tol or val > self.ub[idx] + tol:
                bad.append(f"bound:{self.names[idx]}")
            if self.integer[idx] and abs(val - round(val)) > tol:
                bad.append(f"integrality:{self.names[idx]}")
        for row in self.rows:
            lhs = sum(coef * x[idx] for idx, coef in row.coefs)
            if row.sense == LE and lhs > row.rhs + tol:
                bad.append(row.name)
            elif row.sense == GE and lhs < row.rhs - tol:
                bad.append(row.name)
            elif row.sense == EQ and abs(lhs - row.rhs) > tol:
                bad.append(row.name)
        return bad

    # -- LP-format export ---------------------------------------------------

    def write_lp(self, path: str | Path) -> Path:
        """CPLEX-style LP text export with row tags as row names."""
        path = Path(path)
        lines = ["\\ fleetcharge model export", "Minimize", " obj:" + _expr(
            [(i, c) for i, c in enumerate(self.obj) if c != 0.0], self.names)]
        lines.append("Subject To")
        for row in self.rows:
            op = {LE: "<=", GE: ">=", EQ: "="}[row.sense]
            lines.append(f" {row.name}:{_expr(row.coefs, self.names)} {op} {row.rhs:.12g}")
        lines.append("Bounds")
        for idx, name in enumerate(self.names):
            lo, hi = self.lb[idx], self.ub[idx]
            if self.integer[idx] and lo == 0.0 and hi == 1.0:
                continue  # listed under Binaries
            lo_s = "-inf" if np.isneginf(lo) else f"{lo:.12g}"
            hi_s = "+inf" if np.isposinf(hi) else f"{hi:.12g}"
            lines.append(f" {lo_s} <= {name} <= {hi_s}")
        binaries = [n for idx, n in enumerate(self.names)
                    if self.integer[idx] and self.lb[idx] == 0.0 and self.ub[idx] == 1.0]
        generals = [n for idx, n in enumerate(self.names)
                    if self.integer[idx] and n not in set(binaries)]
        if binaries:
            lines.append("Binaries")
            lines.extend(" " + n for n in binaries)
        if generals:
            lines.append("Generals")
            lines.extend(" " + n for n in generals)
        lines.append("End")
        path.write_text("\n".join(lines) + "\n")
        return path


def _expr(coefs: Sequence[tuple[int, float]], names: Sequence[str]) -> str:
    if not coefs:
        return " 0 dummy_zero" if False else " 0"
    parts = []
    for idx, coef in coefs:
        sign = "+" if coef >= 0 else "-"
        parts.append(f" {sign} {abs(coef):.12g} {names[idx]}")
    return "".join(parts)


# ---------------------------------------------------------------------------
# Big-M constants
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BigMSet:
    """Minimal sufficient big-M constants for the indicator, waiting-cap,
    and fast-ceiling constraints, plus the longest-stretch durations they
    derive from."""

    m1: float
    m2: float
    m3: float
    w_max: float
    w_max_special: float


def compute_big_m(instance: FleetInstance, *, ignore_special: bool = False) -> BigMSet:
    """M1 covers the low-SoC indicator band, M2 equals the longest
    contiguous non-special parked stretch duration (hours), M3 covers the
    fast-charging ceiling gap."""
    thr = instance.anxiety_threshold
    m1 = max(instance.soc_max - thr, thr + instance.epsilon - instance.soc_min)
    fast_ceiling = instance.charger(FAST).soc_ceiling if instance.has_fast() else 0.8
    m3 = instance.soc_max - fast_ceiling
    specials = set() if ignore_special else instance.special_zone_ids()
    dt = instance.grid.delta_t_hours
    w_max = 0.0
    w_max_special = 0.0
    any_parking = False
    for truck in instance.truck_ids():
        for stretch in parked_stretches(instance, truck):
            any_parking = True
            dur = len(stretch) * dt
            if stretch.zone in specials:
                w_max_special = max(w_max_special, dur)
            else:
                w_max = max(w_max, dur)
    if not any_parking:
        log.warning("instance has no parking slots; W_max = 0")
    return BigMSet(m1=m1, m2=w_max, m3=m3, w_max=w_max, w_max_special=w_max_special)


# ---------------------------------------------------------------------------
# Build configuration and case profiles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BuildConfig:
    """Knobs of :func:`build_model`.

    ``full_parking`` forces effective duration 1 in every power bound;
    ``no_overnight`` treats every zone as non-special; ``no_anxiety``
    removes the one-slot waiting allowance below 30% SoC (the low-SoC
    penalty itself stays on).
    """

    mode: str = "deterministic"  # or "robust"
    p_low: float = 1.0
    p_charging: float = 1.0
    case: str = "benchmark"
    full_parking: bool = False
    no_overnight: bool = False
    no_anxiety: bool = False

    def __post_init__(self) -> None:
        if self.mode not in ("deterministic", "robust"):
            raise ModelError(f"unknown mode {self.mode!r}")
        if self.p_low < 0 or self.p_charging < 0:
            raise ModelError("penalties must be >= 0")


def set_case_profile(config: BuildConfig, case: str) -> BuildConfig:
    """Return a config adjusted for one of the four study cases."""
    name = case.replace("-", "_")
    if name not in CASES:
        raise ModelError(f"unknown case {case!r}; expected one of {CASES}")
    return replace(
        config,
        case=name,
        full_parking=(name == "full_parking"),
        no_overnight=(name == "no_overnight"),
        no_anxiety=(name == "no_anxiety"),
    )


# ---------------------------------------------------------------------------
# Planning model
# ---------------------------------------------------------------------------

@dataclass
class VariableCatalog:
    x: dict[tuple[int, int], int] = field(default_factory=dict)
    y: dict[tuple[int, int, int, int], int] = field(default_factory=dict)
    a: dict[tuple[int, int, int], int] = field(default_factory=dict)
    w: dict[tuple[int, int, int], int] = field(default_factory=dict)
    b: dict[tuple[int, int, int], int] = field(default_factory=dict)
    p: dict[tuple[int, int, int], int] = field(default_factory=dict)
    v: dict[tuple[int, int, int], int] = field(default_factory=dict)
    delta30: dict[tuple[int, int, int], int] = field(default_factory=dict)


@dataclass
class PlanningModel:
    instance: FleetInstance
    config: BuildConfig
    lm: LinearModel
    catalog: VariableCatalog
    big_m: BigMSet
    stretches: dict[int, list[Stretch]]
    fixed_fast: set[tuple[int, int, int]] = field(default_factory=set)
    pp_override: dict[tuple[int, int, int], float] | None = None

    @property
    def mode(self) -> str:
        return self.config.mode

    def installation_cost(self, x_values: Mapping[tuple[int, int], float]) -> float:
        return sum(self.instance.charger(j).capital_cost * x_values.get((z.id, j), 0.0)
                   for z in self.instance.zones
                   for j in (c.id for c in self.instance.charger_catalog))

    def write_lp(self, path: str | Path) -> Path:
        return self.lm.write_lp(path)


def _power_duration(instance: FleetInstance, config: BuildConfig,
                    moments: Optional[UncertaintyMoments],
                    pp_override: Optional[Mapping[tuple[int, int, int], float]],
                    i: int, d: int, t: int, z: int, kind: int) -> float:
    """Effective duration fraction used in the power bound of one slot."""
    if config.full_parking:
        return 1.0
    if pp_override is not None and (i, d, t) in pp_override:
        return pp_override[(i, d, t)]
    if config.mode == "robust":
        key = (i, instance.grid.hour_of_day(t), z)
        if key in moments.mu_hat:
            return moments.lower_duration(key, kind)
    return instance.pp[(i, d, t)]


def build_model(
    instance: FleetInstance,
    moments: Optional[UncertaintyMoments] = None,
    config: Optional[BuildConfig] = None,
    pp_values: Optional[Mapping[tuple[int, int, int], float]] = None,
) -> PlanningModel:
    """Assemble the full planning-and-scheduling MILP.

    ``pp_values`` overrides per-slot effective durations in the power bound
    (used by the heuristic's final re-solve with sampled durations); it
    takes precedence over both the instance pp and robust coefficients.
    """
    config = config or BuildConfig()
    if config.mode == "robust" and moments is None:
        raise ModelError("robust mode requires uncertainty moments")

    grid = instance.grid
    dt = grid.delta_t_hours
    thr = instance.anxiety_threshold
    eps = instance.epsilon
    big_m = compute_big_m(instance, ignore_special=config.no_overnight)
    specials = set() if config.no_overnight else instance.special_zone_ids()
    kinds = [c.id for c in instance.charger_catalog]
    has_fast = instance.has_fast()
    n_trucks = len(instance.trucks)

    lm = LinearModel()
    cat = VariableCatalog()
    stretches = {i: parked_stretches(instance, i) for i in instance.truck_ids()}
    w_ub = max(big_m.w_max, big_m.w_max_special)

    # -- variables ----------------------------------------------------------
    for z in instance.zones:
        for j in kinds:
            cost = instance.charger(j).capital_cost
            cat.x[(z.id, j)] = lm.add_var(f"x_{z.id}_{j}", lb=0, ub=n_trucks,
                                          integer=True, obj=cost)
    for i in instance.truck_ids():
        park = instance.parking_slots_of(i)
        park_set = set(park)
        for d, t in grid.iter_slots():
            cat.b[(i, d, t)] = lm.add_var(f"b_{i}_{d}_{t}", lb=instance.soc_min,
                                          ub=instance.soc_max)
            cat.v[(i, d, t)] = lm.add_var(f"v_{i}_{d}_{t}", lb=0.0,
                                          obj=config.p_low)
        for d, t in park:
            z = instance.parking[(i, d, t)]
            coefs = {}
            for j in kinds:
                charger = instance.charger(j)
                dur = _power_duration(instance, config, moments, pp_values,
                                      i, d, t, z, j)
                coefs[j] = charger.max_energy_kwh(dt, dur)
                cat.y[(i, d, t, j)] = lm.add_var(f"y_{i}_{d}_{t}_{j}", lb=0, ub=1,
                                                 integer=True, obj=config.p_charging)
            cat.a[(i, d, t)] = lm.add_var(f"a_{i}_{d}_{t}", lb=0, ub=1, integer=True)
            cat.w[(i, d, t)] = lm.add_var(f"w_{i}_{d}_{t}", lb=0.0, ub=max(w_ub, 0.0))
            cat.p[(i, d, t)] = lm.add_var(f"p_{i}_{d}_{t}", lb=0.0,
                                          ub=max(coefs.values()))
            if z not in specials and not config.no_anxiety:
                cat.delta30[(i, d, t)] = lm.add_var(f"d30_{i}_{d}_{t}", lb=0, ub=1,
                                                    integer=True)
        del park_set

    # -- per-slot charging logic -------------------------------------------
    for i in instance.truck_ids():
        for d, t in instance.parking_slots_of(i):
            z = instance.parking[(i, d, t)]
            y_idx = [cat.y[(i, d, t, j)] for j in kinds]
            a_idx = cat.a[(i, d, t)]
            lm.add_row(f"singlecharger_{i}_{d}_{t}",
                       [(idx, 1.0) for idx in y_idx], LE, 1.0)
            lm.add_row(f"noabandoncharge_{i}_{d}_{t}",
                       [(a_idx, 1.0)] + [(idx, 1.0) for idx in y_idx], LE, 1.0)
            # power bound: p <= sum_j eta_j P_j dt dur_j y_j
            pcoefs = [(cat.p[(i, d, t)], 1.0)]
            for j in kinds:
                charger = instance.charger(j)
                dur = _power_duration(instance, config, moments, pp_values,
                                      i, d, t, z, j)
                pcoefs.append((cat.y[(i, d, t, j)], -charger.max_energy_kwh(dt, dur)))
            lm.add_row(f"powerbound_{i}_{d}_{t}", pcoefs, LE, 0.0)
            # low-SoC indicator pair (only where the waiting cap uses it)
            if (i, d, t) in cat.delta30:
                b_idx = cat.b[(i, d, t)]
                d_idx = cat.delta30[(i, d, t)]
                lm.add_row(f"lowsoc_lb_{i}_{d}_{t}",
                           [(b_idx, 1.0), (d_idx, big_m.m1)], GE, thr + eps)
                lm.add_row(f"lowsoc_ub_{i}_{d}_{t}",
                           [(b_idx, 1.0), (d_idx, big_m.m1)], LE, thr + big_m.m1)
            # waiting cap with the anxiety allowance substituted inline
            if z not in specials:
                cap = [(cat.w[(i, d, t)], 1.0), (a_idx, -big_m.m2)]
                if not config.no_anxiety:
                    cap.append((cat.delta30[(i, d, t)], -dt))
                lm.add_row(f"waitcap_{i}_{d}_{t}", cap, LE, 0.0)
            # fast-charging SoC ceiling at the slot and its successor
            if has_fast and FAST in kinds:
                ceil = instance.charger(FAST).soc_ceiling
                yf = cat.y[(i, d, t, FAST)]
                lm.add_row(f"fastcap_{i}_{d}_{t}",
                           [(cat.b[(i, d, t)], 1.0), (yf, big_m.m3)], LE,
                           ceil + big_m.m3)
                nxt = successor(d, t, grid)
                if nxt is not None:
                    lm.add_row(f"fastcapnext_{i}_{d}_{t}",
                               [(cat.b[(i, nxt[0], nxt[1])], 1.0), (yf, big_m.m3)],
                               LE, ceil + big_m.m3)

    # -- stretch-wise waiting and abandonment --------------------------------
    for i in instance.truck_ids():
        for stretch in stretches[i]:
            first = stretch.slots[0]
            lm.set_bounds(cat.w[(i, first[0], first[1])], ub=0.0)  # reset at start
            for (d, t), (d2, t2) in zip(stretch.slots, stretch.slots[1:]):
                lm.add_row(f"abandonmono_{i}_{d}_{t}",
                           [(cat.a[(i, d2, t2)], 1.0), (cat.a[(i, d, t)], -1.0)],
                           GE, 0.0)
                coefs = [(cat.w[(i, d2, t2)], 1.0), (cat.w[(i, d, t)], -1.0)]
                coefs += [(cat.y[(i, d, t, j)], dt) for j in kinds]
                lm.add_row(f"waitrecur_{i}_{d}_{t}", coefs, EQ, dt)

    # -- battery dynamics ----------------------------------------------------
    for i in instance.truck_ids():
        cap_kwh = instance.truck_by_id(i).battery_kwh
        balance_rho = 0.0
        prev: Optional[tuple[int, int]] = None
        first_slot = (0, 0)
        last_slot = (grid.days - 1, grid.slots_per_day - 1)
        for d, t in grid.iter_slots():
            lm.add_row(f"vdef_{i}_{d}_{t}",
                       [(cat.v[(i, d, t)], 1.0), (cat.b[(i, d, t)], 1.0)], GE, thr)
            if prev is not None:
                rho = instance.rho_at(i, d, t)
                balance_rho += rho
                coefs = [(cat.b[(i, d, t)], cap_kwh), (cat.b[(i, prev[0], prev[1])],
                                                       -cap_kwh)]
                if (i, d, t) in cat.p:
                    coefs.append((cat.p[(i, d, t)], -1.0))
                lm.add_row(f"balance_{i}_{d}_{t}", coefs, EQ, -rho)
            prev = (d, t)
        if first_slot != last_slot:
            lm.add_row(f"cyclic_{i}",
                       [(cat.b[(i, *first_slot)], 1.0), (cat.b[(i, *last_slot)], -1.0)],
                       EQ, 0.0)
        if not instance.parking_slots_of(i) and balance_rho > 0:
            warnings.warn(
                f"truck {i} consumes {balance_rho:.2f} kWh but never parks; "
                "the cyclic SoC constraint is infeasible (filter it as an HCV)",
                InfeasibleTruckWarning,
                stacklevel=2,
            )

    # -- zone capacity --------------------------------------------------------
    by_zone_slot: dict[tuple[int, int, int], list[int]] = {}
    for (i, d, t), z in instance.parking.items():
        by_zone_slot.setdefault((z, d, t), []).append(i)
    for (z, d, t) in sorted(by_zone_slot):
        for j in kinds:
            coefs = [(cat.y[(i, d, t, j)], 1.0) for i in sorted(by_zone_slot[(z, d, t)])]
            coefs.append((cat.x[(z, j)], -1.0))
            lm.add_row(f"zonecap_{z}_{j}_{d}_{t}", coefs, LE, 0.0)

    return PlanningModel(
        instance=instance,
        config=config,
        lm=lm,
        catalog=cat,
        big_m=big_m,
        stretches=stretches,
        pp_override=dict(pp_values) if pp_values is not None else None,
    )


def fix_fast_charging(model: PlanningModel,
                      slots: Iterable[tuple[int, int, int]]) -> PlanningModel:
    """Force fast charging on the given parking slots (idempotent)."""
    if not model.instance.has_fast():
        raise ModelError("catalog has no fast charger type to fix")
    for (i, d, t) in slots:
        key = (i, d, t, FAST)
        if key not in model.catalog.y:
            raise ModelError(
                f"({i},{d},{t}) is not a parking slot; fixing conflicts with the "
                "charging-window constraint"
            )
        model.lm.set_bounds(model.catalog.y[key], lb=1.0)
        model.fixed_fast.add((i, d, t))
    return model


def fix_installation(model: PlanningModel,
                     counts: Mapping[tuple[int, int], int],
                     as_lower_bound: bool = False,
                     kinds: Optional[Sequence[int]] = None) -> PlanningModel:
    """Pin charger counts (equality) or impose them as lower bounds,
    optionally for a subset of charger types."""
    for (z, j), n in counts.items():
        if kinds is not None and j not in kinds:
            continue
        idx = model.catalog.x.get((z, j))
        if idx is None:
            raise ModelError(f"no installation variable for zone {z} type {j}")
        if as_lower_bound:
            model.lm.set_bounds(idx, lb=float(n))
        else:
            model.lm.set_bounds(idx, lb=float(n), ub=float(n))
    return model
