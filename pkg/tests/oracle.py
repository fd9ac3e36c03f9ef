"""Independent brute-force oracle for tiny planning instances.

Enumerates every per-slot action (idle / charge with a type / abandon) for
every truck, applies the waiting and abandonment logic directly, resolves
the continuous battery variables with an LP, and combines trucks through
the zone-capacity maxima. Kept deliberately independent of the model
builder: durations, caps, and the waiting recursion are recomputed here
from first principles.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linprog

from fleetcharge.core import FAST, PP_MAX, PP_MIN, FleetInstance, parked_stretches, successor
from fleetcharge.model import BuildConfig

GAP_BRANCH_LIMIT = 8


@dataclass
class TruckPattern:
    charge_count: int
    cost: float  # p_low * v_sum + p_charging * charge_count
    usage: dict[tuple[int, int, int], int]  # (zone, kind, flat slot) -> 1


def _duration(instance: FleetInstance, config: BuildConfig, moments, i, d, t, z, kind) -> float:
    if config.full_parking:
        return 1.0
    if config.mode == "robust" and moments is not None:
        key = (i, instance.grid.hour_of_day(t), z)
        if key in moments.mu_hat:
            mu = moments.mu_hat[key]
            sig = moments.sigma_hat[key]
            g = moments.gamma.get(kind, 1.0)
            raw = mu - moments.sigma_multiplier * sig * g
            return min(max(raw, PP_MIN), PP_MAX)
    return instance.pp[(i, d, t)]


def _truck_lp(instance: FleetInstance, truck: int, charge: dict, forced_low: set,
              config: BuildConfig, moments) -> Optional[float]:
    """Min sum of SoC shortfalls for one truck under a fixed action pattern.

    ``charge`` maps (d, t) -> charger kind on charging slots; ``forced_low``
    holds slots where the SoC must sit at or below the anxiety threshold.
    Returns the shortfall sum, or None when infeasible.
    """
    grid = instance.grid
    slots = list(grid.iter_slots())
    n = len(slots)
    pos = {s: k for k, s in enumerate(slots)}
    cap = instance.truck_by_id(truck).battery_kwh
    thr = instance.anxiety_threshold
    dt = grid.delta_t_hours

    # columns: b (n), v (n), p (one per charging slot)
    p_cols = {s: 2 * n + k for k, s in enumerate(sorted(charge))}
    n_cols = 2 * n + len(p_cols)
    c = np.zeros(n_cols)
    c[n:2 * n] = 1.0

    lbs = np.zeros(n_cols)
    ubs = np.full(n_cols, np.inf)
    lbs[:n] = instance.soc_min
    ubs[:n] = instance.soc_max
    for s, col in p_cols.items():
        kind = charge[s]
        z = instance.parking[(truck, s[0], s[1])]
        dur = _duration(instance, config, moments, truck, s[0], s[1], z, kind)
        charger = instance.charger(kind)
        ubs[col] = charger.efficiency * charger.rated_power_kw * dt * dur

    A_ub, b_ub, A_eq, b_eq = [], [], [], []
    for k, s in enumerate(slots):
        row = np.zeros(n_cols)  # v_s + b_s >= thr
        row[n + k] = -1.0
        row[k] = -1.0
        A_ub.append(row)
        b_ub.append(-thr)
    for prev, cur in zip(slots, slots[1:]):
        row = np.zeros(n_cols)
        row[pos[cur]] = cap
        row[pos[prev]] = -cap
        if cur in p_cols:
            row[p_cols[cur]] = -1.0
        A_eq.append(row)
        b_eq.append(-instance.rho_at(truck, cur[0], cur[1]))
    if n > 1:
        row = np.zeros(n_cols)
        row[pos[slots[0]]] = 1.0
        row[pos[slots[-1]]] = -1.0
        A_eq.append(row)
        b_eq.append(0.0)
    for s in forced_low:
        row = np.zeros(n_cols)
        row[pos[s]] = 1.0
        A_ub.append(row)
        b_ub.append(thr)
    if instance.has_fast():
        ceil = instance.charger(FAST).soc_ceiling
        for s, kind in charge.items():
            if kind != FAST:
                continue
            row = np.zeros(n_cols)
            row[pos[s]] = 1.0
            A_ub.append(row)
            b_ub.append(ceil)
            nxt = successor(s[0], s[1], grid)
            if nxt is not None:
                row = np.zeros(n_cols)
                row[pos[nxt]] = 1.0
                A_ub.append(row)
                b_ub.append(ceil)

    def run(extra_ub_rows, extra_ub_rhs, depth):
        res = linprog(
            c,
            A_ub=np.vstack(A_ub + extra_ub_rows) if (A_ub or extra_ub_rows) else None,
            b_ub=np.array(b_ub + extra_ub_rhs) if (b_ub or extra_ub_rhs) else None,
            A_eq=np.vstack(A_eq) if A_eq else None,
            b_eq=np.array(b_eq) if A_eq else None,
            bounds=np.column_stack([lbs, ubs]),
            method="highs",
        )
        if res.status == 2:
            return None
        if res.status != 0:
            raise RuntimeError(f"oracle LP failed: {res.message}")
        # the MILP's indicator pair excludes SoC inside (thr, thr+eps) on
        # slots that carry the indicator; branch if the LP lands there
        if depth < GAP_BRANCH_LIMIT:
            for s in indicator_slots:
                bval = res.x[pos[s]]
                if thr < bval < thr + instance.epsilon:
                    low_row = np.zeros(n_cols)
                    low_row[pos[s]] = 1.0
                    hi_row = np.zeros(n_cols)
                    hi_row[pos[s]] = -1.0
                    lo = run(extra_ub_rows + [low_row], extra_ub_rhs + [thr], depth + 1)
                    hi = run(extra_ub_rows + [hi_row],
                             extra_ub_rhs + [-(thr + instance.epsilon)], depth + 1)
                    vals = [v for v in (lo, hi) if v is not None]
                    return min(vals) if vals else None
        return float(res.fun)

    specials = set() if config.no_overnight else instance.special_zone_ids()
    if config.no_anxiety:
        indicator_slots = []
    else:
        indicator_slots = [
            (d, t) for (d, t) in instance.parking_slots_of(truck)
            if instance.parking[(truck, d, t)] not in specials
        ]
    return run([], [], 0)


def _truck_patterns(instance: FleetInstance, truck: int, config: BuildConfig,
                    moments) -> list[TruckPattern]:
    """All feasible action patterns of one truck, collapsed to distinct
    charging patterns with their cheapest cost."""
    grid = instance.grid
    dt = grid.delta_t_hours
    thr_special = set() if config.no_overnight else instance.special_zone_ids()
    park = instance.parking_slots_of(truck)
    kinds = [ch.id for ch in instance.charger_catalog]
    options = [("idle", None), ("abandon", None)] + [("charge", j) for j in kinds]

    stretch_of: dict[tuple[int, int], tuple[int, int]] = {}
    for sid, stretch in enumerate(parked_stretches(instance, truck)):
        for k, s in enumerate(stretch.slots):
            stretch_of[s] = (sid, k)

    lp_cache: dict[tuple, Optional[float]] = {}
    best: dict[tuple, TruckPattern] = {}
    for combo in itertools.product(options, repeat=len(park)):
        act = dict(zip(park, combo))
        ok = True
        # abandonment monotone within each stretch
        for s1, s2 in zip(park, park[1:]):
            if stretch_of[s1][0] == stretch_of[s2][0] and stretch_of.get(s2, (None, 0))[1] \
                    == stretch_of[s1][1] + 1:
                if act[s1][0] == "abandon" and act[s2][0] != "abandon":
                    ok = False
                    break
        if not ok:
            continue
        # waiting recursion along stretches
        w: dict[tuple[int, int], float] = {}
        for s in park:
            sid, k = stretch_of[s]
            if k == 0:
                w[s] = 0.0
            else:
                prev = park[park.index(s) - 1]
                charged_prev = act[prev][0] == "charge"
                w[s] = w[prev] + dt * (0.0 if charged_prev else 1.0)
        forced_low: set[tuple[int, int]] = set()
        for s in park:
            z = instance.parking[(truck, s[0], s[1])]
            if z in thr_special:
                continue
            if act[s][0] == "abandon":
                continue
            if config.no_anxiety:
                if w[s] > 1e-12:
                    ok = False
                    break
            else:
                if w[s] > dt + 1e-12:
                    ok = False
                    break
                if w[s] > 1e-12:
                    forced_low.add(s)
        if not ok:
            continue
        charge = {s: act[s][1] for s in park if act[s][0] == "charge"}
        key = (tuple(sorted(charge.items())), tuple(sorted(forced_low)))
        if key not in lp_cache:
            lp_cache[key] = _truck_lp(instance, truck, charge, forced_low, config, moments)
        v_sum = lp_cache[key]
        if v_sum is None:
            continue
        cost = config.p_low * v_sum + config.p_charging * len(charge)
        ykey = tuple(sorted(charge.items()))
        if ykey not in best or cost < best[ykey].cost - 1e-15:
            usage = {}
            for (d, t), kind in charge.items():
                z = instance.parking[(truck, d, t)]
                usage[(z, kind, d * grid.slots_per_day + t)] = 1
            best[ykey] = TruckPattern(len(charge), cost, usage)
    return list(best.values())


def oracle_optimum(instance: FleetInstance, config: Optional[BuildConfig] = None,
                   moments=None) -> Optional[float]:
    """Exhaustive-enumeration optimum of the planning problem, or None when
    infeasible. Only sized for tiny instances."""
    config = config or BuildConfig()
    per_truck = [_truck_patterns(instance, i, config, moments)
                 for i in instance.truck_ids()]
    if any(not pats for pats in per_truck):
        return None
    total_combos = 1
    for pats in per_truck:
        total_combos *= len(pats)
    if total_combos > 2_000_000:
        raise RuntimeError(f"oracle blow-up: {total_combos} combinations")

    cost_of = {ch.id: ch.capital_cost for ch in instance.charger_catalog}
    best = np.inf
    for combo in itertools.product(*per_truck):
        base = sum(p.cost for p in combo)
        if base >= best:
            continue
        merged: dict[tuple[int, int, int], int] = {}
        for pat in combo:
            for key, val in pat.usage.items():
                merged[key] = merged.get(key, 0) + val
        x_req: dict[tuple[int, int], int] = {}
        for (z, kind, _s), cnt in merged.items():
            x_req[(z, kind)] = max(x_req.get((z, kind), 0), cnt)
        total = base + sum(cost_of[k] * n for (_z, k), n in x_req.items())
        if total < best:
            best = total
    return None if best == np.inf else float(best)
