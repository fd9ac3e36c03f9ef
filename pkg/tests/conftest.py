"""Shared instance builders for the test suite."""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fleetcharge.core import (
    FAST,
    PP_MAX,
    PP_MIN,
    SLOW,
    ChargerType,
    FleetInstance,
    TimeGrid,
    Truck,
    Zone,
    default_charger_catalog,
)


def make_instance(
    days=1,
    slots_per_day=6,
    slot_minutes=30.0,
    batteries=(50.0,),
    zones=((1, False),),
    parking=None,
    pp=None,
    rho=None,
    catalog=None,
    soc_min=0.10,
    soc_max=1.00,
    epsilon=1e-6,
) -> FleetInstance:
    parking = dict(parking or {})
    if pp is None:
        pp = {k: 0.8 for k in parking}
    return FleetInstance(
        grid=TimeGrid(days=days, slots_per_day=slots_per_day, slot_minutes=slot_minutes),
        trucks=tuple(Truck(id=i, battery_kwh=cap) for i, cap in enumerate(batteries)),
        zones=tuple(Zone(id=z, is_special=s) for z, s in zones),
        charger_catalog=tuple(catalog or default_charger_catalog()),
        parking=parking,
        pp=dict(pp),
        rho=dict(rho or {}),
        soc_min=soc_min,
        soc_max=soc_max,
        epsilon=epsilon,
    )


def slow_only_catalog():
    return (ChargerType(id=SLOW, capital_cost=1500.0, rated_power_kw=11.2,
                        efficiency=0.90, soc_floor=0.10, soc_ceiling=1.00),)


def random_tiny_instance(seed: int) -> FleetInstance:
    """Randomized instance small enough for exhaustive enumeration."""
    rng = np.random.default_rng(seed)
    days = int(rng.integers(1, 3))
    slots_per_day = int(rng.integers(3, 5))
    if days * slots_per_day > 8:
        slots_per_day = 4
        days = 2
    two_types = bool(rng.random() < 0.5)
    n_trucks = int(rng.integers(1, 3 if two_types else 4))
    n_zones = int(rng.integers(1, 3))
    zone_specs = [(1, False)]
    if n_zones == 2:
        zone_specs.append((2, bool(rng.random() < 0.3)))
    catalog = default_charger_catalog() if two_types else list(slow_only_catalog())

    all_slots = [(d, t) for d in range(days) for t in range(slots_per_day)]
    max_park = 3 if n_trucks == 3 else 4
    parking, pp, rho = {}, {}, {}
    batteries = []
    for i in range(n_trucks):
        batteries.append(float(rng.uniform(8.0, 30.0)))
        k = int(rng.integers(1, max_park + 1))
        picks = sorted(rng.choice(len(all_slots), size=k, replace=False))
        park_i = [all_slots[s] for s in picks]
        for d, t in park_i:
            z = int(rng.integers(1, n_zones + 1))
            parking[(i, d, t)] = z
            pp[(i, d, t)] = float(rng.uniform(PP_MIN, PP_MAX))
        # driving energy on non-parking slots, scaled to stay mostly feasible
        free = [s for s in all_slots if s not in park_i]
        deliverable = sum(
            max(c.max_energy_kwh(0.5, pp[(i, d, t)]) for c in catalog)
            for d, t in park_i
        )
        budget = 0.5 * deliverable
        n_drive = int(rng.integers(0, min(3, len(free)) + 1)) if free else 0
        if n_drive and budget > 0:
            drive = rng.choice(len(free), size=n_drive, replace=False)
            weights = rng.uniform(0.2, 1.0, size=n_drive)
            weights = weights / weights.sum() * float(rng.uniform(0.2, 1.0)) * budget
            for s, amount in zip(drive, weights):
                d, t = free[s]
                rho[(i, d, t)] = float(amount)
    return make_instance(
        days=days,
        slots_per_day=slots_per_day,
        batteries=tuple(batteries),
        zones=tuple(zone_specs),
        parking=parking,
        pp=pp,
        rho=rho,
        catalog=catalog,
    )


@pytest.fixture
def three_slot_instance() -> FleetInstance:
    """One truck parked for three consecutive slots in one zone."""
    parking = {(0, 0, 2): 1, (0, 0, 3): 1, (0, 0, 4): 1}
    return make_instance(
        days=1, slots_per_day=6, batteries=(50.0,),
        parking=parking,
        rho={(0, 0, 1): 3.0, (0, 0, 5): 2.0},
    )
