"""Shared domain vocabulary: time grid, fleet, zones, chargers, and the
problem instance container consumed by every other module.

An instance is immutable after construction and safe to share across
concurrent workers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional

# Effective parking duration is a fraction of a slot, never below 5 minutes
# out of a 30-minute slot and never above the full slot.
PP_MIN = 5.0 / 30.0
PP_MAX = 1.0
PP_TOL = 1e-9

SLOW = 0
FAST = 1


class InstanceError(ValueError):
    """Raised when instance data violates a structural invariant."""


@dataclass(frozen=True)
class TimeGrid:
    """Discrete planning horizon: ``days`` x ``slots_per_day`` slots of
    ``slot_minutes`` each."""

    days: int
    slots_per_day: int
    slot_minutes: float = 30.0

    def __post_init__(self) -> None:
        if self.days < 1:
            raise InstanceError(f"days must be >= 1, got {self.days}")
        if self.slots_per_day < 1:
            raise InstanceError(f"slots_per_day must be >= 1, got {self.slots_per_day}")
        if self.slot_minutes <= 0:
            raise InstanceError(f"slot_minutes must be > 0, got {self.slot_minutes}")

    @property
    def delta_t_hours(self) -> float:
        return self.slot_minutes / 60.0

    @property
    def total_slots(self) -> int:
        return self.days * self.slots_per_day

    def iter_slots(self) -> Iterator[tuple[int, int]]:
        for d in range(self.days):
            for t in range(self.slots_per_day):
                yield d, t

    def hour_of_day(self, slot: int) -> int:
        """Hour of day (0-23 on a 24h day) containing the slot's start."""
        return int(slot * self.slot_minutes) // 60

    def check_slot(self, day: int, slot: int) -> None:
        if not (0 <= day < self.days and 0 <= slot < self.slots_per_day):
            raise InstanceError(
                f"slot ({day}, {slot}) outside grid {self.days}x{self.slots_per_day}"
            )


def successor(day: int, slot: int, grid: TimeGrid) -> Optional[tuple[int, int]]:
    """Next slot in the horizon, wrapping day boundaries; None at the end."""
    grid.check_slot(day, slot)
    if slot < grid.slots_per_day - 1:
        return day, slot + 1
    if day < grid.days - 1:
        return day + 1, 0
    return None


@dataclass(frozen=True)
class ChargerType:
    """One entry of the charger catalog (slow or fast)."""

    id: int  # SLOW or FAST
    capital_cost: float
    rated_power_kw: float
    efficiency: float
    soc_floor: float = 0.10
    soc_ceiling: float = 1.00

    def __post_init__(self) -> None:
        if not (0.0 < self.efficiency <= 1.0):
            raise InstanceError(f"efficiency must be in (0, 1], got {self.efficiency}")
        if not (self.soc_floor < self.soc_ceiling <= 1.0):
            raise InstanceError(
                f"need soc_floor < soc_ceiling <= 1, got {self.soc_floor}, {self.soc_ceiling}"
            )
        if self.rated_power_kw <= 0:
            raise InstanceError(f"rated_power_kw must be > 0, got {self.rated_power_kw}")

    def max_energy_kwh(self, delta_t_hours: float, duration_fraction: float = 1.0) -> float:
        """Battery-side energy deliverable in one slot at the given effective
        duration fraction."""
        return self.efficiency * self.rated_power_kw * delta_t_hours * duration_fraction


def default_charger_catalog() -> list[ChargerType]:
    """Slow (11.2 kW AC) and fast (150 kW DC) chargers with list prices,
    efficiencies, and SoC operating ranges."""
    return [
        ChargerType(id=SLOW, capital_cost=1500.0, rated_power_kw=11.2,
                    efficiency=0.90, soc_floor=0.10, soc_ceiling=1.00),
        ChargerType(id=FAST, capital_cost=38000.0, rated_power_kw=150.0,
                    efficiency=0.95, soc_floor=0.10, soc_ceiling=0.80),
    ]


@dataclass(frozen=True)
class Truck:
    id: int
    battery_kwh: float = 100.0

    def __post_init__(self) -> None:
        if self.battery_kwh <= 0:
            raise InstanceError(f"battery_kwh must be > 0, got {self.battery_kwh}")


@dataclass(frozen=True)
class Zone:
    """A candidate charging zone; special zones permit overnight waiting."""

    id: int
    is_special: bool = False


@dataclass(frozen=True)
class Stretch:
    """A maximal run of consecutive parking slots of one truck in one zone.

    Consecutive means grid-adjacent (day boundaries included); a gap or a
    zone change ends the run.
    """

    zone: int
    slots: tuple[tuple[int, int], ...]

    def __len__(self) -> int:
        return len(self.slots)


@dataclass(frozen=True)
class FleetInstance:
    """Time-gridded problem data for one planning run.

    ``parking`` maps (truck, day, slot) to the zone id the truck is parked
    in; ``pp`` holds the effective parking duration fraction on exactly the
    same keys; ``rho`` holds per-slot driving energy (kWh) on any keys.
    Instances are frozen; treat the dict fields as read-only.
    """

    grid: TimeGrid
    trucks: tuple[Truck, ...]
    zones: tuple[Zone, ...]
    charger_catalog: tuple[ChargerType, ...]
    parking: dict[tuple[int, int, int], int]
    pp: dict[tuple[int, int, int], float]
    rho: dict[tuple[int, int, int], float]
    soc_min: float = 0.10
    soc_max: float = 1.00
    anxiety_threshold: float = 0.30
    epsilon: float = 1e-6
    distance_miles: dict[tuple[int, int], float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.zones:
            raise InstanceError("at least one zone is required")
        if not self.trucks:
            raise InstanceError("at least one truck is required")
        if not self.charger_catalog:
            raise InstanceError("charger catalog is empty")
        if not (self.soc_min < self.anxiety_threshold < 0.8 <= self.soc_max):
            raise InstanceError(
                f"need soc_min < {self.anxiety_threshold} < 0.8 <= soc_max, "
                f"got soc_min={self.soc_min}, soc_max={self.soc_max}"
            )
        if self.epsilon <= 0:
            raise InstanceError("epsilon must be positive")
        kinds = [c.id for c in self.charger_catalog]
        if len(set(kinds)) != len(kinds):
            raise InstanceError("duplicate charger type ids in catalog")
        truck_ids = {tr.id for tr in self.trucks}
        zone_ids = {z.id for z in self.zones}
        if set(self.pp.keys()) != set(self.parking.keys()):
            raise InstanceError("pp support must equal parking support exactly")
        for (i, d, t), z in self.parking.items():
            self.grid.check_slot(d, t)
            if i not in truck_ids:
                raise InstanceError(f"parking references unknown truck {i}")
            if z not in zone_ids:
                raise InstanceError(f"parking references unknown zone {z}")
        for key, val in self.pp.items():
            if not (PP_MIN - PP_TOL <= val <= PP_MAX + PP_TOL):
                raise InstanceError(f"pp{key}={val} outside [{PP_MIN}, {PP_MAX}]")
        for (i, d, t), val in self.rho.items():
            self.grid.check_slot(d, t)
            if not (val >= 0.0):
                raise InstanceError(f"rho({i},{d},{t})={val} must be >= 0")

    # -- lookups -----------------------------------------------------------

    def truck_ids(self) -> list[int]:
        return [tr.id for tr in self.trucks]

    def truck_by_id(self, truck: int) -> Truck:
        for tr in self.trucks:
            if tr.id == truck:
                return tr
        raise InstanceError(f"unknown truck {truck}")

    def zone_by_id(self, zone: int) -> Zone:
        for z in self.zones:
            if z.id == zone:
                return z
        raise InstanceError(f"unknown zone {zone}")

    def charger(self, kind: int) -> ChargerType:
        for c in self.charger_catalog:
            if c.id == kind:
                return c
        raise InstanceError(f"no charger of type {kind} in catalog")

    def has_fast(self) -> bool:
        return any(c.id == FAST for c in self.charger_catalog)

    def zone_of(self, truck: int, day: int, slot: int) -> Optional[int]:
        return self.parking.get((truck, day, slot))

    def parking_slots_of(self, truck: int) -> list[tuple[int, int]]:
        """Chronological (day, slot) pairs where the truck is parked."""
        return sorted((d, t) for (i, d, t) in self.parking if i == truck)

    def rho_at(self, truck: int, day: int, slot: int) -> float:
        return self.rho.get((truck, day, slot), 0.0)

    def special_zone_ids(self) -> set[int]:
        return {z.id for z in self.zones if z.is_special}


def parked_stretches(instance: FleetInstance, truck: int) -> list[Stretch]:
    """Maximal same-zone contiguous parking runs of one truck, in order.

    Runs cross day boundaries; a parking gap or a zone change starts a new
    run.
    """
    if truck not in set(instance.truck_ids()):
        raise InstanceError(f"unknown truck {truck}")
    slots = instance.parking_slots_of(truck)
    stretches: list[Stretch] = []
    run: list[tuple[int, int]] = []
    run_zone: Optional[int] = None
    prev: Optional[tuple[int, int]] = None
    for d, t in slots:
        z = instance.parking[(truck, d, t)]
        contiguous = (
            prev is not None
            and successor(prev[0], prev[1], instance.grid) == (d, t)
            and z == run_zone
        )
        if contiguous:
            run.append((d, t))
        else:
            if run:
                stretches.append(Stretch(zone=run_zone, slots=tuple(run)))
            run = [(d, t)]
            run_zone = z
        prev = (d, t)
    if run:
        stretches.append(Stretch(zone=run_zone, slots=tuple(run)))
    return stretches


# ---------------------------------------------------------------------------
# Instance bundle serialization
#
# A bundle is a directory with meta.json plus three column-oriented CSV
# tables (parking, pp, rho), all indices zero-based. distance.csv is an
# optional per-truck-day side table used by representative-day scoring.
# ---------------------------------------------------------------------------

BUNDLE_VERSION = 1


def save_instance(instance: FleetInstance, out_dir: str | Path) -> Path:
    """Write the instance as a directory bundle; returns the directory."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = {
        "format_version": BUNDLE_VERSION,
        "grid": {
            "days": instance.grid.days,
            "slots_per_day": instance.grid.slots_per_day,
            "slot_minutes": instance.grid.slot_minutes,
        },
        "soc_min": instance.soc_min,
        "soc_max": instance.soc_max,
        "anxiety_threshold": instance.anxiety_threshold,
        "epsilon": instance.epsilon,
        "trucks": [{"id": tr.id, "battery_kwh": tr.battery_kwh} for tr in instance.trucks],
        "zones": [{"id": z.id, "is_special": z.is_special} for z in instance.zones],
        "charger_catalog": [
            {
                "id": c.id,
                "capital_cost": c.capital_cost,
                "rated_power_kw": c.rated_power_kw,
                "efficiency": c.efficiency,
                "soc_floor": c.soc_floor,
                "soc_ceiling": c.soc_ceiling,
            }
            for c in instance.charger_catalog
        ],
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    with open(out / "parking.csv", "w") as fh:
        fh.write("truck,day,slot,zone\n")
        for (i, d, t) in sorted(instance.parking):
            fh.write(f"{i},{d},{t},{instance.parking[(i, d, t)]}\n")
    with open(out / "pp.csv", "w") as fh:
        fh.write("truck,day,slot,fraction\n")
        for (i, d, t) in sorted(instance.pp):
            fh.write(f"{i},{d},{t},{instance.pp[(i, d, t)]:.9f}\n")
    with open(out / "rho.csv", "w") as fh:
        fh.write("truck,day,slot,kwh\n")
        for (i, d, t) in sorted(instance.rho):
            fh.write(f"{i},{d},{t},{instance.rho[(i, d, t)]:.9f}\n")
    if instance.distance_miles:
        with open(out / "distance.csv", "w") as fh:
            fh.write("truck,day,miles\n")
            for (i, d) in sorted(instance.distance_miles):
                fh.write(f"{i},{d},{instance.distance_miles[(i, d)]:.9f}\n")
    return out


def load_instance(bundle_dir: str | Path) -> FleetInstance:
    """Read a directory bundle written by :func:`save_instance`."""
    src = Path(bundle_dir)
    meta = json.loads((src / "meta.json").read_text())
    if meta.get("format_version") != BUNDLE_VERSION:
        raise InstanceError(f"unsupported bundle version {meta.get('format_version')}")
    grid = TimeGrid(**meta["grid"])
    trucks = tuple(Truck(**row) for row in meta["trucks"])
    zones = tuple(Zone(**row) for row in meta["zones"])
    catalog = tuple(ChargerType(**row) for row in meta["charger_catalog"])

    def read_table(name: str, cast):
        path = src / name
        out = {}
        with open(path) as fh:
            header = fh.readline()
            del header
            for line in fh:
                parts = line.strip().split(",")
                if not parts or parts == [""]:
                    continue
                i, d, t = int(parts[0]), int(parts[1]), int(parts[2])
                out[(i, d, t)] = cast(parts[3])
        return out

    parking = read_table("parking.csv", int)
    pp = read_table("pp.csv", float)
    # re-clamp to absorb decimal truncation from serialization
    pp = {k: min(max(v, PP_MIN), PP_MAX) for k, v in pp.items()}
    rho = read_table("rho.csv", float)
    distance: dict[tuple[int, int], float] = {}
    if (src / "distance.csv").exists():
        with open(src / "distance.csv") as fh:
            fh.readline()
            for line in fh:
                parts = line.strip().split(",")
                if not parts or parts == [""]:
                    continue
                distance[(int(parts[0]), int(parts[1]))] = float(parts[2])
    return FleetInstance(
        grid=grid,
        trucks=trucks,
        zones=zones,
        charger_catalog=catalog,
        parking=parking,
        pp=pp,
        rho=rho,
        soc_min=meta["soc_min"],
        soc_max=meta["soc_max"],
        anxiety_threshold=meta["anxiety_threshold"],
        epsilon=meta["epsilon"],
        distance_miles=distance,
    )


def restrict_to_days(instance: FleetInstance, days: list[int]) -> FleetInstance:
    """Sub-instance over the given original day indices, reindexed to
    consecutive days (order preserved)."""
    days = sorted(set(days))
    for d in days:
        if not (0 <= d < instance.grid.days):
            raise InstanceError(f"day {d} outside horizon")
    remap = {d: k for k, d in enumerate(days)}
    grid = TimeGrid(days=len(days), slots_per_day=instance.grid.slots_per_day,
                    slot_minutes=instance.grid.slot_minutes)
    parking = {(i, remap[d], t): z for (i, d, t), z in instance.parking.items() if d in remap}
    pp = {(i, remap[d], t): v for (i, d, t), v in instance.pp.items() if d in remap}
    rho = {(i, remap[d], t): v for (i, d, t), v in instance.rho.items() if d in remap}
    distance = {(i, remap[d]): v for (i, d), v in instance.distance_miles.items() if d in remap}
    return FleetInstance(
        grid=grid,
        trucks=instance.trucks,
        zones=instance.zones,
        charger_catalog=instance.charger_catalog,
        parking=parking,
        pp=pp,
        rho=rho,
        soc_min=instance.soc_min,
        soc_max=instance.soc_max,
        anxiety_threshold=instance.anxiety_threshold,
        epsilon=instance.epsilon,
        distance_miles=distance,
    )


def restrict_to_trucks(instance: FleetInstance, keep: set[int]) -> FleetInstance:
    """Sub-instance with only the given trucks (ids unchanged)."""
    trucks = tuple(tr for tr in instance.trucks if tr.id in keep)
    parking = {k: z for k, z in instance.parking.items() if k[0] in keep}
    pp = {k: v for k, v in instance.pp.items() if k[0] in keep}
    rho = {k: v for k, v in instance.rho.items() if k[0] in keep}
    distance = {k: v for k, v in instance.distance_miles.items() if k[0] in keep}
    return FleetInstance(
        grid=instance.grid,
        trucks=trucks,
        zones=instance.zones,
        charger_catalog=instance.charger_catalog,
        parking=parking,
        pp=pp,
        rho=rho,
        soc_min=instance.soc_min,
        soc_max=instance.soc_max,
        anxiety_threshold=instance.anxiety_threshold,
        epsilon=instance.epsilon,
        distance_miles=distance,
    )
