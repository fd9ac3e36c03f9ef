"""Parking-duration statistics and the decision-dependent uncertainty box.

The effective parking duration of a truck at a zone varies by hour of day.
We summarize historical observations as a mean and standard deviation per
(truck, hour-of-day, zone) key, widen/narrow the box with a per-charger-type
reduction factor gamma, and emit the linearized worst-case coefficients used
by the robust power bound.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .core import PP_MAX, PP_MIN, ChargerType, FleetInstance

MomentKey = tuple[int, int, int]  # (truck, hour_of_day, zone)


class MomentsError(ValueError):
    pass


@dataclass(frozen=True)
class UncertaintyMoments:
    """Per-(truck, hour, zone) duration moments plus the robustness knobs.

    ``gamma`` maps charger type id to the uncertainty-reduction factor
    applied to sigma (fast charging typically shrinks variability);
    ``sigma_multiplier`` scales how many standard deviations the box spans
    (0 recovers the deterministic model).
    """

    mu_hat: dict[MomentKey, float]
    sigma_hat: dict[MomentKey, float]
    gamma: dict[int, float] = field(default_factory=lambda: {0: 1.0, 1: 1.0})
    sigma_multiplier: float = 0.0

    def __post_init__(self) -> None:
        for key, mu in self.mu_hat.items():
            if not (PP_MIN - 1e-9 <= mu <= PP_MAX + 1e-9):
                raise MomentsError(f"mu{key}={mu} outside [{PP_MIN}, {PP_MAX}]")
        for key, sig in self.sigma_hat.items():
            if sig < 0:
                raise MomentsError(f"sigma{key}={sig} must be >= 0")
        if set(self.sigma_hat) != set(self.mu_hat):
            raise MomentsError("mu and sigma must share the same key set")
        for j, g in self.gamma.items():
            if not (0.0 <= g <= 1.0):
                raise MomentsError(f"gamma[{j}]={g} must be in [0, 1]")
        if self.sigma_multiplier < 0:
            raise MomentsError("sigma_multiplier must be >= 0")

    def with_multiplier(self, multiplier: float) -> "UncertaintyMoments":
        return UncertaintyMoments(self.mu_hat, self.sigma_hat, dict(self.gamma), multiplier)

    def with_gamma(self, gamma: Mapping[int, float]) -> "UncertaintyMoments":
        return UncertaintyMoments(self.mu_hat, self.sigma_hat, dict(gamma), self.sigma_multiplier)

    def lower_duration(self, key: MomentKey, charger_kind: int) -> float:
        """Worst-case (lowest) duration of the box for one charger type,
        clamped into [5/30, 1]."""
        mu = self.mu_hat[key]
        sig = self.sigma_hat[key]
        g = self.gamma.get(charger_kind, 1.0)
        return _clamp(mu - self.sigma_multiplier * sig * g)


def _clamp(value: float) -> float:
    return min(max(value, PP_MIN), PP_MAX)


def compute_moments(
    observations: Mapping[MomentKey, Iterable[float]],
    gamma: Mapping[int, float] | None = None,
    sigma_multiplier: float = 0.0,
) -> UncertaintyMoments:
    """Sample mean and population standard deviation per key.

    Keys with a single observation get sigma = 0. Raises on an empty
    history.
    """
    if not observations:
        raise MomentsError("empty observation history")
    mu: dict[MomentKey, float] = {}
    sigma: dict[MomentKey, float] = {}
    for key in sorted(observations):
        vals = np.asarray(list(observations[key]), dtype=float)
        if vals.size == 0:
            raise MomentsError(f"no observations under key {key}")
        mu[key] = float(np.mean(vals))
        sigma[key] = float(np.std(vals))  # population formula (ddof=0)
    return UncertaintyMoments(mu, sigma, dict(gamma) if gamma else {0: 1.0, 1: 1.0},
                              sigma_multiplier)


def moments_from_instance(
    instance: FleetInstance,
    gamma: Mapping[int, float] | None = None,
    sigma_multiplier: float = 0.0,
) -> UncertaintyMoments:
    """Collect the instance's pp values as the observation history, keyed by
    (truck, hour-of-day, zone)."""
    obs: dict[MomentKey, list[float]] = {}
    for (i, d, t), z in instance.parking.items():
        key = (i, instance.grid.hour_of_day(t), z)
        obs.setdefault(key, []).append(instance.pp[(i, d, t)])
    return compute_moments(obs, gamma=gamma, sigma_multiplier=sigma_multiplier)


def robust_coefficient(
    moments: UncertaintyMoments,
    truck: int,
    day: int,
    slot: int,
    zone: int,
    charger_kind: int,
    delta_t_hours: float,
    charger: ChargerType,
    hour_of_day: int,
) -> float:
    """Worst-case per-slot charge energy (kWh) under the duration box.

    The duration term mu - multiplier*sigma*gamma is clamped into
    [5/30, 1] before scaling by efficiency * power * slot hours.
    """
    del day, slot  # moments are keyed by hour of day, not calendar slot
    key = (truck, hour_of_day, zone)
    if key not in moments.mu_hat:
        raise MomentsError(f"no moments under key {key}")
    duration = moments.lower_duration(key, charger_kind)
    return charger.efficiency * charger.rated_power_kw * delta_t_hours * duration


def sample_pp(
    moments: UncertaintyMoments,
    seed: int,
    clamp: tuple[float, float] = (PP_MIN, PP_MAX),
) -> dict[MomentKey, float]:
    """Draw one duration per key, uniformly on the box intersected with the
    clamp interval. Deterministic for a fixed seed.

    The box half-width uses the slow-charger gamma: it is the widest box
    consistent with any charging decision, so samples stress the low edge
    that triggers violations in the fix-and-optimize loop.
    """
    lo_clamp, hi_clamp = clamp
    gamma_eff = moments.gamma.get(0, 1.0)
    rng = np.random.default_rng(seed)
    out: dict[MomentKey, float] = {}
    for key in sorted(moments.mu_hat):
        mu = moments.mu_hat[key]
        half = moments.sigma_multiplier * moments.sigma_hat[key] * gamma_eff
        lo = max(mu - half, lo_clamp)
        hi = min(mu + half, hi_clamp)
        if lo > hi:  # box fell outside the clamp; snap to the clamped mean
            lo = hi = min(max(mu, lo_clamp), hi_clamp)
        out[key] = float(rng.uniform(lo, hi)) if hi > lo else lo
    return out


def pp_for_slot(
    instance: FleetInstance,
    sample: Mapping[MomentKey, float],
    truck: int,
    day: int,
    slot: int,
) -> float:
    """Sampled duration for a parking slot, falling back to the instance's
    deterministic pp when the key has no history."""
    zone = instance.parking[(truck, day, slot)]
    key = (truck, instance.grid.hour_of_day(slot), zone)
    if key in sample:
        return sample[key]
    return instance.pp[(truck, day, slot)]


def linearization_check(y: int, mu: float = 1.0, sigma: float = 0.0, gamma: float = 1.0,
                        scale: float = 1.0) -> tuple[float, float]:
    """Evaluate the quadratic and linear forms of the robust bound for one
    binary assignment; they coincide because y*y = y for y in {0, 1}."""
    if y not in (0, 1):
        raise ValueError(f"y must be binary, got {y}")
    quadratic = scale * (mu * y - sigma * gamma * y) * y
    linear = scale * (mu * y - sigma * gamma * y)
    return quadratic, linear


# ---------------------------------------------------------------------------
# CSV persistence (truck,hour,zone,mu,sigma)
# ---------------------------------------------------------------------------

def save_moments(moments: UncertaintyMoments, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["truck", "hour", "zone", "mu", "sigma"])
        for (i, h, z) in sorted(moments.mu_hat):
            writer.writerow([i, h, z, f"{moments.mu_hat[(i, h, z)]:.9f}",
                             f"{moments.sigma_hat[(i, h, z)]:.9f}"])
    return path


def load_moments(
    path: str | Path,
    gamma: Mapping[int, float] | None = None,
    sigma_multiplier: float = 0.0,
) -> UncertaintyMoments:
    mu: dict[MomentKey, float] = {}
    sigma: dict[MomentKey, float] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            key = (int(row["truck"]), int(row["hour"]), int(row["zone"]))
            mu[key] = min(max(float(row["mu"]), PP_MIN), PP_MAX)
            sigma[key] = float(row["sigma"])
    return UncertaintyMoments(mu, sigma, dict(gamma) if gamma else {0: 1.0, 1: 1.0},
                              sigma_multiplier)
