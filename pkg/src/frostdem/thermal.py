"""Per-particle temperature evolution by inter-particle conduction.

Heat moves between contacting particles proportionally to contact area and
temperature difference over center distance.  Boundary particles are pinned
to a ramp-and-hold schedule; everything else evolves explicitly.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, NamedTuple

import numpy as np

from .errors import InvalidConfigError, StabilityError
from .packing import ContactPair, ParticleAssembly, Phase


class PhaseState(Enum):
    WATER = "water"
    ICE = "ice"


#: Linear thermal expansion coefficients, 1/degC.
ALPHA_ROCK = 0.052e-4
ALPHA_WATER = 1.769e-4
ALPHA_ICE = 2.079e-4


@dataclass(frozen=True)
class ThermalProperties:
    """Conductivity, heat capacity and expansion data for one material."""

    conductivity: float          # W/(m K)
    heat_capacity: float         # J/(kg degC)
    thermal_resistance: float    # degC cm/W, carried as metadata only
    expansion_coefficient: float  # 1/degC

    def __post_init__(self):
        if self.conductivity <= 0 or self.heat_capacity <= 0:
            raise InvalidConfigError("conductivity and heat capacity must be > 0")
        if self.expansion_coefficient <= 0:
            raise InvalidConfigError("expansion coefficient must be > 0")


ROCK_PROPERTIES = ThermalProperties(7.7, 877.0, 2.58, ALPHA_ROCK)
WATER_FROZEN_PROPERTIES = ThermalProperties(2.2, 4215.0, 1.00, ALPHA_ICE)
WATER_MELTED_PROPERTIES = ThermalProperties(0.6, 4215.0, 1.00, ALPHA_WATER)


def heat_flux(conductivity: float, area: float, delta_t: float,
              distance: float) -> float:
    """Conductive heat flux between two particles: -k * A * dT / dx.

    ``delta_t`` is receiver minus source temperature, so flux is positive
    toward the colder particle.
    """
    if distance <= 0:
        raise InvalidConfigError("center distance must be > 0")
    return -conductivity * area * delta_t / distance


def phase_state(temperature: float) -> PhaseState:
    """Water above 0 degC, ice at or below it.

    Zero is classified as ice so the freeze transition triggers exactly at
    the schedule's zero crossing.
    """
    return PhaseState.WATER if temperature > 0.0 else PhaseState.ICE


def expansion_coefficient(phase: int, temperature: float) -> float:
    """Current linear expansion coefficient of one particle."""
    if phase == Phase.ROCK:
        return ALPHA_ROCK
    return ALPHA_WATER if phase_state(temperature) is PhaseState.WATER else ALPHA_ICE


def conductivity_of(phase: int, temperature: float) -> float:
    if phase == Phase.ROCK:
        return ROCK_PROPERTIES.conductivity
    return (WATER_MELTED_PROPERTIES.conductivity
            if phase_state(temperature) is PhaseState.WATER
            else WATER_FROZEN_PROPERTIES.conductivity)


def heat_capacity_of(phase: int) -> float:
    return ROCK_PROPERTIES.heat_capacity if phase == Phase.ROCK \
        else WATER_FROZEN_PROPERTIES.heat_capacity


@dataclass(frozen=True)
class BoundarySchedule:
    """Linear ramp from start to target temperature, then hold."""

    start_temp: float            # degC
    target_temp: float           # degC
    ramp_rate: float = 1.0       # degC/min
    hold_duration: float = 0.0   # s

    def __post_init__(self):
        if self.ramp_rate <= 0:
            raise InvalidConfigError("ramp_rate must be > 0")
        if self.hold_duration < 0:
            raise InvalidConfigError("hold_duration must be >= 0")

    @property
    def ramp_time(self) -> float:
        """Seconds to reach the target."""
        return abs(self.target_temp - self.start_temp) / self.ramp_rate * 60.0


def schedule_temperature(schedule: BoundarySchedule, t: float) -> float:
    """Boundary temperature at elapsed time ``t`` seconds."""
    if t < 0:
        raise InvalidConfigError("time must be >= 0")
    ramp_time = schedule.ramp_time
    if t >= ramp_time:
        return schedule.target_temp
    direction = 1.0 if schedule.target_temp >= schedule.start_temp else -1.0
    return schedule.start_temp + direction * schedule.ramp_rate * (t / 60.0)


@dataclass
class TemperatureField:
    """Per-particle temperatures plus the boundary particle set."""

    temperatures: np.ndarray     # (N,) degC
    boundary_ids: np.ndarray     # particle indices pinned to the schedule
    time: float = 0.0            # s

    def copy(self) -> "TemperatureField":
        return TemperatureField(self.temperatures.copy(),
                                self.boundary_ids.copy(), self.time)

    def pin_boundary(self, value: float) -> None:
        if len(self.boundary_ids):
            self.temperatures[self.boundary_ids] = value


class UniformityReport(NamedTuple):
    max_deviation: float
    passes: bool


#: Center-surface temperature deviation accepted as uniform, degC.
UNIFORMITY_LIMIT = 0.5

#: Safety factor on the explicit conduction step.
CONDUCTION_SAFETY = 0.25


class ConductionNetwork:
    """Precomputed contact-graph data for fast conduction stepping.

    Contact area is the circle of the smaller radius; the effective
    conductivity between unlike particles is the harmonic mean, recomputed
    from current phase states each step (water conductivity changes on
    freezing).
    """

    def __init__(self, assembly: ParticleAssembly,
                 contacts: Iterable[ContactPair] | tuple[np.ndarray, np.ndarray]):
        if isinstance(contacts, tuple):
            self.ia, self.ib = (np.asarray(contacts[0], dtype=np.int64),
                                np.asarray(contacts[1], dtype=np.int64))
        else:
            pairs = list(contacts)
            self.ia = np.array([c.particle_a for c in pairs], dtype=np.int64)
            self.ib = np.array([c.particle_b for c in pairs], dtype=np.int64)
        self.n = assembly.n_particles
        self.phases = assembly.phases
        r = assembly.radii
        # SI geometry: areas m^2, distances m
        self.area = np.pi * (np.minimum(r[self.ia], r[self.ib]) * 1e-3) ** 2
        d = np.linalg.norm(assembly.centers[self.ia] - assembly.centers[self.ib],
                           axis=1)
        self.dist = np.maximum(d, 1e-9) * 1e-3
        mass_kg = assembly.masses() * 1e3  # tonnes -> kg
        cap = np.where(assembly.phases == Phase.ROCK,
                       ROCK_PROPERTIES.heat_capacity,
                       WATER_FROZEN_PROPERTIES.heat_capacity)
        self.heat_mass = mass_kg * cap     # J/degC per particle

    def conductances(self, temperatures: np.ndarray) -> np.ndarray:
        """Per-contact conductance W/degC at current phase states."""
        k = np.where(self.phases == Phase.ROCK, ROCK_PROPERTIES.conductivity,
                     np.where(temperatures > 0.0,
                              WATER_MELTED_PROPERTIES.conductivity,
                              WATER_FROZEN_PROPERTIES.conductivity))
        ka, kb = k[self.ia], k[self.ib]
        k_eff = 2.0 * ka * kb / (ka + kb)
        return k_eff * self.area / self.dist

    def stable_dt(self, temperatures: np.ndarray) -> float:
        """Largest explicit step honoring the maximum principle, with safety.

        Bound: dt <= safety * min over particles of heat_mass / sum of
        incident conductances.  This is at least as strict as the
        per-contact bound and guarantees temperatures stay inside the convex
        hull of current values.
        """
        if len(self.ia) == 0:
            return np.inf
        g = self.conductances(temperatures)
        g_sum = np.bincount(self.ia, weights=g, minlength=self.n) \
            + np.bincount(self.ib, weights=g, minlength=self.n)
        active = g_sum > 0
        if not np.any(active):
            return np.inf
        return CONDUCTION_SAFETY * float(
            np.min(self.heat_mass[active] / g_sum[active]))

    def worst_case_stable_dt(self) -> float:
        """Stable step valid for any phase mix (frozen water conducts best)."""
        return self.stable_dt(np.full(self.n, -1.0))

    def boundary_reachable(self, boundary_ids: np.ndarray) -> np.ndarray:
        """Mask of particles with a conductive path to a boundary particle."""
        from scipy.sparse import coo_matrix
        from scipy.sparse.csgraph import connected_components
        mask = np.zeros(self.n, dtype=bool)
        mask[boundary_ids] = True
        if len(self.ia) == 0:
            return mask
        ones = np.ones(len(self.ia))
        graph = coo_matrix((ones, (self.ia, self.ib)), shape=(self.n, self.n))
        _, labels = connected_components(graph, directed=False)
        touched = np.unique(labels[boundary_ids]) if len(boundary_ids) else []
        return mask | np.isin(labels, touched)

    def step(self, field: TemperatureField, dt: float,
             boundary_value: float | None = None) -> None:
        """Advance the field in place by one explicit step."""
        limit = self.stable_dt(field.temperatures)
        if dt > limit * (1.0 + 1e-12):
            raise StabilityError(
                f"conduction step dt={dt:g} s exceeds stability limit {limit:g} s")
        t = field.temperatures
        if len(self.ia):
            g = self.conductances(t)
            flux = g * (t[self.ia] - t[self.ib])   # W, positive a -> b
            dq = flux * dt
            t -= np.bincount(self.ia, weights=dq, minlength=self.n) / self.heat_mass
            t += np.bincount(self.ib, weights=dq, minlength=self.n) / self.heat_mass
        field.time += dt
        if boundary_value is not None:
            field.pin_boundary(boundary_value)

    def thermal_energy(self, field: TemperatureField) -> float:
        """Total stored heat sum(mass * C_v * T), J (relative to 0 degC)."""
        return float(np.dot(self.heat_mass, field.temperatures))


def conduction_step(assembly: ParticleAssembly, field: TemperatureField,
                    contacts: Iterable[ContactPair], dt: float,
                    boundary_value: float | None = None) -> TemperatureField:
    """One explicit conduction step over the given contacts.

    Functional wrapper over :class:`ConductionNetwork`; returns a new field.
    Prefer the network class when stepping repeatedly.
    """
    net = ConductionNetwork(assembly, contacts)
    out = field.copy()
    net.step(out, dt, boundary_value)
    return out


def uniformity_report(field: TemperatureField,
                      boundary_value: float | None = None) -> UniformityReport:
    """Max |interior - boundary| deviation against the 0.5 degC limit."""
    n = len(field.temperatures)
    boundary = np.zeros(n, dtype=bool)
    boundary[field.boundary_ids] = True
    if boundary_value is None:
        if not np.any(boundary):
            raise InvalidConfigError("field has no boundary particles")
        boundary_value = float(field.temperatures[field.boundary_ids].mean())
    interior = field.temperatures[~boundary]
    if len(interior) == 0:
        return UniformityReport(0.0, True)
    dev = float(np.max(np.abs(interior - boundary_value)))
    return UniformityReport(dev, dev < UNIFORMITY_LIMIT)


def surface_particle_ids(assembly: ParticleAssembly,
                         shell: float | None = None) -> np.ndarray:
    """Particles within one max-radius shell of any cylinder surface."""
    if assembly.n_particles == 0:
        return np.zeros(0, dtype=np.int64)
    if shell is None:
        shell = float(assembly.radii.max())
    c, r = assembly.centers, assembly.radii
    rho = np.hypot(c[:, 0], c[:, 1])
    near_side = rho + r >= assembly.domain.radius - shell
    near_ends = (c[:, 2] - r <= shell) | (c[:, 2] + r >= assembly.domain.height - shell)
    return np.flatnonzero(near_side | near_ends).astype(np.int64)
