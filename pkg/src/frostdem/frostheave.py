"""Frost-heave coupling: thermal radius updates, bond corrections, contact stats.

Cooling shrinks rock and liquid water; once a water particle drops to or
below 0 degC it expands on further cooling, loading the surrounding skeleton.
Bond forces receive a matching thermal displacement offset so that uniform
thermal strain of a uniform material stays (nearly) stress free, which keeps
the dry model quiet while the water phase drives the saturated response.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import InvalidConfigError, UndefinedStatisticError
from .mechanics import (BondHealth, BondMaterial, BondState, ContactKind,
                        CrackEvent, ParticleSystem, build_system,
                        check_bond_failure)
from .packing import ParticleAssembly, Phase, contact_arrays
from .thermal import (ALPHA_ICE, ALPHA_ROCK, ALPHA_WATER, ConductionNetwork,
                      TemperatureField, UNIFORMITY_LIMIT, surface_particle_ids)

__all__ = [
    "BondHealth", "BondState", "check_bond_failure",  # re-exported surface
    "SignConvention", "ExpansionPhase", "ExpansionRule",
    "DEFAULT_EXPANSION_RULES", "thermal_radius_update", "radius_increments",
    "bond_thermal_force", "ContactStats", "force_increase_pct",
    "volume_reduction_pct", "contact_statistics", "FreezeConfig",
    "FreezeStageRow", "FreezeResult", "run_freeze",
]


class SignConvention(Enum):
    STANDARD = "standard"
    EXPAND_ON_COOLING = "expand_on_cooling"


class ExpansionPhase(Enum):
    ROCK = "rock"
    WATER = "water"
    ICE = "ice"


@dataclass(frozen=True)
class ExpansionRule:
    phase: ExpansionPhase
    alpha: float                 # 1/degC
    convention: SignConvention


DEFAULT_EXPANSION_RULES: dict[ExpansionPhase, ExpansionRule] = {
    ExpansionPhase.ROCK: ExpansionRule(ExpansionPhase.ROCK, ALPHA_ROCK,
                                       SignConvention.STANDARD),
    ExpansionPhase.WATER: ExpansionRule(ExpansionPhase.WATER, ALPHA_WATER,
                                        SignConvention.STANDARD),
    ExpansionPhase.ICE: ExpansionRule(ExpansionPhase.ICE, ALPHA_ICE,
                                      SignConvention.EXPAND_ON_COOLING),
}


def thermal_radius_update(radius: float, phase: ExpansionPhase,
                          delta_t: float,
                          rule: ExpansionRule | None = None) -> float:
    """Radius increment of one particle for a temperature change in one phase.

    Standard convention shrinks on cooling; the ice convention expands on
    cooling (and on heating), so freezing growth always wins below zero.
    """
    if not math.isfinite(delta_t):
        raise InvalidConfigError("temperature change must be finite")
    rule = rule or DEFAULT_EXPANSION_RULES[phase]
    if rule.convention is SignConvention.STANDARD:
        return rule.alpha * radius * delta_t
    return rule.alpha * radius * abs(delta_t)


def radius_increments(t_old: np.ndarray, t_new: np.ndarray,
                      radii: np.ndarray, phases: np.ndarray) -> np.ndarray:
    """Vectorized radius increments, splitting water paths at 0 degC.

    The liquid segment of each path uses the standard water coefficient,
    the sub-zero segment the expand-on-cooling ice coefficient.
    """
    d_rock = ALPHA_ROCK * radii * (t_new - t_old)
    liquid_span = np.maximum(t_new, 0.0) - np.maximum(t_old, 0.0)
    ice_span = np.minimum(t_new, 0.0) - np.minimum(t_old, 0.0)
    d_water = ALPHA_WATER * radii * liquid_span + ALPHA_ICE * radii * np.abs(ice_span)
    return np.where(phases == Phase.ROCK, d_rock, d_water)


def bond_thermal_force(k_n: float, area: float, alpha_b: float,
                       length0: float, delta_t: float) -> float:
    """Normal bond force increment from thermal strain of the bond material.

    ``-k_n * area * (alpha_b * length0 * delta_t)``; cooling yields a
    positive (compressive) increment.
    """
    if k_n <= 0 or area <= 0 or length0 <= 0:
        raise InvalidConfigError("k_n, area and length0 must be > 0")
    return -k_n * area * (alpha_b * length0 * delta_t)


# ---------------------------------------------------------------------------
# Contact statistics

@dataclass(frozen=True)
class ContactStats:
    """Contact network summary relative to the pre-cooling baseline.

    ``max_contact_force`` is the largest compressive normal contact force;
    ``contact_volume`` is the total overlap-lens volume, carried raw so the
    reduction percentage can be formed against the baseline.
    """

    max_contact_force: float            # N
    contact_pair_count: int
    force_increase_pct: float           # (current - baseline) / baseline * 100
    contact_volume_reduction_pct: float  # (baseline - current) / baseline * 100
    contact_volume: float = 0.0         # mm^3


def force_increase_pct(baseline_force: float, current_force: float) -> float:
    if baseline_force == 0:
        raise UndefinedStatisticError("force increase undefined for zero baseline")
    return (current_force - baseline_force) / baseline_force * 100.0


def volume_reduction_pct(baseline_volume: float, current_volume: float) -> float:
    if baseline_volume == 0:
        raise UndefinedStatisticError("volume reduction undefined for zero baseline")
    return (baseline_volume - current_volume) / baseline_volume * 100.0


def contact_statistics(system: ParticleSystem,
                       baseline: ContactStats | None = None) -> ContactStats:
    """Snapshot the contact network; percentages relative to ``baseline``."""
    force = system.max_compressive_force()
    count = system.active_pair_count()
    volume = system.contact_lens_volume()
    if baseline is None:
        return ContactStats(force, count, 0.0, 0.0, volume)
    return ContactStats(force, count,
                        force_increase_pct(baseline.max_contact_force, force),
                        volume_reduction_pct(baseline.contact_volume, volume),
                        volume)


# ---------------------------------------------------------------------------
# Freeze pipeline

@dataclass(frozen=True)
class FreezeConfig:
    """Stage schedule and coupling controls for one freeze run.

    The laboratory hold duration is replaced by conduction until the
    center-surface deviation passes the uniformity limit; the stage targets
    default to the freezing checkpoints 0, -10 and -20 degC.
    """

    start_temp: float = 20.0
    stage_temps: Sequence[float] = (0.0, -10.0, -20.0)
    substep_dt_max: float = 2.0          # degC per coupled substep
    water_prestress: float = 0.008       # water radius inflation at setup
    freeze_volume_jump: float = 0.0      # one-off volume jump at first freeze
    relax_steps: int = 150               # mechanical steps per substep
    stage_relax_tol: float = 1e-3        # unbalanced ratio at stage ends
    conduction_tol: float = 0.45         # degC, interior-boundary during substeps
    conduction_step_cap: int = 50_000
    mass_scale: float = 1.0e6

    def __post_init__(self):
        if self.substep_dt_max <= 0:
            raise InvalidConfigError("substep_dt_max must be > 0")
        if self.freeze_volume_jump < 0:
            raise InvalidConfigError("freeze_volume_jump must be >= 0")
        temps = [self.start_temp, *self.stage_temps]
        if any(t2 >= t1 for t1, t2 in zip(temps, temps[1:])):
            raise InvalidConfigError("stage temperatures must strictly decrease")

    @classmethod
    def to_target(cls, target_temp: float, start_temp: float = 20.0,
                  **kwargs) -> "FreezeConfig":
        """Stage checkpoints down to an arbitrary target temperature.

        The freezing checkpoints (0, -10, -20 degC) above the target are
        kept so stage statistics stay comparable across targets.
        """
        if target_temp >= start_temp:
            raise InvalidConfigError("target must lie below the start temperature")
        stages = [t for t in (0.0, -10.0, -20.0)
                  if start_temp > t > target_temp]
        stages.append(target_temp)
        return cls(start_temp=start_temp, stage_temps=tuple(stages), **kwargs)


@dataclass(frozen=True)
class FreezeStageRow:
    label: str
    temperature: float
    stats: ContactStats


@dataclass
class FreezeResult:
    baseline: ContactStats
    stages: list[FreezeStageRow]
    cracks: list[CrackEvent]
    field: TemperatureField
    system: ParticleSystem
    start_temp: float = 20.0

    def rows(self) -> list[FreezeStageRow]:
        base = FreezeStageRow(_stage_label(None, None), self.start_temp,
                              self.baseline)
        return [base] + list(self.stages)


def _stage_label(t_from: float | None, t_to: float | None) -> str:
    if t_from is None:
        return "baseline"
    def fmt(t):
        return f"{t:g}C"
    return f"{fmt(t_from)}~{fmt(t_to)}"


def run_freeze(assembly: ParticleAssembly,
               materials: dict[ContactKind, BondMaterial] | None = None,
               config: FreezeConfig = FreezeConfig()) -> FreezeResult:
    """Drive the coupled freeze: conduction, particle expansion, relaxation.

    Per stage, the boundary temperature steps down in small increments; after
    each increment the temperature field conducts to near-uniformity, then
    particle radii and bond thermal offsets update from the per-particle
    temperature changes and the contact network relaxes mechanically.
    Contact statistics are captured at the baseline and at each stage end.
    """
    if assembly.n_particles == 0:
        raise InvalidConfigError("cannot freeze an empty assembly")
    system = build_system(assembly, materials, mass_scale=config.mass_scale)

    water = system.phases == Phase.WATER
    if config.water_prestress > 0 and np.any(water):
        system.apply_radius_increments(
            np.where(water, system.radii * config.water_prestress, 0.0))
    skin = 0.25 * float(system.radii.min())
    system.refresh_transient_contacts(skin)
    system.equilibrate(tol=config.stage_relax_tol, max_steps=30_000)

    boundary = surface_particle_ids(assembly)
    field = TemperatureField(np.full(assembly.n_particles, config.start_temp,
                                     dtype=float), boundary)
    # conduction runs over the full near-contact graph, not just bonds
    cond_ia, cond_ib, _ = contact_arrays(assembly,
                                         0.05 * float(assembly.radii.min()))
    conduction = ConductionNetwork(assembly, (cond_ia, cond_ib))
    reachable = conduction.boundary_reachable(boundary)

    baseline = contact_statistics(system)
    stages: list[FreezeStageRow] = []
    t_prev_particles = field.temperatures.copy()
    t_boundary = config.start_temp
    # optional discrete expansion applied once per particle at first freeze
    jump_factor = (1.0 + config.freeze_volume_jump) ** (1.0 / 3.0) - 1.0
    has_jumped = np.zeros(assembly.n_particles, dtype=bool)

    for target in config.stage_temps:
        stage_from = t_boundary
        n_sub = max(1, math.ceil(abs(target - t_boundary) / config.substep_dt_max))
        for i in range(n_sub):
            t_boundary = stage_from + (target - stage_from) * (i + 1) / n_sub
            field.pin_boundary(t_boundary)
            _conduct_until(conduction, field, t_boundary, config.conduction_tol,
                           config.conduction_step_cap, reachable)
            d_temp = field.temperatures - t_prev_particles
            d_radius = radius_increments(t_prev_particles, field.temperatures,
                                         system.radii, system.phases)
            if jump_factor > 0.0:
                newly_frozen = water & (field.temperatures <= 0.0) & ~has_jumped
                d_radius = d_radius + np.where(newly_frozen,
                                               system.radii * jump_factor, 0.0)
                has_jumped |= newly_frozen
            alpha_now = _alpha_array(system.phases, field.temperatures)
            system.apply_radius_increments(d_radius)
            system.apply_bond_thermal_offsets(d_temp, alpha_now)
            t_prev_particles = field.temperatures.copy()
            system.refresh_transient_contacts(skin)
            system.run(config.relax_steps)
        # stage end: tighter uniformity, then mechanical settling
        _conduct_until(conduction, field, t_boundary,
                       0.9 * UNIFORMITY_LIMIT, config.conduction_step_cap,
                       reachable)
        d_temp = field.temperatures - t_prev_particles
        if np.any(d_temp != 0.0):
            d_radius = radius_increments(t_prev_particles, field.temperatures,
                                         system.radii, system.phases)
            system.apply_radius_increments(d_radius)
            system.apply_bond_thermal_offsets(
                d_temp, _alpha_array(system.phases, field.temperatures))
            t_prev_particles = field.temperatures.copy()
        system.refresh_transient_contacts(skin)
        system.equilibrate(tol=config.stage_relax_tol, max_steps=30_000)
        stats = contact_statistics(system, baseline)
        stages.append(FreezeStageRow(_stage_label(stage_from, target), target, stats))

    return FreezeResult(baseline, stages, list(system.crack_events), field,
                        system, config.start_temp)


def _alpha_array(phases: np.ndarray, temperatures: np.ndarray) -> np.ndarray:
    alpha = np.full(len(phases), ALPHA_ROCK)
    water = phases == Phase.WATER
    alpha[water] = np.where(temperatures[water] > 0.0, ALPHA_WATER, ALPHA_ICE)
    return alpha


def _conduct_until(network: ConductionNetwork, field: TemperatureField,
                   boundary_value: float, tol: float, step_cap: int,
                   reachable: np.ndarray | None = None) -> None:
    """Explicit conduction steps until the interior tracks the boundary.

    Particles without a conductive path to the boundary follow the schedule
    directly (the chamber bathes the whole specimen); only reachable interior
    particles enter the convergence measure.
    """
    n = len(field.temperatures)
    if reachable is None:
        reachable = network.boundary_reachable(field.boundary_ids)
    field.temperatures[~reachable] = boundary_value
    interior = reachable.copy()
    interior[field.boundary_ids] = False
    if not np.any(interior):
        field.temperatures[:] = boundary_value
        field.pin_boundary(boundary_value)
        return
    dt = network.worst_case_stable_dt()
    if not math.isfinite(dt):
        field.temperatures[:] = boundary_value
        field.pin_boundary(boundary_value)
        return
    for _ in range(step_cap):
        dev = float(np.max(np.abs(field.temperatures[interior] - boundary_value)))
        if dev <= tol:
            return
        network.step(field, dt, boundary_value)
        field.temperatures[~reachable] = boundary_value
