"""Bonded-particle mechanics: contact springs, explicit dynamics, uniaxial testing.

Unit system is mm-N-MPa-tonne-second (1 N = 1 tonne*mm/s^2).  Contacts that
carry an intact bond act through the bond springs (normal and shear, tension
and compression, preloaded by any installation overlap); broken bonds and
newly formed contacts act through a compression-only linear spring.  Bond
normal force responds to the effective overlap, which includes the
accumulated thermal offsets applied by the freeze-coupling driver.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import NamedTuple

import numpy as np

from .errors import (CurveWindowError, InvalidConfigError, PreconditionError,
                     StabilityError, UndefinedStatisticError)
from .packing import ContactKind, ParticleAssembly, contact_arrays

#: Default Cundall local damping coefficient for quasi-static runs.
DEFAULT_DAMPING = 0.7

#: Safety factor applied to the critical explicit time step.
DT_SAFETY = 0.2

#: Density multiplier for quasi-static runs; validity is enforced through the
#: kinetic/strain energy ratio, not wall-clock loading rates.
DEFAULT_MASS_SCALE = 1.0e6

#: Mean unbalanced-force ratio accepted as equilibrium.
EQUILIBRIUM_RATIO = 1e-4


@dataclass(frozen=True)
class BondMaterial:
    """Micro-parameters of one contact/bond type.

    ``contact_modulus`` and ``bond_modulus`` in GPa, strengths in MPa,
    friction angle in degrees.  ``stiffness_ratio`` and ``poisson_micro``
    are carried for completeness; unbonded contacts here are frictionless so
    they do not enter the force laws.
    """

    contact_modulus: float
    stiffness_ratio: float
    poisson_micro: float
    bond_modulus: float
    bond_stiffness_ratio: float
    tensile_strength: float
    cohesion: float
    friction_angle: float

    def __post_init__(self):
        if self.contact_modulus <= 0 or self.bond_modulus <= 0:
            raise InvalidConfigError("moduli must be > 0")
        if self.stiffness_ratio <= 0 or self.bond_stiffness_ratio <= 0:
            raise InvalidConfigError("stiffness ratios must be > 0")
        if not (0.0 <= self.friction_angle < 90.0):
            raise InvalidConfigError("friction angle must be in [0, 90) degrees")
        if self.tensile_strength < 0 or self.cohesion < 0:
            raise InvalidConfigError("strengths must be >= 0")

    def scaled(self, modulus_factor: float = 1.0,
               strength_factor: float = 1.0) -> "BondMaterial":
        return replace(self,
                       contact_modulus=self.contact_modulus * modulus_factor,
                       bond_modulus=self.bond_modulus * modulus_factor,
                       tensile_strength=self.tensile_strength * strength_factor,
                       cohesion=self.cohesion * strength_factor)


#: Calibrated micro-parameters for the saturated specimen's three bond types.
SATURATED_MATERIALS: dict[ContactKind, BondMaterial] = {
    ContactKind.ROCK_ROCK: BondMaterial(9.0, 1.0, 0.6, 9.0, 2.5, 40.0, 40.0, 45.0),
    ContactKind.ROCK_WATER: BondMaterial(9.0, 1.0, 0.6, 4.5, 2.5, 60.0, 60.0, 0.0),
    ContactKind.WATER_WATER: BondMaterial(9.0, 1.0, 0.6, 2.0, 2.5, 60.0, 60.0, 0.0),
}

#: Calibrated micro-parameters for the dry specimen (rock bonds only).
DRY_MATERIALS: dict[ContactKind, BondMaterial] = {
    ContactKind.ROCK_ROCK: BondMaterial(9.0, 1.0, 0.6, 4.23, 2.5, 80.0, 80.0, 45.0),
}


def bond_cross_section(r_a: float | np.ndarray, r_b: float | np.ndarray,
                       mode: str = "sum"):
    """Bond cross-sectional area, mm^2.

    Default follows the radius-sum disc pi*(r_a+r_b)^2; ``mode="min"``
    selects the conventional disc of the smaller radius.
    """
    if mode == "sum":
        return np.pi * (np.asarray(r_a) + np.asarray(r_b)) ** 2
    if mode == "min":
        return np.pi * np.minimum(r_a, r_b) ** 2
    raise InvalidConfigError(f"unknown bond area mode {mode!r}")


def contact_cross_section(r_a, r_b):
    """Linear-contact area: disc of the smaller radius, mm^2."""
    return np.pi * np.minimum(r_a, r_b) ** 2


class BondHealth(Enum):
    INTACT = "intact"
    BROKEN_TENSILE = "tensile"
    BROKEN_SHEAR = "shear"


@dataclass
class BondState:
    """Scalar state of one parallel bond for failure evaluation.

    ``normal_force`` is compression-positive; ``shear_force`` is the
    magnitude of the accumulated shear.  ``bending_moment`` contributes to
    the extreme-fiber tensile stress when ``include_bending`` is on.
    """

    normal_force: float          # N, compression positive
    shear_force: float           # N
    area: float                  # mm^2
    material: BondMaterial
    bending_moment: float = 0.0  # N mm
    intact: bool = True

    @property
    def bond_radius(self) -> float:
        return math.sqrt(self.area / math.pi)

    def normal_stress(self) -> float:
        return self.normal_force / self.area

    def shear_stress(self) -> float:
        return self.shear_force / self.area

    def bending_stress(self) -> float:
        c = self.bond_radius
        moment_of_inertia = math.pi * c ** 4 / 4.0
        return abs(self.bending_moment) * c / moment_of_inertia


def check_bond_failure(bond: BondState, include_bending: bool = True) -> BondHealth:
    """Evaluate the bond strength envelope.

    Tensile failure when extreme-fiber tension exceeds the tensile strength;
    shear failure when shear stress exceeds cohesion plus the
    compression-scaled friction term.
    """
    if not bond.intact:
        raise InvalidConfigError("bond is already broken")
    sigma_n = bond.normal_stress()          # compression positive
    tension = -sigma_n
    if include_bending:
        tension += bond.bending_stress()
    if tension > bond.material.tensile_strength:
        return BondHealth.BROKEN_TENSILE
    tan_phi = math.tan(math.radians(bond.material.friction_angle))
    shear_limit = bond.material.cohesion + sigma_n * tan_phi
    if bond.shear_stress() > shear_limit:
        return BondHealth.BROKEN_SHEAR
    return BondHealth.INTACT


class BondForces(NamedTuple):
    normal_force: float
    shear_force: float


def bond_stiffnesses(material: BondMaterial, r_a: float, r_b: float,
                     area_mode: str = "sum") -> tuple[float, float, float]:
    """(k_normal, k_shear, area) of the bond springs in N/mm and mm^2.

    Normal stiffness is modulus across the contact span divided by the span,
    times the bond cross-section; shear stiffness divides by the bond
    stiffness ratio.
    """
    area = float(bond_cross_section(r_a, r_b, area_mode))
    k_n = material.bond_modulus * 1e3 / (r_a + r_b) * area
    return k_n, k_n / material.bond_stiffness_ratio, area


def bond_force_update(material: BondMaterial, r_a: float, r_b: float,
                      forces: BondForces, du_normal: float, du_shear: float,
                      area_mode: str = "sum") -> BondForces:
    """Incremental linear bond springs.

    ``du_normal`` > 0 closes the contact (adds compression); ``du_shear`` is
    the tangential slip magnitude accumulated into the shear force.  Failure
    checking is delegated to :func:`check_bond_failure`.
    """
    k_n, k_s, _ = bond_stiffnesses(material, r_a, r_b, area_mode)
    return BondForces(forces.normal_force + k_n * du_normal,
                      forces.shear_force + k_s * du_shear)


@dataclass(frozen=True)
class CrackEvent:
    time: float
    position: tuple[float, float, float]
    mode: str                    # "tensile" | "shear"


@dataclass
class StressStrainCurve:
    """Axial stress (MPa) versus axial strain samples from a loading test."""

    strain: np.ndarray
    stress: np.ndarray
    time: np.ndarray

    def __len__(self) -> int:
        return len(self.strain)


@dataclass(frozen=True)
class MechanicalReport:
    peak_strength: float         # MPa
    elastic_modulus: float       # GPa, regression over the strain window
    peak_strain: float
    strain_energy: float         # kJ/m^3, curve integral up to the peak


#: Strain window for modulus regression (fractions).
MODULUS_WINDOW = (0.0005, 0.0015)


def extract_mechanical_params(curve: StressStrainCurve) -> MechanicalReport:
    """Peak strength, windowed modulus and strain energy from one curve."""
    if len(curve) == 0 or float(np.max(np.abs(curve.stress))) == 0.0:
        raise UndefinedStatisticError("curve carries no stress signal")
    lo, hi = MODULUS_WINDOW
    if float(curve.strain.max()) < hi:
        raise CurveWindowError(
            f"curve must span strain >= {hi:.4%}, got {curve.strain.max():.4%}")
    mask = (curve.strain >= lo) & (curve.strain <= hi)
    if int(mask.sum()) < 2:
        raise CurveWindowError("fewer than 2 samples in the modulus window")
    slope = np.polyfit(curve.strain[mask], curve.stress[mask], 1)[0]  # MPa
    peak_idx = int(np.argmax(curve.stress))
    peak_strength = float(curve.stress[peak_idx])
    peak_strain = float(curve.strain[peak_idx])
    energy = float(np.trapezoid(curve.stress[:peak_idx + 1],
                                curve.strain[:peak_idx + 1])) * 1e3  # kJ/m^3
    return MechanicalReport(peak_strength, slope / 1e3, peak_strain, energy)


# ---------------------------------------------------------------------------
# Explicit-dynamics particle system

class ParticleSystem:
    """Mutable simulation state: particles, bonds, transient contacts, platens.

    Built once from an assembly; bonds are installed on pairs within
    ``bond_gap_tol`` and never added afterwards.  Transient (unbonded)
    contacts are refreshed from geometry as particles move or grow.
    """

    def __init__(self, assembly: ParticleAssembly,
                 materials: dict[ContactKind, BondMaterial],
                 *, bond_gap_tol: float | None = None,
                 area_mode: str = "sum",
                 damping: float = DEFAULT_DAMPING,
                 mass_scale: float = DEFAULT_MASS_SCALE,
                 include_bending: bool = True):
        self.assembly = assembly
        self.materials = dict(materials)
        self.area_mode = area_mode
        self.damping = damping
        self.mass_scale = mass_scale
        self.include_bending = include_bending

        self.n = assembly.n_particles
        self.pos = assembly.centers.copy()
        self.vel = np.zeros_like(self.pos)
        self.radii = assembly.radii.copy()
        self.phases = assembly.phases.copy()
        self.mass = assembly.masses() * mass_scale
        self.inv_mass = np.where(self.mass > 0, 1.0 / np.maximum(self.mass, 1e-300), 0.0)
        self.time = 0.0
        self.step_count = 0
        self.crack_events: list[CrackEvent] = []

        if bond_gap_tol is None:
            # detection-tolerance default: 5% of the minimum radius, acting
            # as the parallel-bond installation gap
            bond_gap_tol = 0.05 * float(self.radii.min()) if self.n else 0.0
        self.bond_gap_tol = bond_gap_tol
        self._install_bonds()

        self.t_ia = np.zeros(0, dtype=np.int64)
        self.t_ib = np.zeros(0, dtype=np.int64)
        self.t_klin = np.zeros(0)
        self.walls: dict | None = None
        self._dt_cache: float | None = None

    # -- construction -------------------------------------------------------

    def _material_for(self, kind_arr: np.ndarray, attr: str) -> np.ndarray:
        out = np.empty(len(kind_arr))
        for kind in np.unique(kind_arr):
            mat = self.materials.get(ContactKind(int(kind)))
            if mat is None:
                raise InvalidConfigError(
                    f"no material defined for contact kind {ContactKind(int(kind)).name}")
            out[kind_arr == kind] = getattr(mat, attr)
        return out

    def _install_bonds(self) -> None:
        ia, ib, gap = contact_arrays(self.assembly, self.bond_gap_tol)
        self.b_ia, self.b_ib = ia, ib
        m = len(ia)
        self.b_kind = (self.phases[ia].astype(np.int64)
                       + self.phases[ib].astype(np.int64)).astype(np.int8)
        r_a, r_b = self.radii[ia], self.radii[ib]
        span = r_a + r_b
        self.b_area = np.asarray(bond_cross_section(r_a, r_b, self.area_mode), dtype=float)
        self.b_k_normal = self._material_for(self.b_kind, "bond_modulus") * 1e3 \
            / span * self.b_area
        self.b_k_shear = self.b_k_normal / self._material_for(
            self.b_kind, "bond_stiffness_ratio")
        area_lin = np.asarray(contact_cross_section(r_a, r_b), dtype=float)
        self.b_k_lin = self._material_for(self.b_kind, "contact_modulus") * 1e3 \
            / span * area_lin
        self.b_tensile = self._material_for(self.b_kind, "tensile_strength")
        self.b_cohesion = self._material_for(self.b_kind, "cohesion")
        self.b_tanphi = np.tan(np.radians(self._material_for(self.b_kind,
                                                             "friction_angle")))
        overlap = -gap
        # Bonds across a gap install force-free; overlapped bonds are preloaded.
        self.b_form_ref = np.minimum(overlap, 0.0)
        self.b_offset = np.zeros(m)
        self.b_length0 = np.linalg.norm(self.pos[ib] - self.pos[ia], axis=1) if m else np.zeros(0)
        self.b_intact = np.ones(m, dtype=bool)
        self.b_shear = np.zeros((m, 3))
        self._bond_keys = ia * np.int64(max(self.n, 1)) + ib

    @property
    def n_bonds(self) -> int:
        return len(self.b_ia)

    @property
    def n_intact_bonds(self) -> int:
        return int(np.count_nonzero(self.b_intact))

    # -- platens -------------------------------------------------------------

    def set_platens(self) -> None:
        """Install rigid frictionless platens touching the axial extremes."""
        if self.n == 0:
            raise InvalidConfigError("cannot set platens on an empty system")
        z_bot = float(np.min(self.pos[:, 2] - self.radii))
        z_top = float(np.max(self.pos[:, 2] + self.radii))
        k_wall = self._material_for(
            (self.phases.astype(np.int64) * 2).astype(np.int8), "contact_modulus") \
            * 1e3 * np.pi * self.radii
        self.walls = {"z_bot": z_bot, "z_top": z_top, "k": k_wall,
                      "gap0": z_top - z_bot, "f_bot": 0.0, "f_top": 0.0}
        self._dt_cache = None

    def platen_strain(self) -> float:
        w = self.walls
        return (w["gap0"] - (w["z_top"] - w["z_bot"])) / w["gap0"]

    def platen_stress(self) -> float:
        """Mean platen reaction over the specimen cross-section, MPa."""
        w = self.walls
        area = math.pi * self.assembly.domain.radius ** 2
        return 0.5 * (abs(w["f_bot"]) + abs(w["f_top"])) / area

    # -- geometry and forces --------------------------------------------------

    def _bond_geometry(self):
        d = self.pos[self.b_ib] - self.pos[self.b_ia]
        dist = np.linalg.norm(d, axis=1)
        normal = d / np.maximum(dist, 1e-12)[:, None]
        overlap = self.radii[self.b_ia] + self.radii[self.b_ib] - dist
        return dist, normal, overlap

    def bond_normal_forces(self) -> np.ndarray:
        """Per-bond normal force, compression positive; broken bonds act as
        compression-only linear contacts on geometric overlap."""
        _, _, overlap = self._bond_geometry()
        eff = overlap + self.b_offset
        f_bond = self.b_k_normal * (eff - self.b_form_ref)
        f_lin = self.b_k_lin * np.maximum(overlap, 0.0)
        return np.where(self.b_intact, f_bond, f_lin)

    def _accumulate_forces(self, dt: float, mutate: bool = True):
        force = np.zeros_like(self.pos)
        contact_mag_sum = 0.0
        contact_count = 0

        if self.n_bonds:
            dist, normal, overlap = self._bond_geometry()
            eff = overlap + self.b_offset
            f_bond = self.b_k_normal * (eff - self.b_form_ref)
            f_lin = self.b_k_lin * np.maximum(overlap, 0.0)

            if mutate:
                # incremental shear on intact bonds, rotated into the tangent plane
                v_rel = self.vel[self.b_ib] - self.vel[self.b_ia]
                v_n = np.einsum("ij,ij->i", v_rel, normal)
                v_t = v_rel - v_n[:, None] * normal
                self.b_shear[self.b_intact] -= (self.b_k_shear[self.b_intact, None]
                                                * v_t[self.b_intact] * dt)
                s_n = np.einsum("ij,ij->i", self.b_shear, normal)
                self.b_shear -= s_n[:, None] * normal
                self.b_shear[~self.b_intact] = 0.0
                self._check_failures(np.where(self.b_intact, f_bond, f_lin))

            fn = np.where(self.b_intact, f_bond, f_lin)
            shear = np.where(self.b_intact[:, None], self.b_shear, 0.0)

            force_on_b = fn[:, None] * normal + shear
            for axis in range(3):
                force[:, axis] += np.bincount(self.b_ib,
                                              weights=force_on_b[:, axis],
                                              minlength=self.n)
                force[:, axis] -= np.bincount(self.b_ia,
                                              weights=force_on_b[:, axis],
                                              minlength=self.n)
            contact_mag_sum += float(np.abs(fn).sum()
                                     + np.linalg.norm(shear, axis=1).sum())
            contact_count += self.n_bonds

        if len(self.t_ia):
            d = self.pos[self.t_ib] - self.pos[self.t_ia]
            dist = np.linalg.norm(d, axis=1)
            normal = d / np.maximum(dist, 1e-12)[:, None]
            overlap = self.radii[self.t_ia] + self.radii[self.t_ib] - dist
            fn = self.t_klin * np.maximum(overlap, 0.0)
            force_on_b = fn[:, None] * normal
            for axis in range(3):
                force[:, axis] += np.bincount(self.t_ib,
                                              weights=force_on_b[:, axis],
                                              minlength=self.n)
                force[:, axis] -= np.bincount(self.t_ia,
                                              weights=force_on_b[:, axis],
                                              minlength=self.n)
            contact_mag_sum += float(np.abs(fn).sum())
            contact_count += len(self.t_ia)

        if self.walls is not None:
            w = self.walls
            ov_bot = w["z_bot"] + self.radii - self.pos[:, 2]
            f_bot = w["k"] * np.maximum(ov_bot, 0.0)
            ov_top = self.pos[:, 2] + self.radii - w["z_top"]
            f_top = w["k"] * np.maximum(ov_top, 0.0)
            force[:, 2] += f_bot - f_top
            w["f_bot"] = float(f_bot.sum())
            w["f_top"] = float(f_top.sum())
            contact_mag_sum += w["f_bot"] + w["f_top"]
            contact_count += int(np.count_nonzero(f_bot) + np.count_nonzero(f_top))

        return force, contact_mag_sum, max(contact_count, 1)

    def _check_failures(self, fn: np.ndarray) -> None:
        if not self.n_bonds:
            return
        intact = self.b_intact
        sigma_n = np.where(intact, fn / self.b_area, 0.0)
        # rotational DOF are not carried, so bending moments stay zero and the
        # extreme-fiber term of check_bond_failure contributes nothing here
        tension = -sigma_n
        shear_mag = np.linalg.norm(self.b_shear, axis=1)
        tau = np.where(intact, shear_mag / self.b_area, 0.0)
        tensile_fail = intact & (tension > self.b_tensile)
        shear_fail = intact & ~tensile_fail \
            & (tau > self.b_cohesion + sigma_n * self.b_tanphi)
        failed = np.flatnonzero(tensile_fail | shear_fail)
        if len(failed) == 0:
            return
        mid = 0.5 * (self.pos[self.b_ia[failed]] + self.pos[self.b_ib[failed]])
        for row, idx in enumerate(failed):
            mode = "tensile" if tensile_fail[idx] else "shear"
            self.crack_events.append(CrackEvent(
                self.time, tuple(float(x) for x in mid[row]), mode))
        self.b_intact[failed] = False
        self.b_shear[failed] = 0.0

    # -- stepping -------------------------------------------------------------

    def stable_dt(self) -> float:
        """Safety-scaled critical step from per-particle stiffness totals."""
        if self._dt_cache is not None:
            return self._dt_cache
        k_sum = np.zeros(self.n)
        if self.n_bonds:
            k_pair = np.where(self.b_intact, self.b_k_normal + self.b_k_shear,
                              self.b_k_lin)
            k_sum += np.bincount(self.b_ia, weights=k_pair, minlength=self.n)
            k_sum += np.bincount(self.b_ib, weights=k_pair, minlength=self.n)
        if len(self.t_ia):
            k_sum += np.bincount(self.t_ia, weights=self.t_klin, minlength=self.n)
            k_sum += np.bincount(self.t_ib, weights=self.t_klin, minlength=self.n)
        if self.walls is not None:
            k_sum += self.walls["k"]
        active = k_sum > 0
        if not np.any(active):
            self._dt_cache = np.inf
            return self._dt_cache
        self._dt_cache = DT_SAFETY * float(
            np.min(np.sqrt(self.mass[active] / k_sum[active])))
        return self._dt_cache

    def step(self, dt: float) -> None:
        """One explicit step: forces, local damping, semi-implicit Euler."""
        if not (dt > 0.0 and math.isfinite(dt)):
            raise InvalidConfigError(f"dt must be positive and finite, got {dt}")
        if dt > self.stable_dt() * (1.0 + 1e-12):
            raise StabilityError(
                f"dt={dt:g} s exceeds stability limit {self.stable_dt():g} s")
        force, _, _ = self._accumulate_forces(dt)
        if self.damping > 0.0:
            force = force - self.damping * np.abs(force) * np.sign(self.vel)
        self.vel += force * self.inv_mass[:, None] * dt
        self.pos += self.vel * dt
        self.time += dt
        self.step_count += 1

    def run(self, n_steps: int, dt: float | None = None) -> None:
        dt = self.stable_dt() if dt is None else dt
        for _ in range(n_steps):
            self.step(dt)

    def unbalanced_ratio(self) -> float:
        """Mean net force over mean contact force magnitude."""
        force, mag_sum, count = self._accumulate_forces(0.0, mutate=False)
        mean_contact = mag_sum / count
        if mean_contact <= 1e-12:
            return 0.0
        return (float(np.abs(force).sum()) / max(self.n, 1)) / mean_contact

    def equilibrate(self, tol: float = EQUILIBRIUM_RATIO,
                    max_steps: int = 60_000, check_every: int = 100,
                    quench_every: int = 1000) -> float:
        """Damped stepping until the unbalanced ratio drops below ``tol``.

        Velocities are zeroed periodically, which kills the limit cycles of
        rattlers and flickering near-zero contacts.
        """
        dt = self.stable_dt()
        if not math.isfinite(dt):
            return 0.0
        ratio = self.unbalanced_ratio()
        steps = 0
        while ratio > tol and steps < max_steps:
            for _ in range(check_every):
                self.step(dt)
            steps += check_every
            if steps % quench_every == 0:
                self.vel[:] = 0.0
            ratio = self.unbalanced_ratio()
        self.vel[:] = 0.0
        return ratio

    # -- transient contacts ----------------------------------------------------

    def refresh_transient_contacts(self, tolerance: float = 0.0) -> None:
        """Rebuild unbonded contacts from current geometry.

        Pairs that carry a bond entry (intact or broken) are excluded; broken
        bonds already act as linear contacts in the bond pass.
        """
        snapshot = ParticleAssembly(self.pos, self.radii, self.phases,
                                    self.assembly.densities, self.assembly.domain)
        ia, ib, _ = contact_arrays(snapshot, tolerance)
        if len(ia):
            keys = ia * np.int64(max(self.n, 1)) + ib
            new = ~np.isin(keys, self._bond_keys)
            ia, ib = ia[new], ib[new]
        r_a, r_b = self.radii[ia], self.radii[ib]
        kind = (self.phases[ia].astype(np.int64)
                + self.phases[ib].astype(np.int64)).astype(np.int8)
        area = np.asarray(contact_cross_section(r_a, r_b), dtype=float)
        self.t_ia, self.t_ib = ia, ib
        self.t_klin = self._material_for(kind, "contact_modulus") * 1e3 \
            / (r_a + r_b) * area
        self._dt_cache = None

    # -- thermal coupling hooks -------------------------------------------------

    def apply_radius_increments(self, d_radius: np.ndarray) -> None:
        self.radii += d_radius
        self._dt_cache = None

    def apply_bond_thermal_offsets(self, d_temp: np.ndarray,
                                   alpha: np.ndarray) -> None:
        """Accumulate thermal displacement offsets on intact bonds.

        The offset per bond is ``-alpha_b * L0 * dT`` with ``alpha_b`` the
        smaller expansion coefficient of the pair and ``dT`` the mean
        temperature change of the two particles; cooling therefore adds
        compression, canceling the geometric shrink of a uniform material.
        """
        if not self.n_bonds:
            return
        alpha_b = np.minimum(alpha[self.b_ia], alpha[self.b_ib])
        dt_bond = 0.5 * (d_temp[self.b_ia] + d_temp[self.b_ib])
        self.b_offset[self.b_intact] += (-alpha_b * self.b_length0
                                         * dt_bond)[self.b_intact]

    # -- observables --------------------------------------------------------------

    def kinetic_energy(self) -> float:
        return 0.5 * float(np.sum(self.mass * np.sum(self.vel ** 2, axis=1)))

    def momentum(self) -> np.ndarray:
        return (self.mass[:, None] * self.vel).sum(axis=0)

    def max_compressive_force(self) -> float:
        """Largest compressive normal contact force over bonds and contacts."""
        best = 0.0
        if self.n_bonds:
            best = max(best, float(np.max(np.maximum(self.bond_normal_forces(), 0.0),
                                          initial=0.0)))
        if len(self.t_ia):
            d = self.pos[self.t_ib] - self.pos[self.t_ia]
            overlap = self.radii[self.t_ia] + self.radii[self.t_ib] \
                - np.linalg.norm(d, axis=1)
            best = max(best, float(np.max(self.t_klin * np.maximum(overlap, 0.0),
                                          initial=0.0)))
        return best

    def active_pair_count(self) -> int:
        """Intact bonds plus unbonded pairs currently overlapping."""
        count = self.n_intact_bonds
        if self.n_bonds:
            _, _, overlap = self._bond_geometry()
            count += int(np.count_nonzero(~self.b_intact & (overlap > 0.0)))
        if len(self.t_ia):
            d = self.pos[self.t_ib] - self.pos[self.t_ia]
            overlap = self.radii[self.t_ia] + self.radii[self.t_ib] \
                - np.linalg.norm(d, axis=1)
            count += int(np.count_nonzero(overlap > 0.0))
        return count

    def contact_lens_volume(self) -> float:
        """Total overlap-lens volume over all geometrically overlapping pairs."""
        total = 0.0
        for ia, ib in ((self.b_ia, self.b_ib), (self.t_ia, self.t_ib)):
            if not len(ia):
                continue
            d = np.linalg.norm(self.pos[ib] - self.pos[ia], axis=1)
            r_a, r_b = self.radii[ia], self.radii[ib]
            mask = (r_a + r_b - d) > 0.0
            if not np.any(mask):
                continue
            dd, ra, rb = d[mask], r_a[mask], r_b[mask]
            lens = (np.pi * (ra + rb - dd) ** 2
                    * (dd ** 2 + 2.0 * dd * (ra + rb) - 3.0 * (ra - rb) ** 2)
                    / (12.0 * np.maximum(dd, 1e-12)))
            total += float(lens.sum())
        return total


def integrate_step(system: ParticleSystem, dt: float) -> None:
    """Advance the system one explicit step; rejects unstable steps."""
    system.step(dt)


# ---------------------------------------------------------------------------
# Uniaxial compression test and calibration

def build_system(assembly: ParticleAssembly,
                 materials: dict[ContactKind, BondMaterial] | None = None,
                 **kwargs) -> ParticleSystem:
    """Construct a particle system with sensible defaults for the phase mix."""
    if materials is None:
        materials = SATURATED_MATERIALS if assembly.n_water else DRY_MATERIALS
    return ParticleSystem(assembly, materials, **kwargs)


def run_uniaxial_test(assembly_or_system, platen_velocity: float,
                      target_strain: float,
                      materials: dict[ContactKind, BondMaterial] | None = None,
                      *, sample_interval: float = 2e-5,
                      stop_fraction: float = 0.6,
                      max_steps: int = 2_000_000,
                      mass_scale: float = DEFAULT_MASS_SCALE) -> StressStrainCurve:
    """Rigid-platen axial compression to ``target_strain``.

    Accepts either a raw assembly (it is then equilibrated against the
    platens first) or a prepared :class:`ParticleSystem`, which must already
    satisfy the equilibrium precondition.  Sampling occurs on a fixed strain
    grid; the run stops at the target strain or once post-peak stress falls
    below ``stop_fraction`` of the peak.
    """
    if isinstance(assembly_or_system, ParticleSystem):
        system = assembly_or_system
        if system.walls is None:
            system.set_platens()
        if system.unbalanced_ratio() > EQUILIBRIUM_RATIO:
            raise PreconditionError(
                "system is not equilibrated (mean unbalanced force ratio >= 1e-4)")
    else:
        system = build_system(assembly_or_system, materials, mass_scale=mass_scale)
        # settle unconfined first, then seat the platens force-free at the
        # relaxed extremes so zero velocity means zero measured stress
        system.equilibrate()
        system.set_platens()

    if platen_velocity < 0:
        raise InvalidConfigError("platen velocity must be >= 0")

    dt = system.stable_dt()
    strains, stresses, times = [0.0], [system.platen_stress()], [system.time]
    if platen_velocity == 0.0:
        for _ in range(5):
            system.run(20, dt)
            strains.append(system.platen_strain())
            stresses.append(system.platen_stress())
            times.append(system.time)
        return StressStrainCurve(np.array(strains), np.array(stresses),
                                 np.array(times))

    gap0 = system.walls["gap0"]
    next_sample = sample_interval
    peak = 0.0
    stress_acc = 0.0
    acc_count = 0
    refresh_every = 500
    for step in range(max_steps):
        system.walls["z_top"] -= platen_velocity * dt
        system.step(dt)
        stress_acc += system.platen_stress()
        acc_count += 1
        strain = system.platen_strain()
        if strain >= next_sample:
            stress = stress_acc / acc_count
            strains.append(strain)
            stresses.append(stress)
            times.append(system.time)
            stress_acc, acc_count = 0.0, 0
            next_sample += sample_interval
            peak = max(peak, stress)
            if strain >= target_strain:
                break
            if (peak > 0 and stress < stop_fraction * peak
                    and strain > MODULUS_WINDOW[1] * 1.5):
                break
        if (step + 1) % refresh_every == 0:
            system.refresh_transient_contacts(0.1 * float(system.radii.min()))
            dt = system.stable_dt()
    return StressStrainCurve(np.array(strains), np.array(stresses), np.array(times))


@dataclass(frozen=True)
class CalibrationRound:
    round_index: int
    material: BondMaterial
    sim_peak: float
    sim_modulus: float
    peak_rel_err: float
    modulus_rel_err: float


@dataclass
class CalibrationResult:
    material: BondMaterial
    converged: bool
    sim_runs: int
    adjustment_rounds: int
    audit: list[CalibrationRound] = field(default_factory=list)

    @property
    def final(self) -> CalibrationRound:
        return self.audit[-1]


#: Relative-error target for calibration convergence.
CALIBRATION_TOLERANCE = 0.05


def calibrate(targets: MechanicalReport, initial: BondMaterial, budget: int,
              assembly: ParticleAssembly, *,
              platen_velocity: float, target_strain: float,
              water_materials: dict[ContactKind, BondMaterial] | None = None,
              mass_scale: float = DEFAULT_MASS_SCALE) -> CalibrationResult:
    """Deterministic coordinate descent on the rock-bond micro-parameters.

    Scales the contact/bond moduli to match the target modulus, then the
    bond strengths to match the target peak, re-simulating after each
    adjustment until both relative errors fall under 5% or the simulation
    budget is exhausted (the result is then flagged non-converged).
    """
    if targets.peak_strength <= 0 or targets.elastic_modulus <= 0:
        raise InvalidConfigError("calibration targets must be positive")
    if budget < 1:
        raise InvalidConfigError("budget must be >= 1")

    def run_with(mod_scale: float, str_scale: float) -> MechanicalReport:
        mats = dict(water_materials or
                    (SATURATED_MATERIALS if assembly.n_water else {}))
        mats[ContactKind.ROCK_ROCK] = initial.scaled(mod_scale, str_scale)
        curve = run_uniaxial_test(assembly.copy(), platen_velocity, target_strain,
                                  mats, mass_scale=mass_scale)
        return extract_mechanical_params(curve)

    # secant updates in log space absorb the mildly nonlinear response of the
    # packing; each knob keeps its last (log scale, log response) point
    def secant_step(history: list[tuple[float, float]], target: float,
                    current: float, default_exp: float) -> float:
        exponent = default_exp
        if len(history) >= 2:
            (s0, r0), (s1, r1) = history[-2], history[-1]
            if abs(s1 - s0) > 1e-9 and abs(r1 - r0) > 1e-9:
                exponent = float(np.clip((r1 - r0) / (s1 - s0), 0.4, 3.0))
        return math.log(target / current) / exponent

    mod_scale, str_scale = 1.0, 1.0
    mod_hist: list[tuple[float, float]] = []
    str_hist: list[tuple[float, float]] = []
    result = CalibrationResult(initial, False, 0, 0)
    report = run_with(mod_scale, str_scale)
    result.sim_runs += 1
    while True:
        err_peak = (report.peak_strength - targets.peak_strength) \
            / targets.peak_strength
        err_mod = (report.elastic_modulus - targets.elastic_modulus) \
            / targets.elastic_modulus
        material = initial.scaled(mod_scale, str_scale)
        result.audit.append(CalibrationRound(result.adjustment_rounds, material,
                                             report.peak_strength,
                                             report.elastic_modulus,
                                             err_peak, err_mod))
        mod_hist.append((math.log(mod_scale), math.log(report.elastic_modulus)))
        str_hist.append((math.log(str_scale), math.log(report.peak_strength)))
        converged = (abs(err_peak) < CALIBRATION_TOLERANCE
                     and abs(err_mod) < CALIBRATION_TOLERANCE)
        if converged or result.sim_runs >= budget:
            result.material = material
            result.converged = converged
            return result
        if abs(err_mod) >= CALIBRATION_TOLERANCE:
            step = secant_step(mod_hist, targets.elastic_modulus,
                               report.elastic_modulus, default_exp=1.3)
            mod_scale *= math.exp(float(np.clip(step, -1.2, 1.2)))
        else:
            step = secant_step(str_hist, targets.peak_strength,
                               report.peak_strength, default_exp=1.0)
            str_scale *= math.exp(float(np.clip(step, -1.2, 1.2)))
        result.adjustment_rounds += 1
        report = run_with(mod_scale, str_scale)
        result.sim_runs += 1
