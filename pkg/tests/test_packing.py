import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from frostdem.errors import (InvalidConfigError, PackingInfeasibleError,
                             UndefinedStatisticError)
from frostdem.packing import (ContactKind, CylinderDomain, PackingConfig,
                              ParticleAssembly, Phase, compute_particle_counts,
                              compute_resolution, detect_contacts,
                              generate_packing, measure_porosity,
                              porosity_from_counts)

from conftest import desk_config


# ---------------------------------------------------------------------------
# compute_resolution

def test_resolution_reference_value_is_exact():
    res = compute_resolution(25, 1.2, 1.0)
    assert res.value == 125.0
    assert res.exact == Fraction(125)
    assert res.passes


def test_resolution_water_range():
    res = compute_resolution(25, 0.95, 0.8)
    assert res.exact == Fraction(25) / Fraction("0.15")
    assert abs(res.value - 166.6667) < 1e-3
    assert res.passes


def test_resolution_threshold_is_strict():
    res = compute_resolution(1.0, 1.2, 1.0)
    assert res.exact == Fraction(5)
    assert not res.passes


def test_resolution_degenerate_range():
    with pytest.raises(InvalidConfigError):
        compute_resolution(25, 1.0, 1.0)


# ---------------------------------------------------------------------------
# compute_particle_counts

def test_counts_zero_porosity_has_no_water():
    n_w, n_r = compute_particle_counts(desk_config(porosity=0.0))
    assert n_w == 0
    assert n_r > 0


def test_counts_symmetric_budget_splits_evenly():
    # equal mean single volumes and porosity 0.5 over a 100-particle budget
    r = 1.0
    v_single = 4.0 / 3.0 * math.pi * r ** 3
    solid_fraction = 0.5
    cyl_r = 5.0
    height = 100 * v_single / (solid_fraction * math.pi * cyl_r ** 2)
    cfg = PackingConfig(target_porosity=0.5,
                        rock_radius_min=0.9, rock_radius_max=1.1,
                        water_radius_min=0.9, water_radius_max=1.1,
                        cylinder_radius=cyl_r, cylinder_height=height,
                        solid_fraction=solid_fraction)
    assert compute_particle_counts(cfg) == (50, 50)


def test_counts_reference_configuration_closes_porosity_budget():
    # reference geometry: porosity 8.59%, 25 mm radius, 50 mm height; counts
    # must close the porosity definition over particle volumes within rounding
    cfg = PackingConfig(target_porosity=0.0859,
                        rock_radius_min=1.0, rock_radius_max=1.2,
                        water_radius_min=0.8, water_radius_max=0.95,
                        cylinder_radius=25.0, cylinder_height=50.0,
                        solid_fraction=0.60)
    n_w, n_r = compute_particle_counts(cfg)
    assert n_w > 0 and n_r > 0
    assert abs(porosity_from_counts(cfg, n_w, n_r) - 0.0859) < 0.01
    # volume budget check: total particle volume fits the configured fraction
    v_total = (n_w * 4 / 3 * math.pi * cfg.mean_water_radius ** 3
               + n_r * 4 / 3 * math.pi * cfg.mean_rock_radius ** 3)
    assert v_total <= cfg.domain_volume


def test_counts_invalid_porosity():
    with pytest.raises(InvalidConfigError):
        compute_particle_counts(desk_config(porosity=1.0))


@settings(deadline=None, max_examples=40)
@given(porosity=st.floats(0.01, 0.5), seed=st.integers(0, 10_000))
def test_counts_close_porosity_definition(porosity, seed):
    cfg = desk_config(porosity=porosity, radius=20.0, height=40.0, seed=seed)
    n_w, n_r = compute_particle_counts(cfg)
    if n_w == 0 or n_r == 0:
        return
    achieved = porosity_from_counts(cfg, n_w, n_r)
    assert abs(achieved - porosity) < 0.01


# ---------------------------------------------------------------------------
# generate_packing

def test_generate_zero_particthan_empty():
    cfg = PackingConfig(target_porosity=0.0,
                        rock_radius_min=1.0, rock_radius_max=1.2,
                        water_radius_min=0.8, water_radius_max=0.95,
                        cylinder_radius=3.0, cylinder_height=6.0,
                        solid_fraction=0.01)
    asm = generate_packing(cfg)
    assert asm.n_particles == 0


def test_generate_is_deterministic(small_saturated):
    again = generate_packing(desk_config())
    assert np.array_equal(small_saturated.centers, again.centers)
    assert np.array_equal(small_saturated.radii, again.radii)
    assert np.array_equal(small_saturated.phases, again.phases)


def test_generate_respects_geometry(small_saturated):
    asm = small_saturated
    assert bool(asm.domain.contains(asm.centers, asm.radii).all())
    rock = asm.phases == Phase.ROCK
    assert np.all(asm.radii[rock] >= 1.0) and np.all(asm.radii[rock] <= 1.2)
    water = ~rock
    assert np.all(asm.radii[water] >= 0.8) and np.all(asm.radii[water] <= 0.95)
    # particle counts match the generation budget
    n_w, n_r = compute_particle_counts(desk_config())
    assert (asm.n_water, asm.n_rock) == (n_w, n_r)


def test_generate_overlap_bound(small_saturated):
    asm = small_saturated
    d = np.linalg.norm(asm.centers[:, None, :] - asm.centers[None, :, :], axis=2)
    span = asm.radii[:, None] + asm.radii[None, :]
    overlap = span - d
    np.fill_diagonal(overlap, -np.inf)
    assert overlap.max() <= 1e-3 * asm.radii.min() + 1e-12


def test_generate_porosity_near_target(small_saturated):
    est = measure_porosity(small_saturated, 40_000, seed=3)
    assert abs(est.value - 0.0859) < 0.01 + 3 * est.std_error


def test_generate_porosity_near_target_mid_scale():
    # a few hundred rock plus tens of water particles
    cfg = desk_config(porosity=0.12, radius=8.0, height=26.0, seed=3)
    asm = generate_packing(cfg)
    assert asm.n_rock > 400 and asm.n_water > 50
    est = measure_porosity(asm, 60_000, seed=9)
    assert abs(est.value - 0.12) < 0.01 + 3 * est.std_error


def test_generate_infeasible_fraction_names_parameter():
    cfg = desk_config(solid_fraction=0.62)
    with pytest.raises(PackingInfeasibleError, match="solid_fraction"):
        generate_packing(cfg, polish_sweeps=300)


# ---------------------------------------------------------------------------
# detect_contacts

def _two_sphere_assembly(distance):
    centers = np.array([[0.0, 0.0, 2.0], [0.0, 0.0, 2.0 + distance]])
    return ParticleAssembly(centers, np.array([1.0, 1.0]),
                            np.array([0, 1], dtype=np.int8),
                            np.array([2600.0, 960.0]),
                            CylinderDomain(10.0, 10.0))


def test_touching_spheres_contact():
    contacts = detect_contacts(_two_sphere_assembly(2.0), 0.0)
    assert len(contacts) == 1
    c = contacts[0]
    assert (c.particle_a, c.particle_b) == (0, 1)
    assert c.kind == ContactKind.ROCK_WATER
    assert abs(c.gap) < 1e-12


def test_separated_spheres_no_contact():
    assert detect_contacts(_two_sphere_assembly(2.5), 0.0) == []


def test_negative_tolerance_rejected(small_saturated):
    with pytest.raises(InvalidConfigError):
        detect_contacts(small_saturated, -0.1)


@pytest.mark.parametrize("seed", [0, 3, 9])
def test_contacts_match_brute_force(seed):
    asm = generate_packing(desk_config(seed=seed))
    tol = 0.05 * float(asm.radii.min())
    found = {(c.particle_a, c.particle_b) for c in detect_contacts(asm, tol)}
    expected = set()
    n = asm.n_particles
    for i in range(n):
        for j in range(i + 1, n):
            d = np.linalg.norm(asm.centers[i] - asm.centers[j])
            if d <= asm.radii[i] + asm.radii[j] + tol:
                expected.add((i, j))
    assert found == expected


def test_contact_kinds_follow_phases(small_saturated):
    for c in detect_contacts(small_saturated, 0.05):
        pa = small_saturated.phases[c.particle_a]
        pb = small_saturated.phases[c.particle_b]
        assert c.kind == ContactKind(int(pa) + int(pb))


# ---------------------------------------------------------------------------
# measure_porosity

def test_porosity_all_rock_is_zero(small_dry):
    est = measure_porosity(small_dry, 20_000, seed=1)
    assert est.value == 0.0


def test_porosity_two_equal_particles_is_half():
    centers = np.array([[0.0, 0.0, 2.0], [0.0, 0.0, 6.0]])
    asm = ParticleAssembly(centers, np.array([1.0, 1.0]),
                           np.array([Phase.ROCK, Phase.WATER], dtype=np.int8),
                           np.array([2600.0, 960.0]), CylinderDomain(4.0, 8.0))
    est = measure_porosity(asm, 200_000, seed=2)
    assert abs(est.value - 0.5) <= 3 * est.std_error


def test_porosity_matches_analytic_sum(small_saturated):
    est = measure_porosity(small_saturated, 150_000, seed=4)
    assert abs(est.value - small_saturated.analytic_porosity()) <= 3 * est.std_error


def test_porosity_sample_floor(small_saturated):
    with pytest.raises(InvalidConfigError):
        measure_porosity(small_saturated, 999)


def test_porosity_empty_assembly_errors():
    asm = ParticleAssembly(np.zeros((0, 3)), np.zeros(0),
                           np.zeros(0, dtype=np.int8), np.zeros(0),
                           CylinderDomain(1.0, 1.0))
    with pytest.raises(UndefinedStatisticError):
        measure_porosity(asm, 20_000)


def test_config_validation():
    with pytest.raises(InvalidConfigError):
        desk_config(porosity=0.7).validate()
    with pytest.raises(InvalidConfigError):
        PackingConfig(target_porosity=0.1, rock_radius_min=1.2,
                      rock_radius_max=1.0, water_radius_min=0.8,
                      water_radius_max=0.95, cylinder_radius=5.0,
                      cylinder_height=10.0).validate()
