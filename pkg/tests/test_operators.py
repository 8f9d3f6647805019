from __future__ import annotations

import numpy as np
import pytest

from hanzawa_mhd.fields import JumpField
from hanzawa_mhd.hanzawa import HeightField
from hanzawa_mhd.operators import (IDENTITY_CHECKS, ConfigError, FluidParams, cal_g1, cal_g2,
                                   degeneracy_terms, frechet_check, g1, g2, g3, g4,
                                   identity_order, linear_residual, pullback_state,
                                   reference_laplace_jump, stress_oracle,
                                   stress_residual)
from hanzawa_mhd.samples import (random_direction, random_height, random_plane_wave,
                                 random_state, tangent_field)

PARAMS = FluidParams(1.3, 0.7, 0.9, 1.1)


def test_fluid_params_validated():
    with pytest.raises(ConfigError):
        FluidParams(sigma=0.0)
    with pytest.raises(ConfigError):
        FluidParams.from_config({"viscosity": 1.0})


@pytest.mark.parametrize("name", sorted(IDENTITY_CHECKS))
def test_identities_analytic_on_sphere(sphere, rng, name):
    u = random_plane_wave(rng, 1)
    h = random_height(sphere, rng, 0.1 * sphere.rho0)
    x = sphere.random_tube_points(20, rng, 0.6)
    assert IDENTITY_CHECKS[name](u, h, x, 0.3).residual <= 1e-8


def test_identity_fd_order_on_torus(torus, rng):
    u = random_plane_wave(rng, 1)
    h = random_height(torus, rng, 0.1 * torus.rho0)
    x = torus.random_tube_points(10, rng, 0.6)
    assert identity_order("laplacian", u, h, x, 0.3) >= 1.8


def test_zero_height_degeneracy(torus, rng):
    z = random_state(torus, rng, h_frac=0.0, t=0.2)
    z.h = HeightField.zero(torus)
    x = torus.random_tube_points(20, rng, 0.6, exclude=0.05)
    assert max(degeneracy_terms(z, x, PARAMS).values()) <= 1e-12
    assert np.max(np.abs(cal_g1(z, PARAMS))) <= 1e-12
    assert np.max(np.abs(cal_g2(z, PARAMS))) <= 1e-12


def test_cal_g2_is_quadratic_in_height(sphere, rng):
    phi = random_height(sphere, rng, 0.1 * sphere.rho0, time=False).values
    z = random_state(sphere, rng, t=0.2)
    vals = []
    for e in (1e-2, 5e-3, 2.5e-3):
        z.h = HeightField(sphere, values=e * phi)
        vals.append(np.max(np.abs(cal_g2(z, PARAMS))))
    order = np.log2(vals[0] / vals[1]), np.log2(vals[1] / vals[2])
    assert min(order) >= 1.9


def test_cal_g2_concentric_closed_form(sphere, rng):
    c = 0.1
    z = random_state(sphere, rng, t=0.2)
    z.h = HeightField.constant(sphere, c)
    want = PARAMS.kappa * (-2 / (1 + c) + 2 - 2 * c)
    assert np.max(np.abs(cal_g2(z, PARAMS) - want)) < 1e-9
    assert np.allclose(reference_laplace_jump(sphere, PARAMS), -2 * PARAMS.kappa)


@pytest.mark.parametrize("op", ["M1", "M4", "G1", "G3", "H", "cal_G1", "G4", "G5"])
def test_frechet_ladder(torus, op):
    rng = np.random.default_rng(7)
    z = random_state(torus, rng, t=0.2)
    phi = random_direction(torus, rng)
    x = torus.random_tube_points(8, rng, 0.6, exclude=0.05)
    rep = frechet_check(op, z, phi, x, params=PARAMS, b=tangent_field(torus, rng))
    assert rep.passed, rep.to_dict()


def test_stress_transform_matches_oracle(sphere, rng):
    # physical two-phase fields, pulled back through Theta
    u = JumpField(random_plane_wave(rng, 1), random_plane_wave(rng, 1))
    p = JumpField(random_plane_wave(rng, 0), random_plane_wave(rng, 0))
    h = random_height(sphere, rng, 0.05 * sphere.rho0)
    z = pullback_state(u, random_plane_wave(rng, 1), p, h, 0.3)
    got = linear_residual(z, 4, params=PARAMS) - g4(z, PARAMS)
    want = stress_oracle(u, p, z.h, PARAMS, 0.3)
    assert np.max(np.abs(got - want)) <= 1e-8 * max(1.0, np.max(np.abs(want)))
    assert stress_residual(u, p, z.h, PARAMS, 0.3).shape == want.shape


def test_g_terms_shapes(sphere, rng):
    z = random_state(sphere, rng, t=0.2)
    x = sphere.random_tube_points(5, rng, 0.6, exclude=0.05)
    assert g1(z, x, PARAMS).shape == (5, 3)
    assert g2(z, x, PARAMS).shape == (5, 3)
    assert g3(z, x, PARAMS).shape == (5,)
