from __future__ import annotations

import numpy as np
import pytest

from hanzawa_mhd.hanzawa import HeightField
from hanzawa_mhd.interface_geometry import (dh_gamma_zero, frechet_mean_curvature,
                                            interface_geometry, oracle_geometry)
from hanzawa_mhd.samples import random_height, random_smooth_surface_function


@pytest.mark.parametrize("c", [0.05, 0.1, 0.2])
def test_concentric_sphere_curvature(sphere, c):
    h = HeightField.constant(sphere, c, delta0=0.9)
    assert np.max(np.abs(interface_geometry(h).H + 2 / (1 + c))) < 1e-9


def test_zero_height_recovers_reference(surface):
    g = interface_geometry(HeightField.zero(surface))
    assert np.max(np.abs(g.normal - surface.grid_normal)) < 1e-12
    assert np.max(np.abs(g.H - np.trace(surface.grid_weingarten, axis1=-2, axis2=-1))) < 1e-10


@pytest.mark.parametrize("lam", [0.5, 2.0])
def test_sphere_scaling(lam):
    from hanzawa_mhd.surface import Sphere
    S1, S2 = Sphere(1.0, nu=12, nv=24), Sphere(lam, nu=12, nv=24)
    vals = 0.05 * np.cos(S1.grid_params[0]) ** 2
    H1 = interface_geometry(HeightField(S1, values=vals)).H
    H2 = interface_geometry(HeightField(S2, values=lam * vals)).H
    assert np.max(np.abs(H2 - H1 / lam)) < 1e-8


def test_formula_matches_direct_parameterisation(surface, rng):
    h = random_height(surface, rng, 0.05 * surface.rho0, time=False)
    H = interface_geometry(h).H
    Ho = oracle_geometry(h).mean_curvature
    assert np.max(np.abs(H - Ho)) < 5e-2 * np.max(np.abs(Ho))


def test_linearisation_matches_central_difference(sphere, rng):
    phi = random_smooth_surface_function(sphere, rng, 0.05)
    e = 1e-4
    fd = (interface_geometry(HeightField(sphere, values=e * phi)).H
          - interface_geometry(HeightField(sphere, values=-e * phi)).H) / (2 * e)
    D = dh_gamma_zero(sphere, phi)
    assert np.max(np.abs(fd - D)) <= 1e-3 * np.max(np.abs(D))


def test_frechet_at_nonzero_height(torus, rng):
    h = random_height(torus, rng, 0.05 * torus.rho0, time=False)
    phi = random_smooth_surface_function(torus, rng, 0.02)
    e = 1e-4
    fd = (interface_geometry(h.with_values(h.values + e * phi)).H
          - interface_geometry(h.with_values(h.values - e * phi)).H) / (2 * e)
    D = frechet_mean_curvature(h, phi)
    assert np.max(np.abs(fd - D)) <= 1e-3 * np.max(np.abs(D))
