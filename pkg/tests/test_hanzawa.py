from __future__ import annotations

import numpy as np
import pytest

from hanzawa_mhd.hanzawa import (HeightError, HeightField, cutoff_eta, hanzawa_inverse,
                                 hanzawa_map, m0_grid, pullback_coeffs)
from hanzawa_mhd.samples import random_height


def test_cutoff_plateaus_and_midpoint():
    t = np.array([0.0, 0.2, 0.5, 0.8, 1.0])
    eta = cutoff_eta(t)[0]
    assert eta[0] == 1.0 and eta[1] == 1.0
    assert abs(eta[2] - 0.5) < 1e-12
    assert eta[3] == 0.0 and eta[4] == 0.0


def test_gate_rejects_large_height(sphere):
    with pytest.raises(HeightError):
        HeightField.constant(sphere, 0.5 * sphere.rho0, delta0=0.3).require_valid()
    with pytest.raises(HeightError):
        HeightField(sphere, values=0.0, delta0=1.2)


def test_map_is_identity_far_from_surface(sphere, rng):
    h = random_height(sphere, rng, 0.1 * sphere.rho0)
    x = np.array([[0.0, 0.0, 0.0], [3.0, 0.0, 0.0]])
    assert np.allclose(hanzawa_map(h, x), x)


def test_map_moves_surface_by_h(sphere):
    c = 0.1
    h = HeightField.constant(sphere, c)
    p = sphere.grid_points.reshape(-1, 3)
    assert np.allclose(np.linalg.norm(hanzawa_map(h, p), axis=-1), 1.0 + c, atol=1e-12)


def test_inverse_round_trip(sphere, rng):
    h = random_height(sphere, rng, 0.1 * sphere.rho0)
    x = sphere.random_tube_points(50, rng, 0.6)
    assert np.max(np.abs(hanzawa_inverse(h, hanzawa_map(h, x)) - x)) < 1e-10


def test_zero_height_coefficients_vanish(torus, rng):
    h = HeightField.zero(torus)
    x = torus.random_tube_points(30, rng, 0.6)
    C = pullback_coeffs(h, x)
    for M in (C.M1, C.M2, C.M3, C.M4):
        assert np.max(np.abs(M)) <= 1e-12
    assert np.max(np.abs(m0_grid(h) - np.eye(3))) <= 1e-12


def test_m0_concentric_sphere(sphere):
    c = 0.1
    M0 = m0_grid(HeightField.constant(sphere, c))
    n = sphere.grid_normal
    P = np.eye(3) - n[..., :, None] * n[..., None, :]
    # (I - c L)^{-1} with L = -P on the unit sphere
    want = P / (1 + c) + n[..., :, None] * n[..., None, :]
    assert np.max(np.abs(M0 - want)) < 1e-12


def test_height_arithmetic(sphere):
    a = HeightField.constant(sphere, 0.1)
    b = HeightField.constant(sphere, 0.05)
    assert np.allclose((a - b).values, 0.05)
    assert np.allclose((2.0 * b).values, 0.1)
    assert abs((-a).sup - 0.1) < 1e-15
