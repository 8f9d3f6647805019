from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hanzawa_mhd.surface import (Ellipsoid, GeometryError, ProjectionError, Sphere, Torus,
                                 surface_from_config)


def test_sphere_weingarten_closed_form():
    S = Sphere(2.0, nu=12, nv=24)
    n = S.grid_normal
    P = np.eye(3) - n[..., :, None] * n[..., None, :]
    assert np.max(np.abs(S.grid_weingarten + P / 2.0)) < 1e-12
    assert np.max(np.abs(np.trace(S.weingarten_at(S.grid_points), axis1=-2, axis2=-1) + 1.0)) < 1e-12


def test_torus_mean_curvature_closed_form(torus):
    _, v = torus.grid_params
    want = -(1 / torus.r + np.cos(v) / (torus.R + torus.r * np.cos(v)))
    assert np.max(np.abs(np.trace(torus.weingarten_at(torus.grid_points), axis1=-2, axis2=-1) - want)) < 1e-10


def test_weingarten_is_tangent_and_symmetric(surface):
    L = surface.grid_weingarten
    n = surface.grid_normal
    assert np.max(np.abs(L - np.swapaxes(L, -1, -2))) < 1e-10
    assert np.max(np.abs(np.einsum("...ij,...j->...i", L, n))) < 1e-10


def test_dual_frame_identity(surface):
    fr = surface.grid_frame
    G = np.einsum("...ak,...bk->...ab", fr.tau, fr.dual)
    assert np.max(np.abs(G - np.eye(2))) < 1e-12


def test_projection_round_trip(surface, rng):
    s = surface.random_params(100, rng)
    r = rng.uniform(-0.6, 0.6, 100) * surface.rho0
    p = surface.surface_point(s)
    x = p + r[:, None] * surface.normal_at(p)
    foot = surface.nearest_point(x)
    _, d = surface.project(x)
    assert np.max(np.abs(foot - p)) < 1e-9
    assert np.max(np.abs(d - r)) < 1e-9


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 3.0), st.floats(-0.85, 0.85))
def test_sphere_distance_is_radial(R, frac):
    S = Sphere(R, nu=8, nv=16)
    x = np.array([[0.3, -0.4, 0.866]]) / np.linalg.norm([0.3, -0.4, 0.866]) * R * (1 + frac)
    _, d = S.project(x)
    assert abs(d[0] - R * frac) < 1e-10 * max(R, 1)


def test_projection_outside_tube_raises(sphere):
    with pytest.raises(ProjectionError):
        sphere.project(np.array([[0.0, 0.0, 3.0]]))


def test_laplace_beltrami_eigenfunction():
    errs = []
    for m in (12, 24):
        S = Sphere(1.0, nu=m, nv=2 * m)
        z = S.grid_points[..., 2]
        errs.append(np.max(np.abs(S.laplace_beltrami(z) + 2 * z)))
    assert errs[1] < errs[0] / 3


def test_invalid_geometry_rejected():
    with pytest.raises(GeometryError):
        Sphere(-1.0)
    with pytest.raises(GeometryError):
        Torus(1.0, 2.0)
    with pytest.raises(GeometryError):
        Sphere(1.0, rho0=1.5)


def test_surface_from_config():
    S = surface_from_config({"kind": "ellipsoid", "params": {"a": 1, "b": 0.8, "c": 0.6},
                             "grid": {"nu": 8, "nv": 16}})
    assert isinstance(S, Ellipsoid) and (S.nu, S.nv) == (8, 16)
    with pytest.raises(GeometryError):
        surface_from_config({"kind": "cube"})
    with pytest.raises(GeometryError):
        surface_from_config({"kind": "sphere", "params": {"radius": 1}})


def test_invariants_hold(surface):
    surface.check_invariants()
