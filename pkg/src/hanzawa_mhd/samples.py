"""Random and closed-form test data: fields, heights, states and directions."""
from __future__ import annotations

import numpy as np
import sympy as sp

from .fields import JumpField, PlaneWaveField, SympyField, T, X, Y, Z
from .hanzawa import HeightField
from .operators import Direction, State
from .surface import ReferenceSurface


def random_plane_wave(rng: np.random.Generator, rank: int, n_waves: int = 3, k: float = 2.0,
                      amp: float = 1.0, div_free: bool = False, time: bool = True) -> PlaneWaveField:
    K = rng.normal(size=(n_waves, 3)) * k / np.sqrt(3)
    c = rng.normal(size=(n_waves, 3) if rank else n_waves) * amp
    if div_free:
        if not rank:
            raise ValueError("only vector fields can be divergence free")
        c = c - (np.einsum("mi,mi->m", c, K) / np.einsum("mi,mi->m", K, K))[:, None] * K
    w = rng.normal(size=n_waves) if time else None
    return PlaneWaveField(c, K, w, rng.uniform(0, 2 * np.pi, size=n_waves))


def random_height(surface: ReferenceSurface, rng: np.random.Generator, sup: float,
                  time: bool = True, delta0: float = 0.3) -> HeightField:
    """Smooth height whose grid sup at t = 0 equals ``sup``."""
    f = random_plane_wave(rng, 0, time=time)
    vals = f.value(surface.grid_points)
    f.coef *= sup / max(np.max(np.abs(vals)), 1e-300)
    return HeightField.from_function(surface, f, delta0=delta0)


def random_state(surface: ReferenceSurface, rng: np.random.Generator, h_frac: float = 0.1,
                 t: float = 0.0, jump: bool = True) -> State:
    """State with plane-wave fields and sup|h| = h_frac * rho0."""
    def pair(rank):
        a = random_plane_wave(rng, rank)
        return JumpField(a, random_plane_wave(rng, rank)) if jump else JumpField.continuous(a)
    u, B, p = pair(1), random_plane_wave(rng, 1), pair(0)
    h = random_height(surface, rng, h_frac * surface.rho0)
    return State(u, B, p, h, rng.normal(size=surface.grid_points.shape[:-1]), t)


def random_direction(surface: ReferenceSurface, rng: np.random.Generator,
                     h_frac: float = 0.1) -> Direction:
    def pair(rank):
        return JumpField(random_plane_wave(rng, rank), random_plane_wave(rng, rank))
    return Direction(pair(1), random_plane_wave(rng, 1), pair(0),
                     random_height(surface, rng, h_frac * surface.rho0),
                     rng.normal(size=surface.grid_points.shape[:-1]))


def random_smooth_surface_function(surface: ReferenceSurface, rng: np.random.Generator,
                                   amp: float = 1.0) -> np.ndarray:
    f = random_plane_wave(rng, 0, time=False, k=1.5)
    vals = f.value(surface.grid_points)
    return amp * vals / np.max(np.abs(vals))


def tangent_field(surface: ReferenceSurface, rng: np.random.Generator) -> np.ndarray:
    """Tangential auxiliary field b = grad_S of a smooth function."""
    return surface.surface_grad(random_smooth_surface_function(surface, rng))


# ---------------------------------------------------------------------------
# closed-form divergence-free families (u, B, p)


def _curl(A):
    return [sp.diff(A[2], Y) - sp.diff(A[1], Z), sp.diff(A[0], Z) - sp.diff(A[2], X),
            sp.diff(A[1], X) - sp.diff(A[0], Y)]


def abc_family(a: float = 1.0, b: float = 0.7, c: float = 0.4):
    """Arnold-Beltrami-Childress velocity with a decaying amplitude; B a shifted ABC field."""
    decay = sp.exp(-T / 2)
    u = [decay * (a * sp.sin(Z) + c * sp.cos(Y)), decay * (b * sp.sin(X) + a * sp.cos(Z)),
         decay * (c * sp.sin(Y) + b * sp.cos(X))]
    B = [sp.sin(Z + T) + sp.cos(Y), sp.sin(X) + sp.cos(Z + T), sp.sin(Y) + sp.cos(X)]
    p_in = X * Y + sp.cos(Z) * (1 + T)
    p_out = p_in + 2 + X
    return (JumpField.continuous(SympyField(u, name="abc")), SympyField(B, name="abc_B"),
            JumpField(SympyField(p_in, name="p_in"), SympyField(p_out, name="p_out")))


def polynomial_family():
    """Curl-of-polynomial velocities (distinct per phase) and magnetic field."""
    u_in = _curl([Y ** 2 * Z, X * Z ** 2 * (1 + T), X ** 2 * Y])
    u_out = _curl([Y * Z, X ** 2 * Z, (X * Y + T) * Y])
    B = _curl([Z ** 2 * X * (1 - T), X * Y ** 2, Y * Z ** 2])
    p_in = X ** 2 - Y * Z
    p_out = 3 + Y ** 3 - T * X
    return (JumpField(SympyField(u_in, name="poly_u_in"), SympyField(u_out, name="poly_u_out")),
            SympyField(B, name="poly_B"),
            JumpField(SympyField(p_in, name="p_in"), SympyField(p_out, name="p_out")))


def plane_wave_family(seed: int = 0):
    rng = np.random.default_rng(seed)
    u = JumpField(random_plane_wave(rng, 1, div_free=True), random_plane_wave(rng, 1, div_free=True))
    B = random_plane_wave(rng, 1, div_free=True)
    p = JumpField(random_plane_wave(rng, 0), random_plane_wave(rng, 0))
    return u, B, p


FAMILIES = {
    "abc": abc_family,
    "polynomial": polynomial_family,
    "plane_wave": plane_wave_family,
}
