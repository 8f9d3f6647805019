from __future__ import annotations

import numpy as np
import pytest

from hanzawa_mhd import evolution as ev
from hanzawa_mhd.hanzawa import HeightError, HeightField
from hanzawa_mhd.suites import NormalVelocity
from hanzawa_mhd.surface import Sphere


def test_config_validation():
    with pytest.raises(ValueError):
        ev.EvolutionConfig(dt=0.0)
    with pytest.raises(ValueError):
        ev.EvolutionConfig(T=2.0, T0=1.0)
    assert ev.EvolutionConfig(dt=0.01, T=0.05).n_steps == 5


def test_grid_needs_resolution():
    with pytest.raises(ValueError):
        ev.BoxGrid(n=5)


def test_grid_laplacian_on_quadratic():
    g = ev.BoxGrid(n=9)
    q = g.points * (1 - g.points)                   # x(1-x), y(1-y), z(1-z)
    f = np.prod(q, axis=-1)
    want = -2 * (q[..., 1] * q[..., 2] + q[..., 0] * q[..., 2] + q[..., 0] * q[..., 1])
    # centred differences are exact on quadratics
    assert np.max(np.abs(g.laplacian() @ f[g.interior] - want[g.interior])) < 1e-12


def test_boundary_data_required():
    g = ev.BoxGrid(n=9)
    B0 = np.ones(g.shape + (3,))
    with pytest.raises(ValueError):
        ev.solve_parabolic(B0, None, ev.EvolutionConfig(dt=0.01, T=0.02), g)


def test_manufactured_order():
    rows = ev.manufactured_errors(ns=(9, 17))
    assert rows[-1]["order"] >= 1.9


def test_heat_decay_is_monotone():
    g = ev.BoxGrid(n=9)
    B0 = ev.builtin_magnetic("bump", g, 1.0)
    traj = ev.solve_parabolic(B0, None, ev.EvolutionConfig(dt=0.01, T=0.1), g)
    sup = [np.max(np.abs(b)) for b in traj.B]
    assert all(a >= b - 1e-14 for a, b in zip(sup, sup[1:]))


def test_normal_speed_transport():
    S = Sphere(1.0, nu=12, nv=24)
    u = NormalVelocity(S, 0.5)
    h0 = HeightField.zero(S)
    _, hs = ev.evolve_height(h0, u, None, 0.01, 0.1)
    assert np.max(np.abs(hs[-1].values - 0.05)) < 1e-3


def test_gate_trips_on_runaway_height():
    S = Sphere(1.0, nu=8, nv=16)
    u = NormalVelocity(S, 10.0)
    with pytest.raises(HeightError):
        ev.evolve_height(HeightField.zero(S), u, None, 0.01, 0.1)


def test_builtin_names():
    g = ev.BoxGrid(n=9)
    for name in ("zero", "expansion", "rotation", "shear"):
        ev.builtin_velocity(name)
    with pytest.raises(ValueError):
        ev.builtin_velocity("vortex")
    with pytest.raises(ValueError):
        ev.builtin_magnetic("dipole", g)


def test_fixed_point_probe_contracts():
    S = Sphere(0.25, center=(0.5, 0.5, 0.5), nu=12, nv=24)
    grid = ev.BoxGrid(n=9)
    h0 = HeightField(S, values=1e-2 * np.cos(S.grid_params[0]))
    B0 = ev.builtin_magnetic("bump", grid, 1e-2)
    u = ev.builtin_velocity("shear", amp=0.2)
    tr = ev.fixed_point_probe(B0, h0, u, ev.EvolutionConfig(dt=0.0025, T=0.0125, max_iter=5), grid)
    assert not tr.gate_tripped and not tr.diverged
    assert tr.contracting
    d = tr.to_dict()
    assert d["iterations"] == tr.iterations and d["ratios"] == tr.ratios
