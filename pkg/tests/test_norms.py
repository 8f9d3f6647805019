from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hanzawa_mhd import norms as nm
from hanzawa_mhd.surface import Sphere


def _line(f, n=201, lo=0.0, hi=1.0, periodic=False):
    dom = nm.BoxDomain.uniform([lo], [hi], [n], periodic=periodic)
    return nm.SampledFunction(f(dom.axes[0]), dom)


def test_gagliardo_identity_function():
    assert abs(nm.gagliardo_seminorm(_line(lambda x: x), 0.5, 2.0) - 1.0) < 0.01


def test_gagliardo_quarter_closed_form():
    # for f(x) = x the double integral is 2 / ((2 - 2s)(3 - 2s))
    s = 0.25
    exact = np.sqrt(2.0 / ((2 - 2 * s) * (3 - 2 * s)))
    val = nm.gagliardo_seminorm(_line(lambda x: x, 401), s, 2.0)
    assert abs(val - exact) < 2e-3 * exact


def test_gagliardo_constant_vanishes():
    assert nm.gagliardo_seminorm(_line(np.ones_like), 0.5, 2.0) == 0.0


def test_gagliardo_refines():
    vals = [nm.gagliardo_seminorm(_line(lambda x: x, n), 0.5, 2.0) for n in (51, 101, 201)]
    assert abs(vals[2] - 1) < abs(vals[1] - 1) < abs(vals[0] - 1)


def test_resolution_error():
    with pytest.raises(nm.ResolutionError):
        nm.gagliardo_seminorm(_line(lambda x: x, 5), 0.5, 2.0)


def test_ck_and_lq():
    f = _line(np.sin, 400, 0.0, 2 * np.pi, periodic=True)
    assert abs(nm.ck_norm(f, 1) - 2.0) < 1e-4
    assert abs(nm.lq_norm(_line(lambda x: x, 401), 2.0) - 1 / np.sqrt(3)) < 1e-5


def test_spec_parse_round_trip():
    for text in ("C:2", "L:3", "W:0.5:2", "Wdot:1:2", "G:0.25:4"):
        assert str(nm.NormSpec.parse(text)) == text
    for bad in ("X:1", "W:0.5", "G:1.5:2", "L:0.5"):
        with pytest.raises(nm.NormError):
            nm.NormSpec.parse(bad)


SPECS = [nm.NormSpec.parse(t) for t in ("C:1", "L:2", "W:0.5:2", "W:1.5:2", "Wdot:1:2", "G:0.3:3")]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.floats(-5.0, 5.0).filter(lambda c: abs(c) > 1e-3))
def test_homogeneity_and_triangle(seed, c):
    rng = np.random.default_rng(seed)
    dom = nm.BoxDomain.uniform([0.0], [1.0], [41])
    x = dom.axes[0]
    f = nm.SampledFunction(np.sin(rng.uniform(1, 6) * x + rng.uniform(0, 6)), dom)
    g = nm.SampledFunction(rng.normal() * x ** 2 + rng.normal() * np.cos(3 * x), dom)
    for spec in SPECS:
        nf = nm.space_norm(f, spec)
        assert abs(nm.space_norm(f * c, spec) - abs(c) * nf) <= 1e-10 * max(1.0, abs(c) * nf)
        assert nm.space_norm(f + g, spec) <= nf + nm.space_norm(g, spec) + 1e-10


def test_surface_gagliardo_finite():
    S = Sphere(1.0, nu=8, nv=16)
    dom = nm.SurfaceDomain(S)
    f = nm.SampledFunction(S.grid_points[..., 2], dom)
    v = nm.gagliardo_seminorm(f, 0.5, 2.0)
    assert np.isfinite(v) and v > 0


def _st(seed, nt=9, nx=17):
    rng = np.random.default_rng(seed)
    t = np.linspace(0, 1, nt)
    x = np.linspace(0, 1, nx)
    vals = rng.normal(size=(nt, nx))
    return nm.SpaceTimeSample(vals, t, nm.BoxDomain((x,)))


@pytest.mark.parametrize("name", nm.COMPOSITES)
def test_composite_monotone_in_T(name):
    f = _st(3, nt=17)
    vals = [nm.composite_norm(f, name, T=T).value for T in (0.5, 0.75, 1.0)]
    assert vals[0] <= vals[1] + 1e-12 and vals[1] <= vals[2] + 1e-12


def test_s3_flags_omitted_member():
    res = nm.composite_norm(_st(0), "S3")
    assert res.flags and len(res.members) == 1


def test_unknown_composite():
    with pytest.raises(nm.NormError):
        nm.composite_norm(_st(0), "W9")


def test_probe_constant_function_ratio_one():
    t = np.linspace(0, 1, 9)
    x = np.linspace(0, 1, 17)
    dom = nm.BoxDomain((x,))
    one = nm.SpaceTimeSample(np.ones((9, 17)), t, dom)
    g = _st(1)
    res = nm.product_estimate_probe([(one, g)], 0.5, 0.5, 2.0)
    assert abs(res.constant - 1.0) < 1e-12


def test_probe_stable_under_refinement():
    consts = []
    for n in (17, 33):
        pairs = nm.random_probe_pairs(20, n, n, np.random.default_rng(0))
        res = nm.product_estimate_probe(pairs, 0.5, 0.5, 2.0)
        assert res.constant < 10 * res.median
        consts.append(res.constant)
    assert max(consts) / min(consts) < 10


def test_workers_env(monkeypatch):
    monkeypatch.setenv("HANZAWA_WORKERS", "3")
    assert nm.workers() == 3
    monkeypatch.setenv("HANZAWA_WORKERS", "bad")
    assert nm.workers() == 1


def test_sharded_sum_is_deterministic(monkeypatch):
    f = _line(lambda x: np.sin(5 * x) + x ** 2, 101)
    monkeypatch.setenv("HANZAWA_WORKERS", "4")
    a = nm.gagliardo_seminorm(f, 0.4, 2.0)
    b = nm.gagliardo_seminorm(f, 0.4, 2.0)
    monkeypatch.setenv("HANZAWA_WORKERS", "1")
    c = nm.gagliardo_seminorm(f, 0.4, 2.0)
    assert a == b
    assert abs(a - c) < 1e-12 * c
