"""Transformed two-phase MHD operators on the fixed reference geometry.

The state z = (u, B, p, varpi, h) lives on the reference configuration: u, B, p
are ambient fields (u and p jump-aware across Sigma), varpi a surface scalar on
the grid and h a HeightField. ``pullback_state`` builds z from physical fields
by composing with Theta_h.

Every nonlinear operator is a sum of multilinear terms in named slots (field
jets, M-coefficients, alpha, ...). The Frechet derivative of such an operator is
the sum over slot occurrences with that slot replaced by its derivative, so the
product rule is structural rather than re-derived per operator.

Conventions: (grad f)_ij = d_i f_j, row vectors act from the left
(u grad u)_j = u_i d_i u_j, and matrices act on columns (A n)_i = A_ij n_j.
The viscosity ``nu_plus`` applies inside Sigma (d < 0) and ``nu_minus`` outside;
jumps are outer minus inner.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .fields import Field, JumpField, as_jump
from .hanzawa import (HeightError, HeightField, PullbackCoeffs, ThetaJet, coeffs_from_jet,
                      hanzawa_map, m0_grid, theta_jet, tube_geometry)
from .interface_geometry import (dh_gamma_zero, frechet_geometry, interface_geometry,
                                 node_index)
from .surface import EYE, ReferenceSurface

LEVI = np.zeros((3, 3, 3))
LEVI[0, 1, 2] = LEVI[1, 2, 0] = LEVI[2, 0, 1] = 1.0
LEVI[0, 2, 1] = LEVI[2, 1, 0] = LEVI[1, 0, 2] = -1.0

TRACE_OFFSETS = (1e-4, 5e-5)


class OperatorDomainError(Exception):
    """Jump-aware field evaluated on Sigma itself, or another ill-posed query."""


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class FluidParams:
    nu_plus: float = 1.0    # inner phase
    nu_minus: float = 1.0   # outer phase
    sigma: float = 1.0
    kappa: float = 1.0

    def __post_init__(self):
        for k in ("nu_plus", "nu_minus", "sigma", "kappa"):
            if not getattr(self, k) > 0:
                raise ConfigError(f"{k} must be positive")

    def nu(self, outer) -> np.ndarray:
        return np.where(np.asarray(outer, bool), self.nu_minus, self.nu_plus)

    @classmethod
    def from_config(cls, cfg: dict | None) -> "FluidParams":
        cfg = dict(cfg or {})
        unknown = set(cfg) - {"nu_plus", "nu_minus", "sigma", "kappa"}
        if unknown:
            raise ConfigError(f"unknown fluid keys {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in cfg.items()})


@dataclass
class State:
    u: JumpField
    B: Field
    p: JumpField
    h: HeightField
    varpi: np.ndarray | None = None
    t: float = 0.0

    def __post_init__(self):
        self.u = as_jump(self.u)
        self.p = as_jump(self.p)
        if self.varpi is not None:
            self.varpi = np.broadcast_to(np.asarray(self.varpi, float), self.h.values.shape).copy()

    @property
    def surface(self) -> ReferenceSurface:
        return self.h.surface

    def varpi_values(self) -> np.ndarray:
        if self.varpi is not None:
            return self.varpi
        return jump(self.p, self.surface, t=self.t)

    def shifted(self, phi: "Direction", eps: float) -> "State":
        vp = None
        if self.varpi is not None or phi.varpi is not None:
            base = self.varpi_values()
            vp = base + eps * (phi.varpi if phi.varpi is not None else 0.0)
        return State(self.u + eps * phi.u, self.B + eps * phi.B, self.p + eps * phi.p,
                     self.h + eps * phi.h, vp, self.t)


@dataclass
class Direction:
    u: JumpField
    B: Field
    p: JumpField
    h: HeightField
    varpi: np.ndarray | None = None

    def __post_init__(self):
        self.u = as_jump(self.u)
        self.p = as_jump(self.p)


# ---------------------------------------------------------------------------
# composition with Theta


class ComposedField(Field):
    """f∘Theta_h with first/second derivatives by the chain rule.

    ``h`` may be time dependent (function backed); then Theta follows h(t).
    """

    def __init__(self, f: Field, h: HeightField):
        self.f = f
        self.h = h
        self.rank = f.rank
        self.name = f"{getattr(f, 'name', 'f')}∘Theta"

    def _h(self, t: float) -> HeightField:
        if self.h.func is not None and t != self.h.t:
            return self.h.at(t)
        return self.h

    def jet(self, x, t: float = 0.0):
        x = np.asarray(x, float)
        shape = x.shape[:-1]
        pts = x.reshape(-1, 3)
        hh = self._h(t)
        hh.require_valid()
        tj = theta_jet(hh, tube_geometry(hh.surface, pts))
        v, g, H, dt = self.f.jet(pts + tj.theta, t)
        out = compose_jet(tj, g, H)
        val = v
        dtv = dt + np.einsum("nk,nk...->n...", tj.dt, g)
        rs = lambda a: a.reshape(shape + a.shape[1:])  # noqa: E731
        return rs(val), rs(out[0]), rs(out[1]), rs(dtv)

    def value(self, x, t=0.0):
        return self.jet(x, t)[0]

    def grad(self, x, t=0.0):
        return self.jet(x, t)[1]

    def hess(self, x, t=0.0):
        return self.jet(x, t)[2]

    def dt(self, x, t=0.0):
        return self.jet(x, t)[3]


def compose_jet(tj: ThetaJet, g: np.ndarray, H: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gradient and Hessian of f∘Theta given f's derivatives at Theta(x)."""
    J = EYE + tj.grad
    grad = np.einsum("nik,nk...->ni...", J, g)
    hess = (np.einsum("nik,njl,nkl...->nij...", J, J, H)
            + np.einsum("nijk,nk...->nij...", tj.hess, g))
    return grad, hess


def compose(f, h: HeightField):
    if isinstance(f, JumpField):
        return JumpField(ComposedField(f.inner, h), ComposedField(f.outer, h))
    return ComposedField(f, h)


def pullback_state(u, B: Field, p, h: HeightField, t: float = 0.0) -> State:
    """Transformed state z-bar from physical fields; varpi = [[p]] on Gamma_h."""
    u, p = as_jump(u), as_jump(p)
    hh = h.at(t) if h.func is not None and h.t != t else h
    return State(compose(u, hh), compose(B, hh), compose(p, hh), hh,
                 varpi_from_pressure(p, hh, t), t)


def varpi_from_pressure(p, h: HeightField, t: float = 0.0) -> np.ndarray:
    p = as_jump(p)
    S = h.surface
    y = S.grid_points + h.values[..., None] * S.grid_normal
    return p.outer.value(y, t) - p.inner.value(y, t)


# ---------------------------------------------------------------------------
# traces and jumps


def one_sided_trace(f, surface: ReferenceSurface, side: str, t: float = 0.0,
                    method: str = "extension", what: str = "grad", s=None) -> np.ndarray:
    """Trace of ``what`` (value | grad) of one branch at the grid nodes (or at node params s).

    ``extension`` evaluates the smooth branch on Sigma; ``richardson`` takes the
    limit along -+n at offsets {1e-4, 5e-5} with linear extrapolation.
    """
    f = as_jump(f)
    br = f.branch(side)
    P = surface.grid_points
    n = surface.grid_normal
    k = 0 if what == "value" else 1
    if method == "extension":
        out = br.jet(P, t)[k]
    elif method == "richardson":
        sgn = 1.0 if side == "outer" else -1.0
        d1, d2 = TRACE_OFFSETS
        f1 = br.jet(P + sgn * d1 * n, t)[k]
        f2 = br.jet(P + sgn * d2 * n, t)[k]
        out = 2.0 * f2 - f1
    else:
        raise ConfigError(f"unknown trace method {method!r}")
    return out if s is None else out[node_index(surface, s)]


def jump(f, surface: ReferenceSurface, s=None, t: float = 0.0, method: str = "extension",
         what: str = "value") -> np.ndarray:
    """[[f]] = outer trace minus inner trace on Sigma (grid, or node params s)."""
    f = as_jump(f)
    if f.inner is f.outer:
        val = one_sided_trace(f, surface, "outer", t, "extension", what, s)
        return np.zeros_like(val)
    return (one_sided_trace(f, surface, "outer", t, method, what, s)
            - one_sided_trace(f, surface, "inner", t, method, what, s))


# ---------------------------------------------------------------------------
# multilinear slot algebra


Term = tuple[float, Callable, tuple[str, ...]]


def eval_terms(terms: Sequence[Term], slots: dict):
    out = 0.0
    for c, fn, args in terms:
        out = out + c * fn(*[slots[a] for a in args])
    return out


def deriv_terms(terms: Sequence[Term], slots: dict, dslots: dict):
    """Directional derivative: replace one slot occurrence at a time."""
    out = 0.0
    for c, fn, args in terms:
        for k, name in enumerate(args):
            d = dslots.get(name)
            if d is None:
                continue
            vals = [slots[a] for a in args]
            vals[k] = d
            out = out + c * fn(*vals)
    return out


def _rv(v, M):          # row vector times matrix
    return np.einsum("...i,...ij->...j", v, M)


def _mv(M, v):          # matrix times column vector
    return np.einsum("...ij,...j->...i", M, v)


def _mm(A, B):
    return np.einsum("...ij,...jk->...ik", A, B)


def _sym(M):
    return M + np.swapaxes(M, -1, -2)


def _dot(a, b):
    return np.einsum("...i,...i->...", a, b)


def _nu(nu, a):
    return nu.reshape(nu.shape + (1,) * (a.ndim - nu.ndim)) * a


G1_TERMS: list[Term] = [
    (-1.0, lambda gB, B: _mv(gB, B), ("gB", "B")),                      # -1/2 grad|B|^2
    (-1.0, lambda u, gu: _rv(u, gu), ("u", "gu")),
    (1.0, lambda B, gB: _rv(B, gB), ("B", "gB")),
    (1.0, lambda M3, gu: _rv(M3, gu), ("M3", "gu")),
    (1.0, lambda u, M1, gu: _rv(_rv(u, M1), gu), ("u", "M1", "gu")),
    (-1.0, lambda B, M1, gB: _rv(_rv(B, M1), gB), ("B", "M1", "gB")),
    (1.0, lambda M1, gB, B: _mv(M1, _mv(gB, B)), ("M1", "gB", "B")),    # 1/2 M1 grad|B|^2
    (1.0, lambda M1, gp: _mv(M1, gp), ("M1", "gp")),
    (1.0, lambda nu, M4, hu: _nu(nu, np.einsum("nij,nijk->nk", M4, hu)), ("nu", "M4", "hu")),
    (1.0, lambda nu, M2, gu: _nu(nu, _rv(M2, gu)), ("nu", "M2", "gu")),
]

G2_TERMS: list[Term] = [
    (-1.0, lambda u, gB: _rv(u, gB), ("u", "gB")),
    (1.0, lambda B, gu: _rv(B, gu), ("B", "gu")),
    (1.0, lambda u, M1, gB: _rv(_rv(u, M1), gB), ("u", "M1", "gB")),
    (-1.0, lambda B, M1, gu: _rv(_rv(B, M1), gu), ("B", "M1", "gu")),
    (1.0, lambda M3, gB: _rv(M3, gB), ("M3", "gB")),
    (1.0, lambda sig, M4, hB: sig * np.einsum("nij,nijk->nk", M4, hB), ("sigma", "M4", "hB")),
    (1.0, lambda sig, M2, gB: sig * _rv(M2, gB), ("sigma", "M2", "gB")),
]

# tr(M1 grad u): (grad u∘Theta) = (I - M1) grad u-bar, so div u∘Theta = div u-bar - tr(M1 grad u-bar)
G3_TERMS: list[Term] = [
    (1.0, lambda M1, gu: np.einsum("nij,nji->n", M1, gu), ("M1", "gu")),
]

L1_TERMS: list[Term] = [
    (1.0, lambda a: a, ("dtu",)),
    (1.0, lambda a: a, ("gp",)),
    (-1.0, lambda nu, hu: _nu(nu, np.einsum("niik->nk", hu)), ("nu", "hu")),
]
L2_TERMS: list[Term] = [
    (1.0, lambda a: a, ("dtB",)),
    (-1.0, lambda sig, hB: sig * np.einsum("niik->nk", hB), ("sigma", "hB")),
]
L3_TERMS: list[Term] = [(1.0, lambda gu: np.einsum("nii->n", gu), ("gu",))]

# surface slots: Gj = [[nu grad u]], M1 at Sigma, alpha, n, P
CAL_G1_TERMS: list[Term] = [
    (-1.0, lambda Gj, a, n: _dot(_mv(_sym(Gj), a), n), ("Gj", "alpha", "n")),
    (-1.0, lambda M1, Gj, n: _dot(_mv(_sym(_mm(M1, Gj)), n), n), ("M1", "Gj", "n")),
    (1.0, lambda M1, Gj, a, n: _dot(_mv(_sym(_mm(M1, Gj)), a), n), ("M1", "Gj", "alpha", "n")),
]

# minus the bracket P[[nu Kt]]alpha + P[[nu K]]n - (([[nu Kt]](n - alpha)).n) alpha,
# Kt = sym((I - M1) grad u), K = sym(M1 grad u)
CAL_G3_TERMS: list[Term] = [
    (-1.0, lambda P, Gj, a: _mv(P, _mv(_sym(Gj), a)), ("P", "Gj", "alpha")),
    (1.0, lambda P, M1, Gj, a: _mv(P, _mv(_sym(_mm(M1, Gj)), a)), ("P", "M1", "Gj", "alpha")),
    (-1.0, lambda P, M1, Gj, n: _mv(P, _mv(_sym(_mm(M1, Gj)), n)), ("P", "M1", "Gj", "n")),
    (1.0, lambda Gj, n, a: _dot(_mv(_sym(Gj), n), n)[..., None] * a, ("Gj", "n", "alpha")),
    (-1.0, lambda Gj, a1, n, a2: _dot(_mv(_sym(Gj), a1), n)[..., None] * a2,
     ("Gj", "alpha", "n", "alpha")),
    (-1.0, lambda M1, Gj, n, a: _dot(_mv(_sym(_mm(M1, Gj)), n), n)[..., None] * a,
     ("M1", "Gj", "n", "alpha")),
    (1.0, lambda M1, Gj, a1, n, a2: _dot(_mv(_sym(_mm(M1, Gj)), a1), n)[..., None] * a2,
     ("M1", "Gj", "alpha", "n", "alpha")),
]

# (I - M0) grad h . u + (b - u) . grad h, with (I - M0) grad h = grad h - alpha
G5_TERMS: list[Term] = [
    (1.0, _dot, ("gh", "ubar")),
    (-1.0, _dot, ("alpha", "ubar")),
    (1.0, _dot, ("b", "gh")),
    (-1.0, _dot, ("ubar", "gh")),
]


# ---------------------------------------------------------------------------
# slot assembly


@dataclass
class TubeContext:
    x: np.ndarray
    outer: np.ndarray
    coeffs: PullbackCoeffs
    geo: object


def tube_context(h: HeightField, x) -> TubeContext:
    h.require_valid()
    pts = np.asarray(x, float).reshape(-1, 3)
    geo = tube_geometry(h.surface, pts)
    C = coeffs_from_jet(theta_jet(h, geo))
    return TubeContext(pts, geo.side_outer, C, geo)


def _select_jet(f: JumpField, x, outer, t, strict: bool, d=None):
    if f.inner is f.outer:
        return f.inner.jet(x, t)
    if strict and d is not None and np.any(np.abs(d) < 1e-12):
        raise OperatorDomainError("jump-aware field evaluated on Sigma; pick points off the surface")
    a = f.inner.jet(x, t)
    b = f.outer.jet(x, t)
    out = []
    for ai, bi in zip(a, b):
        m = outer.reshape(outer.shape + (1,) * (ai.ndim - 1))
        out.append(np.where(m, bi, ai))
    return tuple(out)


def field_slots(z: State, ctx: TubeContext, params: FluidParams) -> dict:
    t = z.t
    u, gu, hu, dtu = _select_jet(z.u, ctx.x, ctx.outer, t, True, ctx.geo.d)
    B, gB, hB, dtB = z.B.jet(ctx.x, t)
    _, gp, _, _ = _select_jet(z.p, ctx.x, ctx.outer, t, True, ctx.geo.d)
    return dict(u=u, gu=gu, hu=hu, dtu=dtu, B=B, gB=gB, hB=hB, dtB=dtB, gp=gp,
                nu=params.nu(ctx.outer), sigma=params.sigma)


def coeff_slots(C: PullbackCoeffs) -> dict:
    return dict(M1=C.M1, M2=C.M2, M3=C.M3, M4=C.M4)


def coeff_derivatives(C: PullbackCoeffs, jphi: ThetaJet) -> dict:
    """DM1..DM4 in the height direction whose displacement jet is ``jphi``."""
    A = C.A
    DA = -A @ jphi.grad @ A
    H = C.jet.hess
    DdA = -(np.einsum("nab,njbc,ncd->njad", DA, H, A)
            + np.einsum("nab,njbc,ncd->njad", A, jphi.hess, A)
            + np.einsum("nab,njbc,ncd->njad", A, H, DA))
    DM2 = np.einsum("nij,njik->nk", DA, C.dA) + np.einsum("nij,njik->nk", A, DdA)
    DM3 = np.einsum("ni,nik->nk", jphi.dt, A) + np.einsum("ni,nik->nk", C.jet.dt, DA)
    DM4 = np.swapaxes(DA, -1, -2) @ A + np.swapaxes(A, -1, -2) @ DA
    return dict(A=DA, M1=-DA, M2=DM2, M3=DM3, M4=DM4)


def field_dslots(phi: Direction, ctx: TubeContext, t: float) -> dict:
    u, gu, hu, dtu = _select_jet(phi.u, ctx.x, ctx.outer, t, True, ctx.geo.d)
    B, gB, hB, dtB = phi.B.jet(ctx.x, t)
    _, gp, _, _ = _select_jet(phi.p, ctx.x, ctx.outer, t, True, ctx.geo.d)
    return dict(u=u, gu=gu, hu=hu, dtu=dtu, B=B, gB=gB, hB=hB, dtB=dtB, gp=gp)


def tube_slots(z: State, x, params: FluidParams) -> tuple[dict, TubeContext]:
    ctx = tube_context(z.h, x)
    slots = field_slots(z, ctx, params)
    slots.update(coeff_slots(ctx.coeffs))
    return slots, ctx


@dataclass
class SurfaceContext:
    geo: object          # InterfaceGeometry
    coeffs: PullbackCoeffs
    slots: dict


def surface_slots(z: State, params: FluidParams, b=None, trace: str = "extension") -> SurfaceContext:
    h = z.h
    S = h.surface
    geo = interface_geometry(h)
    shape = h.values.shape
    C = coeffs_from_jet(theta_jet(h, tube_geometry(S, S.grid_points.reshape(-1, 3))))
    M1 = C.M1.reshape(shape + (3, 3))
    gu_in = one_sided_trace(z.u, S, "inner", z.t, trace)
    gu_out = one_sided_trace(z.u, S, "outer", z.t, trace)
    u_in = one_sided_trace(z.u, S, "inner", z.t, trace, "value")
    u_out = one_sided_trace(z.u, S, "outer", z.t, trace, "value")
    n = S.grid_normal
    slots = dict(
        Gj=params.nu_minus * gu_out - params.nu_plus * gu_in,
        M1=M1, alpha=geo.alpha, n=n, P=EYE - n[..., :, None] * n[..., None, :],
        gh=h.grad_s, ubar=0.5 * (u_in + u_out),
        b=np.zeros(shape + (3,)) if b is None else np.broadcast_to(b, shape + (3,)),
    )
    return SurfaceContext(geo, C, slots)


def surface_dslots(z: State, phi: Direction, ctx: SurfaceContext, params: FluidParams,
                   trace: str = "extension") -> dict:
    h = z.h
    S = h.surface
    shape = h.values.shape
    jphi = theta_jet(phi.h, tube_geometry(S, S.grid_points.reshape(-1, 3)))
    dM = coeff_derivatives(ctx.coeffs, jphi)
    dg = frechet_geometry(h, phi.h, ctx.geo)
    gu_in = one_sided_trace(phi.u, S, "inner", z.t, trace)
    gu_out = one_sided_trace(phi.u, S, "outer", z.t, trace)
    u_in = one_sided_trace(phi.u, S, "inner", z.t, trace, "value")
    u_out = one_sided_trace(phi.u, S, "outer", z.t, trace, "value")
    return dict(Gj=params.nu_minus * gu_out - params.nu_plus * gu_in,
                M1=dM["M1"].reshape(shape + (3, 3)), alpha=dg.dalpha,
                gh=S.surface_grad(phi.h.values), ubar=0.5 * (u_in + u_out))


# ---------------------------------------------------------------------------
# operators at tube points


def _reshape(a, x):
    lead = np.asarray(x).shape[:-1]
    return a.reshape(lead + a.shape[1:])


def g1(z: State, x, params: FluidParams = FluidParams()) -> np.ndarray:
    slots, _ = tube_slots(z, x, params)
    return _reshape(eval_terms(G1_TERMS, slots), x)


def g2(z: State, x, params: FluidParams = FluidParams()) -> np.ndarray:
    slots, _ = tube_slots(z, x, params)
    return _reshape(eval_terms(G2_TERMS, slots), x)


def g3(z: State, x, params: FluidParams = FluidParams()) -> np.ndarray:
    slots, _ = tube_slots(z, x, params)
    return _reshape(eval_terms(G3_TERMS, slots), x)


# ---------------------------------------------------------------------------
# surface operators (grid arrays, or node params s)


def _at(a, surface, s):
    return a if s is None else a[node_index(surface, s)]


def cal_g1(z: State, params: FluidParams = FluidParams(), s=None, trace="extension"):
    ctx = surface_slots(z, params, trace=trace)
    return _at(eval_terms(CAL_G1_TERMS, ctx.slots), z.surface, s)


def _cal_g2_values(h: HeightField, H_gamma: np.ndarray, kappa: float) -> np.ndarray:
    # Taylor remainder of kappa H_Gamma about h = 0, so it vanishes at h = 0
    S = h.surface
    H_sigma = np.trace(S.grid_weingarten, axis1=-2, axis2=-1)
    return kappa * (H_gamma - H_sigma - dh_gamma_zero(S, h.values))


def reference_laplace_jump(surface: ReferenceSurface, params: FluidParams) -> np.ndarray:
    """kappa H_Sigma: the pressure jump that balances the undeformed interface."""
    return params.kappa * np.trace(surface.grid_weingarten, axis1=-2, axis2=-1)


def cal_g2(z: State, params: FluidParams = FluidParams(), s=None):
    h = z.h
    return _at(_cal_g2_values(h, interface_geometry(h).H, params.kappa), z.surface, s)


def cal_g3(z: State, params: FluidParams = FluidParams(), s=None, trace="extension"):
    ctx = surface_slots(z, params, trace=trace)
    return _at(eval_terms(CAL_G3_TERMS, ctx.slots), z.surface, s)


def g4(z: State, params: FluidParams = FluidParams(), s=None, trace="extension"):
    h = z.h
    S = h.surface
    ctx = surface_slots(z, params, trace=trace)
    c1 = eval_terms(CAL_G1_TERMS, ctx.slots)
    c2 = _cal_g2_values(h, ctx.geo.H, params.kappa)
    c3 = eval_terms(CAL_G3_TERMS, ctx.slots)
    scal = c1 + c2 + params.kappa * S.grid_trace_l2 * h.values
    return _at(scal[..., None] * S.grid_normal + c3, S, s)


def g5(z: State, b=None, s=None, trace="extension"):
    ctx = surface_slots(z, FluidParams(), b=b, trace=trace)
    return _at(eval_terms(G5_TERMS, ctx.slots), z.surface, s)


def linear_residual(z: State, which: int, x=None, params: FluidParams = FluidParams(),
                    b=None, s=None, trace: str = "extension"):
    """L1..L3 at tube points x; L4, L5 on the grid (or node params s).

    L4 takes the pressure jump relative to the reference Laplace jump kappa H_Sigma,
    the counterpart of cal_G2 being a remainder that vanishes at h = 0.
    """
    if which in (1, 2, 3):
        if x is None:
            raise ConfigError(f"L{which} needs ambient points")
        slots, _ = tube_slots(z, x, params)
        terms = {1: L1_TERMS, 2: L2_TERMS, 3: L3_TERMS}[which]
        return _reshape(eval_terms(terms, slots), x)
    h = z.h
    S = h.surface
    n = S.grid_normal
    if which == 4:
        ctx = surface_slots(z, params, trace=trace)
        Gj = ctx.slots["Gj"]
        excess = z.varpi_values() - reference_laplace_jump(S, params)
        out = (-_mv(_sym(Gj), n) + excess[..., None] * n
               - params.kappa * h.laplace_beltrami[..., None] * n)
        return _at(out, S, s)
    if which == 5:
        if h.dt_values is None:
            raise ConfigError("L5 needs the time derivative of h")
        ctx = surface_slots(z, params, b=b, trace=trace)
        sl = ctx.slots
        out = h.dt_values - _dot(sl["ubar"], n) + _dot(sl["b"], sl["gh"])
        return _at(out, S, s)
    raise ConfigError(f"no linear operator L{which}")


# ---------------------------------------------------------------------------
# original (untransformed) residuals, used as oracles


def curl_from_grad(g: np.ndarray) -> np.ndarray:
    """curl with (grad F)_jk = d_j F_k: (curl F)_i = eps_ijk d_j F_k."""
    return np.einsum("ijk,...jk->...i", LEVI, g)


def momentum_residual(u, B: Field, p, params: FluidParams, y, t: float = 0.0,
                      outer=None) -> np.ndarray:
    """d_t u + (u.grad)u - curl B x B + grad p - nu Lap u at physical points y."""
    u, p = as_jump(u), as_jump(p)
    y = np.asarray(y, float).reshape(-1, 3)
    outer = np.zeros(len(y), bool) if outer is None else np.asarray(outer, bool).reshape(-1)
    uv, gu, hu, dtu = _select_jet(u, y, outer, t, False)
    Bv, gB, _, _ = B.jet(y, t)
    _, gp, _, _ = _select_jet(p, y, outer, t, False)
    lap = np.einsum("niik->nk", hu)
    return (dtu + _rv(uv, gu) - np.cross(curl_from_grad(gB), Bv) + gp
            - params.nu(outer)[:, None] * lap)


def induction_residual(u: Field, B: Field, sigma: float, y, t: float = 0.0) -> np.ndarray:
    """d_t B - curl(u x B) + curl(sigma curl B), all curls from Levi-Civita contractions."""
    y = np.asarray(y, float).reshape(-1, 3)
    uv, gu, _, _ = u.jet(y, t)
    Bv, gB, hB, dtB = B.jet(y, t)
    # d_j (u x B)_k = eps_klm (d_j u_l B_m + u_l d_j B_m)
    g_uxb = (np.einsum("klm,njl,nm->njk", LEVI, gu, Bv)
             + np.einsum("klm,nl,njm->njk", LEVI, uv, gB))
    # d_j (curl B)_k = eps_klm d_j d_l B_m
    g_curlB = np.einsum("klm,njlm->njk", LEVI, hB)
    return dtB - curl_from_grad(g_uxb) + sigma * curl_from_grad(g_curlB)


def stress_residual(u, p, h: HeightField, params: FluidParams, t: float = 0.0) -> np.ndarray:
    """R = -[[nu(grad u + grad u^T) - p I]] n_Gamma - kappa H_Gamma n_Gamma on Gamma_h (grid)."""
    u, p = as_jump(u), as_jump(p)
    S = h.surface
    geo = interface_geometry(h)
    y = S.grid_points + h.values[..., None] * S.grid_normal
    gi = u.inner.grad(y, t)
    go = u.outer.grad(y, t)
    jump_s = params.nu_minus * _sym(go) - params.nu_plus * _sym(gi)
    jp = p.outer.value(y, t) - p.inner.value(y, t)
    nG = geo.normal
    return -_mv(jump_s, nG) + jp[..., None] * nG - params.kappa * geo.H[..., None] * nG


def stress_oracle(u, p, h: HeightField, params: FluidParams, t: float = 0.0) -> np.ndarray:
    """What L4 - G4 must equal: ((R.n) n + P R + (R.n) alpha) / beta."""
    S = h.surface
    R = stress_residual(u, p, h, params, t)
    geo = interface_geometry(h)
    n = S.grid_normal
    Rn = _dot(R, n)
    PR = R - Rn[..., None] * n
    return (Rn[..., None] * n + PR + Rn[..., None] * geo.alpha) / geo.beta[..., None]


# ---------------------------------------------------------------------------
# transformation identity checkers


@dataclass
class IdentityResult:
    name: str
    residual: float
    residuals: np.ndarray = field(repr=False)
    fd_path: bool
    step: float | None = None


def _norm_res(lhs, rhs) -> np.ndarray:
    lhs = np.asarray(lhs)
    axes = tuple(range(1, lhs.ndim))
    num = np.max(np.abs(lhs - rhs), axis=axes) if axes else np.abs(lhs - rhs)
    den = np.maximum(1.0, np.max(np.abs(lhs), axis=axes) if axes else np.abs(lhs))
    return num / den


def _shift_height(h: HeightField, dt: float) -> HeightField:
    if h.func is not None:
        return h.at(h.t + dt)
    if h.dt_values is None:
        return h
    return h.with_values(h.values + dt * h.dt_values, h.dt_values)


def _pullback_values(f: Field, h: HeightField, pts: np.ndarray, t: float) -> np.ndarray:
    return f.value(hanzawa_map(h, pts), t)


def _fd_jets(f: Field, h: HeightField, x: np.ndarray, t: float, step: float):
    """Second-order central FD gradient and Hessian of f∘Theta at x."""
    n = len(x)
    E = np.eye(3) * step
    offs = [np.zeros(3)]
    for i in range(3):
        offs += [E[i], -E[i]]
    for i in range(3):
        for j in range(i + 1, 3):
            offs += [E[i] + E[j], E[i] - E[j], -E[i] + E[j], -E[i] - E[j]]
    offs = np.array(offs)
    pts = (x[:, None, :] + offs[None]).reshape(-1, 3)
    v = _pullback_values(f, h, pts, t).reshape((n, len(offs)) + ((3,) if f.rank else ()))
    f0 = v[:, 0]
    grad = np.empty((n, 3) + f0.shape[1:])
    hess = np.empty((n, 3, 3) + f0.shape[1:])
    for i in range(3):
        fp, fm = v[:, 1 + 2 * i], v[:, 2 + 2 * i]
        grad[:, i] = (fp - fm) / (2 * step)
        hess[:, i, i] = (fp - 2 * f0 + fm) / step ** 2
    k = 7
    for i in range(3):
        for j in range(i + 1, 3):
            pp, pm, mp, mm = v[:, k], v[:, k + 1], v[:, k + 2], v[:, k + 3]
            hess[:, i, j] = hess[:, j, i] = (pp - pm - mp + mm) / (4 * step ** 2)
            k += 4
    return grad, hess


def _branch_for(u, outer):
    """Single-branch field for a batch on one side, or the continuous field."""
    u = as_jump(u)
    if u.inner is u.outer:
        return u.inner
    if np.all(outer):
        return u.outer
    if not np.any(outer):
        return u.inner
    raise OperatorDomainError("identity checks take points on one side of Sigma per call")


def _identity_setup(u, h: HeightField, x, t):
    h.require_valid()
    pts = np.asarray(x, float).reshape(-1, 3)
    ctx = tube_context(h, pts)
    f = _branch_for(u, ctx.outer)
    y = pts + ctx.coeffs.jet.theta
    return pts, ctx, f, y


def check_gradient_identity(u, h: HeightField, x, t: float = 0.0, mode: str = "chain",
                            step: float = 1e-2) -> IdentityResult:
    """(grad u)∘Theta = (I - M1) grad u-bar."""
    pts, ctx, f, y = _identity_setup(u, h, pts_or(x), t)
    lhs = f.grad(y, t)
    if mode == "chain":
        gbar = compose_jet(ctx.coeffs.jet, lhs, f.hess(y, t))[0]
    else:
        gbar = _fd_jets(f, h, pts, t, step)[0]
    rhs = np.einsum("nik,nk...->ni...", EYE - ctx.coeffs.M1, gbar)
    r = _norm_res(lhs, rhs)
    return IdentityResult("gradient", float(r.max()), r, mode == "fd", step if mode == "fd" else None)


def check_divergence_identity(u, h: HeightField, x, t: float = 0.0, mode: str = "chain",
                              step: float = 1e-2) -> IdentityResult:
    """(div u)∘Theta = div u-bar - tr(M1 grad u-bar)."""
    pts, ctx, f, y = _identity_setup(u, h, pts_or(x), t)
    if f.rank != 1:
        raise ConfigError("divergence identity needs a vector field")
    g = f.grad(y, t)
    lhs = np.einsum("nii->n", g)
    if mode == "chain":
        gbar = compose_jet(ctx.coeffs.jet, g, f.hess(y, t))[0]
    else:
        gbar = _fd_jets(f, h, pts, t, step)[0]
    rhs = np.einsum("nii->n", gbar) - np.einsum("nij,nji->n", ctx.coeffs.M1, gbar)
    r = _norm_res(lhs, rhs)
    return IdentityResult("divergence", float(r.max()), r, mode == "fd", step if mode == "fd" else None)


def check_laplacian_identity(u, h: HeightField, x, t: float = 0.0, mode: str = "chain",
                             step: float = 1e-2) -> IdentityResult:
    """(Lap u)∘Theta = Lap u-bar + M4 : grad^2 u-bar + M2 . grad u-bar."""
    pts, ctx, f, y = _identity_setup(u, h, pts_or(x), t)
    H = f.hess(y, t)
    lhs = np.einsum("nii...->n...", H)
    if mode == "chain":
        gbar, hbar = compose_jet(ctx.coeffs.jet, f.grad(y, t), H)
    else:
        gbar, hbar = _fd_jets(f, h, pts, t, step)
    C = ctx.coeffs
    rhs = (np.einsum("nii...->n...", hbar) + np.einsum("nij,nij...->n...", C.M4, hbar)
           + np.einsum("nk,nk...->n...", C.M2, gbar))
    r = _norm_res(lhs, rhs)
    return IdentityResult("laplacian", float(r.max()), r, mode == "fd", step if mode == "fd" else None)


def check_time_identity(u, h: HeightField, x, t: float = 0.0, mode: str = "chain",
                        step: float = 1e-2, dt_step: float = 1e-5) -> IdentityResult:
    """(d_t u)∘Theta = d_t u-bar - M3 grad u-bar, with d_t u-bar by central FD in time."""
    pts, ctx, f, y = _identity_setup(u, h, pts_or(x), t)
    lhs = f.dt(y, t)
    tau = dt_step if mode == "chain" else step
    hp, hm = _shift_height(h, tau), _shift_height(h, -tau)
    dtbar = (_pullback_values(f, hp, pts, t + tau) - _pullback_values(f, hm, pts, t - tau)) / (2 * tau)
    if mode == "chain":
        gbar = compose_jet(ctx.coeffs.jet, f.grad(y, t), f.hess(y, t))[0]
    else:
        gbar = _fd_jets(f, h, pts, t, step)[0]
    rhs = dtbar - np.einsum("nk,nk...->n...", ctx.coeffs.M3, gbar)
    r = _norm_res(lhs, rhs)
    return IdentityResult("time", float(r.max()), r, True, tau)


def pts_or(x):
    return np.atleast_2d(np.asarray(x, float))


IDENTITY_CHECKS = {
    "gradient": check_gradient_identity,
    "divergence": check_divergence_identity,
    "laplacian": check_laplacian_identity,
    "time": check_time_identity,
}


def identity_order(name: str, u, h: HeightField, x, t: float = 0.0, step: float = 1e-3) -> float:
    """Observed FD order of an identity residual from steps (step, step/2).

    Points near the onset of the cutoff transition see large higher derivatives
    of Theta, so coarser steps are still pre-asymptotic there.
    """
    chk = IDENTITY_CHECKS[name]
    r1 = chk(u, h, x, t, mode="fd", step=step).residual
    r2 = chk(u, h, x, t, mode="fd", step=step / 2).residual
    return float(np.log2(r1 / r2))


# ---------------------------------------------------------------------------
# Frechet catalogue


TUBE_OPS = ("M1", "M2", "M3", "M4", "G1", "G2", "G3")
SURFACE_OPS = ("M0", "alpha", "beta", "H", "cal_G1", "cal_G2", "cal_G3", "G4", "G5")
OPS = TUBE_OPS + SURFACE_OPS


def evaluate(op: str, z: State, x=None, params: FluidParams = FluidParams(), b=None,
             trace: str = "extension") -> np.ndarray:
    """Operator value: tube ops at points x, surface ops on the whole grid."""
    if op in TUBE_OPS:
        if x is None:
            raise ConfigError(f"{op} needs ambient points")
        if op.startswith("M"):
            return coeff_slots(tube_context(z.h, x).coeffs)[op]
        slots, _ = tube_slots(z, x, params)
        return eval_terms({"G1": G1_TERMS, "G2": G2_TERMS, "G3": G3_TERMS}[op], slots)
    h = z.h
    if op == "M0":
        return m0_grid(h)
    if op in ("alpha", "beta", "H"):
        h.require_valid()
        g = interface_geometry(h)
        return {"alpha": g.alpha, "beta": g.beta, "H": g.H}[op]
    if op == "cal_G2":
        return cal_g2(z, params)
    ctx = surface_slots(z, params, b=b, trace=trace)
    if op == "cal_G1":
        return eval_terms(CAL_G1_TERMS, ctx.slots)
    if op == "cal_G3":
        return eval_terms(CAL_G3_TERMS, ctx.slots)
    if op == "G4":
        return g4(z, params, trace=trace)
    if op == "G5":
        return eval_terms(G5_TERMS, ctx.slots)
    raise ConfigError(f"unknown operator {op!r}")


def frechet(op: str, z: State, phi: Direction, x=None, params: FluidParams = FluidParams(),
            b=None, trace: str = "extension") -> np.ndarray:
    """Closed-form directional derivative DF[z]phi."""
    h = z.h
    S = h.surface
    if op in TUBE_OPS:
        if x is None:
            raise ConfigError(f"{op} needs ambient points")
        ctx = tube_context(h, x)
        jphi = theta_jet(phi.h, ctx.geo)
        dM = coeff_derivatives(ctx.coeffs, jphi)
        if op.startswith("M"):
            return dM[op]
        slots = field_slots(z, ctx, params)
        slots.update(coeff_slots(ctx.coeffs))
        dslots = field_dslots(phi, ctx, z.t)
        dslots.update({k: dM[k] for k in ("M1", "M2", "M3", "M4")})
        return deriv_terms({"G1": G1_TERMS, "G2": G2_TERMS, "G3": G3_TERMS}[op], slots, dslots)
    h.require_valid()
    if op == "M0":
        M0 = m0_grid(h)
        return phi.h.values[..., None, None] * (M0 @ S.grid_weingarten @ M0)
    if op in ("alpha", "beta", "H"):
        dg = frechet_geometry(h, phi.h)
        return {"alpha": dg.dalpha, "beta": dg.dbeta, "H": dg.dH}[op]
    if op == "cal_G2":
        return params.kappa * (frechet_geometry(h, phi.h).dH - dh_gamma_zero(S, phi.h.values))
    ctx = surface_slots(z, params, b=b, trace=trace)
    ds = surface_dslots(z, phi, ctx, params, trace)
    if op == "cal_G1":
        return deriv_terms(CAL_G1_TERMS, ctx.slots, ds)
    if op == "cal_G3":
        return deriv_terms(CAL_G3_TERMS, ctx.slots, ds)
    if op == "G4":
        d1 = deriv_terms(CAL_G1_TERMS, ctx.slots, ds)
        d2 = params.kappa * (frechet_geometry(h, phi.h, ctx.geo).dH - dh_gamma_zero(S, phi.h.values))
        d3 = deriv_terms(CAL_G3_TERMS, ctx.slots, ds)
        scal = d1 + d2 + params.kappa * S.grid_trace_l2 * phi.h.values
        return scal[..., None] * S.grid_normal + d3
    if op == "G5":
        return deriv_terms(G5_TERMS, ctx.slots, ds)
    raise ConfigError(f"unknown operator {op!r}")


@dataclass
class FrechetReport:
    op: str
    eps: list[float]
    rel_err: list[float]
    observed_order: float | None
    noise_floor: list[float]
    passed: bool
    tol: float = 1e-3
    min_order: float = 1.9

    def to_dict(self) -> dict:
        return {"name": f"frechet:{self.op}", "eps": self.eps, "rel_err": self.rel_err,
                "max_rel_err": self.rel_err[self.eps.index(1e-3)] if 1e-3 in self.eps
                else min(self.rel_err),
                "observed_order": self.observed_order, "pass": self.passed}


def frechet_check(op: str, z: State, phi: Direction, x=None, eps=(1e-2, 1e-3, 1e-4),
                  params: FluidParams = FluidParams(), b=None, trace: str = "extension",
                  tol: float = 1e-3, min_order: float = 1.9) -> FrechetReport:
    """Compare DF[z]phi with (F(z + e phi) - F(z - e phi)) / 2e over the ladder."""
    D = np.asarray(frechet(op, z, phi, x, params, b, trace))
    F0 = np.asarray(evaluate(op, z, x, params, b, trace))
    dn = max(np.max(np.abs(D)), 1e-300)
    fn = np.max(np.abs(F0))
    errs, floors = [], []
    for e in eps:
        try:
            fp = evaluate(op, z.shifted(phi, e), x, params, b, trace)
            fm = evaluate(op, z.shifted(phi, -e), x, params, b, trace)
        except HeightError as exc:
            raise HeightError(f"gate failure at eps={e:g}: {exc}") from exc
        fd = (np.asarray(fp) - np.asarray(fm)) / (2 * e)
        errs.append(float(np.max(np.abs(fd - D)) / dn))
        floors.append(float(10 * np.finfo(float).eps * max(fn, 1.0) / (e * dn)))
    order = None
    for k in range(len(eps) - 1):
        if errs[k + 1] > floors[k + 1] and errs[k] > floors[k]:
            order = float(np.log(errs[k] / errs[k + 1]) / np.log(eps[k] / eps[k + 1]))
            break
    at = errs[list(eps).index(1e-3)] if 1e-3 in eps else min(errs)
    ok = at <= tol and (order is None or order >= min_order)
    return FrechetReport(op, list(map(float, eps)), errs, order, floors, bool(ok), tol, min_order)


def degeneracy_terms(z: State, x, params: FluidParams = FluidParams(), b=None) -> dict:
    """Per-term values of every G-term carrying an h-dependent factor (for the h = 0 check)."""
    slots, _ = tube_slots(z, x, params)
    hfac = {"M1", "M2", "M3", "M4"}
    out = {}
    for name, terms in (("G1", G1_TERMS), ("G2", G2_TERMS), ("G3", G3_TERMS)):
        for k, (c, fn, args) in enumerate(terms):
            if hfac & set(args):
                out[f"{name}[{k}]"] = float(np.max(np.abs(c * fn(*[slots[a] for a in args]))))
    ctx = surface_slots(z, params, b=b)
    for name, terms in (("cal_G1", CAL_G1_TERMS), ("cal_G3", CAL_G3_TERMS), ("G5", G5_TERMS)):
        for k, (c, fn, args) in enumerate(terms):
            if {"M1", "alpha", "gh"} & set(args):
                out[f"{name}[{k}]"] = float(np.max(np.abs(c * fn(*[ctx.slots[a] for a in args]))))
    return out

