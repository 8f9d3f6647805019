"""Normal-graph diffeomorphism Theta_h(x) = x + eta(d/rho0) h(Pi x) n(Pi x),
its inverse, and the pullback coefficient fields M0..M4.

Everything here is linear in the height up to the final matrix inversions, so
the displacement jet of h + eps*phi is the sum of the individual jets; the
Frechet derivatives in ``operators`` rely on that.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.interpolate import RectBivariateSpline
from scipy.special import expit

from .fields import Field, LinearCombination
from .surface import EYE, NumericError, ReferenceSurface

ETA_LAMBDA = 0.2


class HeightError(Exception):
    """Height fails the smallness gate (too large for Theta to be well defined)."""


# ---------------------------------------------------------------------------
# cutoff


def cutoff_eta(t) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Smooth cutoff with eta = 1 on |t| <= 1/3 and eta = 0 on |t| >= 2/3.

    eta = psi(2/3-|t|) / (psi(2/3-|t|) + psi(|t|-1/3)) with psi(r) = exp(-lam/r),
    written as a logistic in q = lam/(2/3-|t|) - lam/(|t|-1/3). Returns
    (eta, eta', eta'').
    """
    t = np.asarray(t, dtype=float)
    y = np.abs(t)
    inner = y <= 1.0 / 3.0
    outer = y >= 2.0 / 3.0
    mid = ~(inner | outer)
    ym = np.where(mid, y, 0.5)
    a, b = 2.0 / 3.0 - ym, ym - 1.0 / 3.0
    lam = ETA_LAMBDA
    q = lam / a - lam / b
    q1 = lam / a ** 2 + lam / b ** 2
    q2 = 2 * lam / a ** 3 - 2 * lam / b ** 3
    eta_m = expit(-q)
    e = expit(q) * expit(-q)
    d1 = -e * q1
    d2 = -((1 - 2 * eta_m) * d1 * q1 + e * q2)
    eta = np.where(inner, 1.0, np.where(outer, 0.0, eta_m))
    sgn = np.where(t < 0, -1.0, 1.0)
    deta = np.where(mid, sgn * d1, 0.0)
    d2eta = np.where(mid, d2, 0.0)
    return eta, deta, d2eta


def _max_eta_slope() -> float:
    t = np.linspace(1 / 3, 2 / 3, 20001)
    return float(np.max(np.abs(cutoff_eta(t)[1])))


ETA_MAX_SLOPE = _max_eta_slope()


# ---------------------------------------------------------------------------
# heights


def _pad_for_spline(surface: ReferenceSurface, data: np.ndarray, k: int = 4):
    """Extend grid data with k ghost layers (periodic wrap / pole reflection)."""
    U, V = surface.grid_params
    u, v = U[:, 0], V[0, :]
    du, dv = surface.spacing
    nv = surface.nv
    if surface.modes[0] == "periodic":
        ext = np.concatenate([data[-k:], data, data[:k]], axis=0)
    else:
        top = np.roll(data[k - 1::-1], nv // 2, axis=1)
        bottom = np.roll(data[-1:-k - 1:-1], nv // 2, axis=1)
        ext = np.concatenate([top, data, bottom], axis=0)
    ext = np.concatenate([ext[:, -k:], ext, ext[:, :k]], axis=1)
    ue = np.concatenate([u[0] - du * np.arange(k, 0, -1), u, u[-1] + du * np.arange(1, k + 1)])
    ve = np.concatenate([v[0] - dv * np.arange(k, 0, -1), v, v[-1] + dv * np.arange(1, k + 1)])
    return ue, ve, ext


class HeightField:
    """Height h on the reference surface.

    Either grid-only (``values`` on the surface grid, optional ``dt_values``) or
    backed by a closed-form ambient function ``func`` (possibly time-dependent)
    whose restriction to Sigma is h; the latter gives exact extension
    derivatives.
    """

    def __init__(self, surface: ReferenceSurface, values=None, dt_values=None,
                 func: Field | None = None, t: float = 0.0, delta0: float = 0.3):
        self.surface = surface
        self.func = func
        self.t = float(t)
        self.delta0 = float(delta0)
        if not 0.0 < self.delta0 < 1.0:
            raise HeightError("delta0 must lie in (0, 1)")
        pts = surface.grid_points
        if values is None:
            if func is None:
                raise HeightError("height needs grid values or a function")
            values = func.value(pts, self.t)
            if dt_values is None:
                dt_values = func.dt(pts, self.t)
        self.values = np.broadcast_to(np.asarray(values, dtype=float),
                                      (surface.nu, surface.nv)).copy()
        if self.values.shape != (surface.nu, surface.nv):
            raise HeightError("height grid shape does not match the surface grid")
        self.dt_values = None if dt_values is None else np.broadcast_to(
            np.asarray(dt_values, float), self.values.shape).copy()

    # -- constructors ---------------------------------------------------
    @classmethod
    def constant(cls, surface, c: float, rate: float = 0.0, delta0: float = 0.3):
        from .fields import SympyField, T
        return cls(surface, func=SympyField(c + rate * T, name=f"{c}+{rate}t", self_test=False),
                   delta0=delta0)

    @classmethod
    def from_function(cls, surface, func: Field, t: float = 0.0, delta0: float = 0.3):
        return cls(surface, func=func, t=t, delta0=delta0)

    @classmethod
    def zero(cls, surface, delta0: float = 0.3):
        return cls.constant(surface, 0.0, delta0=delta0)

    def at(self, t: float) -> "HeightField":
        if self.func is None:
            raise HeightError("grid-only heights cannot be re-evaluated at another time")
        return HeightField(self.surface, func=self.func, t=t, delta0=self.delta0)

    def with_values(self, values, dt_values=None) -> "HeightField":
        return HeightField(self.surface, values=values, dt_values=dt_values, t=self.t,
                           delta0=self.delta0)

    # -- arithmetic (no gate check; evaluation sites check) ------------
    def _combine(self, other: "HeightField", c1: float, c2: float) -> "HeightField":
        if other.surface is not self.surface:
            raise HeightError("heights live on different surfaces")
        func = None
        if self.func is not None and other.func is not None:
            func = LinearCombination([(c1, self.func), (c2, other.func)])
        if self.dt_values is None and other.dt_values is None:
            dt = None
        else:
            z = np.zeros_like(self.values)
            dt = c1 * (self.dt_values if self.dt_values is not None else z) + \
                c2 * (other.dt_values if other.dt_values is not None else z)
        out = HeightField(self.surface, values=c1 * self.values + c2 * other.values,
                          dt_values=dt, t=self.t, delta0=self.delta0)
        out.func = func
        return out

    def __add__(self, other):
        return self._combine(other, 1.0, 1.0)

    def __sub__(self, other):
        return self._combine(other, 1.0, -1.0)

    def __rmul__(self, c: float):
        return self._combine(self, float(c), 0.0)

    def __neg__(self):
        return self._combine(self, -1.0, 0.0)

    # -- gate -----------------------------------------------------------
    @property
    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def gate_ok(self) -> bool:
        return self.sup < self.delta0 * self.surface.rho0

    def require_valid(self) -> None:
        if not self.gate_ok():
            raise HeightError(f"height too large: sup|h|={self.sup:.4g} >= "
                              f"delta0*rho0={self.delta0 * self.surface.rho0:.4g}")

    def is_fiber_monotone(self) -> bool:
        """Theta is a bijection iff r + h*eta(r/rho0) is increasing on every fibre."""
        return self.sup * ETA_MAX_SLOPE < self.surface.rho0

    # -- surface derivatives on the grid -------------------------------
    @cached_property
    def grad_s(self) -> np.ndarray:
        return self.surface.surface_grad(self.values)

    @cached_property
    def hess_s(self) -> np.ndarray:
        return self.surface.surface_grad(self.grad_s)

    @cached_property
    def laplace_beltrami(self) -> np.ndarray:
        return np.trace(self.hess_s, axis1=-2, axis2=-1)

    @cached_property
    def _splines(self):
        comps = [self.values]
        comps += [self.grad_s[..., i] for i in range(3)]
        comps += [self.hess_s[..., i, j] for i in range(3) for j in range(3)]
        comps.append(self.dt_values if self.dt_values is not None else np.zeros_like(self.values))
        out = []
        for c in comps:
            ue, ve, ext = _pad_for_spline(self.surface, c)
            out.append(RectBivariateSpline(ue, ve, ext, kx=3, ky=3, s=0))
        return out

    def values_at_params(self, s) -> np.ndarray:
        s = np.asarray(s, float)
        if self.func is not None:
            return self.func.value(self.surface.surface_point(s), self.t)
        return self._splines[0].ev(s[..., 0], s[..., 1])

    # -- extension h∘Pi ---------------------------------------------------
    def extension(self, jet) -> "ExtJet":
        """Value, gradient, Hessian and time derivative of h∘Pi given a distance jet."""
        d, foot = jet.d, jet.foot
        dd, d2, d3 = jet.grad, jet.hess, jet.third
        gradpi = EYE - dd[..., :, None] * dd[..., None, :] - d[..., None, None] * d2
        hesspi = -(np.einsum("...ij,...k->...ijk", d2, dd)
                   + np.einsum("...j,...ik->...ijk", dd, d2)
                   + np.einsum("...i,...jk->...ijk", dd, d2)
                   + d[..., None, None, None] * d3)
        if self.func is not None:
            val = self.func.value(foot, self.t)
            g = self.func.grad(foot, self.t)
            hg = self.func.hess(foot, self.t)
            dt = self.func.dt(foot, self.t)
            grad = np.einsum("...ik,...k->...i", gradpi, g)
            hess = (np.einsum("...ijk,...k->...ij", hesspi, g)
                    + np.einsum("...ik,...kl,...jl->...ij", gradpi, hg, gradpi))
        else:
            sp = self._splines
            u, v = jet.params[..., 0], jet.params[..., 1]
            val = sp[0].ev(u, v)
            G = np.stack([sp[1 + i].ev(u, v) for i in range(3)], -1)
            S = np.stack([sp[4 + k].ev(u, v) for k in range(9)], -1).reshape(G.shape + (3,))
            dt = sp[13].ev(u, v)
            grad = np.einsum("...ik,...k->...i", gradpi, G)
            hess = (np.einsum("...ijk,...k->...ij", hesspi, G)
                    + np.einsum("...ik,...lk,...jl->...ij", gradpi, S, gradpi))
        return ExtJet(val, grad, hess, dt)


@dataclass(frozen=True)
class ExtJet:
    value: np.ndarray
    grad: np.ndarray
    hess: np.ndarray
    dt: np.ndarray


# ---------------------------------------------------------------------------
# displacement jets


@dataclass
class TubeGeometry:
    """Distance jet and cutoff-weighted normal extension at a batch of points."""

    x: np.ndarray
    inside: np.ndarray
    d: np.ndarray
    jet: object
    nn: np.ndarray      # n = eta(d/rho0) grad d
    dnn: np.ndarray     # d_i n_j
    d2nn: np.ndarray    # d_i d_j n_k

    @property
    def side_outer(self) -> np.ndarray:
        return self.d >= 0


def tube_geometry(surface: ReferenceSurface, x) -> TubeGeometry:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    s, d, foot, ok = surface.project_raw(x)
    rho0 = surface.rho0
    inside = ok & (np.abs(d) < 2.0 * rho0 / 3.0)
    n = len(x)
    nn = np.zeros((n, 3))
    dnn = np.zeros((n, 3, 3))
    d2nn = np.zeros((n, 3, 3, 3))
    jet = None
    if np.any(inside):
        jet = surface.distance_jet(x[inside], order=3)
        eta, e1, e2 = cutoff_eta(jet.d / rho0)
        g, H, K = jet.grad, jet.hess, jet.third
        nn[inside] = eta[:, None] * g
        dnn[inside] = (e1 / rho0)[:, None, None] * g[:, :, None] * g[:, None, :] \
            + eta[:, None, None] * H
        d2nn[inside] = ((e2 / rho0 ** 2)[:, None, None, None]
                        * np.einsum("ni,nj,nk->nijk", g, g, g)
                        + (e1 / rho0)[:, None, None, None]
                        * (np.einsum("nij,nk->nijk", H, g) + np.einsum("ni,njk->nijk", g, H)
                           + np.einsum("nj,nik->nijk", g, H))
                        + eta[:, None, None, None] * K)
    return TubeGeometry(x, inside, np.where(ok, d, np.inf), jet, nn, dnn, d2nn)


@dataclass
class ThetaJet:
    """theta = (h∘Pi) n-extension with its first/second space and time derivatives."""

    theta: np.ndarray
    grad: np.ndarray    # [i, j] = d_i theta_j
    hess: np.ndarray    # [i, j, k] = d_i d_j theta_k
    dt: np.ndarray

    def __add__(self, other: "ThetaJet") -> "ThetaJet":
        return ThetaJet(self.theta + other.theta, self.grad + other.grad,
                        self.hess + other.hess, self.dt + other.dt)

    def scale(self, c: float) -> "ThetaJet":
        return ThetaJet(c * self.theta, c * self.grad, c * self.hess, c * self.dt)


def theta_jet(h: HeightField, geo: TubeGeometry) -> ThetaJet:
    n = len(geo.x)
    th = np.zeros((n, 3))
    g = np.zeros((n, 3, 3))
    hs = np.zeros((n, 3, 3, 3))
    dt = np.zeros((n, 3))
    m = geo.inside
    if np.any(m):
        e = h.extension(geo.jet)
        nn, dnn, d2nn = geo.nn[m], geo.dnn[m], geo.d2nn[m]
        th[m] = e.value[:, None] * nn
        g[m] = e.grad[:, :, None] * nn[:, None, :] + e.value[:, None, None] * dnn
        hs[m] = (e.hess[:, :, :, None] * nn[:, None, None, :]
                 + e.grad[:, :, None, None] * dnn[:, None, :, :]
                 + e.grad[:, None, :, None] * dnn[:, :, None, :]
                 + e.value[:, None, None, None] * d2nn)
        dt[m] = e.dt[:, None] * nn
    return ThetaJet(th, g, hs, dt)


# ---------------------------------------------------------------------------
# public maps


def _points(x) -> tuple[np.ndarray, tuple]:
    x = np.asarray(x, dtype=float)
    return x.reshape(-1, 3), x.shape[:-1]


def theta_displacement(h: HeightField, x) -> np.ndarray:
    h.require_valid()
    pts, shape = _points(x)
    geo = tube_geometry(h.surface, pts)
    out = np.zeros_like(pts)
    m = geo.inside
    if np.any(m):
        out[m] = h.extension(geo.jet).value[:, None] * geo.nn[m]
    return out.reshape(shape + (3,))


def hanzawa_map(h: HeightField, x) -> np.ndarray:
    return np.asarray(x, float) + theta_displacement(h, x)


def grad_theta(h: HeightField, x) -> np.ndarray:
    h.require_valid()
    pts, shape = _points(x)
    return theta_jet(h, tube_geometry(h.surface, pts)).grad.reshape(shape + (3, 3))


def hanzawa_inverse(h: HeightField, y, tol: float = 1e-13, max_iter: int = 50) -> np.ndarray:
    """Invert Theta along the normal fibre: solve r + h(p) eta(r/rho0) = d(y)."""
    h.require_valid()
    if not h.is_fiber_monotone():
        raise HeightError("height too large for Theta to be injective on the tube "
                          f"(sup|h|*max|eta'|={h.sup * ETA_MAX_SLOPE:.3g} >= rho0)")
    S = h.surface
    pts, shape = _points(y)
    s, d, foot, ok = S.project_raw(pts)
    rho0 = S.rho0
    act = ok & (np.abs(d) < 2 * rho0 / 3)
    out = pts.copy()
    if np.any(act):
        hp = h.values_at_params(s[act])
        dy = d[act]
        lo = np.full(dy.shape, -2 * rho0 / 3)
        hi = np.full(dy.shape, 2 * rho0 / 3)
        r = dy - hp
        r = np.clip(r, lo, hi)
        trace = []
        for _ in range(max_iter):
            eta, e1, _ = cutoff_eta(r / rho0)
            f = r + hp * eta - dy
            fp = 1 + hp * e1 / rho0
            lo = np.where(f < 0, np.maximum(lo, r), lo)
            hi = np.where(f > 0, np.minimum(hi, r), hi)
            rn = r - f / fp
            rn = np.where((rn <= lo) | (rn >= hi), 0.5 * (lo + hi), rn)
            delta = np.abs(rn - r)
            trace.append(float(delta.max()))
            r = rn
            if np.all(delta <= tol * max(1.0, rho0)):
                break
        else:
            raise NumericError("inverse Hanzawa Newton iteration did not converge", trace)
        n = S.normal_at(foot[act])
        out[act] = foot[act] + r[:, None] * n
    return out.reshape(shape + (3,))


# ---------------------------------------------------------------------------
# pullback coefficients


def adjugate3(B: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Adjugate and determinant of stacked 3x3 matrices via cross products of rows."""
    r0, r1, r2 = B[..., 0, :], B[..., 1, :], B[..., 2, :]
    c0, c1, c2 = np.cross(r1, r2), np.cross(r2, r0), np.cross(r0, r1)
    det = np.sum(r0 * c0, axis=-1)
    adj = np.stack([c0, c1, c2], axis=-1)
    return adj, det


def m0_from(hval, L) -> np.ndarray:
    """(I - h L)^{-1} as adjugate / determinant; gate |det| >= 1/2."""
    B = EYE - np.asarray(hval)[..., None, None] * L
    adj, det = adjugate3(B)
    if np.any(np.abs(det) < 0.5):
        raise HeightError("det(I - h L) < 1/2: height too large for the curvature")
    return adj / det[..., None, None]


def m0(h: HeightField, s) -> np.ndarray:
    h.require_valid()
    s = np.asarray(s, float)
    return m0_from(h.values_at_params(s), h.surface.weingarten(s))


def m0_grid(h: HeightField) -> np.ndarray:
    h.require_valid()
    return m0_from(h.values, h.surface.grid_weingarten)


@dataclass
class PullbackCoeffs:
    """M1..M4 (and the inverse Jacobian A) at a batch of points."""

    A: np.ndarray        # (grad Theta)^{-1} = I - M1
    dA: np.ndarray       # [j, a, b] = d_j A_ab
    M1: np.ndarray
    M2: np.ndarray
    M3: np.ndarray       # row vector dt theta A
    M4: np.ndarray
    jet: ThetaJet = field(repr=False)


def coeffs_from_jet(jet: ThetaJet) -> PullbackCoeffs:
    J = EYE + jet.grad
    A = np.linalg.inv(J)
    M1 = A @ jet.grad
    # d_j A = -A (d_j grad theta) A
    dA = -np.einsum("nab,njbc,ncd->njad", A, jet.hess, A)
    M2 = np.einsum("nij,njik->nk", A, dA)
    M3 = np.einsum("ni,nik->nk", jet.dt, A)
    M4 = np.swapaxes(A, -1, -2) @ A - EYE
    return PullbackCoeffs(A, dA, M1, M2, M3, M4, jet)


def pullback_coeffs(h: HeightField, x, geo: TubeGeometry | None = None) -> PullbackCoeffs:
    h.require_valid()
    pts, _ = _points(x)
    geo = geo or tube_geometry(h.surface, pts)
    return coeffs_from_jet(theta_jet(h, geo))


def m1(h, x):
    pts, shape = _points(x)
    return pullback_coeffs(h, pts).M1.reshape(shape + (3, 3))


def m2(h, x):
    pts, shape = _points(x)
    return pullback_coeffs(h, pts).M2.reshape(shape + (3,))


def m3(h, x):
    if h.func is None and h.dt_values is None:
        raise HeightError("M3 needs time-derivative samples of h")
    pts, shape = _points(x)
    return pullback_coeffs(h, pts).M3.reshape(shape + (3,))


def m4(h, x):
    pts, shape = _points(x)
    return pullback_coeffs(h, pts).M4.reshape(shape + (3, 3))
