"""Closed reference surfaces: parameterisation, frames, Weingarten tensor,
nearest-point projection, signed distance and grid surface calculus.

Conventions: outward unit normal n, Weingarten tensor L = -grad_S n (so the
unit sphere has L = -P and mean curvature tr L = -2), gradients of vector
fields are stored row-wise, ``(grad f)[i, j] = d_i f_j``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property

import numpy as np

EYE = np.eye(3)


class GeometryError(Exception):
    pass


class ProjectionError(GeometryError):
    pass


class NumericError(Exception):
    def __init__(self, msg: str, trace=None):
        super().__init__(msg)
        self.trace = trace or []


# ---------------------------------------------------------------------------
# grid finite differences


_STENCIL = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0


class GridOps:
    """Fourth-order centred first derivatives on a cell-centred parameter grid.

    Each axis is either ``periodic`` or ``pole``. A pole axis spans [0, pi]
    with a periodic second axis; ghost rows come from the exact reflection
    f(-u, v) = f(u, v + pi) which every point function on a sphere-like
    parameterisation satisfies (requires an even number of v nodes).
    """

    def __init__(self, shape: tuple[int, int], spacing: tuple[float, float],
                 modes: tuple[str, str]):
        self.shape = tuple(shape)
        self.spacing = tuple(float(s) for s in spacing)
        self.modes = tuple(modes)
        if self.modes[1] != "periodic":
            raise GeometryError("second parameter axis must be periodic")
        if self.modes[0] == "pole" and self.shape[1] % 2:
            raise GeometryError("pole reflection needs an even number of v nodes")
        if min(self.shape) < 5:
            raise GeometryError("grid needs at least 5 nodes per direction")

    def _pad(self, f: np.ndarray, axis: int) -> np.ndarray:
        if self.modes[axis] == "periodic":
            return np.concatenate([f.take([-2, -1], axis=axis), f, f.take([0, 1], axis=axis)],
                                  axis=axis)
        half = self.shape[1] // 2
        top = np.roll(f[1::-1], half, axis=1)
        bottom = np.roll(f[-1:-3:-1], half, axis=1)
        return np.concatenate([top, f, bottom], axis=0)

    def d(self, f: np.ndarray, axis: int) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape[:2] != self.shape:
            raise GeometryError(f"grid shape mismatch: {f.shape[:2]} vs {self.shape}")
        g = self._pad(f, axis)
        n = self.shape[axis]
        out = np.zeros_like(f)
        for k, c in enumerate(_STENCIL):
            if c:
                out = out + c * g.take(range(k, k + n), axis=axis)
        return out / self.spacing[axis]

    def du(self, f):
        return self.d(f, 0)

    def dv(self, f):
        return self.d(f, 1)


@dataclass(frozen=True)
class TangentFrame:
    """Covariant tangents ``tau[..., i, :]``, dual basis ``dual[..., i, :]`` and normal."""

    tau: np.ndarray
    dual: np.ndarray
    normal: np.ndarray

    @classmethod
    def from_tangents(cls, t1: np.ndarray, t2: np.ndarray, normal: np.ndarray | None = None):
        tau = np.stack([t1, t2], axis=-2)
        g = np.einsum("...ak,...bk->...ab", tau, tau)
        det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] ** 2
        if np.any(np.abs(det) < 1e-20 * np.max(np.abs(g)) ** 2):
            raise GeometryError("degenerate tangent frame")
        ginv = np.stack([np.stack([g[..., 1, 1], -g[..., 0, 1]], -1),
                         np.stack([-g[..., 1, 0], g[..., 0, 0]], -1)], -2) / det[..., None, None]
        dual = np.einsum("...ab,...bk->...ak", ginv, tau)
        if normal is None:
            c = np.cross(t1, t2)
            normal = c / np.linalg.norm(c, axis=-1, keepdims=True)
        return cls(tau, dual, normal)

    @property
    def projector(self) -> np.ndarray:
        return EYE - self.normal[..., :, None] * self.normal[..., None, :]


def grad_on_grid(ops: GridOps, dual: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Surface gradient of grid data; for vector data returns ``[.., i, j] = (grad_S f_j)_i``."""
    fu, fv = ops.du(f), ops.dv(f)
    if f.ndim == 2:
        return dual[..., 0, :] * fu[..., None] + dual[..., 1, :] * fv[..., None]
    extra = (None,) * (f.ndim - 2)
    return (dual[(..., 0, slice(None)) + extra] * fu[:, :, None]
            + dual[(..., 1, slice(None)) + extra] * fv[:, :, None])


class GridGeometry:
    """Generic FD geometry of a parameterised surface sampled on a grid.

    Used both for the finite-difference path of the reference surfaces and as
    an independent oracle for deformed surfaces x(s) = Phi(s) + h(s) n(s).
    """

    def __init__(self, points: np.ndarray, ops: GridOps, orient: np.ndarray | None = None):
        self.points = np.asarray(points, dtype=float)
        self.ops = ops
        t1, t2 = ops.du(self.points), ops.dv(self.points)
        c = np.cross(t1, t2)
        n = c / np.linalg.norm(c, axis=-1, keepdims=True)
        if orient is not None:
            n = n * np.sign(np.sum(n * orient, axis=-1))[..., None]
        self.frame = TangentFrame.from_tangents(t1, t2, n)

    @cached_property
    def weingarten(self) -> np.ndarray:
        return -grad_on_grid(self.ops, self.frame.dual, self.frame.normal)

    @cached_property
    def mean_curvature(self) -> np.ndarray:
        return np.trace(self.weingarten, axis1=-2, axis2=-1)

    @cached_property
    def area_weights(self) -> np.ndarray:
        du, dv = self.ops.spacing
        return np.linalg.norm(np.cross(self.frame.tau[..., 0, :], self.frame.tau[..., 1, :]),
                              axis=-1) * du * dv


# ---------------------------------------------------------------------------
# reference surfaces


@dataclass(frozen=True)
class DistanceJet:
    """Signed distance and its derivatives up to third order at ambient points."""

    d: np.ndarray
    foot: np.ndarray
    params: np.ndarray
    grad: np.ndarray
    hess: np.ndarray
    third: np.ndarray | None


class ReferenceSurface:
    """Base class; subclasses supply the parameterisation and projection."""

    kind = ""
    modes = ("periodic", "periodic")
    u_range = (0.0, 2 * np.pi)
    v_range = (0.0, 2 * np.pi)
    analytic_distance = False

    def __init__(self, nu: int = 32, nv: int = 64, rho0: float | None = None,
                 center=(0.0, 0.0, 0.0), fd_step: float = 1e-4):
        self.nu, self.nv = int(nu), int(nv)
        self.center = np.asarray(center, dtype=float)
        self.fd_step = float(fd_step)
        self.rho0 = float(rho0) if rho0 is not None else self.default_rho0()
        if not 0.0 < self.rho0 < self.reach():
            raise GeometryError(f"rho0={self.rho0} must lie in (0, reach={self.reach()})")
        self.ops  # validates grid shape

    # -- subclass hooks -------------------------------------------------
    def reach(self) -> float:
        raise NotImplementedError

    def default_rho0(self) -> float:
        raise NotImplementedError

    def _phi(self, u, v):
        raise NotImplementedError

    def _phi_derivs(self, u, v):
        raise NotImplementedError

    def _implicit(self, y):
        """Level-set function g with Sigma = {g = 0}: returns (grad g, hess g) at local y."""
        raise NotImplementedError

    def _project_local(self, y):
        """Returns (u, v, d, foot_local, ok)."""
        raise NotImplementedError

    def params_dict(self) -> dict:
        raise NotImplementedError

    # -- parameterisation ----------------------------------------------
    def _check_domain(self, u):
        if self.modes[0] == "pole":
            u = np.asarray(u)
            if np.any((u < -1e-14) | (u > np.pi + 1e-14)):
                raise GeometryError("colatitude outside [0, pi]")

    def point(self, u, v) -> np.ndarray:
        self._check_domain(u)
        return self._phi(np.asarray(u, float), np.asarray(v, float)) + self.center

    def surface_point(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return self.point(s[..., 0], s[..., 1])

    def normal_at(self, y) -> np.ndarray:
        """Outward unit normal at points y lying on the surface."""
        g, _ = self._implicit(np.asarray(y, float) - self.center)
        return g / np.linalg.norm(g, axis=-1, keepdims=True)

    def weingarten_at(self, y) -> np.ndarray:
        """L = -P (hess g) P / |grad g| for the level-set description of Sigma."""
        g, hg = self._implicit(np.asarray(y, float) - self.center)
        norm = np.linalg.norm(g, axis=-1)
        n = g / norm[..., None]
        P = EYE - n[..., :, None] * n[..., None, :]
        return -np.einsum("...ij,...jk,...kl->...il", P, hg, P) / norm[..., None, None]

    def frame(self, u, v) -> TangentFrame:
        self._check_domain(u)
        t1, t2 = self._phi_derivs(np.asarray(u, float), np.asarray(v, float))
        n = self.normal_at(self.point(u, v))
        return TangentFrame.from_tangents(t1, t2, n)

    def weingarten(self, s) -> np.ndarray:
        return self.weingarten_at(self.surface_point(s))

    def mean_curvature(self, s) -> np.ndarray:
        return np.trace(self.weingarten(s), axis1=-2, axis2=-1)

    # -- projection ----------------------------------------------------
    def project_raw(self, x):
        y = np.asarray(x, dtype=float) - self.center
        u, v, d, foot, ok = self._project_local(y)
        ok = ok & (np.abs(d) < self.rho0)
        return np.stack([u, v], axis=-1), d, foot + self.center, ok

    def project(self, x):
        """Parameter of the nearest point and signed distance (positive outside)."""
        s, d, _, ok = self.project_raw(x)
        if not np.all(ok):
            raise ProjectionError("point outside the tubular neighbourhood B(Sigma; rho0)")
        return s, d

    def nearest_point(self, x) -> np.ndarray:
        _, _, foot, ok = self.project_raw(x)
        if not np.all(ok):
            raise ProjectionError("point outside the tubular neighbourhood B(Sigma; rho0)")
        return foot

    def _unit_normal_of_projection(self, x):
        _, _, foot, _ = self.project_raw(x)
        return self.normal_at(foot)

    def tube_hessian(self, x) -> np.ndarray:
        """Closed-form Hessian of d: -P (I - d L)^{-1} L with L taken at the foot point."""
        _, d, foot, _ = self.project_raw(x)
        L = self.weingarten_at(foot)
        n = self.normal_at(foot)
        P = EYE - n[..., :, None] * n[..., None, :]
        return -P @ np.linalg.solve(EYE - d[..., None, None] * L, L)

    def distance_jet(self, x, order: int = 3) -> DistanceJet:
        """d and grad d = n(Pi x) exactly; second derivatives by central differences
        of grad d (step fd_step/10), third derivatives by central differences of
        the closed-form tube Hessian (step fd_step)."""
        x = np.asarray(x, dtype=float)
        s, d, foot, _ = self.project_raw(x)
        grad = self.normal_at(foot)
        hess = third = None
        if order >= 2:
            h2 = self.fd_step * 0.1
            cols = []
            for i in range(3):
                e = EYE[i] * h2
                cols.append((self._unit_normal_of_projection(x + e)
                             - self._unit_normal_of_projection(x - e)) / (2 * h2))
            hess = np.stack(cols, axis=-2)
            hess = 0.5 * (hess + np.swapaxes(hess, -1, -2))
        if order >= 3:
            h3 = self.fd_step
            t = np.stack([(self.tube_hessian(x + EYE[i] * h3) - self.tube_hessian(x - EYE[i] * h3))
                          / (2 * h3) for i in range(3)], axis=-3)
            perms = [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]
            lead = t.ndim - 3
            third = sum(np.transpose(t, tuple(range(lead)) + tuple(lead + q for q in pm))
                        for pm in perms) / 6.0
        return DistanceJet(d, foot, s, grad, hess, third)

    def validate_rho0(self, n_samples: int = 200, seed: int = 0, tol: float = 1e-8) -> None:
        """Sample injectivity of F(s, r) = Phi(s) + r n(s) for |r| < rho0."""
        rng = np.random.default_rng(seed)
        s = self.random_params(n_samples, rng)
        r = rng.uniform(-1, 1, n_samples) * self.rho0 * 0.999
        p = self.surface_point(s)
        n = self.normal_at(p)
        x = p + r[:, None] * n
        _, d, foot, ok = self.project_raw(x)
        bad = ~ok | (np.abs(d - r) > tol) | (np.linalg.norm(foot - p, axis=-1) > tol)
        if np.any(bad):
            raise GeometryError(f"rho0={self.rho0} fails the injectivity sampling check "
                                f"at {int(bad.sum())} of {n_samples} samples")

    def random_params(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.modes[0] == "pole":
            u = np.arccos(rng.uniform(-0.98, 0.98, n))
        else:
            u = rng.uniform(*self.u_range, n)
        v = rng.uniform(*self.v_range, n)
        return np.stack([u, v], axis=-1)

    def random_tube_points(self, n: int, rng: np.random.Generator, frac: float = 0.6,
                           exclude: float = 0.0) -> np.ndarray:
        """Points Phi(s) + r n(s) with exclude*rho0 <= |r| <= frac*rho0."""
        s = self.random_params(n, rng)
        p = self.surface_point(s)
        mag = rng.uniform(exclude, frac, n) * self.rho0
        r = mag * rng.choice([-1.0, 1.0], n)
        return p + r[:, None] * self.normal_at(p)

    # -- grid -----------------------------------------------------------
    @cached_property
    def ops(self) -> GridOps:
        return GridOps((self.nu, self.nv), self.spacing, self.modes)

    @property
    def spacing(self) -> tuple[float, float]:
        return ((self.u_range[1] - self.u_range[0]) / self.nu,
                (self.v_range[1] - self.v_range[0]) / self.nv)

    @cached_property
    def grid_params(self) -> tuple[np.ndarray, np.ndarray]:
        du, dv = self.spacing
        if self.modes[0] == "pole":
            u = self.u_range[0] + (np.arange(self.nu) + 0.5) * du
        else:
            u = self.u_range[0] + np.arange(self.nu) * du
        v = self.v_range[0] + np.arange(self.nv) * dv
        return np.meshgrid(u, v, indexing="ij")

    @cached_property
    def grid_points(self) -> np.ndarray:
        return self.point(*self.grid_params)

    @cached_property
    def grid_frame(self) -> TangentFrame:
        return self.frame(*self.grid_params)

    @property
    def grid_normal(self) -> np.ndarray:
        return self.grid_frame.normal

    @cached_property
    def grid_weingarten(self) -> np.ndarray:
        return self.weingarten_at(self.grid_points)

    @cached_property
    def grid_weingarten_fd(self) -> np.ndarray:
        """Weingarten tensor from grid differences of the normal field."""
        return -grad_on_grid(self.ops, self.grid_frame.dual, self.grid_normal)

    @cached_property
    def grid_trace_l2(self) -> np.ndarray:
        L = self.grid_weingarten
        return np.einsum("...ij,...ji->...", L, L)

    @cached_property
    def area_weights(self) -> np.ndarray:
        t = self.grid_frame.tau
        du, dv = self.spacing
        return np.linalg.norm(np.cross(t[..., 0, :], t[..., 1, :]), axis=-1) * du * dv

    def sample(self, func) -> np.ndarray:
        """Sample ``func(points)`` on the grid."""
        return np.asarray(func(self.grid_points), dtype=float)

    def surface_grad(self, f: np.ndarray) -> np.ndarray:
        return grad_on_grid(self.ops, self.grid_frame.dual, np.asarray(f, float))

    def surface_div(self, vfield: np.ndarray) -> np.ndarray:
        return np.trace(self.surface_grad(vfield), axis1=-2, axis2=-1)

    def laplace_beltrami(self, f: np.ndarray) -> np.ndarray:
        return self.surface_div(self.surface_grad(f))

    def check_invariants(self, tol_geom: float = 1e-10) -> None:
        fr = self.grid_frame
        svals = np.linalg.svd(fr.tau, compute_uv=False)
        if np.any(svals[..., -1] <= 1e-10 * svals[..., 0]):
            raise GeometryError("parameterisation is not an immersion on the grid")
        if np.max(np.abs(np.linalg.norm(fr.normal, axis=-1) - 1)) > 1e-12:
            raise GeometryError("normal is not unit")
        L = self.grid_weingarten
        if np.max(np.abs(np.einsum("...ij,...j->...i", L, fr.normal))) > tol_geom:
            raise GeometryError("L n != 0")
        if np.max(np.abs(L - np.swapaxes(L, -1, -2))) > tol_geom:
            raise GeometryError("Weingarten tensor is not symmetric")

    def dump_grid_csv(self, path) -> None:
        U, V = self.grid_params
        P, N = self.grid_points, self.grid_normal
        H = np.trace(self.grid_weingarten, axis1=-2, axis2=-1)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["u", "v", "x", "y", "z", "nx", "ny", "nz", "H"])
            for idx in np.ndindex(U.shape):
                w.writerow([repr(float(a)) for a in
                            (U[idx], V[idx], *P[idx], *N[idx], H[idx])])

    def describe(self) -> dict:
        return {"kind": self.kind, "params": self.params_dict(),
                "grid": {"nu": self.nu, "nv": self.nv}, "rho0": self.rho0,
                "center": [float(c) for c in self.center]}

    def with_grid(self, nu: int, nv: int) -> "ReferenceSurface":
        return type(self)(**self.params_dict(), nu=nu, nv=nv, rho0=self.rho0,
                          center=self.center, fd_step=self.fd_step)

    @classmethod
    def from_config(cls, cfg: dict) -> "ReferenceSurface":
        return surface_from_config(cfg)


class Sphere(ReferenceSurface):
    kind = "sphere"
    modes = ("pole", "periodic")
    u_range = (0.0, np.pi)
    analytic_distance = True

    def __init__(self, R: float = 1.0, **kw):
        if R <= 0:
            raise GeometryError("radius must be positive")
        self.R = float(R)
        super().__init__(**kw)

    def params_dict(self):
        return {"R": self.R}

    def reach(self):
        return self.R

    def default_rho0(self):
        return 0.9 * self.R

    def _phi(self, u, v):
        st = np.sin(u)
        return self.R * np.stack([st * np.cos(v), st * np.sin(v), np.cos(u) + 0 * v], -1)

    def _phi_derivs(self, u, v):
        R = self.R
        t1 = R * np.stack([np.cos(u) * np.cos(v), np.cos(u) * np.sin(v), -np.sin(u) + 0 * v], -1)
        t2 = R * np.stack([-np.sin(u) * np.sin(v), np.sin(u) * np.cos(v), 0 * u * v], -1)
        return t1, t2

    def _implicit(self, y):
        return 2 * y, np.broadcast_to(2 * EYE, y.shape[:-1] + (3, 3))

    def _project_local(self, y):
        r = np.linalg.norm(y, axis=-1)
        ok = r > 1e-300
        rs = np.where(ok, r, 1.0)
        u = np.arccos(np.clip(y[..., 2] / rs, -1, 1))
        v = np.mod(np.arctan2(y[..., 1], y[..., 0]), 2 * np.pi)
        foot = self.R * y / rs[..., None]
        return u, v, r - self.R, foot, ok

    def distance_jet(self, x, order: int = 3) -> DistanceJet:
        x = np.asarray(x, dtype=float)
        y = x - self.center
        s, d, foot, _ = self.project_raw(x)
        r = np.linalg.norm(y, axis=-1)
        e = y / r[..., None]
        ee = e[..., :, None] * e[..., None, :]
        hess = (EYE - ee) / r[..., None, None] if order >= 2 else None
        third = None
        if order >= 3:
            eee = ee[..., :, :, None] * e[..., None, None, :]
            term = (3 * eee
                    - np.einsum("jk,...i->...ijk", EYE, e)
                    - np.einsum("ij,...k->...ijk", EYE, e)
                    - np.einsum("ik,...j->...ijk", EYE, e))
            third = term / (r ** 2)[..., None, None, None]
        return DistanceJet(d, foot, s, e, hess, third)


class Ellipsoid(ReferenceSurface):
    kind = "ellipsoid"
    modes = ("pole", "periodic")
    u_range = (0.0, np.pi)

    def __init__(self, a: float = 1.0, b: float = 1.0, c: float = 1.0,
                 newton_tol: float = 1e-12, newton_max_iter: int = 50, **kw):
        self.axes = np.array([a, b, c], dtype=float)
        if np.any(self.axes <= 0):
            raise GeometryError("semi-axes must be positive")
        self.newton_tol = float(newton_tol)
        self.newton_max_iter = int(newton_max_iter)
        super().__init__(**kw)
        self.validate_rho0()

    def params_dict(self):
        a, b, c = self.axes
        return {"a": float(a), "b": float(b), "c": float(c)}

    def reach(self):
        return float(self.axes.min() ** 2 / self.axes.max())

    def default_rho0(self):
        return 0.9 * self.reach()

    def _phi(self, u, v):
        a, b, c = self.axes
        st = np.sin(u)
        return np.stack([a * st * np.cos(v), b * st * np.sin(v), c * np.cos(u) + 0 * v], -1)

    def _phi_derivs(self, u, v):
        a, b, c = self.axes
        t1 = np.stack([a * np.cos(u) * np.cos(v), b * np.cos(u) * np.sin(v),
                       -c * np.sin(u) + 0 * v], -1)
        t2 = np.stack([-a * np.sin(u) * np.sin(v), b * np.sin(u) * np.cos(v), 0 * u * v], -1)
        return t1, t2

    def _implicit(self, y):
        a2 = self.axes ** 2
        return 2 * y / a2, np.broadcast_to(np.diag(2 / a2), y.shape[:-1] + (3, 3))

    def _project_local(self, y):
        """Safeguarded Newton on the Lagrange multiplier t of the nearest-point problem.

        The foot point is y_i a_i^2 / (a_i^2 + t) with t the root of
        F(t) = sum a_i^2 y_i^2 / (a_i^2 + t)^2 - 1 (t > 0 outside). F is convex
        and decreasing, so a bracketed Newton iteration converges globally.
        """
        a2 = self.axes ** 2
        y = np.asarray(y, float)
        shape = y.shape[:-1]
        yf = y.reshape(-1, 3)
        num = a2 * yf ** 2
        k = np.sqrt(np.sum(yf ** 2 / a2, axis=-1))
        lo = np.full(len(yf), -a2.min())
        hi = np.max(self.axes) * np.linalg.norm(yf, axis=-1) + 1.0
        t = (k - 1.0) * a2.mean()
        t = np.where((t <= lo) | (t >= hi), 0.5 * (lo + hi), t)
        trace = []
        converged = np.zeros(len(yf), dtype=bool)
        for it in range(self.newton_max_iter):
            den = a2 + t[:, None]
            F = np.sum(num / den ** 2, axis=-1) - 1.0
            dF = -2.0 * np.sum(num / den ** 3, axis=-1)
            lo = np.where(F > 0, np.maximum(lo, t), lo)
            hi = np.where(F < 0, np.minimum(hi, t), hi)
            step = np.where(dF != 0, F / np.where(dF != 0, dF, 1.0), 0.0)
            tn = t - step
            outside = (tn <= lo) | (tn >= hi)
            tn = np.where(outside, 0.5 * (lo + hi), tn)
            delta = np.abs(tn - t)
            trace.append(float(np.max(delta, initial=0.0)))
            t = tn
            converged = delta <= self.newton_tol * np.maximum(1.0, np.abs(t))
            if np.all(converged):
                break
        else:
            raise NumericError(f"ellipsoid projection did not converge in "
                               f"{self.newton_max_iter} iterations", trace)
        for _ in range(2):  # polish to machine precision
            den = a2 + t[:, None]
            F = np.sum(num / den ** 2, axis=-1) - 1.0
            dF = -2.0 * np.sum(num / den ** 3, axis=-1)
            tn = t - np.where(dF != 0, F / np.where(dF != 0, dF, 1.0), 0.0)
            t = np.where((tn > lo) & (tn < hi), tn, t)
        den = a2 + t[:, None]
        ok = np.all(den > 1e-14 * a2, axis=-1)
        foot = yf * a2 / np.where(ok[:, None], den, 1.0)
        d = np.sign(t) * np.linalg.norm(yf - foot, axis=-1)
        # re-project the foot exactly onto the surface for the parameters
        a, b, c = self.axes
        u = np.arccos(np.clip(foot[:, 2] / c, -1, 1))
        v = np.mod(np.arctan2(foot[:, 1] / b, foot[:, 0] / a), 2 * np.pi)
        return (u.reshape(shape), v.reshape(shape), d.reshape(shape),
                foot.reshape(shape + (3,)), ok.reshape(shape))


class Torus(ReferenceSurface):
    kind = "torus"

    def __init__(self, R: float = 2.0, r: float = 0.5, **kw):
        if not 0 < r < R:
            raise GeometryError("torus needs 0 < r < R")
        self.R, self.r = float(R), float(r)
        super().__init__(**kw)

    def params_dict(self):
        return {"R": self.R, "r": self.r}

    def reach(self):
        return min(self.r, self.R - self.r)

    def default_rho0(self):
        return 0.9 * self.reach()

    def _phi(self, u, v):
        w = self.R + self.r * np.cos(v)
        return np.stack([w * np.cos(u), w * np.sin(u), self.r * np.sin(v) + 0 * u], -1)

    def _phi_derivs(self, u, v):
        w = self.R + self.r * np.cos(v)
        t1 = np.stack([-w * np.sin(u), w * np.cos(u), 0 * u * v], -1)
        t2 = np.stack([-self.r * np.sin(v) * np.cos(u), -self.r * np.sin(v) * np.sin(u),
                       self.r * np.cos(v) + 0 * u], -1)
        return t1, t2

    def _implicit(self, y):
        rho = np.hypot(y[..., 0], y[..., 1])
        w = rho - self.R
        e1, e2 = y[..., 0] / rho, y[..., 1] / rho
        g = np.stack([2 * w * e1, 2 * w * e2, 2 * y[..., 2]], -1)
        hg = np.zeros(y.shape[:-1] + (3, 3))
        ee = [[e1 * e1, e1 * e2], [e2 * e1, e2 * e2]]
        for i in range(2):
            for j in range(2):
                hg[..., i, j] = 2 * (ee[i][j] + w * ((i == j) - ee[i][j]) / rho)
        hg[..., 2, 2] = 2.0
        return g, hg

    def _project_local(self, y):
        rho = np.hypot(y[..., 0], y[..., 1])
        u = np.mod(np.arctan2(y[..., 1], y[..., 0]), 2 * np.pi)
        w1, w2 = rho - self.R, y[..., 2]
        D = np.hypot(w1, w2)
        v = np.mod(np.arctan2(w2, w1), 2 * np.pi)
        ok = (rho > 1e-300) & (D > 1e-300)
        return u, v, D - self.r, self._phi(u, v), ok


KINDS = {"sphere": Sphere, "ellipsoid": Ellipsoid, "torus": Torus}


def surface_from_config(cfg: dict, hanzawa: dict | None = None) -> ReferenceSurface:
    """Build a surface from ``{kind, params, grid: {nu, nv}, rho0?, center?, fd_step?}``."""
    if not isinstance(cfg, dict) or "kind" not in cfg:
        raise GeometryError("surface config needs a 'kind' entry")
    kind = cfg["kind"]
    if kind not in KINDS:
        raise GeometryError(f"unknown surface kind {kind!r}; expected one of {sorted(KINDS)}")
    params = dict(cfg.get("params") or {})
    grid = cfg.get("grid") or {}
    kw = dict(nu=int(grid.get("nu", 32)), nv=int(grid.get("nv", 64)),
              rho0=cfg.get("rho0"), center=cfg.get("center", (0.0, 0.0, 0.0)))
    if "fd_step" in cfg:
        kw["fd_step"] = float(cfg["fd_step"])
    if kind == "ellipsoid" and hanzawa:
        for key in ("newton_tol", "newton_max_iter"):
            if key in hanzawa:
                params[key] = hanzawa[key]
    try:
        return KINDS[kind](**params, **kw)
    except TypeError as exc:
        raise GeometryError(f"bad parameters for {kind}: {exc}") from exc
