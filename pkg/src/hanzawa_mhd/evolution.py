"""Desk-scale dynamics for the reduced (B, h) subsystem.

* ``solve_parabolic``: backward Euler for dB/dt - sigma Laplace B = g on a box
  with homogeneous Dirichlet data, one CG solve per step.
* ``step_height``: Heun (RK2) step of the kinematic equation
  dh/dt = u-bar . n - b . grad h + G5, u-bar = u∘Theta_h on Sigma.
* ``fixed_point_probe``: iterates the reduced map K with u, p prescribed and
  measures the contraction ratio of successive differences.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sps
from scipy.sparse.linalg import cg

from .fields import Field, JumpField, SympyField, T, X, Y, Z, zero_field
from .hanzawa import HeightError, HeightField, coeffs_from_jet, theta_jet, tube_geometry
from .interface_geometry import interface_geometry
from .norms import BoxDomain, NormSpec, SpaceTimeSample, SurfaceDomain, bochner_norm
from .operators import G2_TERMS, G5_TERMS, eval_terms
from .surface import NumericError, ReferenceSurface


class StepRejected(HeightError):
    """The height left the validity gate during a step."""


# ---------------------------------------------------------------------------
# box grid


@dataclass
class BoxGrid:
    lo: tuple = (0.0, 0.0, 0.0)
    hi: tuple = (1.0, 1.0, 1.0)
    n: int = 17

    def __post_init__(self):
        self.lo = np.asarray(self.lo, float)
        self.hi = np.asarray(self.hi, float)
        if self.n < 8:
            raise ValueError("box grid needs n >= 8 nodes per axis")
        if np.any(self.hi <= self.lo):
            raise ValueError("box must have positive extent")
        self.axes = [np.linspace(a, b, self.n) for a, b in zip(self.lo, self.hi)]
        self.dx = (self.hi - self.lo) / (self.n - 1)
        mesh = np.meshgrid(*self.axes, indexing="ij")
        self.points = np.stack(mesh, axis=-1)                       # (n, n, n, 3)
        self.boundary = np.zeros((self.n,) * 3, bool)
        for k in range(3):
            idx = [slice(None)] * 3
            idx[k] = 0
            self.boundary[tuple(idx)] = True
            idx[k] = -1
            self.boundary[tuple(idx)] = True
        self.interior = ~self.boundary

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n,) * 3

    def laplacian(self) -> sps.csr_matrix:
        """Centred 7-point Laplacian on interior nodes (Dirichlet zero boundary)."""
        m = self.n - 2
        eye = sps.identity(m, format="csr")
        ops = [sps.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(m, m)) / h ** 2 for h in self.dx]
        return (sps.kron(sps.kron(ops[0], eye), eye) + sps.kron(sps.kron(eye, ops[1]), eye)
                + sps.kron(sps.kron(eye, eye), ops[2])).tocsr()

    def grad(self, f: np.ndarray) -> np.ndarray:
        """[..., i, j] = d_i f_j for full-grid data of shape (n, n, n, 3)."""
        return np.stack([np.gradient(f, a, axis=k, edge_order=2) for k, a in enumerate(self.axes)],
                        axis=-2)

    def domain(self) -> BoxDomain:
        return BoxDomain(tuple(self.axes))

    def l2(self, f: np.ndarray) -> float:
        return float(np.sqrt(np.prod(self.dx) * np.sum(np.asarray(f)[self.interior] ** 2)))


# ---------------------------------------------------------------------------
# configuration and results


@dataclass
class EvolutionConfig:
    dt: float = 5e-3
    T: float = 0.05
    sigma: float = 1.0
    cg_tol: float = 1e-10
    cg_maxiter: int = 2000
    delta0: float = 0.3
    T0: float = 1.0
    M0: float = 1.0
    eps0: float = 1e-2
    max_iter: int = 8
    fp_tol: float = 1e-12
    q: float = 2.0
    b: np.ndarray | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not 0 < self.T <= self.T0:
            raise ValueError("need 0 < T <= T0")
        if not self.sigma > 0 or not self.cg_tol > 0:
            raise ValueError("sigma and cg_tol must be positive")

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.T / self.dt)))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["b"] = None if self.b is None else "array"
        return d


@dataclass
class Trajectory:
    times: np.ndarray
    B: np.ndarray                 # (nt, n, n, n, 3)
    cg_iterations: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# parabolic solver


def _cg_solve(A, rhs, x0, tol, maxiter):
    history = []

    def cb(xk):
        history.append(float(np.linalg.norm(rhs - A @ xk)))

    x, info = cg(A, rhs, x0=x0, rtol=tol, atol=0.0, maxiter=maxiter, callback=cb)
    if info != 0:
        raise NumericError(f"CG did not converge (info={info})", trace=history)
    return x, len(history)


def solve_parabolic(B0: np.ndarray, g2, cfg: EvolutionConfig, grid: BoxGrid) -> Trajectory:
    """Backward Euler: (I - dt sigma Lap) B^{k+1} = B^k + dt g2(t_{k+1}).

    ``g2(t, grid)`` returns a full-grid array (n, n, n, 3) or None (zero source).
    """
    B0 = np.asarray(B0, float)
    if B0.shape != grid.shape + (3,):
        raise ValueError("B0 must have shape (n, n, n, 3)")
    if np.max(np.abs(B0[grid.boundary]), initial=0.0) > 0:
        raise ValueError("B0 must vanish on the boundary")
    m = grid.interior
    A = (sps.identity((grid.n - 2) ** 3, format="csr") - cfg.dt * cfg.sigma * grid.laplacian())
    times = np.linspace(0.0, cfg.n_steps * cfg.dt, cfg.n_steps + 1)
    out = np.zeros((len(times),) + B0.shape)
    out[0] = B0
    iters = []
    cur = B0[m]                                                     # (ni, 3)
    for k in range(1, len(times)):
        rhs = cur.copy()
        src = g2(times[k], grid) if g2 is not None else None
        if src is not None:
            rhs = rhs + cfg.dt * np.asarray(src)[m]
        new = np.empty_like(cur)
        for c in range(3):
            if not np.any(rhs[:, c]):
                new[:, c] = 0.0
                continue
            new[:, c], it = _cg_solve(A, rhs[:, c], cur[:, c], cfg.cg_tol, cfg.cg_maxiter)
            iters.append(it)
        cur = new
        out[k][m] = cur
    return Trajectory(times, out, iters)


def manufactured_solution(sigma: float = 1.0, scale=(1.0, 2.0, -1.0)):
    """B*(t, x) = exp(-t) prod_i sin(pi x_i) per component, with its source."""
    scale = np.asarray(scale, float)

    def exact(t, grid: BoxGrid):
        s = np.prod(np.sin(np.pi * (grid.points - grid.lo) / (grid.hi - grid.lo)), axis=-1)
        s[grid.boundary] = 0.0
        return np.exp(-t) * s[..., None] * scale

    def source(t, grid: BoxGrid):
        lam = np.sum((np.pi / (grid.hi - grid.lo)) ** 2)
        return (-1.0 + sigma * lam) * exact(t, grid)

    return exact, source


def manufactured_errors(ns=(9, 17, 33), sigma: float = 1.0, T: float = 0.1) -> list[dict]:
    """L2 errors at time T with dt tied to dx^2, so both error terms scale alike."""
    exact, source = manufactured_solution(sigma)
    rows = []
    for n in ns:
        grid = BoxGrid(n=n)
        dx = float(grid.dx[0])
        steps = max(1, int(np.ceil(T / dx ** 2)))
        cfg = EvolutionConfig(dt=T / steps, T=T, sigma=sigma, T0=max(1.0, T))
        tr = solve_parabolic(exact(0.0, grid), source, cfg, grid)
        err = grid.l2(tr.B[-1] - exact(tr.times[-1], grid))
        rows.append({"n": n, "dx": dx, "dt": cfg.dt, "l2_error": err})
    for a, b in zip(rows, rows[1:]):
        b["order"] = float(np.log(a["l2_error"] / b["l2_error"]) / np.log(a["dx"] / b["dx"]))
    return rows


# ---------------------------------------------------------------------------
# height transport


def _mean_value(u, pts, t):
    if isinstance(u, JumpField):
        if u.inner is u.outer:
            return u.inner.value(pts, t)
        return 0.5 * (u.inner.value(pts, t) + u.outer.value(pts, t))
    return u.value(pts, t)


def _tangent_b(surface: ReferenceSurface, b) -> np.ndarray:
    shape = surface.grid_points.shape
    return np.zeros(shape) if b is None else np.broadcast_to(np.asarray(b, float), shape)


def height_rhs(h: HeightField, u, b=None, t: float = 0.0, frozen: HeightField | None = None):
    """u-bar . n - b . grad h + G5, with u-bar and G5 taken at ``frozen`` (default h).

    With frozen = h this is the full kinematic right-hand side (u-bar . (n - alpha)).
    """
    S = h.surface
    hf = h if frozen is None else frozen
    n = S.grid_normal
    b = _tangent_b(S, b)
    ubar = _mean_value(u, S.grid_points + hf.values[..., None] * n, t)
    geo = interface_geometry(hf)
    slots = dict(gh=hf.grad_s, ubar=ubar, alpha=geo.alpha, b=b)
    g5 = eval_terms(G5_TERMS, slots)
    return np.einsum("...i,...i->...", ubar, n) - np.einsum("...i,...i->...", b, h.grad_s) + g5


def _checked(h: HeightField, values, dt_values=None) -> HeightField:
    out = h.with_values(values, dt_values)
    if not out.gate_ok():
        raise StepRejected(f"height left the gate (sup|h|={out.sup:.4g} >= "
                           f"{out.delta0 * out.surface.rho0:.4g}); retry with a smaller dt")
    return out


def step_height(h: HeightField, u, b, dt: float, t: float = 0.0,
                frozen: tuple[HeightField, HeightField] | None = None) -> HeightField:
    """One Heun step from t to t + dt.

    ``frozen`` = (h_a, h_b) evaluates u-bar and G5 on given heights at the two
    stage times instead of on the stepped height itself.
    """
    h.require_valid()
    f0 = height_rhs(h, u, b, t, None if frozen is None else frozen[0])
    h1 = _checked(h, h.values + dt * f0, f0)
    f1 = height_rhs(h1, u, b, t + dt, None if frozen is None else frozen[1])
    rhs = 0.5 * (f0 + f1)
    return _checked(h, h.values + dt * rhs, f1)


def evolve_height(h0: HeightField, u, b, dt: float, T: float, t0: float = 0.0):
    """Heun integration of the full kinematic equation; returns (times, heights)."""
    steps = max(1, int(round(T / dt)))
    times = t0 + dt * np.arange(steps + 1)
    hs = [h0.with_values(h0.values, height_rhs(h0, u, b, t0))]
    for k in range(steps):
        hs.append(step_height(hs[-1], u, b, dt, times[k]))
    return times, hs


# ---------------------------------------------------------------------------
# reduced fixed-point map


def builtin_velocity(name: str, center=(0.5, 0.5, 0.5), amp: float = 1.0) -> JumpField:
    """Prescribed analytic velocities for the probe and the CLI."""
    cx, cy, cz = center
    x, y, z = X - cx, Y - cy, Z - cz
    if name == "zero":
        f = zero_field(1)
    elif name == "expansion":
        f = SympyField([amp * x, amp * y, amp * z], name="expansion", self_test=False)
    elif name == "rotation":
        f = SympyField([-amp * y, amp * x, 0 * X], name="rotation", self_test=False)
    elif name == "shear":
        import sympy as sp
        f = SympyField([amp * sp.sin(sp.pi * Z) * sp.cos(T), amp * sp.sin(sp.pi * X),
                        amp * sp.sin(sp.pi * Y)], name="shear", self_test=False)
    else:
        raise ValueError(f"unknown velocity {name!r}; known: zero, expansion, rotation, shear")
    return JumpField.continuous(f)


def builtin_magnetic(name: str, grid: BoxGrid, amp: float = 1.0) -> np.ndarray:
    if name == "zero":
        return np.zeros(grid.shape + (3,))
    if name == "bump":
        s = np.prod(np.sin(np.pi * (grid.points - grid.lo) / (grid.hi - grid.lo)), axis=-1)
        s[grid.boundary] = 0.0
        return amp * s[..., None] * np.array([1.0, -0.5, 0.25])
    raise ValueError(f"unknown magnetic field {name!r}; known: zero, bump")


@dataclass
class FixedPointTrace:
    residuals: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    diverged: bool = False
    gate_tripped: bool = False
    T: float = 0.0
    iterates: list = field(default_factory=list, repr=False)

    @property
    def final_ratio(self) -> float | None:
        return self.ratios[-1] if self.ratios else None

    @property
    def contracting(self) -> bool:
        return bool(self.ratios) and all(r < 1.0 for r in self.ratios)

    def to_dict(self) -> dict:
        return {"T": self.T, "iterations": self.iterations, "residuals": self.residuals,
                "ratios": self.ratios, "final_ratio": self.final_ratio,
                "contracting": self.contracting, "converged": self.converged,
                "diverged": self.diverged, "gate_tripped": self.gate_tripped}


@dataclass
class ReducedIterate:
    times: np.ndarray
    B: np.ndarray                 # (nt, n, n, n, 3)
    h: list                       # HeightField per time level


def _g2_source(it: ReducedIterate, u: JumpField, grid: BoxGrid, sigma: float):
    """G2 of the iterate at each time level, on the full box grid."""
    pts = grid.points.reshape(-1, 3)
    cache = {}

    def src(t, _grid):
        k = int(np.argmin(np.abs(it.times - t)))
        if k not in cache:
            B = it.B[k]
            gB = grid.grad(B)
            hB = grid.grad(gB)                      # [..., i, j, k] = d_i d_j B_k
            h = it.h[k]
            geo = tube_geometry(h.surface, pts)
            C = coeffs_from_jet(theta_jet(h, geo))
            uu, gu, _, _ = u.inner.jet(pts, t)
            slots = dict(u=uu, gu=gu, B=B.reshape(-1, 3), gB=gB.reshape(-1, 3, 3),
                         hB=hB.reshape(-1, 3, 3, 3), sigma=sigma,
                         M1=C.M1, M2=C.M2, M3=C.M3, M4=C.M4)
            out = eval_terms(G2_TERMS, slots).reshape(grid.shape + (3,))
            out[grid.boundary] = 0.0
            cache[k] = out
        return cache[k]

    return src


def apply_reduced_map(it: ReducedIterate, u: JumpField, b, cfg: EvolutionConfig,
                      grid: BoxGrid) -> ReducedIterate:
    """K(B, h): parabolic solve with source G2(B, h) and the height equation with G5(h) frozen."""
    traj = solve_parabolic(it.B[0], _g2_source(it, u, grid, cfg.sigma), cfg, grid)
    hs = [it.h[0]]
    for k in range(len(it.times) - 1):
        hs.append(step_height(hs[-1], u, b, cfg.dt, it.times[k], frozen=(it.h[k], it.h[k + 1])))
    return ReducedIterate(traj.times, traj.B, hs)


def reduced_norm(B: np.ndarray, h_vals: np.ndarray, times: np.ndarray, grid: BoxGrid,
                 surface: ReferenceSurface, q: float = 2.0) -> float:
    """||B||_{L^q L^q} + ||h||_{C^0 C^2} on the sampled grids."""
    nB = bochner_norm(SpaceTimeSample(B, times, grid.domain()), NormSpec("L", 0.0, q),
                      NormSpec("L", 0.0, q))
    nh = bochner_norm(SpaceTimeSample(h_vals, times, SurfaceDomain(surface)),
                      NormSpec("C", 0), NormSpec("C", 2))
    return nB + nh


def default_tangent_field(h: HeightField, u, t: float = 0.0) -> np.ndarray:
    """b = P_Sigma u-bar at the initial time, so the lagged term (b - u-bar) . grad h stays small."""
    S = h.surface
    n = S.grid_normal
    ubar = _mean_value(u, S.grid_points + h.values[..., None] * n, t)
    return ubar - np.einsum("...i,...i->...", ubar, n)[..., None] * n


def fixed_point_probe(B0: np.ndarray, h0: HeightField, u: JumpField, cfg: EvolutionConfig,
                      grid: BoxGrid, keep_iterates: bool = False) -> FixedPointTrace:
    """Iterate K from z0 = (B0, h0) held constant in time; ratios from iteration 2 on.

    Without ``cfg.b`` the auxiliary field defaults to ``default_tangent_field``.
    """
    u = u if isinstance(u, JumpField) else JumpField.continuous(u)
    if u.inner is not u.outer:
        raise ValueError("the reduced probe takes a continuous prescribed velocity")
    h0.require_valid()
    steps = cfg.n_steps
    times = np.linspace(0.0, steps * cfg.dt, steps + 1)
    h0 = h0.with_values(h0.values, np.zeros_like(h0.values))
    cur = ReducedIterate(times, np.repeat(np.asarray(B0, float)[None], len(times), axis=0),
                         [h0] * len(times))
    b = cfg.b if cfg.b is not None else default_tangent_field(h0, u)
    trace = FixedPointTrace(T=float(times[-1]))
    above = 0
    for k in range(cfg.max_iter):
        try:
            nxt = apply_reduced_map(cur, u, b, cfg, grid)
        except HeightError:
            trace.gate_tripped = True
            break
        dh = np.stack([a.values - c.values for a, c in zip(nxt.h, cur.h)])
        res = reduced_norm(nxt.B - cur.B, dh, times, grid, h0.surface, cfg.q)
        trace.residuals.append(float(res))
        trace.iterations = k + 1
        if keep_iterates:
            trace.iterates.append(nxt)
        cur = nxt
        if not np.isfinite(res):
            trace.diverged = True
            break
        if len(trace.residuals) >= 2 and trace.residuals[-2] > 0:
            r = trace.residuals[-1] / trace.residuals[-2]
            trace.ratios.append(float(r))
            above = above + 1 if r > 2.0 else 0
            if above >= 3:
                trace.diverged = True
                break
        if res <= cfg.fp_tol:
            trace.converged = True
            break
    return trace
