"""Function-space norms on sampled data.

Spatial domains are tensor-product boxes/intervals or reference-surface grids
(chordal distance, area weights). Space-time samples carry a leading time axis.
Intersection spaces use the SUM of their member norms, and C^k sums the sup of
each derivative order j <= k (the sup over all partials of that order).
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _ext
from .surface import ReferenceSurface


class NormError(Exception):
    """Invalid norm parameters or a grid too coarse for the requested order."""


class ResolutionError(NormError):
    pass


def workers() -> int:
    try:
        return max(1, int(os.environ.get("HANZAWA_WORKERS", "1")))
    except ValueError:
        return 1


def trapezoid_weights(x: np.ndarray, periodic: bool = False, period: float | None = None) -> np.ndarray:
    x = np.asarray(x, float)
    if periodic:
        L = period if period is not None else (x[-1] - x[0]) * len(x) / (len(x) - 1)
        return np.full(len(x), L / len(x))
    w = np.zeros(len(x))
    dx = np.diff(x)
    w[:-1] += dx / 2
    w[1:] += dx / 2
    return w


# ---------------------------------------------------------------------------
# domains


class Domain:
    dim: int
    shape: tuple[int, ...]

    @property
    def points(self) -> np.ndarray:        # (N, embed)
        raise NotImplementedError

    @property
    def weights(self) -> np.ndarray:       # (N,)
        raise NotImplementedError

    def grad(self, f: np.ndarray) -> np.ndarray:
        """Append a derivative axis to grid data of shape ``shape + comps``."""
        raise NotImplementedError

    def min_nodes(self) -> int:
        return min(self.shape)


@dataclass
class BoxDomain(Domain):
    axes: tuple
    periodic: tuple = ()
    periods: tuple = ()

    def __post_init__(self):
        self.axes = tuple(np.asarray(a, float) for a in self.axes)
        for a in self.axes:
            if a.ndim != 1 or len(a) < 2 or np.any(np.diff(a) <= 0):
                raise NormError("grid axes must be increasing 1-D arrays")
        self.periodic = tuple(self.periodic) or (False,) * len(self.axes)
        self.periods = tuple(self.periods) or tuple(
            (a[-1] - a[0]) * len(a) / (len(a) - 1) for a in self.axes)
        self.dim = len(self.axes)
        self.shape = tuple(len(a) for a in self.axes)

    @classmethod
    def uniform(cls, lo, hi, n, periodic=False):
        """Box [lo, hi]^d with n nodes per axis (periodic grids omit the right end)."""
        lo, hi = np.atleast_1d(lo), np.atleast_1d(hi)
        n = np.broadcast_to(n, lo.shape)
        axes = [np.linspace(a, b, k, endpoint=not periodic) for a, b, k in zip(lo, hi, n)]
        return cls(tuple(axes), (periodic,) * len(axes), tuple(hi - lo) if periodic else ())

    @cached_property
    def _points(self):
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    @property
    def points(self):
        return self._points

    @cached_property
    def _weights(self):
        ws = [trapezoid_weights(a, p, L) for a, p, L in zip(self.axes, self.periodic, self.periods)]
        out = ws[0]
        for w in ws[1:]:
            out = np.multiply.outer(out, w)
        return out.ravel()

    @property
    def weights(self):
        return self._weights

    def grad(self, f):
        f = np.asarray(f, float)
        comps = []
        for k, (a, p) in enumerate(zip(self.axes, self.periodic)):
            if p:
                h = a[1] - a[0]
                comps.append((np.roll(f, -1, axis=k) - np.roll(f, 1, axis=k)) / (2 * h) * 4 / 3
                             - (np.roll(f, -2, axis=k) - np.roll(f, 2, axis=k)) / (12 * h))
            else:
                comps.append(np.gradient(f, a, axis=k, edge_order=2))
        return np.stack(comps, axis=-1)


@dataclass
class SurfaceDomain(Domain):
    surface: ReferenceSurface

    def __post_init__(self):
        self.dim = 2
        self.shape = (self.surface.nu, self.surface.nv)

    @property
    def points(self):
        return self.surface.grid_points.reshape(-1, 3)

    @property
    def weights(self):
        return self.surface.area_weights.ravel()

    def grad(self, f):
        f = np.asarray(f, float)
        comp_shape = f.shape[2:]
        flat = f.reshape(self.shape + (-1,))
        g = np.stack([self.surface.surface_grad(flat[..., c]) for c in range(flat.shape[-1])], axis=-2)
        return g.reshape(self.shape + comp_shape + (3,))


# ---------------------------------------------------------------------------
# samples


@dataclass
class SampledFunction:
    """Values on a spatial domain grid: shape ``domain.shape + comps``."""

    values: np.ndarray
    domain: Domain

    def __post_init__(self):
        self.values = np.asarray(self.values, float)
        if self.values.shape[:len(self.domain.shape)] != self.domain.shape:
            raise NormError("sample shape does not match the domain grid")
        if not np.all(np.isfinite(self.values)):
            raise NormError("sampled values must be finite")

    def flat(self) -> np.ndarray:
        return self.values.reshape(int(np.prod(self.domain.shape)), -1)

    def __mul__(self, c):
        return SampledFunction(self.values * c, self.domain)

    __rmul__ = __mul__

    def __add__(self, other):
        return SampledFunction(self.values + other.values, self.domain)


@dataclass
class SpaceTimeSample:
    """Values with a leading time axis: shape ``(nt,) + domain.shape + comps``."""

    values: np.ndarray
    times: np.ndarray
    domain: Domain

    def __post_init__(self):
        self.values = np.asarray(self.values, float)
        self.times = np.asarray(self.times, float)
        if self.values.shape[0] != len(self.times) or np.any(np.diff(self.times) <= 0):
            raise NormError("time axis must be increasing and match the sample")
        if self.values.shape[1:1 + len(self.domain.shape)] != self.domain.shape:
            raise NormError("sample shape does not match the domain grid")
        if not np.all(np.isfinite(self.values)):
            raise NormError("sampled values must be finite")

    def slice(self, k: int) -> SampledFunction:
        return SampledFunction(self.values[k], self.domain)

    def dt(self) -> "SpaceTimeSample":
        if len(self.times) < 3:
            raise ResolutionError("time derivative needs at least three time levels")
        return SpaceTimeSample(np.gradient(self.values, self.times, axis=0, edge_order=2),
                               self.times, self.domain)

    def restrict(self, T: float) -> "SpaceTimeSample":
        m = self.times <= T + 1e-12
        return SpaceTimeSample(self.values[m], self.times[m], self.domain)

    def __mul__(self, c):
        return SpaceTimeSample(self.values * c, self.times, self.domain)

    __rmul__ = __mul__

    def __add__(self, other):
        return SpaceTimeSample(self.values + other.values, self.times, self.domain)


# ---------------------------------------------------------------------------
# kernel driver


def pair_sum(X, F, W, V, q: float, expo: float, backend: str | None = None,
             n_workers: int | None = None) -> float:
    """sum_{i != j} W_i W_j D_ij^q / |X_i - X_j|^expo, sharded over row blocks.

    The shard partial sums are added in shard order, so the result is bit-stable
    for a fixed worker count.
    """
    X = np.ascontiguousarray(X, float)
    F = np.asarray(F, float)
    if F.ndim == 2:
        F = F[:, None, :]
    F = np.ascontiguousarray(F)
    W = np.ascontiguousarray(W, float)
    V = np.ascontiguousarray(np.ones(F.shape[1]) if V is None else V, float)
    fn = {None: _ext.pair_sum_rows, "cython": _ext.pair_sum_rows,
          "python": _ext.python_pair_sum_rows}[backend]
    if backend == "cython" and _ext.BACKEND != "cython":
        raise NormError("compiled kernel not available")
    n = len(X)
    k = n_workers or workers()
    bounds = np.linspace(0, n, k + 1).astype(int)
    if k == 1:
        return float(fn(X, F, W, V, float(q), float(expo), 0, n))
    with ThreadPoolExecutor(k) as ex:
        parts = list(ex.map(lambda ab: fn(X, F, W, V, float(q), float(expo), int(ab[0]), int(ab[1])),
                            zip(bounds[:-1], bounds[1:])))
    return float(sum(parts))


# ---------------------------------------------------------------------------
# spatial norms


def _check_q(q: float) -> None:
    if not q >= 1:
        raise NormError("q must be >= 1")


def _derivs(f: SampledFunction, order: int) -> list[np.ndarray]:
    if order > 0 and f.domain.min_nodes() < 2 * order + 3:
        raise ResolutionError(f"grid too coarse for derivatives of order {order}")
    out = [f.values]
    for _ in range(order):
        out.append(f.domain.grad(out[-1]))
    return out


def _pointwise_abs(a: np.ndarray, ndom: int) -> np.ndarray:
    n = int(np.prod(a.shape[:ndom]))
    return np.linalg.norm(a.reshape(n, -1), axis=-1)


def lq_norm(f: SampledFunction, q: float) -> float:
    _check_q(q)
    a = _pointwise_abs(f.values, len(f.domain.shape))
    return float(np.sum(f.domain.weights * a ** q) ** (1.0 / q))


def gagliardo_seminorm(f: SampledFunction, s: float, q: float, backend: str | None = None) -> float:
    """(sum_{i != j} w_i w_j |f_i - f_j|^q / |x_i - x_j|^(dim + s q))^(1/q), diagonal skipped."""
    if not 0.0 < s < 1.0:
        raise NormError("fractional order must lie in (0, 1)")
    _check_q(q)
    if f.domain.min_nodes() < 8:
        raise ResolutionError("Gagliardo quadrature needs at least 8 nodes per dimension")
    val = pair_sum(f.domain.points, f.flat(), f.domain.weights, None, q, f.domain.dim + s * q, backend)
    return float(val ** (1.0 / q))


def ck_norm(f: SampledFunction, k: int) -> float:
    return float(sum(np.max(np.abs(d)) for d in _derivs(f, k)))


def sobolev_norm(f: SampledFunction, s: float, q: float, backend: str | None = None) -> float:
    """W^{s,q}: sum_{j <= floor(s)} ||grad^j f||_q plus the Gagliardo seminorm of grad^floor(s) f."""
    if s < 0:
        raise NormError("negative-order norms are not evaluated")
    k = int(math.floor(s + 1e-12))
    frac = s - k
    ds = _derivs(f, k)
    out = sum(lq_norm(SampledFunction(d, f.domain), q) for d in ds)
    if frac > 1e-12:
        out += gagliardo_seminorm(SampledFunction(ds[-1], f.domain), frac, q, backend)
    return float(out)


def homogeneous_sobolev_norm(f: SampledFunction, k: int, q: float) -> float:
    """||grad^k f||_q (the dotted W^{k,q} seminorm)."""
    return lq_norm(SampledFunction(_derivs(f, k)[-1], f.domain), q)


# ---------------------------------------------------------------------------
# norm specs


@dataclass(frozen=True)
class NormSpec:
    family: str                # "C" | "L" | "W" | "Wdot" | "G" (Gagliardo seminorm only)
    s: float = 0.0             # order (k for C/Wdot)
    q: float = 2.0

    def __post_init__(self):
        if self.family not in ("C", "L", "W", "Wdot", "G"):
            raise NormError(f"unknown norm family {self.family!r}")
        if self.family in ("L", "W", "Wdot", "G"):
            _check_q(self.q)
        if self.family == "G" and not 0.0 < self.s < 1.0:
            raise NormError("fractional order must lie in (0, 1)")
        if self.family in ("C", "Wdot") and float(self.s) != int(self.s):
            raise NormError("C^k and dotted W^{k,q} need an integer order")

    @classmethod
    def parse(cls, text: str) -> "NormSpec":
        """"C:k", "L:q", "W:s:q", "Wdot:k:q" or "G:s:q"."""
        parts = text.strip().split(":")
        try:
            if parts[0] == "C" and len(parts) == 2:
                return cls("C", int(parts[1]))
            if parts[0] == "L" and len(parts) == 2:
                return cls("L", 0.0, float(parts[1]))
            if parts[0] in ("W", "Wdot", "G") and len(parts) == 3:
                return cls(parts[0], float(parts[1]), float(parts[2]))
        except ValueError as exc:
            raise NormError(f"bad norm spec {text!r}") from exc
        raise NormError(f"bad norm spec {text!r}; expected C:k, L:q, W:s:q, Wdot:k:q or G:s:q")

    def __str__(self):
        if self.family == "C":
            return f"C:{int(self.s)}"
        if self.family == "L":
            return f"L:{self.q:g}"
        return f"{self.family}:{self.s:g}:{self.q:g}"


def space_norm(f: SampledFunction, spec: NormSpec, backend: str | None = None) -> float:
    if spec.family == "C":
        return ck_norm(f, int(spec.s))
    if spec.family == "L":
        return lq_norm(f, spec.q)
    if spec.family == "Wdot":
        return homogeneous_sobolev_norm(f, int(spec.s), spec.q)
    if spec.family == "G":
        return gagliardo_seminorm(f, spec.s, spec.q, backend)
    return sobolev_norm(f, spec.s, spec.q, backend)


def _time_weights(t: np.ndarray) -> np.ndarray:
    return trapezoid_weights(t)


def time_gagliardo(g: SpaceTimeSample, s: float, q: float, backend: str | None = None) -> float:
    """Time seminorm of an L^q-valued function: distances are ||g(t) - g(tau)||_{L^q}."""
    nt = len(g.times)
    if nt < 8:
        raise ResolutionError("time Gagliardo quadrature needs at least 8 time levels")
    npts = int(np.prod(g.domain.shape))
    F = g.values.reshape(nt, npts, -1)
    val = pair_sum(g.times[:, None], F, _time_weights(g.times), g.domain.weights, q, 1 + s * q,
                   backend)
    return float(val ** (1.0 / q))


def bochner_norm(f: SpaceTimeSample, time: NormSpec, space: NormSpec,
                 backend: str | None = None) -> float:
    """Norm of X([0,T]; Y) with X = ``time`` and Y = ``space``."""
    nt = len(f.times)

    def ynorms(g: SpaceTimeSample) -> np.ndarray:
        return np.array([space_norm(g.slice(k), space, backend) for k in range(nt)])

    if time.family == "L":
        return float(np.sum(_time_weights(f.times) * ynorms(f) ** time.q) ** (1.0 / time.q))
    if time.family == "C":
        out, g = 0.0, f
        for j in range(int(time.s) + 1):
            out += float(np.max(ynorms(g)))
            if j < int(time.s):
                g = g.dt()
        return out
    if time.family == "W":
        k = int(math.floor(time.s + 1e-12))
        frac = time.s - k
        out, g = 0.0, f
        lq = NormSpec("L", 0.0, time.q)
        for j in range(k + 1):
            out += bochner_norm(g, lq, space, backend)
            if j < k:
                g = g.dt()
        if frac > 1e-12:
            if space.family != "L" or space.q != time.q:
                raise NormError("fractional time regularity is evaluated for L^q-valued functions only")
            out += time_gagliardo(g, frac, time.q, backend)
        return out
    raise NormError("dotted and seminorm families are spatial only")


# ---------------------------------------------------------------------------
# composite spaces


def _members(name: str, q: float) -> tuple[list[tuple[NormSpec, NormSpec]], list[str]]:
    L = lambda: NormSpec("L", 0.0, q)            # noqa: E731
    W = lambda s: NormSpec("W", s, q)            # noqa: E731
    C = lambda k: NormSpec("C", k)               # noqa: E731
    table = {
        "W1": [(W(1), L()), (L(), W(2))],
        "W2": [(W(1), L()), (L(), W(2))],
        "W3": [(L(), NormSpec("Wdot", 1, q))],
        "W4": [(W(0.5 - 0.5 / q), L()), (L(), W(1 - 1 / q))],
        "W5": [(W(2 - 0.5 / q), L()), (W(1), W(2 - 1 / q)), (L(), W(3 - 1 / q))],
        "W6": [(W(0.5), L()), (L(), W(1))],
        "S1": [(L(), L())],
        "S2": [(L(), L())],
        "S3": [(L(), W(1))],
        "S4": [(W(0.5 - 0.5 / q), L()), (L(), W(1 - 1 / q))],
        "S5": [(W(1 - 0.5 / q), L()), (L(), W(2 - 1 / q))],
        "C0": [(C(0), C(0))],
        "C1": [(C(0), C(1)), (C(1), C(0))],
        "C2": [(C(0), C(2)), (C(1), C(1))],
        "C3": [(C(0), C(1))],
        "C4": [(C(0), C(2))],
    }
    if name not in table:
        raise NormError(f"unknown composite space {name!r}; known: {sorted(table)}")
    flags = ["negative-order member W^{1,q}(0,T; W^{-1,q}) omitted"] if name == "S3" else []
    return table[name], flags


COMPOSITES = ("W1", "W2", "W3", "W4", "W5", "W6", "S1", "S2", "S3", "S4", "S5",
              "C0", "C1", "C2", "C3", "C4")


@dataclass
class CompositeResult:
    name: str
    value: float
    members: list = field(default_factory=list)
    flags: list = field(default_factory=list)


def composite_norm(f: SpaceTimeSample, name: str, q: float = 2.0, T: float | None = None,
                   backend: str | None = None) -> CompositeResult:
    """Sum of the member norms of a catalogue space on [0, T]."""
    g = f.restrict(T) if T is not None else f
    members, flags = _members(name, q)
    vals = []
    for tspec, sspec in members:
        vals.append((f"{tspec}({sspec})", bochner_norm(g, tspec, sspec, backend)))
    return CompositeResult(name, float(sum(v for _, v in vals)), vals, flags)


# ---------------------------------------------------------------------------
# product estimate probe


def joint_c1_norm(f: SpaceTimeSample) -> float:
    """sup|f| + sup|d_t f| + sup|grad f| (so the constant function 1 has norm 1)."""
    vals = f.values
    out = float(np.max(np.abs(vals)))
    if len(f.times) >= 3:
        out += float(np.max(np.abs(f.dt().values)))
    gx = np.stack([f.domain.grad(v) for v in vals])
    return out + float(np.max(np.abs(gx)))


@dataclass
class ProbeResult:
    constant: float
    ratios: list
    skipped: int

    @property
    def median(self) -> float:
        return float(np.median(self.ratios)) if self.ratios else float("nan")


def product_estimate_probe(pairs, s: float, r: float, q: float,
                           backend: str | None = None) -> ProbeResult:
    """max over (f, g) of ||fg|| / (||f||_{C1C cap CC1} ||g||_{W^{s,q}L^q cap L^q W^{r,q}})."""
    ratios, skipped = [], 0
    tW = (NormSpec("W", s, q), NormSpec("L", 0.0, q))
    sW = (NormSpec("L", 0.0, q), NormSpec("W", r, q))

    def gnorm(g):
        return bochner_norm(g, *tW, backend) + bochner_norm(g, *sW, backend)

    for f, g in pairs:
        ng = gnorm(g)
        if ng == 0.0 or not np.any(g.values):
            skipped += 1
            continue
        fg = SpaceTimeSample(f.values.reshape(f.values.shape + (1,) * (g.values.ndim - f.values.ndim))
                             * g.values, g.times, g.domain)
        ratios.append(gnorm(fg) / (joint_c1_norm(f) * ng))
    return ProbeResult(float(max(ratios)) if ratios else float("nan"), ratios, skipped)


def random_probe_pairs(n: int, nt: int, nx: int, rng: np.random.Generator):
    """Smooth random multipliers f and rough random g on [0,1] x [0,1]."""
    t = np.linspace(0, 1, nt)
    x = np.linspace(0, 1, nx)
    dom = BoxDomain((x,))
    TT, XX = np.meshgrid(t, x, indexing="ij")
    pairs = []
    for _ in range(n):
        a, b, c = rng.normal(size=3)
        kt, kx = rng.uniform(0.5, 3, size=2)
        f = a + b * np.sin(kt * TT + c) * np.cos(kx * XX)
        # rough g: random Fourier series with slowly decaying coefficients
        m = np.arange(1, 16)
        ct = rng.normal(size=(15, 15)) / np.outer(m, m) ** 0.9
        g = np.einsum("ab,ta,xb->tx", ct, np.sin(np.pi * np.outer(t, m)), np.sin(np.pi * np.outer(x, m)))
        pairs.append((SpaceTimeSample(f, t, dom), SpaceTimeSample(g, t, dom)))
    return pairs
