"""Closed-form ambient fields with analytic first/second derivatives.

Fields are built from sympy expressions in ``x, y, z, t`` and lambdified once.
Derivative layout follows the row-gradient convention used throughout the
package: ``grad[..., i, j] = d_i f_j`` and ``hess[..., i, j, k] = d_i d_j f_k``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import sympy as sp

X, Y, Z, T = sp.symbols("x y z t", real=True)
COORDS = (X, Y, Z)


class FieldError(Exception):
    pass


def _as_points(x) -> np.ndarray:
    pts = np.asarray(x, dtype=float)
    if pts.shape[-1] != 3:
        raise FieldError(f"points must have a trailing axis of length 3, got {pts.shape}")
    return pts


def _lambdify(exprs, shape):
    """Vectorised evaluator for a nested list of expressions of given shape."""
    flat = list(np.ravel(np.array(exprs, dtype=object)))
    fn = sp.lambdify((X, Y, Z, T), flat, modules="numpy")

    def call(pts: np.ndarray, t: float) -> np.ndarray:
        lead = pts.shape[:-1]
        vals = fn(pts[..., 0], pts[..., 1], pts[..., 2], t)
        out = np.empty(lead + (len(flat),))
        for k, v in enumerate(vals):
            out[..., k] = np.broadcast_to(np.asarray(v, dtype=float), lead)
        return out.reshape(lead + tuple(shape))

    return call


class Field:
    """Abstract ambient field. ``rank`` is 0 (scalar) or 1 (3-vector)."""

    rank: int = 0

    def value(self, x, t: float = 0.0) -> np.ndarray:
        raise NotImplementedError

    def grad(self, x, t: float = 0.0) -> np.ndarray:
        raise NotImplementedError

    def hess(self, x, t: float = 0.0) -> np.ndarray:
        raise NotImplementedError

    def dt(self, x, t: float = 0.0) -> np.ndarray:
        raise NotImplementedError

    def jet(self, x, t: float = 0.0) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(value, grad, hess, dt) in one call; composed fields override this."""
        return self.value(x, t), self.grad(x, t), self.hess(x, t), self.dt(x, t)

    def laplacian(self, x, t: float = 0.0) -> np.ndarray:
        return np.trace(self.hess(x, t), axis1=-3 if self.rank else -2,
                        axis2=-2 if self.rank else -1)

    def __add__(self, other: "Field") -> "Field":
        return LinearCombination([(1.0, self), (1.0, other)])

    def __sub__(self, other: "Field") -> "Field":
        return LinearCombination([(1.0, self), (-1.0, other)])

    def __rmul__(self, c: float) -> "Field":
        return LinearCombination([(float(c), self)])

    def __neg__(self) -> "Field":
        return LinearCombination([(-1.0, self)])


class SympyField(Field):
    """Field defined by sympy expression(s); derivatives come from sympy."""

    def __init__(self, expr, name: str = "", self_test: bool = True, seed: int = 0):
        if isinstance(expr, (list, tuple, sp.Matrix)):
            comps = [sp.sympify(e) for e in expr]
            if len(comps) != 3:
                raise FieldError("vector fields need exactly three components")
            self.rank = 1
        else:
            comps = [sp.sympify(expr)]
            self.rank = 0
        self.name = name or str(expr)
        self.exprs = comps
        grad = [[sp.diff(c, xi) for c in comps] for xi in COORDS]
        hess = [[[sp.diff(c, xi, xj) for c in comps] for xj in COORDS] for xi in COORDS]
        dt = [sp.diff(c, T) for c in comps]
        n = len(comps)
        self._val = _lambdify(comps, (n,))
        self._grad = _lambdify(grad, (3, n))
        self._hess = _lambdify(hess, (3, 3, n))
        self._dt = _lambdify(dt, (n,))
        if self_test:
            self.check_derivatives(seed=seed)

    def _squeeze(self, a: np.ndarray) -> np.ndarray:
        return a[..., 0] if self.rank == 0 else a

    def value(self, x, t: float = 0.0):
        return self._squeeze(self._val(_as_points(x), t))

    def grad(self, x, t: float = 0.0):
        return self._squeeze(self._grad(_as_points(x), t))

    def hess(self, x, t: float = 0.0):
        return self._squeeze(self._hess(_as_points(x), t))

    def dt(self, x, t: float = 0.0):
        return self._squeeze(self._dt(_as_points(x), t))

    def check_derivatives(self, n_points: int = 100, seed: int = 0, rtol: float = 1e-6,
                          box: float = 1.5) -> float:
        """Central-difference check of the analytic gradient; raises on mismatch."""
        rng = np.random.default_rng(seed)
        pts = rng.uniform(-box, box, size=(n_points, 3))
        step = 1e-5
        g = self.grad(pts)
        fd = np.empty_like(g)
        for i in range(3):
            e = np.zeros(3)
            e[i] = step
            fd[:, i] = (self.value(pts + e) - self.value(pts - e)) / (2 * step)
        finite = np.isfinite(g).all(axis=tuple(range(1, g.ndim)))
        err = np.max(np.abs(fd[finite] - g[finite]), initial=0.0)
        scale = max(np.max(np.abs(g[finite]), initial=0.0), 1.0)
        if err > rtol * scale:
            raise FieldError(f"analytic gradient of {self.name!r} disagrees with FD: {err:.3e}")
        return err / scale


class LinearCombination(Field):
    def __init__(self, terms: Sequence[tuple[float, Field]]):
        flat: list[tuple[float, Field]] = []
        for c, f in terms:
            if isinstance(f, LinearCombination):
                flat.extend((c * c2, f2) for c2, f2 in f.terms)
            else:
                flat.append((c, f))
        ranks = {f.rank for _, f in flat}
        if len(ranks) != 1:
            raise FieldError("cannot combine scalar and vector fields")
        self.rank = ranks.pop()
        self.terms = flat

    def _sum(self, method: str, x, t):
        out = None
        for c, f in self.terms:
            v = c * getattr(f, method)(x, t)
            out = v if out is None else out + v
        return out

    def value(self, x, t=0.0):
        return self._sum("value", x, t)

    def grad(self, x, t=0.0):
        return self._sum("grad", x, t)

    def hess(self, x, t=0.0):
        return self._sum("hess", x, t)

    def dt(self, x, t=0.0):
        return self._sum("dt", x, t)

    def jet(self, x, t=0.0):
        out = None
        for c, f in self.terms:
            j = f.jet(x, t)
            out = [c * a for a in j] if out is None else [o + c * a for o, a in zip(out, j)]
        return tuple(out)


class PlaneWaveField(Field):
    """Sum of travelling plane waves f = sum_m c_m sin(k_m.x + w_m t + phase_m).

    Cheap closed-form family for randomized sweeps; every derivative is exact.
    ``coef`` has shape (m,) for scalars or (m, 3) for vectors.
    """

    def __init__(self, coef, wavevec, freq=None, phase=None, name: str = "planewave"):
        self.coef = np.asarray(coef, float)
        self.k = np.asarray(wavevec, float).reshape(-1, 3)
        m = len(self.k)
        self.rank = 1 if self.coef.ndim == 2 else 0
        if self.coef.shape[0] != m:
            raise FieldError("one coefficient per wave vector")
        self.w = np.zeros(m) if freq is None else np.asarray(freq, float)
        self.phase = np.zeros(m) if phase is None else np.asarray(phase, float)
        self.name = name

    def _arg(self, x, t):
        return _as_points(x) @ self.k.T + self.w * t + self.phase

    def _c(self):
        return self.coef if self.rank else self.coef[:, None]

    def _out(self, a):
        return a if self.rank else a[..., 0]

    def value(self, x, t=0.0):
        return self._out(np.sin(self._arg(x, t)) @ self._c())

    def grad(self, x, t=0.0):
        c = np.cos(self._arg(x, t))
        return self._out(np.einsum("...m,mi,mj->...ij", c, self.k, self._c()))

    def hess(self, x, t=0.0):
        s = np.sin(self._arg(x, t))
        return self._out(-np.einsum("...m,mi,mj,mk->...ijk", s, self.k, self.k, self._c()))

    def dt(self, x, t=0.0):
        return self._out(np.cos(self._arg(x, t)) @ (self.w[:, None] * self._c()))

    def divergence_free(self) -> bool:
        return self.rank == 1 and bool(np.allclose(np.einsum("mi,mi->m", self.k, self.coef), 0))


def zero_field(rank: int) -> SympyField:
    return SympyField([0, 0, 0] if rank else 0, name="0", self_test=False)


@dataclass(frozen=True)
class JumpField:
    """Two-phase field: ``inner`` applies where d < 0, ``outer`` where d > 0."""

    inner: Field
    outer: Field

    @property
    def rank(self) -> int:
        return self.inner.rank

    @classmethod
    def continuous(cls, f: Field) -> "JumpField":
        return cls(f, f)

    def branch(self, side: str) -> Field:
        if side not in ("inner", "outer"):
            raise FieldError(f"unknown side {side!r}")
        return self.inner if side == "inner" else self.outer

    def select(self, method: str, x, sides: np.ndarray, t: float = 0.0) -> np.ndarray:
        """Evaluate ``method`` picking the branch per point (``sides`` True = outer)."""
        a = getattr(self.inner, method)(x, t)
        b = getattr(self.outer, method)(x, t)
        mask = np.asarray(sides, dtype=bool).reshape(sides.shape + (1,) * (a.ndim - sides.ndim))
        return np.where(mask, b, a)

    def __add__(self, other: "JumpField") -> "JumpField":
        return JumpField(self.inner + other.inner, self.outer + other.outer)

    def __sub__(self, other: "JumpField") -> "JumpField":
        return JumpField(self.inner - other.inner, self.outer - other.outer)

    def __rmul__(self, c: float) -> "JumpField":
        return JumpField(c * self.inner, c * self.outer)


def as_jump(f) -> JumpField:
    return f if isinstance(f, JumpField) else JumpField.continuous(f)


def parse_expr(text: str | Sequence[str], **kw) -> SympyField:
    """Build a field from string expression(s) in x, y, z, t."""
    loc = {"x": X, "y": Y, "z": Z, "t": T}
    if isinstance(text, str):
        return SympyField(sp.sympify(text, locals=loc), name=text, **kw)
    return SympyField([sp.sympify(s, locals=loc) for s in text], name=str(list(text)), **kw)
