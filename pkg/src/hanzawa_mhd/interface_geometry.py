"""Geometry of the deformed interface Gamma_h = {Phi(s) + h(s) n(s)}.

All quantities are grid arrays over the reference surface grid:
alpha = M0 grad_S h, beta = 1/|n - alpha|, n_Gamma = beta (n - alpha) and the
mean curvature (H = -div_Gamma n_Gamma)

    H = beta tr(M0 (L + grad_S alpha)) - beta^3 (M0 alpha) grad_S alpha alpha^T

with ``grad_S alpha[i, j] = (grad_S alpha_j)_i``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hanzawa import HeightField, m0_grid
from .surface import GeometryError, GridGeometry, ReferenceSurface


@dataclass
class InterfaceGeometry:
    alpha: np.ndarray
    beta: np.ndarray
    normal: np.ndarray
    H: np.ndarray
    tangents: np.ndarray
    M0: np.ndarray
    grad_alpha: np.ndarray


def node_index(surface: ReferenceSurface, s, tol: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
    """Map parameters that sit on grid nodes to (i, j) index arrays."""
    s = np.asarray(s, float)
    U, V = surface.grid_params
    du, dv = surface.spacing
    i = np.rint((s[..., 0] - U[0, 0]) / du).astype(int)
    j = np.rint((s[..., 1] - V[0, 0]) / dv).astype(int)
    if surface.modes[0] == "periodic":
        i = np.mod(i, surface.nu)
    j = np.mod(j, surface.nv)
    if np.any((i < 0) | (i >= surface.nu)):
        raise GeometryError("parameter outside the grid")
    du_err = np.abs(U[i, j] - s[..., 0])
    if surface.modes[0] == "periodic":
        du_err = np.minimum(du_err, 2 * np.pi - du_err)
    dv_err = np.abs(np.angle(np.exp(1j * (V[i, j] - s[..., 1]))))
    if np.any(du_err > tol) or np.any(dv_err > tol):
        raise GeometryError("s is not a grid node; grid-based operators need node parameters")
    return i, j


def _as_values(surface: ReferenceSurface, phi) -> np.ndarray:
    if isinstance(phi, HeightField):
        return phi.values
    arr = np.asarray(phi, float)
    if arr.shape != (surface.nu, surface.nv):
        raise GeometryError("grid shape mismatch")
    return arr


def interface_geometry(h: HeightField) -> InterfaceGeometry:
    S = h.surface
    M0 = m0_grid(h)
    n = S.grid_normal
    L = S.grid_weingarten
    G = h.grad_s
    alpha = np.einsum("...ij,...j->...i", M0, G)
    nm = n - alpha
    beta = 1.0 / np.linalg.norm(nm, axis=-1)
    ga = S.surface_grad(alpha)
    tr = np.einsum("...ij,...ji->...", M0, L + ga)
    quad = np.einsum("...i,...ij,...j->...", np.einsum("...ij,...j->...i", M0, alpha), ga, alpha)
    H = beta * tr - beta ** 3 * quad
    tau = S.grid_frame.tau
    I_hL = np.eye(3) - h.values[..., None, None] * L
    dh = np.stack([S.ops.du(h.values), S.ops.dv(h.values)], axis=-1)
    tangents = np.einsum("...ij,...aj->...ai", I_hL, tau) + dh[..., :, None] * n[..., None, :]
    return InterfaceGeometry(alpha, beta, beta[..., None] * nm, H, tangents, M0, ga)


def alpha(h: HeightField, s=None) -> np.ndarray:
    a = interface_geometry(h).alpha
    return a if s is None else a[node_index(h.surface, s)]


def beta(h: HeightField, s=None) -> np.ndarray:
    b = interface_geometry(h).beta
    return b if s is None else b[node_index(h.surface, s)]


def normal_gamma(h: HeightField, s=None) -> np.ndarray:
    n = interface_geometry(h).normal
    return n if s is None else n[node_index(h.surface, s)]


def mean_curvature_gamma(h: HeightField, s=None) -> np.ndarray:
    H = interface_geometry(h).H
    return H if s is None else H[node_index(h.surface, s)]


def dh_gamma_zero(surface: ReferenceSurface, phi, s=None) -> np.ndarray:
    """Linearisation of H_Gamma at h = 0: (tr L^2 + Laplace-Beltrami) phi."""
    v = _as_values(surface, phi)
    out = surface.grid_trace_l2 * v + np.trace(surface.surface_grad(surface.surface_grad(v)),
                                               axis1=-2, axis2=-1)
    return out if s is None else out[node_index(surface, s)]


@dataclass
class CurvatureDerivative:
    """Directional derivatives of the interface quantities in a height direction."""

    dM0: np.ndarray
    dalpha: np.ndarray
    dbeta: np.ndarray
    dH: np.ndarray


def frechet_geometry(h: HeightField, phi, geo: InterfaceGeometry | None = None) -> CurvatureDerivative:
    """Product-rule derivative of M0, alpha, beta and H_Gamma at h in direction phi."""
    S = h.surface
    geo = geo or interface_geometry(h)
    pv = _as_values(S, phi)
    L = S.grid_weingarten
    n = S.grid_normal
    M0, a, b, ga = geo.M0, geo.alpha, geo.beta, geo.grad_alpha
    dM0 = pv[..., None, None] * (M0 @ L @ M0)
    gphi = S.surface_grad(pv)
    dalpha = (np.einsum("...ij,...j->...i", dM0, h.grad_s)
              + np.einsum("...ij,...j->...i", M0, gphi))
    dbeta = b ** 3 * np.einsum("...i,...i->...", n - a, dalpha)
    dga = S.surface_grad(dalpha)
    M0a = np.einsum("...ij,...j->...i", M0, a)
    quad = np.einsum("...i,...ij,...j->...", M0a, ga, a)
    tr = np.einsum("...ij,...ji->...", M0, L + ga)
    dM0a = np.einsum("...ij,...j->...i", dM0, a) + np.einsum("...ij,...j->...i", M0, dalpha)
    dquad = (np.einsum("...i,...ij,...j->...", dM0a, ga, a)
             + np.einsum("...i,...ij,...j->...", M0a, dga, a)
             + np.einsum("...i,...ij,...j->...", M0a, ga, dalpha))
    dtr = np.einsum("...ij,...ji->...", dM0, L + ga) + np.einsum("...ij,...ji->...", M0, dga)
    dH = dbeta * tr + b * dtr - 3 * b ** 2 * dbeta * quad - b ** 3 * dquad
    return CurvatureDerivative(dM0, dalpha, dbeta, dH)


def frechet_mean_curvature(h: HeightField, phi, s=None) -> np.ndarray:
    dH = frechet_geometry(h, phi).dH
    return dH if s is None else dH[node_index(h.surface, s)]


def oracle_geometry(h: HeightField) -> GridGeometry:
    """Independent FD geometry of the parameterisation Phi + h n."""
    S = h.surface
    pts = S.grid_points + h.values[..., None] * S.grid_normal
    return GridGeometry(pts, S.ops, orient=S.grid_normal)
