"""Generalized moving least squares (GMLS) stencils on the sphere.

For an evaluation point ``x`` with cap neighborhood ``I(x)`` the shape
functions are::

    a(x) = W P (P^T W P)^{-1} Y(x)

with ``P[j, :] = Y(x_j)`` a basis of the spherical harmonics of degree
``<= m`` at the neighbors and ``W`` the diagonal of Wendland weights
``phi(dist(x, x_j) / delta)``. Replacing ``Y(x)`` by a component of its
surface gradient gives the gradient stencils; only the right-hand side
changes, so one factorization of the Gram matrix serves all four.

The weights do not depend on which basis of that space is used. By
default ``Y`` is a basis adapted to the cap around ``x`` (see
:func:`harmonics.local_basis`), which keeps the Gram matrix well
conditioned for small caps where the global harmonics are nearly
dependent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, qr, solve_triangular

from .errors import ConditioningError, StencilError
from .geometry import Neighborhood, cartesian_to_spherical, geodesic_distance
from .harmonics import basis_dim, harmonic_basis, local_basis

CONDITION_CAP = 1e12


def wendland_weight(r):
    """Compactly supported weight ``(1-r)^4 (4r+1)`` on [0, 1], zero beyond."""
    r = np.asarray(r, dtype=float)
    w = np.where(r < 1.0, (1.0 - r) ** 4 * (4.0 * r + 1.0), 0.0)
    return float(w) if w.ndim == 0 else w


@dataclass(frozen=True)
class StencilRow:
    """Shape-function values and advection-derivative weights at one point.

    ``g_lambda`` holds the weights of ``(1/cos theta) du/dlam`` and
    ``g_theta`` those of ``du/dtheta``; both are finite at the poles since
    the ``1/cos theta`` factor cancels analytically.
    """

    indices: np.ndarray
    a: np.ndarray
    g_lambda: np.ndarray
    g_theta: np.ndarray


GmlsStencilRow = StencilRow


def _point(x):
    return np.asarray(getattr(x, "xyz", x), dtype=float)


def _indices(nbhd):
    return np.asarray(nbhd.indices if isinstance(nbhd, Neighborhood) else nbhd, dtype=np.intp)


def check_stencil_size(n, m, center=None, min_size=None):
    """Raise :class:`StencilError` if ``n`` nodes cannot support degree ``m``."""
    need = basis_dim(m) if min_size is None else max(min_size, basis_dim(m))
    if n < need:
        where = f"node {center}" if center is not None else "evaluation point"
        raise StencilError(
            f"stencil at {where} has {n} nodes, needs at least {need} for degree {m}",
            center=center, count=n, required=need,
        )


def solve_spd(G, rhs, center=None, cap=CONDITION_CAP):
    """Solve ``G X = rhs`` for a symmetric positive (semi)definite ``G``.

    The system is symmetrically scaled to unit diagonal, then factored by
    Cholesky. If Cholesky fails, a column-pivoted QR is tried. The scaled
    condition number must stay below ``cap``.
    """
    d = np.sqrt(np.diag(G))
    if not np.all(d > 0):
        raise ConditioningError(f"Gram matrix at {center} has a zero diagonal entry", center=center, condition=np.inf)
    Gs = G / d[:, None] / d[None, :]
    ev = np.linalg.eigvalsh(Gs)
    cond = ev[-1] / ev[0] if ev[0] > 0 else np.inf
    if cond > cap:
        raise ConditioningError(
            f"local matrix at {center} has condition ~{cond:.3e} (cap {cap:.0e})", center=center, condition=cond
        )
    rs = rhs / d.reshape((-1,) + (1,) * (rhs.ndim - 1))
    try:
        Xs = cho_solve(cho_factor(Gs, lower=True), rs)
    except LinAlgError:
        Q, R, piv = qr(Gs, pivoting=True)
        Xp = solve_triangular(R, Q.T @ rs)
        Xs = np.empty_like(Xp)
        Xs[piv] = Xp
    return Xs / d.reshape((-1,) + (1,) * (rhs.ndim - 1))


def chain_rule(lam, theta, grad):
    """Combine Cartesian surface-gradient weights into spherical ones.

    ``grad`` has shape ``(3, n)``. Returns ``(g_lambda, g_theta)``, the
    weights of ``(1/cos theta) d/dlam`` and ``d/dtheta``.
    """
    sl, cl = np.sin(lam), np.cos(lam)
    st, ct = np.sin(theta), np.cos(theta)
    g_lambda = -sl * grad[0] + cl * grad[1]
    g_theta = -cl * st * grad[0] - sl * st * grad[1] + ct * grad[2]
    return g_lambda, g_theta


def local_system(nodes, x, m, delta, basis="local"):
    """Basis values at the nodes, at ``x`` and its surface gradient at ``x``.

    ``basis="local"`` (default) uses :func:`harmonics.local_basis`;
    ``"harmonic"`` uses the global real harmonics. Both span the same
    space, so shape functions agree in exact arithmetic.
    """
    if basis == "local":
        return local_basis(nodes, x, m, delta)
    if basis == "harmonic":
        return harmonic_basis(nodes, x, m)
    raise ValueError(f"unknown basis {basis!r}; use 'local' or 'harmonic'")


class _GmlsLocal:
    """Weighted Gram system at one evaluation point."""

    def __init__(self, x, nbhd, ps, m, center=None, min_size=None, basis="local"):
        self.x = _point(x)
        self.indices = _indices(nbhd)
        delta = nbhd.delta
        if center is None and isinstance(nbhd, Neighborhood) and nbhd.center_index >= 0:
            center = nbhd.center_index
        check_stencil_size(len(self.indices), m, center, min_size)
        nodes = ps.xyz[self.indices]
        self.w = wendland_weight(geodesic_distance(nodes, self.x) / delta)
        self.P, self.y, self.grad = local_system(nodes, self.x, m, delta, basis)
        self.WP = self.w[:, None] * self.P
        self.G = self.P.T @ self.WP
        self.m = m
        self.center = center

    def weights(self, rhs):
        return self.WP @ solve_spd(self.G, rhs, self.center)


def gmls_shape_functions(x, nbhd, ps, m, center=None, min_size=None, basis="local"):
    """GMLS shape-function values ``a_j(x)`` over the neighborhood."""
    loc = _GmlsLocal(x, nbhd, ps, m, center, min_size, basis)
    return loc.weights(loc.y)


def gmls_gradient_shape_functions(x, nbhd, ps, m, center=None, min_size=None, basis="local"):
    """Surface-gradient stencils, shape ``(3, |I(x)|)`` (Cartesian components)."""
    loc = _GmlsLocal(x, nbhd, ps, m, center, min_size, basis)
    return loc.weights(loc.grad.T).T


def gmls_advection_row(x, nbhd, ps, m, center=None, min_size=None, basis="local"):
    """Value and spherical advection-derivative stencils at ``x``."""
    loc = _GmlsLocal(x, nbhd, ps, m, center, min_size, basis)
    W = loc.weights(np.column_stack([loc.y, loc.grad.T]))
    lam, theta = cartesian_to_spherical(loc.x / np.linalg.norm(loc.x))
    g_lambda, g_theta = chain_rule(lam, theta, W[:, 1:].T)
    return StencilRow(loc.indices, W[:, 0].copy(), g_lambda, g_theta)
