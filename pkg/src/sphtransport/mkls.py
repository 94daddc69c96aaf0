"""Moving kriging least squares (MKLS) stencils on the sphere.

The approximation is a harmonic trend plus a Gaussian-correlated residual::

    a(x)^T = Y(x)^T B + r(x)^T R^{-1} (I - P B),   B = (P^T R^{-1} P)^{-1} P^T R^{-1}

where ``R`` is the correlation matrix among the stencil nodes and ``r(x)``
the correlations between ``x`` and each node. ``B`` and ``R`` depend only
on the nodes, so gradients act on ``Y(x)`` and ``r(x)`` alone. The
shape functions interpolate: ``a(x_i) = e_i`` at every stencil node.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import ConditioningError, DomainError
from .geometry import cartesian_to_spherical
from .gmls import StencilRow, _indices, _point, chain_rule, check_stencil_size, local_system, solve_spd

MklsStencilRow = StencilRow

CORRELATION_CAP = 1e13

CHORDAL = "chordal"
GEODESIC = "geodesic"


def gaussian_correlation(d, c):
    """``exp(-c d^2)``."""
    if c <= 0:
        raise DomainError("correlation parameter c must be positive")
    r = np.exp(-c * np.square(np.asarray(d, dtype=float)))
    return float(r) if r.ndim == 0 else r


def _distances(a, b, kind):
    """Pairwise correlation distances between rows of ``a`` and ``b``."""
    dots = np.clip(a @ b.T, -1.0, 1.0)
    if kind == CHORDAL:
        return np.sqrt(np.maximum(2.0 - 2.0 * dots, 0.0))
    if kind == GEODESIC:
        cross = np.linalg.norm(np.cross(a[:, None, :], b[None, :, :]), axis=-1)
        return np.arctan2(cross, a @ b.T)
    raise DomainError(f"unknown correlation distance {kind!r}; use 'chordal' or 'geodesic'")


def _correlation_gradient(x, nodes, r, c, kind):
    """Surface gradient of ``r_j(x)``, shape ``(3, n)``."""
    dots = nodes @ x
    tang = nodes - dots[:, None] * x[None, :]  # (I - x x^T) x_j
    coef = 2.0 * c * r
    if kind == GEODESIC:
        ang = np.arctan2(np.linalg.norm(np.cross(nodes, x), axis=1), dots)
        s = np.sin(ang)
        coef = coef * np.where(s > 1e-12, ang / np.where(s > 1e-12, s, 1.0), 1.0)
    return (coef[:, None] * tang).T


class _MklsLocal:
    """Factorized kriging system at one stencil."""

    def __init__(self, x, nbhd, ps, m, c, correlation=CHORDAL, center=None, min_size=None, basis="local"):
        if c <= 0:
            raise DomainError("correlation parameter c must be positive")
        self.x = _point(x)
        self.indices = _indices(nbhd)
        if center is None and getattr(nbhd, "center_index", -1) >= 0:
            center = nbhd.center_index
        check_stencil_size(len(self.indices), m, center, min_size)
        self.nodes = ps.xyz[self.indices]
        self.m, self.c, self.kind, self.center = m, c, correlation, center
        R = gaussian_correlation(_distances(self.nodes, self.nodes, correlation), c)
        self.factor = self._factor(R)
        self.P, self.y, self.grad = local_system(self.nodes, self.x, m, nbhd.delta, basis)
        self.RP = cho_solve(self.factor, self.P)
        self.M = self.P.T @ self.RP

    def _factor(self, R):
        ev = np.linalg.eigvalsh(R)
        cond = ev[-1] / ev[0] if ev[0] > 0 else np.inf
        if cond > CORRELATION_CAP:
            raise ConditioningError(
                f"correlation matrix at {self.center} has condition ~{cond:.3e}; "
                "try a larger c (narrower correlation) or a smaller cap radius",
                center=self.center, condition=cond,
            )
        try:
            return cho_factor(R, lower=True)
        except LinAlgError:
            n = len(R)
            jitter = 1e-12 * np.trace(R) / n
            try:
                return cho_factor(R + jitter * np.eye(n), lower=True)
            except LinAlgError:
                raise ConditioningError(
                    f"correlation matrix at {self.center} is not positive definite", center=self.center
                ) from None

    def weights(self, trend_rhs, corr_rhs):
        """``s + B^T (trend - P^T s)`` with ``s = R^{-1} corr``, column-wise."""
        s = cho_solve(self.factor, corr_rhs)
        t = trend_rhs - self.P.T @ s
        return s + self.RP @ solve_spd(self.M, t, self.center)

    def correlations(self):
        d = _distances(self.nodes, self.x[None, :], self.kind)[:, 0]
        return gaussian_correlation(d, self.c)


def mkls_shape_functions(x, nbhd, ps, m, c, correlation=CHORDAL, center=None, min_size=None, basis="local"):
    """MKLS shape-function values ``a_j(x)`` over the neighborhood."""
    loc = _MklsLocal(x, nbhd, ps, m, c, correlation, center, min_size, basis)
    return loc.weights(loc.y, loc.correlations())


def mkls_gradient_shape_functions(x, nbhd, ps, m, c, correlation=CHORDAL, center=None, min_size=None, basis="local"):
    """Surface-gradient stencils, shape ``(3, |I(x)|)``."""
    loc = _MklsLocal(x, nbhd, ps, m, c, correlation, center, min_size, basis)
    r = loc.correlations()
    dr = _correlation_gradient(loc.x, loc.nodes, r, c, correlation)
    return loc.weights(loc.grad.T, dr.T).T


def mkls_advection_row(x, nbhd, ps, m, c, correlation=CHORDAL, center=None, min_size=None, basis="local"):
    """Value and spherical advection-derivative stencils at ``x``."""
    loc = _MklsLocal(x, nbhd, ps, m, c, correlation, center, min_size, basis)
    r = loc.correlations()
    dr = _correlation_gradient(loc.x, loc.nodes, r, c, correlation)
    trend = np.column_stack([loc.y, loc.grad.T])
    corr = np.column_stack([r, dr.T])
    W = loc.weights(trend, corr)
    lam, theta = cartesian_to_spherical(loc.x / np.linalg.norm(loc.x))
    g_lambda, g_theta = chain_rule(lam, theta, W[:, 1:].T)
    return StencilRow(loc.indices, W[:, 0].copy(), g_lambda, g_theta)
