"""Real orthonormal spherical harmonics and their surface gradients.

Ordering is by degree ``l = 0..m`` and, within a degree, by order
``k = -l..l``; the flat index of ``(l, k)`` is ``l*l + l + k``. No
Condon-Shortley phase is applied, so ``Y_1^{-1}, Y_1^0, Y_1^1`` are
positive multiples of ``y, z, x``.

Each harmonic is written as ``c_lk * Pt_l^k(z) * T_k(x, y)`` where
``T_k`` is ``Re (x+iy)^k`` (k >= 0) or ``Im (x+iy)^|k|`` (k < 0) and
``Pt`` is the associated Legendre function with the ``(1-z^2)^{k/2}``
factor stripped. That form is a polynomial in Cartesian coordinates, so
both values and gradients are evaluated without dividing by ``cos(theta)``
and stay regular at the poles.
"""

from __future__ import annotations

from math import factorial, pi, sqrt

import numpy as np


def basis_dim(m):
    """Number of harmonics of degree at most ``m``."""
    if m < 0:
        raise ValueError("degree must be non-negative")
    return (m + 1) ** 2


def index(l, k):
    """Flat position of ``Y_l^k`` in the basis vector."""
    return l * l + l + k


def _norm(l, k):
    c = sqrt((2 * l + 1) / (4 * pi) * factorial(l - k) / factorial(l + k))
    return c if k == 0 else sqrt(2.0) * c


def _xyz(p):
    p = np.asarray(getattr(p, "xyz", p), dtype=float)
    return p.reshape(-1, 3), p.ndim == 1


def _legendre_stripped(z, m, with_derivative):
    """``Pt[l][k]`` and ``dPt/dz`` for 0 <= k <= l <= m, arrays over ``z``."""
    P = {}
    D = {}
    one = np.ones_like(z)
    zero = np.zeros_like(z)
    for k in range(m + 1):
        dfact = 1.0
        for j in range(1, 2 * k, 2):
            dfact *= j
        P[k, k] = dfact * one
        D[k, k] = zero
        if k + 1 <= m:
            P[k + 1, k] = (2 * k + 1) * z * P[k, k]
            D[k + 1, k] = (2 * k + 1) * P[k, k]
        for l in range(k + 2, m + 1):
            P[l, k] = ((2 * l - 1) * z * P[l - 1, k] - (l + k - 1) * P[l - 2, k]) / (l - k)
            if with_derivative:
                D[l, k] = ((2 * l - 1) * (P[l - 1, k] + z * D[l - 1, k]) - (l + k - 1) * D[l - 2, k]) / (l - k)
    return P, D


def _sectoral(x, y, m):
    """``C[k] + i S[k] = (x + i y)^k`` for k = 0..m."""
    C = [np.ones_like(x)]
    S = [np.zeros_like(x)]
    for _ in range(m):
        c, s = C[-1], S[-1]
        C.append(c * x - s * y)
        S.append(c * y + s * x)
    return C, S


def eval_basis(p, m):
    """Values of all harmonics of degree <= ``m`` at ``p``.

    ``p`` is a unit 3-vector (or :class:`SpherePoint`) giving a vector of
    length ``(m+1)**2``, or an ``(n, 3)`` array giving ``(n, (m+1)**2)``.
    """
    pts, single = _xyz(p)
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    P, _ = _legendre_stripped(z, m, False)
    C, S = _sectoral(x, y, m)
    out = np.empty((len(pts), basis_dim(m)))
    for l in range(m + 1):
        for k in range(l + 1):
            base = _norm(l, k) * P[l, k]
            out[:, index(l, k)] = base * C[k]
            if k:
                out[:, index(l, -k)] = base * S[k]
    return out[0] if single else out


def eval_surface_gradient_basis(p, m):
    """Surface gradients of all harmonics of degree <= ``m``.

    Returns an array of shape ``(3, dim)`` for a single point (row ``i`` is
    the ``i``-th Cartesian component) or ``(3, n, dim)`` for ``n`` points.
    The ambient gradient of the polynomial form is projected onto the
    tangent plane, ``(I - p p^T) grad``; any extension off the sphere has
    the same projection.
    """
    pts, single = _xyz(p)
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    P, D = _legendre_stripped(z, m, True)
    C, S = _sectoral(x, y, m)
    n = len(pts)
    g = np.zeros((3, n, basis_dim(m)))
    for l in range(m + 1):
        for k in range(l + 1):
            c = _norm(l, k)
            # d/dx (x+iy)^k = k (x+iy)^(k-1), d/dy = i k (x+iy)^(k-1)
            if k:
                dCx, dCy = k * C[k - 1], -k * S[k - 1]
                dSx, dSy = k * S[k - 1], k * C[k - 1]
            else:
                dCx = dCy = dSx = dSy = 0.0
            j = index(l, k)
            g[0, :, j] = c * P[l, k] * dCx
            g[1, :, j] = c * P[l, k] * dCy
            g[2, :, j] = c * D[l, k] * C[k]
            if k:
                j = index(l, -k)
                g[0, :, j] = c * P[l, k] * dSx
                g[1, :, j] = c * P[l, k] * dSy
                g[2, :, j] = c * D[l, k] * S[k]
    radial = np.einsum("in,inj->nj", pts.T, g)
    g -= pts.T[:, :, None] * radial[None, :, :]
    return g[:, 0, :] if single else g


def tangent_frame(x):
    """Orthonormal ``e1, e2`` spanning the tangent plane at unit vector ``x``."""
    x = np.asarray(x, dtype=float)
    a = np.zeros(3)
    a[np.argmin(np.abs(x))] = 1.0
    e1 = np.cross(x, a)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(x, e1)
    return e1, e2


def local_basis(nodes, x, m, delta):
    """A well-conditioned basis of the degree-``m`` harmonic space near ``x``.

    In the frame ``(e1, e2, x)`` with ``w = (x' + i y') / sin(delta)`` and
    ``t = (1 - z') / (1 - cos(delta))`` the functions

        Re w^k t^c,  Im w^k t^c,    0 <= k <= m,  0 <= c <= m - k

    span exactly the restrictions of harmonics of degree <= m (the same
    decomposition as ``(x+iy)^k Pt_l^k(z)``), but unlike the harmonics
    themselves they do not become nearly dependent on small caps.

    Returns ``(P, y, grad)``: values at ``nodes`` ``(n, dim)``, values at
    ``x`` ``(dim,)`` and the surface gradient at ``x`` ``(3, dim)``.
    """
    x = np.asarray(x, dtype=float)
    nodes = np.asarray(nodes, dtype=float).reshape(-1, 3)
    e1, e2 = tangent_frame(x)
    X, Y, Z = nodes @ e1, nodes @ e2, nodes @ x
    # 1 - z' without cancellation
    one_minus_z = np.where(Z > 0.0, (X * X + Y * Y) / (1.0 + np.abs(Z)), 1.0 - Z)
    sd = np.sin(min(delta, np.pi / 2))
    w = (X + 1j * Y) / sd
    t = one_minus_z / (1.0 - np.cos(min(delta, np.pi)))
    dim = basis_dim(m)
    P = np.empty((len(nodes), dim))
    y = np.zeros(dim)
    grad = np.zeros((3, dim))
    j = 0
    wk = np.ones_like(w)
    for k in range(m + 1):
        tc = np.ones_like(t)
        for c in range(m - k + 1):
            P[:, j] = wk.real * tc
            if k == 0 and c == 0:
                y[j] = 1.0
            if k == 1 and c == 0:
                grad[:, j] = e1 / sd
            j += 1
            if k:
                P[:, j] = wk.imag * tc
                if k == 1 and c == 0:
                    grad[:, j] = e2 / sd
                j += 1
            tc = tc * t
        wk = wk * w
    return P, y, grad


def harmonic_basis(nodes, x, m):
    """Same triple as :func:`local_basis` but in the global harmonic basis."""
    return eval_basis(nodes, m), eval_basis(x, m), eval_surface_gradient_basis(x, m)
