"""Benchmark flows on the unit sphere and the equal-weight l2 norm.

Velocities are returned as ``(v1, v2)``: the eastward and northward
components that multiply ``(1/cos theta) du/dlam`` and ``du/dtheta``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .geometry import cartesian_to_spherical, spherical_to_cartesian


@dataclass(frozen=True)
class TestCase:
    """A transport problem: velocity, initial field, optional exact solution."""

    __test__ = False  # not a pytest class

    name: str
    velocity: Callable
    initial: Callable
    T: float
    time_dependent_velocity: bool
    exact: Optional[Callable] = None
    parameters: dict = field(default_factory=dict)


def cosine_bell(r, radius):
    """``(1 + cos(pi r / radius)) / 2`` inside the bell, 0 outside."""
    r = np.asarray(r, dtype=float)
    return np.where(r < radius, 0.5 * (1.0 + np.cos(np.pi * np.minimum(r, radius) / radius)), 0.0)


def _great_circle(lam, theta, lam_c, theta_c):
    p = spherical_to_cartesian(lam, theta)
    q = np.array([np.cos(lam_c) * np.cos(theta_c), np.sin(lam_c) * np.cos(theta_c), np.sin(theta_c)])
    cross = np.linalg.norm(np.cross(p, q), axis=-1)
    return np.arctan2(cross, p @ q)


def _rotate(p, axis, angle):
    """Rodrigues rotation of row vectors ``p`` about unit ``axis``; ``angle``
    is a scalar or one angle per row."""
    angle = np.asarray(angle, dtype=float)[..., None]
    c, s = np.cos(angle), np.sin(angle)
    return p * c + np.cross(axis, p) * s + np.outer(p @ axis, axis) * (1.0 - c)


def solid_body_case(alpha=np.pi / 2, bell_radius=0.5, T=2 * np.pi):
    """Rigid rotation of a cosine bell centred at (lam, theta) = (0, 0).

    The field is ``omega x p`` with ``omega = -(0, sin alpha, cos alpha)``;
    for ``alpha = pi/2`` the bell travels over both poles and returns after
    ``2 pi``.
    """
    sa, ca = np.sin(alpha), np.cos(alpha)
    axis = -np.array([0.0, sa, ca])

    def velocity(lam, theta, t=0.0):
        v1 = np.sin(theta) * np.sin(lam) * sa - np.cos(theta) * ca
        v2 = np.cos(lam) * sa
        return v1, v2

    def initial(lam, theta):
        return cosine_bell(_great_circle(lam, theta, 0.0, 0.0), bell_radius)

    def exact(lam, theta, t):
        p = np.atleast_2d(spherical_to_cartesian(lam, theta))
        q = _rotate(p, axis, -t)
        q /= np.linalg.norm(q, axis=1)[:, None]
        lam0, theta0 = cartesian_to_spherical(q)
        out = initial(lam0, theta0)
        return out.reshape(np.shape(lam)) if np.ndim(lam) else float(out[0])

    return TestCase(
        "solid_body", velocity, initial, T, False, exact,
        {"alpha": alpha, "R_b": bell_radius},
    )


def vortex_omega(theta, rho0=3.0):
    """Angular velocity of the vortex; ``3 sqrt(3) / 2`` where ``rho = 0``."""
    rho = rho0 * np.cos(theta)
    small = np.abs(rho) < 1e-8
    tanh_over_rho = np.where(small, 1.0, np.tanh(rho) / np.where(small, 1.0, rho))
    return 1.5 * np.sqrt(3.0) / np.cosh(rho) ** 2 * tanh_over_rho


def vortex_case(rho0=3.0, zeta=5.0, T=3.0):
    """Steady vortex roll-up with a closed-form solution."""

    def velocity(lam, theta, t=0.0):
        theta = np.asarray(theta, dtype=float)
        return vortex_omega(theta, rho0) * np.cos(theta), np.zeros_like(theta + np.asarray(lam, dtype=float))

    def exact(lam, theta, t):
        rho = rho0 * np.cos(theta)
        return 1.0 - np.tanh(rho / zeta * np.sin(lam - vortex_omega(theta, rho0) * t))

    def initial(lam, theta):
        return exact(lam, theta, 0.0)

    return TestCase("vortex", velocity, initial, T, False, exact, {"rho0": rho0, "zeta": zeta})


def deformational_case(T=5.0, bell_radius=0.5, centers=((5 * np.pi / 6, 0.0), (7 * np.pi / 6, 0.0))):
    """Reversing deformational flow; the field returns to its start at ``T``.

    Two cosine bells of great-circle radius ``bell_radius`` on a 0.1
    background. The exact solution is only known at ``t = 0`` and
    ``t = T``; :attr:`TestCase.exact` returns it there and NaN otherwise.
    """
    (l1, t1), (l2, t2) = centers

    def velocity(lam, theta, t=0.0):
        f = np.cos(np.pi * t / T)
        v1 = 2.0 * np.sin(lam) ** 2 * np.sin(2.0 * theta) * f
        v2 = 2.0 * np.sin(2.0 * lam) * np.cos(theta) * f
        return v1, v2

    def initial(lam, theta):
        r1 = _great_circle(lam, theta, l1, t1)
        r2 = _great_circle(lam, theta, l2, t2)
        u = np.full(np.shape(r1), 0.1)
        u = np.where(r1 < bell_radius, 0.1 + 0.9 * cosine_bell(r1, bell_radius), u)
        u = np.where(r2 < bell_radius, 0.1 + 0.9 * cosine_bell(r2, bell_radius), u)
        return u

    def exact(lam, theta, t):
        u = initial(lam, theta)
        if np.isclose(t, 0.0, atol=1e-12 * T) or np.isclose(t, T, rtol=1e-12):
            return u
        return np.full(np.shape(u), np.nan)

    return TestCase(
        "deformational", velocity, initial, T, True, exact,
        {"T": T, "r": bell_radius, "centers": centers},
    )


CASES = {
    "solid_body": solid_body_case,
    "vortex": vortex_case,
    "deformational": deformational_case,
}


def get_case(name, **kwargs):
    try:
        return CASES[name](**kwargs)
    except KeyError:
        raise ValueError(f"unknown test case {name!r}; choose from {sorted(CASES)}") from None


def l2_norm(values, eval_set=None):
    """Equal-weight quadrature norm ``sqrt(4 pi / N * sum f^2)``.

    ``eval_set`` only fixes ``N``; by default ``N = len(values)``.
    """
    values = np.asarray(values, dtype=float)
    n = len(values) if eval_set is None else len(eval_set)
    if n == 0 or len(values) != n:
        raise ValueError("need one value per evaluation point")
    return float(np.sqrt(4.0 * np.pi / n * np.sum(values * values)))
