"""Points on the unit sphere, point sets, and spherical-cap neighbor search.

Longitude ``lam`` lies in [-pi, pi] and latitude ``theta`` in [-pi/2, pi/2],
both measured from the equator::

    x = cos(lam) cos(theta),  y = sin(lam) cos(theta),  z = sin(theta)

At the poles the longitude is 0 by convention, and on the branch cut
(y == 0, x < 0) it is +pi.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .errors import DataError, DomainError, FormatError

GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))

_ANGLE_SLACK = 1e-12


def spherical_to_cartesian(lam, theta):
    """Map longitude/latitude (radians) to unit vectors.

    Scalars give a length-3 array; arrays of shape ``s`` give ``s + (3,)``.
    """
    lam = np.asarray(lam, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if np.any(np.abs(lam) > np.pi + _ANGLE_SLACK) or np.any(np.abs(theta) > np.pi / 2 + _ANGLE_SLACK):
        raise DomainError("longitude must lie in [-pi, pi] and latitude in [-pi/2, pi/2]")
    ct = np.cos(theta)
    return np.stack([np.cos(lam) * ct, np.sin(lam) * ct, np.sin(theta)], axis=-1)


def cartesian_to_spherical(p, tol=1e-9):
    """Inverse of :func:`spherical_to_cartesian`; returns ``(lam, theta)``."""
    p = np.asarray(p, dtype=float)
    if p.shape[-1] != 3:
        raise DomainError("expected 3-vectors")
    norms = np.linalg.norm(p, axis=-1)
    if np.any(np.abs(norms - 1.0) > tol):
        raise DomainError(f"input is not unit length (|norm - 1| up to {np.max(np.abs(norms - 1.0)):.3e})")
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    rho = np.hypot(x, y)
    theta = np.arctan2(z, rho)
    lam = np.where(rho > 0.0, np.arctan2(y, x), 0.0)
    # atan2(-0.0, x<0) = -pi; pin the branch cut to +pi
    lam = np.where((y == 0.0) & (x < 0.0) & (rho > 0.0), np.pi, lam)
    if lam.ndim == 0:
        return float(lam), float(theta)
    return lam, theta


def geodesic_distance(p, q):
    """Great-circle arc length between unit vectors, in [0, pi].

    Uses ``atan2(|p x q|, p . q)``, which stays accurate near 0 and pi where
    ``arccos`` loses half the digits.
    """
    p = _as_xyz(p)
    q = _as_xyz(q)
    cross = np.linalg.norm(np.cross(p, q), axis=-1)
    dot = np.sum(p * q, axis=-1)
    d = np.arctan2(cross, dot)
    return float(d) if np.ndim(d) == 0 else d


def chordal_distance(p, q):
    """Euclidean distance between unit vectors, in [0, 2]."""
    d = np.linalg.norm(_as_xyz(p) - _as_xyz(q), axis=-1)
    return float(d) if np.ndim(d) == 0 else d


def _as_xyz(p):
    if isinstance(p, SpherePoint):
        return p.xyz
    return np.asarray(p, dtype=float)


@dataclass(frozen=True)
class SpherePoint:
    """A point on S^2 carried both as a unit 3-vector and as (lam, theta)."""

    xyz: np.ndarray
    lam: float
    theta: float

    @classmethod
    def from_angles(cls, lam, theta):
        return cls(spherical_to_cartesian(lam, theta), float(lam), float(theta))

    @classmethod
    def from_xyz(cls, p):
        p = np.asarray(p, dtype=float)
        p = p / np.linalg.norm(p)
        lam, theta = cartesian_to_spherical(p)
        return cls(p, lam, theta)


@dataclass(frozen=True)
class Neighborhood:
    """Indices of the nodes strictly inside the cap of radius ``delta``."""

    center_index: int
    indices: np.ndarray
    delta: float

    def __len__(self):
        return len(self.indices)


@dataclass(frozen=True, eq=False)
class PointSet:
    """An immutable, ordered set of distinct points on the unit sphere.

    Parameters
    ----------
    xyz : ndarray, shape (N, 3)
        Unit vectors. They are re-normalized on construction.
    label : str
        Free-form tag, e.g. ``"PTS"``, ``"ME"``, ``"TDESIGN"``.
    """

    xyz: np.ndarray
    label: str = "custom"
    lam: np.ndarray = field(init=False, repr=False)
    theta: np.ndarray = field(init=False, repr=False)
    _tree: cKDTree = field(init=False, repr=False)

    def __post_init__(self):
        xyz = np.array(self.xyz, dtype=float, copy=True)
        if xyz.ndim != 2 or xyz.shape[1] != 3 or len(xyz) == 0:
            raise DomainError("a point set needs an (N, 3) array with N >= 1")
        xyz /= np.linalg.norm(xyz, axis=1)[:, None]
        xyz.setflags(write=False)
        lam, theta = cartesian_to_spherical(xyz)
        lam = np.atleast_1d(lam)
        theta = np.atleast_1d(theta)
        lam.setflags(write=False)
        theta.setflags(write=False)
        tree = cKDTree(xyz)
        if len(xyz) > 1:
            dist, _ = tree.query(xyz, k=2)
            if np.min(dist[:, 1]) <= 0.0:
                raise DataError("point set contains duplicate points")
        object.__setattr__(self, "xyz", xyz)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "_tree", tree)

    def __len__(self):
        return len(self.xyz)

    def __getitem__(self, i):
        return SpherePoint(self.xyz[i], float(self.lam[i]), float(self.theta[i]))

    @property
    def points(self):
        return [self[i] for i in range(len(self))]

    @property
    def fill_distance_h(self):
        return len(self) ** -0.5

    def nearest_neighbor_distances(self):
        """Geodesic distance from every point to its nearest other point."""
        _, idx = self._tree.query(self.xyz, k=2)
        return geodesic_distance(self.xyz, self.xyz[idx[:, 1]])

    def cap_indices(self, x, delta):
        """Sorted indices of nodes with geodesic distance to ``x`` below ``delta``."""
        if delta <= 0:
            raise DomainError("cap radius must be positive")
        x = _as_xyz(x)
        if delta > np.pi:
            return np.arange(len(self))
        # enlarge the chord radius a hair, then filter on the exact geodesic test
        chord = 2.0 * np.sin(delta / 2.0) * (1.0 + 1e-9) + 1e-12
        cand = np.asarray(self._tree.query_ball_point(x, chord), dtype=np.intp)
        cand.sort()
        keep = geodesic_distance(self.xyz[cand], x) < delta
        return cand[keep]


def generate_phyllotaxis(n):
    """Phyllotaxis (Fibonacci) spiral of ``n`` points.

    ``z`` runs linearly from -1 to 1 with the two end points pulled in by
    ``1/(2n)`` so no node sits exactly on a pole; longitude advances by the
    golden angle.
    """
    n = int(n)
    if n < 4:
        raise DomainError("phyllotaxis needs n >= 4")
    i = np.arange(n)
    z = -1.0 + 2.0 * i / (n - 1)
    z[0] += 1.0 / (2 * n)
    z[-1] -= 1.0 / (2 * n)
    lam = np.mod(i * GOLDEN_ANGLE + np.pi, 2.0 * np.pi) - np.pi
    rho = np.sqrt(1.0 - z * z)
    xyz = np.column_stack([rho * np.cos(lam), rho * np.sin(lam), z])
    return PointSet(xyz, label="PTS")


def load_point_set(path, format=None, tol=1e-6):
    """Read a whitespace-separated point file.

    ``format`` is ``"plain-xyz"`` (x y z per row) or ``"plain-lonlat"``
    (lam theta in radians per row). When omitted it is inferred from the
    column count of the first data row. Lines starting with ``#`` are
    comments.
    """
    path = Path(path)
    if format not in (None, "plain-xyz", "plain-lonlat"):
        raise DomainError(f"unknown point format {format!r}")
    rows = []
    ncol = {"plain-xyz": 3, "plain-lonlat": 2}.get(format)
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            parts = s.split()
            if ncol is None:
                if len(parts) not in (2, 3):
                    raise FormatError(f"expected 2 or 3 columns, got {len(parts)}", lineno)
                ncol = len(parts)
            if len(parts) != ncol:
                raise FormatError(f"expected {ncol} columns, got {len(parts)}", lineno)
            try:
                rows.append((lineno, [float(v) for v in parts]))
            except ValueError as exc:
                raise FormatError(str(exc), lineno) from None
    if not rows:
        raise FormatError(f"{path}: no points found")
    data = np.array([r for _, r in rows])
    if ncol == 2:
        xyz = spherical_to_cartesian(data[:, 0], data[:, 1])
    else:
        xyz = data
        norms = np.linalg.norm(xyz, axis=1)
        bad = np.flatnonzero(np.abs(norms - 1.0) > tol)
        if len(bad):
            lineno = rows[bad[0]][0]
            raise DataError(f"{path}:{lineno}: vector norm {norms[bad[0]]:.9g} is not 1 within {tol:g}")
    return PointSet(xyz, label=path.stem)


def save_point_set(ps, path, format="plain-xyz"):
    """Write ``ps`` in one of the formats understood by :func:`load_point_set`."""
    if format == "plain-xyz":
        data = ps.xyz
    elif format == "plain-lonlat":
        data = np.column_stack([ps.lam, ps.theta])
    else:
        raise DomainError(f"unknown point format {format!r}")
    np.savetxt(path, data, fmt="%.17g", header=f"{ps.label} N={len(ps)} {format}")
    return Path(path)


def cap_neighbors(ps, center_index, delta):
    """Neighborhood of node ``center_index``: all nodes within geodesic ``delta``."""
    idx = ps.cap_indices(ps.xyz[center_index], delta)
    return Neighborhood(int(center_index), idx, float(delta))


def cap_neighbors_brute(ps, center_index, delta):
    """O(N) linear-scan reference for :func:`cap_neighbors`."""
    d = geodesic_distance(ps.xyz, ps.xyz[center_index])
    return Neighborhood(int(center_index), np.flatnonzero(d < delta), float(delta))
