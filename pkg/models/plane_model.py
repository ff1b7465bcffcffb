"""Plane model and plane-frame algebra."""
from dataclasses import dataclass, field

import numpy as np

from utils.exceptions import InvalidArgumentError

TANGENT_SWITCH = 0.9


def canonical_axes(normal):
    """
    Canonical in-plane axes (v, u) for a unit normal n.

    u = normalize(n x a) with a = x unless |n.x| > 0.9 (then y), v = u x n.
    Rows (v, u, n) form the world-to-plane rotation; n = z gives the identity.
    Also returns the helper axis a and |n x a| (needed by the backward pass).
    """
    n = np.asarray(normal, dtype=np.float64)
    a = np.array([0.0, 1.0, 0.0]) if abs(n[0]) > TANGENT_SWITCH else np.array([1.0, 0.0, 0.0])
    w = np.cross(n, a)
    w_norm = np.linalg.norm(w)
    u = w / w_norm
    v = np.cross(u, n)
    return v, u, a, w_norm


def plane_frame(normal, origin):
    """
    Plane-to-world rigid transform T_pw for a plane (n, o).

    The rotation block is R^T where R (world-to-plane) satisfies R n = z,
    and the translation is o.
    """
    n = np.asarray(normal, dtype=np.float64)
    length = np.linalg.norm(n)
    if not np.isfinite(length) or length < 1e-12:
        raise InvalidArgumentError('Plane normal must be non-zero.')
    if abs(length - 1.0) > 1e-6:
        n = n / length
    v, u, _, _ = canonical_axes(n)
    T = np.eye(4)
    T[:3, 0] = v
    T[:3, 1] = u
    T[:3, 2] = n
    T[:3, 3] = np.asarray(origin, dtype=np.float64)
    return T


@dataclass(frozen=True, eq=False)
class Plane:
    """Detected or ground-truth plane (origin, unit normal) with its cached frame."""

    id: int
    origin: np.ndarray
    normal: np.ndarray
    labels: tuple = ()
    frame: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        normal = np.asarray(self.normal, dtype=np.float64).reshape(3)
        length = np.linalg.norm(normal)
        if not np.isfinite(length) or length < 1e-12:
            raise InvalidArgumentError('Plane normal must be non-zero.')
        if abs(length - 1.0) > 1e-12:
            normal = normal / length
        object.__setattr__(self, 'origin', origin)
        object.__setattr__(self, 'normal', normal)
        object.__setattr__(self, 'labels', tuple(int(label) for label in self.labels))
        object.__setattr__(self, 'frame', plane_frame(normal, origin))

    @property
    def rotation(self):
        """World-to-plane rotation R (R n = z)."""
        return self.frame[:3, :3].T

    @property
    def tangents(self):
        """In-plane world axes (first, second) as a (3, 2) matrix."""
        return self.frame[:3, :2]

    @property
    def offset(self):
        """Signed distance of the world origin: n.x = offset on the plane."""
        return float(self.normal @ self.origin)

    def signed_distance(self, points):
        """Signed distance of (N, 3) points along the normal."""
        return (np.asarray(points) - self.origin) @ self.normal

    def to_local(self, points):
        """World points (N, 3) to plane coordinates (N, 3)."""
        return (np.asarray(points) - self.origin) @ self.frame[:3, :3]

    def to_world(self, local):
        """Plane coordinates (N, 2) or (N, 3) to world points (N, 3)."""
        local = np.asarray(local, dtype=np.float64)
        if local.shape[-1] == 2:
            return local @ self.tangents.T + self.origin
        return local @ self.frame[:3, :3].T + self.origin

    def angle_to(self, other):
        """Unsigned angle (radians) between the two normals."""
        return float(np.arccos(np.clip(abs(self.normal @ other.normal), 0.0, 1.0)))

    def with_params(self, origin=None, normal=None, labels=None, id=None):
        """Copy with some parameters replaced."""
        return Plane(
            id=self.id if id is None else id,
            origin=self.origin if origin is None else origin,
            normal=self.normal if normal is None else normal,
            labels=self.labels if labels is None else labels,
        )

    def oriented_toward(self, point):
        """Copy whose normal points toward the given world point."""
        if self.signed_distance(np.asarray(point)[None])[0] < 0:
            return self.with_params(normal=-self.normal)
        return self
