"""Planar (2D) and freeform (3D) Gaussian records."""
from dataclasses import dataclass

import numpy as np
from django.conf import settings

from utils.exceptions import InvalidArgumentError, InvalidReferenceError
from utils.geometry import quat_to_rotmat, rotmat_to_quat, rot2d


def sh_coefficient_count(degree):
    """Number of SH basis functions per colour channel for a degree."""
    return (degree + 1) ** 2


@dataclass(frozen=True, eq=False)
class Gaussian2D:
    """Gaussian locked to a plane: in-plane mean, two scales and one angle."""

    plane_id: int
    mean: np.ndarray
    scale: np.ndarray
    theta: float
    opacity: float
    sh: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'mean', np.asarray(self.mean, dtype=np.float64).reshape(2))
        object.__setattr__(self, 'scale', np.asarray(self.scale, dtype=np.float64).reshape(2))
        object.__setattr__(self, 'sh', np.asarray(self.sh, dtype=np.float64).reshape(-1, 3))
        if np.any(self.scale <= 0):
            raise InvalidArgumentError('Gaussian2D scales must be positive.')
        if not 0.0 < self.opacity < 1.0:
            raise InvalidArgumentError('Gaussian2D opacity must lie in (0, 1).')

    @property
    def covariance(self):
        """In-plane 2x2 covariance R(theta) diag(S^2) R(theta)^T."""
        R = rot2d(np.array([self.theta]))[0]
        return R @ np.diag(self.scale ** 2) @ R.T


@dataclass(frozen=True, eq=False)
class Gaussian3D:
    """Freeform Gaussian: world mean, three scales and a unit quaternion."""

    mean: np.ndarray
    scale: np.ndarray
    rotation: np.ndarray
    opacity: float
    sh: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.rotation, dtype=np.float64).reshape(4)
        q_norm = np.linalg.norm(q)
        if q_norm < 1e-12:
            raise InvalidArgumentError('Gaussian3D quaternion must be non-zero.')
        object.__setattr__(self, 'mean', np.asarray(self.mean, dtype=np.float64).reshape(3))
        object.__setattr__(self, 'scale', np.asarray(self.scale, dtype=np.float64).reshape(3))
        object.__setattr__(self, 'rotation', q / q_norm)
        object.__setattr__(self, 'sh', np.asarray(self.sh, dtype=np.float64).reshape(-1, 3))
        if np.any(self.scale <= 0):
            raise InvalidArgumentError('Gaussian3D scales must be positive.')
        if not 0.0 < self.opacity < 1.0:
            raise InvalidArgumentError('Gaussian3D opacity must lie in (0, 1).')

    @property
    def rotation_matrix(self):
        return quat_to_rotmat(self.rotation)

    @property
    def covariance(self):
        """World 3x3 covariance R diag(s^2) R^T."""
        M = self.rotation_matrix * self.scale[None, :]
        return M @ M.T


def planar_to_world(g, plane):
    """Lift a planar Gaussian to the equivalent world-space Gaussian."""
    if g.plane_id != plane.id:
        raise InvalidReferenceError('Gaussian references plane %(ref)s, got plane %(id)s.',
                                    params={'ref': g.plane_id, 'id': plane.id})
    mean = plane.to_world(g.mean[None])[0]
    local_rotation = np.eye(3)
    local_rotation[:2, :2] = rot2d(np.array([g.theta]))[0]
    world_rotation = plane.frame[:3, :3] @ local_rotation
    scale = np.array([g.scale[0], g.scale[1], settings.FLATNESS_FLOOR])
    return Gaussian3D(
        mean=mean,
        scale=scale,
        rotation=rotmat_to_quat(world_rotation),
        opacity=g.opacity,
        sh=g.sh.copy(),
    )


def world_to_plane(g, plane):
    """
    Express a world Gaussian in plane coordinates.

    Returns (local mean (3,), local scale (3,), local rotation (3, 3)).
    """
    local_mean = plane.to_local(g.mean[None])[0]
    local_rotation = plane.rotation @ g.rotation_matrix
    return local_mean, g.scale.copy(), local_rotation
