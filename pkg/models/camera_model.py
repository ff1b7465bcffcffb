"""Pinhole camera model (OpenCV convention: x right, y down, z forward)."""
from dataclasses import dataclass, field

import numpy as np

from utils.exceptions import InvalidArgumentError
from utils.helpers import array_digest


@dataclass(frozen=True, eq=False)
class Camera:
    """Intrinsics, image size and a world-to-camera rigid transform."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    world_to_camera: np.ndarray = field(default_factory=lambda: np.eye(4))

    def __post_init__(self):
        T = np.asarray(self.world_to_camera, dtype=np.float64).reshape(4, 4)
        object.__setattr__(self, 'world_to_camera', T)
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidArgumentError('Focal lengths must be positive, got fx=%(fx)s fy=%(fy)s.',
                                       params={'fx': self.fx, 'fy': self.fy})
        if self.width <= 0 or self.height <= 0:
            raise InvalidArgumentError('Image size must be positive, got %(w)sx%(h)s.',
                                       params={'w': self.width, 'h': self.height})
        R = T[:3, :3]
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-6) or np.linalg.det(R) < 0:
            raise InvalidArgumentError('Camera rotation must be orthonormal with det +1.')

    @classmethod
    def look_at(cls, eye, target, fx, fy, width, height, up=(0.0, 0.0, 1.0), cx=None, cy=None):
        """Camera at eye looking toward target, with up as the preferred image-up direction."""
        eye = np.asarray(eye, dtype=np.float64)
        forward = np.asarray(target, dtype=np.float64) - eye
        norm = np.linalg.norm(forward)
        if norm < 1e-12:
            raise InvalidArgumentError('Camera eye and target coincide.')
        forward /= norm
        up = np.asarray(up, dtype=np.float64)
        if np.linalg.norm(np.cross(forward, up)) < 1e-9:
            up = np.array([0.0, 1.0, 0.0]) if abs(forward[1]) < 0.9 else np.array([1.0, 0.0, 0.0])
        right = np.cross(forward, up)
        right /= np.linalg.norm(right)
        down = np.cross(forward, right)
        R = np.stack([right, down, forward])
        T = np.eye(4)
        T[:3, :3] = R
        T[:3, 3] = -R @ eye
        return cls(
            fx=float(fx), fy=float(fy),
            cx=float((width - 1) / 2.0 if cx is None else cx),
            cy=float((height - 1) / 2.0 if cy is None else cy),
            width=int(width), height=int(height),
            world_to_camera=T,
        )

    @property
    def rotation(self):
        return self.world_to_camera[:3, :3]

    @property
    def translation(self):
        return self.world_to_camera[:3, 3]

    @property
    def center(self):
        """Camera centre in world coordinates."""
        return -self.rotation.T @ self.translation

    @property
    def shape(self):
        return self.height, self.width

    @property
    def tan_half_fov(self):
        """Tangents of the horizontal and vertical half fields of view."""
        return self.width / (2.0 * self.fx), self.height / (2.0 * self.fy)

    def to_camera(self, points):
        return np.asarray(points) @ self.rotation.T + self.translation

    def project(self, points):
        """World points (N, 3) -> (pixels (N, 2), depths (N,))."""
        pc = self.to_camera(points)
        z = pc[:, 2]
        with np.errstate(divide='ignore', invalid='ignore'):
            uv = np.stack([self.fx * pc[:, 0] / z + self.cx, self.fy * pc[:, 1] / z + self.cy], axis=1)
        return uv, z

    def pixel_of(self, points):
        """Nearest pixel (row, col) of each projected point and a validity mask."""
        uv, z = self.project(points)
        col = np.round(uv[:, 0])
        row = np.round(uv[:, 1])
        valid = (z > 0) & np.isfinite(col) & np.isfinite(row)
        valid &= (col >= 0) & (col < self.width) & (row >= 0) & (row < self.height)
        col = np.where(valid, col, 0).astype(np.int64)
        row = np.where(valid, row, 0).astype(np.int64)
        return row, col, valid

    def ray_directions(self, rows=None, cols=None):
        """World-space ray directions (unnormalised, unit camera depth) through pixel centres."""
        if rows is None:
            rows, cols = np.mgrid[0:self.height, 0:self.width]
            rows, cols = rows.ravel(), cols.ravel()
        d_cam = np.stack([(cols - self.cx) / self.fx, (rows - self.cy) / self.fy,
                          np.ones(len(rows))], axis=1)
        return d_cam @ self.rotation

    def translated(self, offset):
        """Same camera moved by a world-space offset."""
        T = self.world_to_camera.copy()
        T[:3, 3] = self.translation - self.rotation @ np.asarray(offset, dtype=np.float64)
        return Camera(self.fx, self.fy, self.cx, self.cy, self.width, self.height, T)

    def fingerprint(self):
        return array_digest(np.array([self.fx, self.fy, self.cx, self.cy, self.width, self.height]),
                            self.world_to_camera)

    def to_dict(self):
        return {
            'fx': self.fx, 'fy': self.fy, 'cx': self.cx, 'cy': self.cy,
            'width': self.width, 'height': self.height,
            'world_to_camera': self.world_to_camera.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            fx=float(data['fx']), fy=float(data['fy']), cx=float(data['cx']), cy=float(data['cy']),
            width=int(data['width']), height=int(data['height']),
            world_to_camera=np.asarray(data['world_to_camera'], dtype=np.float64),
        )
