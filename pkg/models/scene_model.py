"""Scene model: active planes, planar Gaussians and freeform Gaussians."""
from dataclasses import dataclass, field, replace

import numpy as np
from django.conf import settings

from utils.exceptions import InvalidReferenceError
from utils.geometry import normalize, quat_to_rotmat, rot2d
from utils.helpers import array_digest, logit, sigmoid
from utils.validators import validate_sh_degree
from .gaussian_model import Gaussian2D, Gaussian3D, sh_coefficient_count


@dataclass
class FreeformGaussians:
    """Freeform Gaussians stored as arrays (logit opacity, log scales)."""

    means: np.ndarray
    log_scales: np.ndarray
    quats: np.ndarray
    opacity_logits: np.ndarray
    sh: np.ndarray

    ARRAYS = ('means', 'log_scales', 'quats', 'opacity_logits', 'sh')

    @classmethod
    def empty(cls, sh_count):
        return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 4)), np.zeros(0),
                   np.zeros((0, sh_count, 3)))

    @classmethod
    def from_records(cls, records, sh_count):
        if not records:
            return cls.empty(sh_count)
        return cls(
            means=np.stack([g.mean for g in records]),
            log_scales=np.log(np.stack([g.scale for g in records])),
            quats=np.stack([g.rotation for g in records]),
            opacity_logits=logit(np.array([g.opacity for g in records])),
            sh=np.stack([g.sh for g in records]),
        )

    def __len__(self):
        return self.means.shape[0]

    @property
    def scales(self):
        return np.exp(self.log_scales)

    @property
    def opacities(self):
        return sigmoid(self.opacity_logits)

    @property
    def rotations(self):
        return quat_to_rotmat(normalize(self.quats))

    def covariances(self):
        M = self.rotations * self.scales[:, None, :]
        return M @ np.swapaxes(M, 1, 2)

    def take(self, idx):
        return FreeformGaussians(*(getattr(self, name)[idx].copy() for name in self.ARRAYS))

    def concat(self, other):
        return FreeformGaussians(*(np.concatenate([getattr(self, name), getattr(other, name)])
                                   for name in self.ARRAYS))

    def copy(self):
        return FreeformGaussians(*(getattr(self, name).copy() for name in self.ARRAYS))

    def records(self):
        scales, opacities = self.scales, self.opacities
        return [Gaussian3D(self.means[i], scales[i], self.quats[i], float(opacities[i]), self.sh[i])
                for i in range(len(self))]


@dataclass
class PlanarGaussians:
    """Plane-locked Gaussians stored as arrays (in-plane parameters only)."""

    plane_ids: np.ndarray
    means: np.ndarray
    log_scales: np.ndarray
    thetas: np.ndarray
    opacity_logits: np.ndarray
    sh: np.ndarray

    ARRAYS = ('plane_ids', 'means', 'log_scales', 'thetas', 'opacity_logits', 'sh')

    @classmethod
    def empty(cls, sh_count):
        return cls(np.zeros(0, dtype=np.int64), np.zeros((0, 2)), np.zeros((0, 2)), np.zeros(0),
                   np.zeros(0), np.zeros((0, sh_count, 3)))

    @classmethod
    def from_records(cls, records, sh_count):
        if not records:
            return cls.empty(sh_count)
        return cls(
            plane_ids=np.array([g.plane_id for g in records], dtype=np.int64),
            means=np.stack([g.mean for g in records]),
            log_scales=np.log(np.stack([g.scale for g in records])),
            thetas=np.array([g.theta for g in records], dtype=np.float64),
            opacity_logits=logit(np.array([g.opacity for g in records])),
            sh=np.stack([g.sh for g in records]),
        )

    def __len__(self):
        return self.means.shape[0]

    @property
    def scales(self):
        return np.exp(self.log_scales)

    @property
    def opacities(self):
        return sigmoid(self.opacity_logits)

    def take(self, idx):
        return PlanarGaussians(*(getattr(self, name)[idx].copy() for name in self.ARRAYS))

    def concat(self, other):
        return PlanarGaussians(*(np.concatenate([getattr(self, name), getattr(other, name)])
                                 for name in self.ARRAYS))

    def copy(self):
        return PlanarGaussians(*(getattr(self, name).copy() for name in self.ARRAYS))

    def records(self):
        scales, opacities = self.scales, self.opacities
        return [Gaussian2D(int(self.plane_ids[i]), self.means[i], scales[i], float(self.thetas[i]),
                           float(opacities[i]), self.sh[i])
                for i in range(len(self))]


@dataclass
class WorldGaussians:
    """Every primitive of a scene lifted to world space, planar ones first."""

    means: np.ndarray
    covariances: np.ndarray
    opacities: np.ndarray
    sh: np.ndarray
    plane_index: np.ndarray
    num_planar: int
    # cached factors for the backward pass
    planar_tangents: np.ndarray = field(repr=False, default=None)
    planar_rot2d: np.ndarray = field(repr=False, default=None)
    planar_cov2d: np.ndarray = field(repr=False, default=None)
    freeform_rotations: np.ndarray = field(repr=False, default=None)

    def __len__(self):
        return self.means.shape[0]

    @property
    def is_planar(self):
        return self.plane_index >= 0


@dataclass
class Scene:
    """Hybrid scene: active planes P, planar Gaussians G and freeform Gaussians G-bar."""

    planes: list
    planar: PlanarGaussians
    freeform: FreeformGaussians
    sh_degree: int = settings.SH_DEGREE

    def __post_init__(self):
        validate_sh_degree(self.sh_degree)
        self.planes = list(self.planes)

    @classmethod
    def empty(cls, sh_degree=settings.SH_DEGREE):
        count = sh_coefficient_count(sh_degree)
        return cls([], PlanarGaussians.empty(count), FreeformGaussians.empty(count), sh_degree)

    @classmethod
    def from_records(cls, planes, planar, freeform, sh_degree=settings.SH_DEGREE):
        count = sh_coefficient_count(sh_degree)
        scene = cls(list(planes), PlanarGaussians.from_records(list(planar), count),
                    FreeformGaussians.from_records(list(freeform), count), sh_degree)
        scene.validate()
        return scene

    @property
    def sh_count(self):
        return sh_coefficient_count(self.sh_degree)

    @property
    def primitive_count(self):
        return len(self.planar) + len(self.freeform)

    @property
    def plane_ids(self):
        return [plane.id for plane in self.planes]

    def plane_lookup(self):
        """Map plane id -> position in self.planes."""
        return {plane.id: i for i, plane in enumerate(self.planes)}

    def plane(self, plane_id):
        for plane in self.planes:
            if plane.id == plane_id:
                return plane
        raise InvalidReferenceError('Unknown plane id %(id)s.', params={'id': plane_id})

    def next_plane_id(self):
        return max(self.plane_ids, default=-1) + 1

    def validate(self):
        """Check every planar Gaussian references an existing plane."""
        known = set(self.plane_ids)
        missing = sorted(set(self.planar.plane_ids.tolist()) - known)
        if missing:
            raise InvalidReferenceError('Planar Gaussians reference unknown planes %(ids)s.',
                                        params={'ids': missing})

    def copy(self):
        return Scene(list(self.planes), self.planar.copy(), self.freeform.copy(), self.sh_degree)

    def fingerprint(self):
        """Digest of every parameter; identifies the scene a render came from."""
        plane_arrays = [np.array([p.id for p in self.planes], dtype=np.int64)]
        plane_arrays += [p.origin for p in self.planes] + [p.normal for p in self.planes]
        return array_digest(
            np.array([self.sh_degree]),
            *(getattr(self.planar, name) for name in PlanarGaussians.ARRAYS),
            *(getattr(self.freeform, name) for name in FreeformGaussians.ARRAYS),
            *plane_arrays,
        )

    def replace(self, **changes):
        return replace(self, **changes)

    def planar_counts(self):
        """Number of planar Gaussians per plane id."""
        ids, counts = np.unique(self.planar.plane_ids, return_counts=True)
        return {int(i): int(c) for i, c in zip(ids, counts)}

    def planar_world_means(self, plane_id=None):
        """World means of planar Gaussians (optionally of one plane)."""
        planar = self.planar
        if plane_id is not None:
            planar = planar.take(np.flatnonzero(planar.plane_ids == plane_id))
        if len(planar) == 0:
            return np.zeros((0, 3))
        lookup = self.plane_lookup()
        frames = np.stack([self.planes[lookup[int(i)]].frame for i in planar.plane_ids])
        return np.einsum('nij,nj->ni', frames[:, :3, :2], planar.means) + frames[:, :3, 3]

    def world_gaussians(self):
        """Lift the scene to world-space parameters (planar block first)."""
        self.validate()
        eps2 = settings.FLATNESS_FLOOR ** 2
        lookup = self.plane_lookup()
        planar = self.planar
        m = len(planar)
        if m:
            pidx = np.array([lookup[int(i)] for i in planar.plane_ids], dtype=np.int64)
            frames = np.stack([plane.frame for plane in self.planes])[pidx]
            B = frames[:, :3, :2]
            normals = frames[:, :3, 2]
            planar_means = np.einsum('nij,nj->ni', B, planar.means) + frames[:, :3, 3]
            R2 = rot2d(planar.thetas)
            M2 = R2 * planar.scales[:, None, :]
            cov2d = M2 @ np.swapaxes(M2, 1, 2)
            planar_covs = B @ cov2d @ np.swapaxes(B, 1, 2) + eps2 * normals[:, :, None] * normals[:, None, :]
        else:
            pidx = np.zeros(0, dtype=np.int64)
            B = np.zeros((0, 3, 2))
            planar_means = np.zeros((0, 3))
            R2 = np.zeros((0, 2, 2))
            cov2d = np.zeros((0, 2, 2))
            planar_covs = np.zeros((0, 3, 3))

        freeform = self.freeform
        rotations = freeform.rotations
        M = rotations * freeform.scales[:, None, :]
        free_covs = M @ np.swapaxes(M, 1, 2)

        return WorldGaussians(
            means=np.concatenate([planar_means, freeform.means]),
            covariances=np.concatenate([planar_covs, free_covs]),
            opacities=np.concatenate([planar.opacities, freeform.opacities]),
            sh=np.concatenate([planar.sh, freeform.sh]),
            plane_index=np.concatenate([pidx, -np.ones(len(freeform), dtype=np.int64)]),
            num_planar=m,
            planar_tangents=B,
            planar_rot2d=R2,
            planar_cov2d=cov2d,
            freeform_rotations=rotations,
        )
