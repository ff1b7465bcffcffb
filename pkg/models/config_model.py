"""Configuration records for synthesis, plane detection, training and meshing."""
import math
from dataclasses import asdict, dataclass, field, fields, replace

from django.conf import settings

from utils.exceptions import UsageError
from utils.validators import (
    validate_min_count,
    validate_non_negative,
    validate_positive,
    validate_sh_degree,
)

MODES = ('hybrid', '3d-only')
INIT_METHODS = ('points', 'random')


class ConfigRecord:
    """from_dict / to_dict / with_overrides shared by every config record."""

    NESTED = {}

    @classmethod
    def from_dict(cls, data):
        data = dict(data or {})
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise UsageError('Unknown %(cls)s keys: %(keys)s.',
                             params={'cls': cls.__name__, 'keys': ', '.join(unknown)})
        for name, nested_cls in cls.NESTED.items():
            if name in data and isinstance(data[name], dict):
                data[name] = nested_cls.from_dict(data[name])
        for f in fields(cls):
            if f.name in data and isinstance(data[f.name], list):
                data[f.name] = tuple(data[f.name])
        record = cls(**data)
        record.validate()
        return record

    def to_dict(self):
        out = asdict(self)
        for key, value in out.items():
            if isinstance(value, tuple):
                out[key] = list(value)
        return out

    def with_overrides(self, **overrides):
        """Copy with every non-None override applied (CLI flag > file > default)."""
        changes = {k: v for k, v in overrides.items() if v is not None}
        if not changes:
            return self
        record = replace(self, **changes)
        record.validate()
        return record

    def validate(self):
        pass


@dataclass(frozen=True)
class PlaneInitConfig(ConfigRecord):
    """Thresholds for candidate selection, RANSAC and active-set merging."""

    alpha_threshold: float = settings.ALPHA_THRESHOLD
    depth_shell: float = settings.DEPTH_SHELL
    epsilon: float = settings.RANSAC_EPSILON
    ransac_iters: int = settings.RANSAC_ITERS
    min_inliers: int = settings.MIN_INLIERS
    merge_angle: float = math.radians(settings.MERGE_ANGLE_DEG)
    merge_distance: float = settings.MERGE_DISTANCE

    def validate(self):
        for name in ('alpha_threshold', 'depth_shell', 'epsilon', 'ransac_iters',
                     'merge_angle', 'merge_distance'):
            validate_positive(getattr(self, name), name)
        validate_min_count(self.min_inliers, 3, 'min_inliers')


@dataclass(frozen=True)
class TrainConfig(ConfigRecord):
    """Schedule, loss weights, optimiser rates, budget, seed and ablation switches."""

    NESTED = {'plane_init': PlaneInitConfig}

    mode: str = 'hybrid'
    init: str = 'points'
    warmup_iters: int = None
    total_iters: int = settings.TOTAL_ITERS
    plane_phase_iters: int = settings.PLANE_PHASE_ITERS
    gaussian_phase_iters: int = settings.GAUSSIAN_PHASE_ITERS
    relocation_interval: int = settings.RELOCATION_INTERVAL
    budget: int = 2000
    sh_degree: int = settings.SH_DEGREE
    seed: int = 0

    lambda_mask: float = settings.LAMBDA_MASK
    lambda_tv: float = settings.LAMBDA_TV
    lambda_scale: float = settings.LAMBDA_SCALE
    lambda_opacity: float = settings.LAMBDA_OPACITY
    lambda_flat: float = settings.LAMBDA_FLAT

    sigma_perp: float = settings.SIGMA_PERP
    sigma_parallel: float = settings.SIGMA_PARALLEL
    dead_opacity: float = settings.DEAD_OPACITY
    noise_lr: float = settings.NOISE_LR

    lr_means: float = settings.LR_MEANS
    lr_means_final: float = settings.LR_MEANS_FINAL
    lr_scales: float = settings.LR_SCALES
    lr_rotations: float = settings.LR_ROTATIONS
    lr_opacity: float = settings.LR_OPACITY
    lr_sh: float = settings.LR_SH
    lr_normals: float = settings.LR_NORMALS

    disable_tv: bool = False
    disable_mask: bool = False
    disable_plane_opt: bool = False
    joint_opt: bool = False
    disable_snapping: bool = False
    disable_relocation: bool = False
    flatten_regularization: bool = False

    plane_init: PlaneInitConfig = field(default_factory=PlaneInitConfig)

    @property
    def effective_warmup(self):
        if self.warmup_iters is not None:
            return self.warmup_iters
        return settings.WARMUP_ITERS if self.init == 'points' else settings.WARMUP_ITERS_RANDOM_INIT

    @property
    def hybrid(self):
        return self.mode == 'hybrid'

    def validate(self):
        if self.mode not in MODES:
            raise UsageError('mode must be one of %(modes)s, got %(mode)s.',
                             params={'modes': ', '.join(MODES), 'mode': self.mode})
        if self.init not in INIT_METHODS:
            raise UsageError('init must be one of %(inits)s, got %(init)s.',
                             params={'inits': ', '.join(INIT_METHODS), 'init': self.init})
        validate_sh_degree(self.sh_degree)
        validate_non_negative(self.total_iters, 'total_iters')
        if self.warmup_iters is not None:
            validate_non_negative(self.warmup_iters, 'warmup_iters')
        for name in ('plane_phase_iters', 'gaussian_phase_iters', 'relocation_interval', 'budget'):
            validate_positive(getattr(self, name), name)
        for name in ('lambda_mask', 'lambda_tv', 'lambda_scale', 'lambda_opacity', 'lambda_flat'):
            validate_non_negative(getattr(self, name), name)
        for name in ('sigma_perp', 'sigma_parallel', 'dead_opacity', 'lr_means', 'lr_means_final',
                     'lr_scales', 'lr_rotations', 'lr_opacity', 'lr_sh', 'lr_normals'):
            validate_positive(getattr(self, name), name)
        validate_non_negative(self.noise_lr, 'noise_lr')
        if isinstance(self.plane_init, PlaneInitConfig):
            self.plane_init.validate()

    def to_dict(self):
        out = super().to_dict()
        out['plane_init'] = self.plane_init.to_dict()
        return out


@dataclass(frozen=True)
class SynthConfig(ConfigRecord):
    """Synthetic box room: size, cameras, textures, clutter and the initial point cloud."""

    room_size: tuple = (4.0, 3.0, 2.5)
    walls: int = 4
    ceiling: bool = False
    num_views: int = 12
    width: int = 64
    height: int = 48
    fov_deg: float = 75.0
    camera_height: float = 1.2
    orbit_radius: float = 0.6
    planar_spacing: float = 0.1
    texture_cell: float = 0.5
    clutter_objects: int = 2
    clutter_gaussians: int = 40
    init_points: int = 2000
    init_noise: float = 0.01
    sh_degree: int = settings.SH_DEGREE

    @property
    def focal(self):
        return 0.5 * self.width / math.tan(math.radians(self.fov_deg) / 2.0)

    def validate(self):
        if len(self.room_size) != 3:
            raise UsageError('room_size must have three entries.')
        for i, size in enumerate(self.room_size):
            validate_positive(size, f'room_size[{i}]')
        if self.walls not in (3, 4):
            raise UsageError('walls must be 3 or 4, got %(walls)s.', params={'walls': self.walls})
        validate_positive(self.num_views, 'num_views')
        for name in ('width', 'height', 'fov_deg', 'camera_height', 'planar_spacing', 'texture_cell',
                     'init_points'):
            validate_positive(getattr(self, name), name)
        for name in ('orbit_radius', 'clutter_objects', 'clutter_gaussians', 'init_noise'):
            validate_non_negative(getattr(self, name), name)
        validate_sh_degree(self.sh_degree)
        if self.camera_height >= self.room_size[2]:
            raise UsageError('camera_height must be below the ceiling.')


@dataclass(frozen=True)
class MeshConfig(ConfigRecord):
    """Planar mesh extraction parameters."""

    voxel_size: float = settings.VOXEL_SIZE
    grid_cell: float = settings.GRID_CELL
    min_contour_points: int = settings.MIN_CONTOUR_POINTS

    def validate(self):
        validate_positive(self.voxel_size, 'voxel_size')
        validate_positive(self.grid_cell, 'grid_cell')
        validate_non_negative(self.min_contour_points, 'min_contour_points')
