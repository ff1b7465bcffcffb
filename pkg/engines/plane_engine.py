"""
Plane detection from the current reconstruction.

Candidates are freeform Gaussians whose means project into a plane mask and sit on the rendered
surface; one point is sampled per candidate and fitted with RANSAC. Accepted planes are merged
into the active set and their inliers are snapped to 2D.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from models.config_model import PlaneInitConfig
from models.plane_model import Plane
from models.scene_model import PlanarGaussians
from utils.exceptions import InvalidArgumentError, InvalidReferenceError
from utils.helpers import rng_for
from .splat_engine import render

logger = logging.getLogger(__name__)

INLIER_MODES = ('snap', 'flag', 'none')


@dataclass
class PlaneRegistry:
    """Mask labels consumed by accepted planes, the plane event log and flattening flags."""

    consumed: dict = field(default_factory=dict)
    events: list = field(default_factory=list)
    flagged: set = field(default_factory=set)

    def is_consumed(self, label):
        return label in self.consumed

    def to_dict(self):
        return {
            'consumed': {str(label): plane_id for label, plane_id in sorted(self.consumed.items())},
            'events': list(self.events),
            'flagged': sorted(self.flagged),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            consumed={int(label): int(plane_id) for label, plane_id in data.get('consumed', {}).items()},
            events=list(data.get('events', [])),
            flagged=set(int(i) for i in data.get('flagged', [])),
        )


def select_candidates(scene, camera, mask, depth, cfg=None):
    """Indices of freeform Gaussians projecting into the mask, opaque enough and on the rendered surface."""
    cfg = cfg or PlaneInitConfig()
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != camera.shape or np.shape(depth) != camera.shape:
        raise InvalidArgumentError('Mask %(mask)s and depth %(depth)s must match the camera %(cam)s.',
                                   params={'mask': mask.shape, 'depth': np.shape(depth),
                                           'cam': camera.shape})
    freeform = scene.freeform
    if len(freeform) == 0:
        return np.zeros(0, dtype=np.int64)
    row, col, valid = camera.pixel_of(freeform.means)
    z = camera.to_camera(freeform.means)[:, 2]
    keep = valid & mask[row, col]
    keep &= freeform.opacities > cfg.alpha_threshold
    keep &= np.abs(depth[row, col] - z) < cfg.depth_shell
    return np.flatnonzero(keep)


def fit_plane(points):
    """Least-squares plane through points: (centroid, unit normal of smallest variance)."""
    centroid = points.mean(axis=0)
    _, _, vt = np.linalg.svd(points - centroid, full_matrices=False)
    return centroid, vt[-1]


def ransac_plane(points, cfg=None, rng=None, camera_center=None):
    """
    Best-of-N three-point RANSAC followed by a least-squares refit on the consensus set.

    Returns (Plane with id -1, sorted inlier indices) or None when rejected.
    """
    cfg = cfg or PlaneInitConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n = len(points)
    if n < 3:
        return None

    picks = np.argsort(rng.random((cfg.ransac_iters, n)), axis=1)[:, :3]
    p0, p1, p2 = points[picks[:, 0]], points[picks[:, 1]], points[picks[:, 2]]
    normals = np.cross(p1 - p0, p2 - p0)
    norms = np.linalg.norm(normals, axis=1)
    usable = norms > 1e-12
    normals = normals / np.where(usable, norms, 1.0)[:, None]
    dist = np.abs(np.einsum('hj,nj->hn', normals, points) - np.sum(normals * p0, axis=1)[:, None])
    counts = np.where(usable, (dist < cfg.epsilon).sum(axis=1), -1)
    best = int(np.argmax(counts))
    if counts[best] < 3:
        return None

    consensus = np.flatnonzero(dist[best] < cfg.epsilon)
    origin, normal = fit_plane(points[consensus])
    residuals = np.abs((points[consensus] - origin) @ normal)
    mean_residual = float(residuals.mean())
    if mean_residual >= cfg.epsilon or len(consensus) < cfg.min_inliers:
        logger.debug('RANSAC rejected: %d inliers, mean residual %.3g', len(consensus), mean_residual)
        return None

    plane = Plane(id=-1, origin=origin, normal=normal)
    if camera_center is not None:
        plane = plane.oriented_toward(camera_center)
    return plane, consensus


def snap(scene, indices, plane_id):
    """Move freeform Gaussians onto a plane as planar Gaussians (mean/scale z dropped, yaw kept)."""
    idx = np.asarray(indices, dtype=np.int64).reshape(-1)
    freeform = scene.freeform
    if len(idx) and (idx.min() < 0 or idx.max() >= len(freeform)):
        raise InvalidReferenceError('Snap index out of range for %(n)s freeform Gaussians.',
                                    params={'n': len(freeform)})
    if len(np.unique(idx)) != len(idx):
        raise InvalidReferenceError('Snap indices must be unique.')
    plane = scene.plane(plane_id)
    if len(idx) == 0:
        return scene

    moved = freeform.take(idx)
    local_means = plane.to_local(moved.means)
    local_rot = plane.rotation[None] @ moved.rotations
    snapped = PlanarGaussians(
        plane_ids=np.full(len(idx), plane_id, dtype=np.int64),
        means=local_means[:, :2].copy(),
        log_scales=moved.log_scales[:, :2].copy(),
        thetas=np.arctan2(local_rot[:, 1, 0], local_rot[:, 0, 0]),
        opacity_logits=moved.opacity_logits.copy(),
        sh=moved.sh.copy(),
    )
    keep = np.setdiff1d(np.arange(len(freeform)), idx)
    return scene.replace(planar=scene.planar.concat(snapped), freeform=freeform.take(keep))


def update_active_set(scene, candidate, cfg=None):
    """
    Merge a candidate plane into a close existing plane or append it.

    Returns (planes, target plane id, merged).
    """
    cfg = cfg or PlaneInitConfig()
    for position, existing in enumerate(scene.planes):
        if candidate.angle_to(existing) >= cfg.merge_angle:
            continue
        centers = scene.planar_world_means(existing.id)
        if len(centers) == 0:
            centers = existing.origin[None]
        distance = float(np.linalg.norm(centers - candidate.origin, axis=1).min())
        if distance < cfg.merge_distance:
            planes = list(scene.planes)
            labels = tuple(sorted(set(existing.labels) | set(candidate.labels)))
            planes[position] = existing.with_params(labels=labels)
            return planes, existing.id, True
    plane_id = scene.next_plane_id()
    return list(scene.planes) + [candidate.with_params(id=plane_id)], plane_id, False


def sample_candidate_points(scene, indices, rng):
    """One sample from N(mean, covariance) per candidate freeform Gaussian."""
    chosen = scene.freeform.take(np.asarray(indices, dtype=np.int64))
    M = chosen.rotations * chosen.scales[:, None, :]
    return chosen.means + np.einsum('nij,nj->ni', M, rng.standard_normal((len(chosen), 3)))


def plane_init_round(scene, dataset, registry=None, cfg=None, seed=0, iteration=0,
                     inlier_mode='snap', threads=None):
    """
    Try every unconsumed (label, view) mask of the training views in ascending order.

    inlier_mode: 'snap' snaps inliers, 'flag' records them in registry.flagged (flattening
    ablation) and 'none' only adds the plane.
    """
    if inlier_mode not in INLIER_MODES:
        raise InvalidArgumentError('Unknown inlier mode %(mode)s.', params={'mode': inlier_mode})
    cfg = cfg or PlaneInitConfig()
    registry = registry if registry is not None else PlaneRegistry()
    rng = rng_for(seed, iteration, 'ransac')
    views = {view.index: view for view in dataset.train_views}
    framebuffers = {}

    for label, view_index in dataset.mask_keys(list(views.values())):
        if registry.is_consumed(label):
            continue
        view = views[view_index]
        if view_index not in framebuffers:
            framebuffers[view_index] = render(scene, view.camera, threads=threads)
        candidates = select_candidates(scene, view.camera, view.mask(label),
                                       framebuffers[view_index].depth, cfg)
        if inlier_mode == 'flag':
            candidates = np.setdiff1d(candidates, sorted(registry.flagged))
        if len(candidates) < cfg.min_inliers:
            continue
        points = sample_candidate_points(scene, candidates, rng)
        result = ransac_plane(points, cfg, rng, camera_center=view.camera.center)
        if result is None:
            continue

        plane, inliers = result
        planes, target, merged = update_active_set(scene, plane.with_params(labels=(label,)), cfg)
        scene = scene.replace(planes=planes)
        chosen = candidates[inliers]
        if inlier_mode == 'snap':
            scene = snap(scene, chosen, target)
        elif inlier_mode == 'flag':
            registry.flagged.update(int(i) for i in chosen)
        registry.consumed[label] = target
        registry.events.append({
            'iteration': int(iteration), 'label': int(label), 'view': int(view_index),
            'plane_id': int(target), 'merged': merged, 'inliers': int(len(chosen)),
        })
        logger.info('Plane %d %s from label %d (view %d): %d inliers',
                    target, 'merged' if merged else 'added', label, view_index, len(chosen))
        framebuffers = {}
    return scene, registry
