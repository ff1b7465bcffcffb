"""Planar relocation of freeform Gaussians and MCMC-style relocation of dead primitives."""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import binom, ndtr
from django.conf import settings

from utils.exceptions import InvalidArgumentError
from utils.helpers import logit, sigmoid
from utils.validators import validate_non_negative, validate_positive
from .plane_engine import snap

logger = logging.getLogger(__name__)

MAX_CLONES = 51
MAX_OPACITY = 1.0 - 1e-7


@dataclass(eq=False)
class Relocation:
    """Result of a dead-primitive relocation; freeform_source maps new freeform slots to old ones (-1 = clone)."""

    scene: object
    relocated: int
    freeform_source: np.ndarray


def relocation_probability(d_perp, d_parallel, sigma_perp=settings.SIGMA_PERP,
                           sigma_parallel=settings.SIGMA_PARALLEL):
    """beta = (1 - Phi(d_perp / sigma_perp)) * (1 - Phi(d_parallel / sigma_parallel))."""
    validate_non_negative(d_perp, 'd_perp')
    validate_non_negative(d_parallel, 'd_parallel')
    validate_positive(sigma_perp, 'sigma_perp')
    validate_positive(sigma_parallel, 'sigma_parallel')
    beta = ndtr(-np.asarray(d_perp, dtype=np.float64) / sigma_perp)
    beta = beta * ndtr(-np.asarray(d_parallel, dtype=np.float64) / sigma_parallel)
    return float(beta) if np.ndim(beta) == 0 else beta


def planar_relocate(scene, camera, mask, plane_id, rng, sigma_perp=settings.SIGMA_PERP,
                    sigma_parallel=settings.SIGMA_PARALLEL):
    """
    Snap freeform Gaussians inside a plane's mask with probability beta.

    Distances are measured to the nearest planar Gaussian centre of the plane. Returns
    (scene, number of relocated Gaussians).
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != camera.shape:
        raise InvalidArgumentError('Mask shape %(mask)s does not match camera %(cam)s.',
                                   params={'mask': mask.shape, 'cam': camera.shape})
    plane = scene.plane(plane_id)
    centers = scene.planar_world_means(plane_id)
    freeform = scene.freeform
    if len(centers) == 0 or len(freeform) == 0:
        return scene, 0

    row, col, valid = camera.pixel_of(freeform.means)
    inside = np.flatnonzero(valid & mask[row, col])
    if len(inside) == 0:
        return scene, 0
    _, nearest = cKDTree(centers).query(freeform.means[inside])
    offsets = freeform.means[inside] - centers[nearest]
    along = offsets @ plane.normal
    d_parallel = np.linalg.norm(offsets - along[:, None] * plane.normal, axis=1)
    beta = relocation_probability(np.abs(along), d_parallel, sigma_perp, sigma_parallel)
    chosen = inside[rng.random(len(inside)) < beta]
    if len(chosen):
        logger.debug('Planar relocation moved %d Gaussians onto plane %d', len(chosen), plane_id)
    return snap(scene, chosen, plane_id), len(chosen)


def _clone_denominator(opacity, n):
    total = 0.0
    for i in range(1, n + 1):
        for k in range(i):
            total += binom(i - 1, k) * (-1) ** k * opacity ** (k + 1) / np.sqrt(k + 1)
    return total


def relocation_update(opacities, scales, counts):
    """
    Opacity and scale shared by a donor and its clones so the composite stays close to the donor.

    counts holds the total number of copies (donor included) per donor.
    """
    counts = np.clip(np.asarray(counts, dtype=np.int64), 1, MAX_CLONES - 1)
    new_opacity = 1.0 - (1.0 - opacities) ** (1.0 / counts)
    new_opacity = np.clip(new_opacity, settings.DEAD_OPACITY, MAX_OPACITY)
    denom = np.array([_clone_denominator(a, int(n)) for a, n in zip(new_opacity, counts)])
    new_scales = scales * (opacities / denom)[:, None]
    return new_opacity, new_scales


def mcmc_relocate_dead(scene, rng, threshold=settings.DEAD_OPACITY):
    """
    Teleport primitives with opacity below threshold onto live ones sampled proportionally to opacity.

    Clones take the donor's kind and parameters and are appended to the matching block; the donor
    and its clones share the opacity/scale given by relocation_update.
    """
    planar, freeform = scene.planar, scene.freeform
    m = len(planar)
    opacities = np.concatenate([planar.opacities, freeform.opacities])
    dead = opacities < threshold
    identity = Relocation(scene, 0, np.arange(len(freeform)))
    if not dead.any():
        return identity
    live = np.flatnonzero(~dead)
    if len(live) == 0:
        logger.warning('Every primitive is below the opacity threshold; nothing to relocate onto')
        return identity

    donors = rng.choice(live, size=int(dead.sum()), p=opacities[live] / opacities[live].sum())
    unique, counts = np.unique(donors, return_counts=True)
    planar, freeform = planar.copy(), freeform.copy()
    for block, offset, size in ((planar, 0, m), (freeform, m, len(freeform))):
        mine = (unique >= offset) & (unique < offset + size)
        if not mine.any():
            continue
        local = unique[mine] - offset
        new_opacity, new_scales = relocation_update(block.opacities[local], block.scales[local],
                                                    counts[mine] + 1)
        block.opacity_logits[local] = logit(new_opacity)
        block.log_scales[local] = np.log(new_scales)

    planar_dead, free_dead = dead[:m], dead[m:]
    planar_donors = donors[donors < m]
    free_donors = donors[donors >= m] - m
    new_planar = planar.take(np.flatnonzero(~planar_dead)).concat(planar.take(planar_donors))
    kept_free = np.flatnonzero(~free_dead)
    new_free = freeform.take(kept_free).concat(freeform.take(free_donors))
    source = np.concatenate([kept_free, -np.ones(len(free_donors), dtype=np.int64)])
    logger.debug('Relocated %d dead primitives', len(donors))
    return Relocation(scene.replace(planar=new_planar, freeform=new_free), len(donors), source)


def add_exploration_noise(scene, rng, lr, noise_lr=settings.NOISE_LR, exclude=None):
    """Covariance-shaped positional noise on freeform Gaussians, gated towards low opacity."""
    freeform = scene.freeform
    if len(freeform) == 0 or noise_lr == 0:
        return scene
    gate = sigmoid(100.0 * ((1.0 - freeform.opacities) - 0.995))
    noise = np.einsum('nij,nj->ni', freeform.covariances(), rng.standard_normal((len(freeform), 3)))
    noise *= (gate * noise_lr * lr)[:, None]
    if exclude is not None:
        noise[np.asarray(exclude, dtype=bool)] = 0.0
    moved = freeform.copy()
    moved.means += noise
    return scene.replace(freeform=moved)
