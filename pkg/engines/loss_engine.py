"""Photometric, mask, depth-smoothness and regularisation losses with their gradients."""
from dataclasses import dataclass

import numpy as np

from utils.validators import validate_same_shape
from .splat_engine import SceneGradients


@dataclass
class RegularizerLoss:
    """Unweighted L_scale and L_opacity with their gradients wrt stored parameters."""

    scale: float
    opacity: float
    scale_grad: SceneGradients
    opacity_grad: SceneGradients


def loss_photo(rendered, target):
    """Mean absolute difference over all pixels and channels."""
    validate_same_shape(rendered, target, 'rendered and target images')
    diff = rendered - target
    return float(np.abs(diff).mean()), np.sign(diff) / diff.size


def loss_mask(rendered, target):
    """
    L1 between predicted soft plane masks and binary targets.

    Both are (P, H, W) stacks over the planes present in the view; the mean over every entry
    is the average of the per-plane losses.
    """
    validate_same_shape(rendered, target, 'rendered and target masks')
    if rendered.size == 0:
        return 0.0, np.zeros_like(rendered)
    diff = rendered - target.astype(np.float64)
    return float(np.abs(diff).mean()), np.sign(diff) / diff.size


def loss_tv(depth, valid):
    """Mean squared difference over horizontally and vertically adjacent valid pixel pairs."""
    validate_same_shape(depth, valid, 'depth and validity')
    grad = np.zeros_like(depth)
    dh = depth[:, 1:] - depth[:, :-1]
    dv = depth[1:, :] - depth[:-1, :]
    vh = valid[:, 1:] & valid[:, :-1]
    vv = valid[1:, :] & valid[:-1, :]
    count = int(vh.sum() + vv.sum())
    if count == 0:
        return 0.0, grad
    dh = np.where(vh, dh, 0.0)
    dv = np.where(vv, dv, 0.0)
    value = float(((dh ** 2).sum() + (dv ** 2).sum()) / count)
    gh = 2.0 * dh / count
    gv = 2.0 * dv / count
    grad[:, 1:] += gh
    grad[:, :-1] -= gh
    grad[1:, :] += gv
    grad[:-1, :] -= gv
    return value, grad


def loss_reg(scene):
    """
    L_opacity = mean opacity over all primitives; L_scale = mean over every scale component
    (two per planar Gaussian, three per freeform Gaussian).
    """
    planar, freeform = scene.planar, scene.freeform
    scale_grad = SceneGradients.zeros(scene)
    opacity_grad = SceneGradients.zeros(scene)
    count = len(planar) + len(freeform)
    if count == 0:
        return RegularizerLoss(0.0, 0.0, scale_grad, opacity_grad)

    p_alpha, f_alpha = planar.opacities, freeform.opacities
    opacity = float((p_alpha.sum() + f_alpha.sum()) / count)
    opacity_grad.planar.opacity_logits[...] = p_alpha * (1.0 - p_alpha) / count
    opacity_grad.freeform.opacity_logits[...] = f_alpha * (1.0 - f_alpha) / count

    p_scales, f_scales = planar.scales, freeform.scales
    components = p_scales.size + f_scales.size
    scale = float((p_scales.sum() + f_scales.sum()) / components)
    scale_grad.planar.log_scales[...] = p_scales / components
    scale_grad.freeform.log_scales[...] = f_scales / components
    return RegularizerLoss(scale, opacity, scale_grad, opacity_grad)


def loss_flat(scene, flagged):
    """Mean smallest scale of the flagged freeform Gaussians (regularise-instead-of-snap ablation)."""
    grad = SceneGradients.zeros(scene)
    flagged = np.flatnonzero(np.asarray(flagged, dtype=bool)[:len(scene.freeform)])
    if len(flagged) == 0:
        return 0.0, grad
    scales = scene.freeform.scales[flagged]
    smallest = np.argmin(scales, axis=1)
    values = scales[np.arange(len(flagged)), smallest]
    grad.freeform.log_scales[flagged, smallest] = values / len(flagged)
    return float(values.mean()), grad
