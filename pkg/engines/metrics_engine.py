"""Image, depth, mesh-distance and plane-segmentation metrics."""
import logging

import numpy as np
from scipy.ndimage import gaussian_filter
from scipy.spatial import cKDTree
from django.conf import settings

from utils.exceptions import InvalidArgumentError, UndefinedMetricError
from utils.helpers import rng_for
from utils.validators import validate_same_shape
from .splat_engine import render

logger = logging.getLogger(__name__)

PSNR_CAP = 100.0
SSIM_SIGMA = 1.5
SSIM_RADIUS = 5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2
DELTA_THRESHOLDS = (1.25, 1.25 ** 2, 1.25 ** 3)


def psnr(pred, gt):
    """Peak signal-to-noise ratio for images in [0, 1], capped at 100 dB."""
    validate_same_shape(pred, gt, 'images')
    mse = float(np.mean((np.asarray(pred, dtype=np.float64) - gt) ** 2))
    if mse < 1e-10:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(1.0 / mse))


def _window(x):
    return gaussian_filter(x, SSIM_SIGMA, mode='constant', truncate=SSIM_RADIUS / SSIM_SIGMA)


def ssim(pred, gt):
    """Structural similarity with an 11x11 Gaussian window (sigma 1.5), averaged over channels."""
    validate_same_shape(pred, gt, 'images')
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.ndim == 2:
        pred, gt = pred[..., None], gt[..., None]
    scores = []
    for c in range(pred.shape[-1]):
        x, y = pred[..., c], gt[..., c]
        mu_x, mu_y = _window(x), _window(y)
        var_x = _window(x * x) - mu_x ** 2
        var_y = _window(y * y) - mu_y ** 2
        cov = _window(x * y) - mu_x * mu_y
        num = (2.0 * mu_x * mu_y + SSIM_C1) * (2.0 * cov + SSIM_C2)
        den = (mu_x ** 2 + mu_y ** 2 + SSIM_C1) * (var_x + var_y + SSIM_C2)
        scores.append(float(np.mean(num / den)))
    return float(np.mean(scores))


def depth_metrics(pred, gt, valid=None):
    """RMSE, MAE, AbsRel and delta accuracies over pixels with defined (positive) ground truth."""
    validate_same_shape(pred, gt, 'depth maps')
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    mask = gt > 0 if valid is None else np.asarray(valid, dtype=bool) & (gt > 0)
    if not mask.any():
        raise UndefinedMetricError('No valid ground-truth depth pixels.')
    p, g = pred[mask], gt[mask]
    diff = p - g
    with np.errstate(divide='ignore', invalid='ignore'):
        ratio = np.maximum(p / g, np.where(p > 0, g / p, np.inf))
    out = {
        'rmse': float(np.sqrt(np.mean(diff ** 2))),
        'mae': float(np.mean(np.abs(diff))),
        'abs_rel': float(np.mean(np.abs(diff) / g)),
    }
    for k, threshold in enumerate(DELTA_THRESHOLDS, start=1):
        out[f'delta_{k}'] = float(np.mean(ratio < threshold))
    return out


def mesh_distance_metrics(pred, gt, threshold=settings.F1_THRESHOLD, n_samples=settings.MESH_SAMPLES,
                          seed=0):
    """Accuracy, completeness, Chamfer, precision, recall and F1 from area-uniform samples."""
    rng = rng_for(seed, 0, 'metrics')
    pred_pts, _ = pred.sample(rng, n_samples)
    gt_pts, _ = gt.sample(rng, n_samples)
    to_gt, _ = cKDTree(gt_pts).query(pred_pts)
    to_pred, _ = cKDTree(pred_pts).query(gt_pts)
    precision = float(np.mean(to_gt < threshold))
    recall = float(np.mean(to_pred < threshold))
    f1 = 0.0 if precision + recall == 0 else 2.0 * precision * recall / (precision + recall)
    acc, comp = float(to_gt.mean()), float(to_pred.mean())
    return {
        'accuracy': acc, 'completeness': comp, 'chamfer': 0.5 * (acc + comp),
        'precision': precision, 'recall': recall, 'f1': f1,
    }


def _contingency(pred, gt):
    _, p = np.unique(pred, return_inverse=True)
    _, g = np.unique(gt, return_inverse=True)
    table = np.zeros((p.max() + 1, g.max() + 1))
    np.add.at(table, (p.reshape(-1), g.reshape(-1)), 1.0)
    return table


def _entropy(counts, total):
    p = counts[counts > 0] / total
    return float(-np.sum(p * np.log(p)))


def segmentation_metrics(pred, gt):
    """Variation of information (nats), Rand index and segmentation covering of two labellings."""
    pred = np.asarray(pred).reshape(-1)
    gt = np.asarray(gt).reshape(-1)
    validate_same_shape(pred, gt, 'labellings')
    n = len(pred)
    if n == 0:
        raise UndefinedMetricError('Segmentation metrics need at least one sample.')
    table = _contingency(pred, gt)
    rows, cols = table.sum(axis=1), table.sum(axis=0)

    joint = _entropy(table.ravel(), n)
    voi = 2.0 * joint - _entropy(rows, n) - _entropy(cols, n)

    if n == 1:
        rand = 1.0
    else:
        pairs = n * (n - 1) / 2.0
        same_both = np.sum(table * (table - 1)) / 2.0
        same_pred = np.sum(rows * (rows - 1)) / 2.0
        same_gt = np.sum(cols * (cols - 1)) / 2.0
        rand = float((pairs + 2.0 * same_both - same_pred - same_gt) / pairs)

    union = rows[:, None] + cols[None, :] - table
    iou = table / union
    covering = float(np.sum(cols * iou.max(axis=0)) / n)
    return {'voi': max(voi, 0.0), 'rand_index': rand, 'covering': covering}


def mesh_segmentation_metrics(pred, gt, n_samples=settings.MESH_SAMPLES, seed=0):
    """Segmentation metrics on GT samples; predicted labels come from the nearest predicted sample."""
    rng = rng_for(seed, 1, 'metrics')
    gt_pts, gt_labels = gt.sample(rng, n_samples)
    pred_pts, pred_labels = pred.sample(rng, n_samples)
    _, nearest = cKDTree(pred_pts).query(gt_pts)
    return segmentation_metrics(pred_labels[nearest], gt_labels)


def evaluate_nvs(scene, views, threads=None):
    """
    Mean image and depth metrics over views, plus primitive statistics.

    LPIPS is reported as None (it needs a pretrained network).
    """
    if not views:
        raise InvalidArgumentError('No views to evaluate.')
    totals = {}
    counts = {}

    def add(key, value):
        totals[key] = totals.get(key, 0.0) + value
        counts[key] = counts.get(key, 0) + 1

    for view in views:
        fb = render(scene, view.camera, threads=threads)
        add('psnr', psnr(fb.rgb, view.image))
        add('ssim', ssim(fb.rgb, view.image))
        if view.depth is None:
            continue
        try:
            for key, value in depth_metrics(fb.depth, view.depth).items():
                add(key, value)
        except UndefinedMetricError:
            logger.debug('View %d has no valid depth', view.index)
        planar = view.planar_mask()
        if planar.any():
            try:
                for key, value in depth_metrics(fb.depth, view.depth, planar).items():
                    add(f'planar_{key}', value)
            except UndefinedMetricError:
                pass

    metrics = {key: totals[key] / counts[key] for key in totals}
    metrics['lpips'] = None
    metrics['views'] = len(views)
    metrics['primitives'] = scene.primitive_count
    metrics['planar_primitives'] = len(scene.planar)
    metrics['planar_percentage'] = (100.0 * len(scene.planar) / scene.primitive_count
                                    if scene.primitive_count else 0.0)
    metrics['planes'] = len(scene.planes)
    return metrics
