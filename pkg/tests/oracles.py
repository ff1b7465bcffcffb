"""Slow, obviously-correct reference implementations used by the tests."""
import itertools
import math

import numpy as np
from django.conf import settings

from engines import splat_engine
from engines.sh_engine import eval_sh


def composite_pixelwise(scene, camera, background=None):
    """
    Brute-force renderer: every visible primitive is tested against every pixel, composited
    front to back in a plain Python loop.
    """
    bg = np.asarray(settings.BACKGROUND if background is None else background, dtype=np.float64)
    world = scene.world_gaussians()
    W, t = camera.rotation, camera.translation
    prims = []
    for i in range(len(world)):
        pc = W @ world.means[i] + t
        x, y, z = pc
        if z <= settings.NEAR_PLANE:
            continue
        lim_x, lim_y = (splat_engine.FRUSTUM_MARGIN * t for t in camera.tan_half_fov)
        tx = min(lim_x, max(-lim_x, x / z)) * z
        ty = min(lim_y, max(-lim_y, y / z)) * z
        J = np.array([[camera.fx / z, 0.0, -camera.fx * tx / z ** 2],
                      [0.0, camera.fy / z, -camera.fy * ty / z ** 2]])
        cov = J @ W @ world.covariances[i] @ W.T @ J.T + settings.DILATION * np.eye(2)
        conic = np.linalg.inv(cov)
        mean = np.array([camera.fx * x / z + camera.cx, camera.fy * y / z + camera.cy])
        offset = world.means[i] - camera.center
        color = eval_sh(world.sh[i][None], (offset / np.linalg.norm(offset))[None], scene.sh_degree)[0]
        prims.append((z, i, mean, conic, color, world.opacities[i], world.plane_index[i]))
    prims.sort(key=lambda p: (p[0], p[1]))

    H, Wd = camera.shape
    P = len(scene.planes)
    rgb = np.zeros((H, Wd, 3))
    depth = np.zeros((H, Wd))
    acc = np.zeros((H, Wd))
    masks = np.zeros((P, H, Wd))
    cutoff = splat_engine.CUTOFF_SIGMA ** 2
    for r in range(H):
        for c in range(Wd):
            T = 1.0
            color = np.zeros(3)
            wsum = 0.0
            dsum = 0.0
            for z, _, mean, conic, col, opacity, pidx in prims:
                d = np.array([c, r], dtype=np.float64) - mean
                q = float(d @ conic @ d)
                if q > cutoff:
                    continue
                if T < settings.TRANSMITTANCE_EPS:
                    break
                a = opacity * math.exp(-0.5 * q)
                w = a * T
                color += w * col
                wsum += w
                dsum += w * z
                if pidx >= 0:
                    masks[pidx, r, c] += w
                T *= 1.0 - a
            rgb[r, c] = color + (1.0 - wsum) * bg
            acc[r, c] = wsum
            depth[r, c] = dsum / wsum if wsum > settings.ALPHA_EPS else 0.0
    return rgb, depth, acc, masks


def psnr_naive(pred, gt):
    mse = sum((float(p) - float(g)) ** 2 for p, g in zip(np.ravel(pred), np.ravel(gt))) / np.size(pred)
    return min(100.0, 10.0 * math.log10(1.0 / mse)) if mse > 1e-10 else 100.0


def ssim_naive(pred, gt, sigma=1.5, radius=5):
    """SSIM with an explicit (2r+1)^2 Gaussian window and zero padding."""
    taps = np.exp(-0.5 * (np.arange(-radius, radius + 1) / sigma) ** 2)
    taps /= taps.sum()
    window = np.outer(taps, taps)
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    H, W, C = pred.shape
    scores = []
    for ch in range(C):
        x = np.pad(pred[..., ch], radius)
        y = np.pad(gt[..., ch], radius)
        total = 0.0
        for r in range(H):
            for c in range(W):
                px = x[r:r + 2 * radius + 1, c:c + 2 * radius + 1]
                py = y[r:r + 2 * radius + 1, c:c + 2 * radius + 1]
                mx, my = (window * px).sum(), (window * py).sum()
                vx = (window * px * px).sum() - mx ** 2
                vy = (window * py * py).sum() - my ** 2
                cov = (window * px * py).sum() - mx * my
                total += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx ** 2 + my ** 2 + c1) * (vx + vy + c2))
        scores.append(total / (H * W))
    return float(np.mean(scores))


def depth_naive(pred, gt):
    pairs = [(float(p), float(g)) for p, g in zip(np.ravel(pred), np.ravel(gt)) if g > 0]
    n = len(pairs)
    out = {
        'rmse': math.sqrt(sum((p - g) ** 2 for p, g in pairs) / n),
        'mae': sum(abs(p - g) for p, g in pairs) / n,
        'abs_rel': sum(abs(p - g) / g for p, g in pairs) / n,
    }
    for k in (1, 2, 3):
        hits = 0
        for p, g in pairs:
            ratio = max(p / g, g / p) if p > 0 else math.inf
            hits += ratio < 1.25 ** k
        out[f'delta_{k}'] = hits / n
    return out


def nearest_distances(a, b):
    return np.array([min(np.linalg.norm(p - q) for q in b) for p in a])


def segmentation_naive(pred, gt):
    pred, gt = list(np.ravel(pred)), list(np.ravel(gt))
    n = len(pred)

    def entropy(labels):
        counts = {}
        for label in labels:
            counts[label] = counts.get(label, 0) + 1
        return -sum(c / n * math.log(c / n) for c in counts.values())

    voi = 2 * entropy(list(zip(pred, gt))) - entropy(pred) - entropy(gt)
    agree = sum((pred[i] == pred[j]) == (gt[i] == gt[j]) for i, j in itertools.combinations(range(n), 2))
    rand = agree / (n * (n - 1) / 2)

    covering = 0.0
    for g in set(gt):
        region = {i for i in range(n) if gt[i] == g}
        best = 0.0
        for p in set(pred):
            other = {i for i in range(n) if pred[i] == p}
            best = max(best, len(region & other) / len(region | other))
        covering += len(region) * best
    return {'voi': voi, 'rand_index': rand, 'covering': covering / n}
