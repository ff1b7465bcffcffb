"""
Training loop: a Gaussian-only warm-up, then rounds of plane detection, plane optimisation and
Gaussian optimisation, with planar and dead-primitive relocation on a fixed cadence.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from tqdm import tqdm

from models.config_model import TrainConfig
from models.framebuffer_model import FrameBufferGrad
from models.scene_model import FreeformGaussians, PlanarGaussians, Scene
from utils.exceptions import InvalidArgumentError
from utils.helpers import logit, rng_for
from .loss_engine import loss_flat, loss_mask, loss_photo, loss_reg, loss_tv
from .plane_engine import PlaneRegistry, plane_init_round
from .relocation_engine import add_exploration_noise, mcmc_relocate_dead, planar_relocate
from .sh_engine import rgb_to_sh0
from .splat_engine import SceneGradients, render, render_backward

logger = logging.getLogger(__name__)

LOG_FIELDS = ('iteration', 'phase', 'loss', 'photo', 'mask', 'tv', 'scale', 'opacity',
              'planes', 'planar', 'freeform', 'event')
INITIAL_OPACITY = 0.1


class Adam:
    """Adaptive-moment optimiser over named numpy arrays."""

    def __init__(self, betas=(0.9, 0.999), eps=1e-15):
        self.betas = betas
        self.eps = eps
        self.state = {}

    def step(self, key, param, grad, lr):
        """Return the updated copy of param; moments restart when the shape changes."""
        b1, b2 = self.betas
        stored = self.state.get(key)
        if stored is None or stored['exp_avg'].shape != param.shape:
            stored = {'exp_avg': np.zeros_like(param), 'exp_avg_sq': np.zeros_like(param), 'step': 0}
        stored['step'] += 1
        stored['exp_avg'] = b1 * stored['exp_avg'] + (1.0 - b1) * grad
        stored['exp_avg_sq'] = b2 * stored['exp_avg_sq'] + (1.0 - b2) * grad * grad
        self.state[key] = stored
        m_hat = stored['exp_avg'] / (1.0 - b1 ** stored['step'])
        v_hat = stored['exp_avg_sq'] / (1.0 - b2 ** stored['step'])
        return param - lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def reset(self, prefix=''):
        for key in [k for k in self.state if k.startswith(prefix)]:
            del self.state[key]


def exponential_lr(iteration, lr_init, lr_final, max_steps):
    """Log-linear interpolation from lr_init to lr_final over max_steps."""
    t = np.clip(iteration / max(max_steps, 1), 0.0, 1.0)
    return float(np.exp(np.log(lr_init) * (1.0 - t) + np.log(lr_final) * t))


def _scale_from_spacing(points):
    """Isotropic scale from the mean squared distance to the three nearest neighbours."""
    k = min(4, len(points))
    if k < 2:
        return np.full(len(points), 0.01)
    dist, _ = cKDTree(points).query(points, k=k)
    return np.sqrt(np.maximum((dist[:, 1:] ** 2).mean(axis=1), 1e-14))


def initialize_scene(dataset, config, rng):
    """Freeform-only scene of exactly config.budget Gaussians from the point cloud or at random."""
    budget = config.budget
    sh = np.zeros((budget, (config.sh_degree + 1) ** 2, 3))
    points = dataset.init_points
    init = config.init
    if init == 'points' and (points is None or len(points) == 0):
        logger.warning('Dataset has no initial points; falling back to random initialisation')
        init = 'random'

    if init == 'points':
        colors = dataset.init_colors if dataset.init_colors is not None else np.full((len(points), 3), 0.5)
        if len(points) >= budget:
            chosen = np.sort(rng.choice(len(points), size=budget, replace=False))
            means, rgb = points[chosen].copy(), colors[chosen].copy()
        else:
            extra = rng.choice(len(points), size=budget - len(points))
            jitter = 0.01 * dataset.extent() * rng.standard_normal((len(extra), 3))
            means = np.concatenate([points, points[extra] + jitter])
            rgb = np.concatenate([colors, colors[extra]])
        scales = _scale_from_spacing(means)
    else:
        lo, hi = dataset.bounds()
        center = 0.5 * (lo + hi)
        half = np.maximum(0.5 * (hi - lo), dataset.extent())
        means = center + rng.uniform(-1.0, 1.0, size=(budget, 3)) * half
        rgb = rng.random((budget, 3))
        scales = np.full(budget, np.cbrt(np.prod(2.0 * half) / budget))

    sh[:, 0] = rgb_to_sh0(np.clip(rgb, 0.0, 1.0))
    freeform = FreeformGaussians(
        means=np.asarray(means, dtype=np.float64),
        log_scales=np.repeat(np.log(scales)[:, None], 3, axis=1),
        quats=np.tile([1.0, 0.0, 0.0, 0.0], (budget, 1)),
        opacity_logits=np.full(budget, float(logit(INITIAL_OPACITY))),
        sh=sh,
    )
    return Scene([], PlanarGaussians.empty(sh.shape[1]), freeform, config.sh_degree)


@dataclass
class LossTerms:
    loss: float = 0.0
    photo: float = 0.0
    mask: float = 0.0
    tv: float = 0.0
    scale: float = 0.0
    opacity: float = 0.0
    flat: float = 0.0


def plane_mask_targets(scene, view):
    """(plane positions, target masks) for the planes whose labels have a mask in the view."""
    positions, targets = [], []
    for k, plane in enumerate(scene.planes):
        labels = [label for label in plane.labels if label in view.masks]
        if not labels:
            continue
        target = np.zeros(view.camera.shape, dtype=bool)
        for label in labels:
            target |= view.masks[label]
        positions.append(k)
        targets.append(target)
    return positions, targets


def compute_losses(scene, view, config, terms, threads=None, flagged=None):
    """
    Weighted loss over the requested terms and its gradient wrt every scene parameter.

    terms is a subset of {'photo', 'mask', 'tv', 'reg', 'flat'}.
    """
    fb = render(scene, view.camera, threads=threads)
    grad = FrameBufferGrad.zeros_like(fb)
    out = LossTerms()

    out.photo, g = loss_photo(fb.rgb, view.image)
    grad.rgb += g
    out.loss = out.photo

    if 'mask' in terms and config.lambda_mask > 0:
        positions, targets = plane_mask_targets(scene, view)
        if positions:
            out.mask, g = loss_mask(fb.plane_masks[positions], np.stack(targets))
            grad.plane_masks[positions] += config.lambda_mask * g
            out.loss += config.lambda_mask * out.mask

    if 'tv' in terms and config.lambda_tv > 0:
        out.tv, g = loss_tv(fb.depth, fb.valid)
        grad.depth += config.lambda_tv * g
        out.loss += config.lambda_tv * out.tv

    grads = render_backward(scene, view.camera, fb, grad, threads=threads)

    if 'reg' in terms:
        reg = loss_reg(scene)
        out.scale, out.opacity = reg.scale, reg.opacity
        grads.add_scaled(reg.scale_grad, config.lambda_scale)
        grads.add_scaled(reg.opacity_grad, config.lambda_opacity)
        out.loss += config.lambda_scale * reg.scale + config.lambda_opacity * reg.opacity

    if 'flat' in terms and flagged is not None and len(flagged):
        out.flat, g = loss_flat(scene, flagged)
        grads.add_scaled(g, config.lambda_flat)
        out.loss += config.lambda_flat * out.flat
    return out, grads


@dataclass
class TrainState:
    scene: Scene
    registry: PlaneRegistry = field(default_factory=PlaneRegistry)
    iteration: int = 0
    log: list = field(default_factory=list)


class Trainer:
    """Owns the scene and optimiser state for one training run."""

    def __init__(self, dataset, config=None, scene=None, threads=None):
        if len(dataset) == 0:
            raise InvalidArgumentError('Cannot train on an empty dataset.')
        self.dataset = dataset
        self.config = config or TrainConfig()
        self.threads = threads
        self.extent = dataset.extent()
        self.adam = Adam()
        if scene is None:
            scene = initialize_scene(dataset, self.config, rng_for(self.config.seed, 0, 'init'))
        self.state = TrainState(scene=scene)
        self._order = []

    @property
    def scene(self):
        return self.state.scene

    @property
    def inlier_mode(self):
        if self.config.flatten_regularization:
            return 'flag'
        return 'none' if self.config.disable_snapping else 'snap'

    def means_lr(self, iteration):
        cfg = self.config
        return self.extent * exponential_lr(iteration, cfg.lr_means, cfg.lr_means_final, cfg.total_iters)

    def next_view(self):
        """Training views in a seeded permutation, re-shuffled every epoch."""
        if not self._order:
            views = self.dataset.train_views
            epoch = self.state.iteration // max(len(views), 1)
            perm = rng_for(self.config.seed, epoch, 'shuffle').permutation(len(views))
            self._order = [views[i] for i in perm]
        return self._order.pop(0)

    def _flagged_mask(self):
        flagged = np.zeros(len(self.scene.freeform), dtype=bool)
        if self.state.registry.flagged:
            flagged[sorted(self.state.registry.flagged)] = True
        return flagged

    def _gaussian_terms(self, phase):
        cfg = self.config
        if phase == 'warmup' or not cfg.hybrid:
            return {'photo', 'reg'}
        terms = {'photo', 'reg'}
        if not cfg.disable_mask:
            terms.add('mask')
        if not cfg.disable_tv:
            terms.add('tv')
        if cfg.flatten_regularization:
            terms.add('flat')
        return terms

    def _step_gaussians(self, scene, grads, iteration):
        cfg = self.config
        rates = {
            'means': self.means_lr(iteration), 'log_scales': cfg.lr_scales, 'quats': cfg.lr_rotations,
            'thetas': cfg.lr_rotations, 'opacity_logits': cfg.lr_opacity, 'sh': cfg.lr_sh,
        }
        planar = scene.planar.copy()
        for name in PlanarGaussians.ARRAYS[1:]:
            if len(planar):
                setattr(planar, name, self.adam.step(f'planar.{name}', getattr(planar, name),
                                                     getattr(grads.planar, name), rates[name]))
        freeform = scene.freeform.copy()
        for name in FreeformGaussians.ARRAYS:
            if len(freeform):
                setattr(freeform, name, self.adam.step(f'freeform.{name}', getattr(freeform, name),
                                                       getattr(grads.freeform, name), rates[name]))
        return scene.replace(planar=planar, freeform=freeform)

    def _step_planes(self, scene, grads, iteration):
        lr = self.means_lr(iteration)
        planes = []
        for k, plane in enumerate(scene.planes):
            origin = self.adam.step(f'plane.{plane.id}.origin', plane.origin, grads.plane_origins[k], lr)
            normal = self.adam.step(f'plane.{plane.id}.normal', plane.normal, grads.plane_normals[k],
                                    self.config.lr_normals)
            planes.append(plane.with_params(origin=origin, normal=normal))
        return scene.replace(planes=planes)

    def plane_phase_step(self, view):
        """One step on every plane's origin and normal; Gaussian parameters stay frozen."""
        scene = self.scene
        terms = {'photo'} if self.config.disable_mask else {'photo', 'mask'}
        losses, grads = compute_losses(scene, view, self.config, terms, self.threads)
        if scene.planes:
            self.state.scene = self._step_planes(scene, grads, self.state.iteration)
        return losses

    def gaussian_phase_step(self, view, phase='gaussian'):
        """One step on every planar and freeform Gaussian parameter; planes stay frozen."""
        flagged = self._flagged_mask() if self.config.flatten_regularization else None
        losses, grads = compute_losses(self.scene, view, self.config, self._gaussian_terms(phase),
                                       self.threads, flagged)
        self.state.scene = self._step_gaussians(self.scene, grads, self.state.iteration)
        return losses

    def joint_step(self, view):
        """Plane and Gaussian parameters updated from the same gradient."""
        flagged = self._flagged_mask() if self.config.flatten_regularization else None
        losses, grads = compute_losses(self.scene, view, self.config, self._gaussian_terms('joint'),
                                       self.threads, flagged)
        scene = self._step_gaussians(self.scene, grads, self.state.iteration)
        self.state.scene = self._step_planes(scene, grads, self.state.iteration)
        return losses

    def detect_planes(self):
        before = len(self.scene.planes), len(self.state.registry.events)
        scene, registry = plane_init_round(
            self.scene, self.dataset, self.state.registry, self.config.plane_init,
            seed=self.config.seed, iteration=self.state.iteration,
            inlier_mode=self.inlier_mode, threads=self.threads,
        )
        self.state.scene = scene
        self.state.registry = registry
        accepted = len(registry.events) - before[1]
        if accepted:
            self.adam.reset('planar.')
            self.adam.reset('freeform.')
            return f'plane_init: {accepted} accepted, {len(scene.planes) - before[0]} new'
        return None

    def relocate(self, view):
        """Planar relocation for the planes masked in view, then dead relocation and exploration noise."""
        cfg = self.config
        it = self.state.iteration
        scene = self.scene
        snapped = 0
        if cfg.hybrid and self.inlier_mode == 'snap':
            rng = rng_for(cfg.seed, it, 'planar_relocation')
            positions, targets = plane_mask_targets(scene, view)
            for k, target in zip(positions, targets):
                scene, moved = planar_relocate(scene, view.camera, target, scene.planes[k].id, rng,
                                               cfg.sigma_perp, cfg.sigma_parallel)
                snapped += moved
        result = mcmc_relocate_dead(scene, rng_for(cfg.seed, it, 'dead_relocation'), cfg.dead_opacity)
        scene = result.scene
        if self.state.registry.flagged:
            old = self.state.registry.flagged
            self.state.registry.flagged = {i for i, src in enumerate(result.freeform_source) if src in old}
        clones = result.freeform_source < 0
        scene = add_exploration_noise(scene, rng_for(cfg.seed, it, 'noise'), self.means_lr(it),
                                      cfg.noise_lr, exclude=clones)
        self.state.scene = scene
        if snapped or result.relocated:
            self.adam.reset('planar.')
            self.adam.reset('freeform.')
        return f'relocation: {snapped} planar, {result.relocated} dead'

    def _record(self, phase, losses, event=None):
        scene = self.scene
        record = {
            'iteration': self.state.iteration, 'phase': phase, 'loss': losses.loss,
            'photo': losses.photo, 'mask': losses.mask, 'tv': losses.tv, 'scale': losses.scale,
            'opacity': losses.opacity, 'planes': len(scene.planes), 'planar': len(scene.planar),
            'freeform': len(scene.freeform), 'event': event,
        }
        self.state.log.append(record)
        return record

    def _advance(self, phase, step, progress, event=None):
        view = self.next_view()
        losses = step(view)
        cfg = self.config
        if not cfg.disable_relocation and (self.state.iteration + 1) % cfg.relocation_interval == 0:
            relocation = self.relocate(view)
            event = relocation if event is None else f'{event}; {relocation}'
        self._record(phase, losses, event)
        self.state.iteration += 1
        progress.update(1)
        progress.set_postfix(loss=f'{losses.loss:.4f}', planes=len(self.scene.planes), refresh=False)

    def run(self, progress=False):
        cfg = self.config
        total = cfg.total_iters
        warmup = min(cfg.effective_warmup, total)
        bar = tqdm(total=total, disable=not progress, desc='train', unit='it')
        try:
            while self.state.iteration < warmup:
                self._advance('warmup', lambda v: self.gaussian_phase_step(v, 'warmup'), bar)
            while self.state.iteration < total:
                event = self.detect_planes() if cfg.hybrid else None
                if not cfg.hybrid:
                    plan = [('gaussian', self.gaussian_phase_step, cfg.gaussian_phase_iters)]
                elif cfg.joint_opt:
                    plan = [('joint', self.joint_step, cfg.plane_phase_iters + cfg.gaussian_phase_iters)]
                elif cfg.disable_plane_opt or not self.scene.planes:
                    plan = [('gaussian', self.gaussian_phase_step, cfg.gaussian_phase_iters)]
                else:
                    plan = [('plane', self.plane_phase_step, cfg.plane_phase_iters),
                            ('gaussian', self.gaussian_phase_step, cfg.gaussian_phase_iters)]
                for phase, step, length in plan:
                    for _ in range(length):
                        if self.state.iteration >= total:
                            break
                        self._advance(phase, step, bar, event)
                        event = None
        finally:
            bar.close()
        logger.info('Training finished: %d planes, %d planar and %d freeform Gaussians',
                    len(self.scene.planes), len(self.scene.planar), len(self.scene.freeform))
        return self.state


def train(dataset, config=None, threads=None, progress=False, scene=None):
    """Run the full schedule; returns (scene, per-iteration log records)."""
    trainer = Trainer(dataset, config, scene=scene, threads=threads)
    state = trainer.run(progress=progress)
    return state.scene, state.log
