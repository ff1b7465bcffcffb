"""
Tile-parallel EWA splatting of planar and freeform Gaussians.

render() rasterizes a Scene into a FrameBuffer (colour, depth, accumulated alpha and one soft
mask per plane); render_backward() propagates an upstream FrameBufferGrad back to every stored
scene parameter, including plane origins and normals through the plane frames.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from django.conf import settings

from models.framebuffer_model import FrameBuffer
from models.plane_model import canonical_axes
from models.scene_model import FreeformGaussians, PlanarGaussians
from utils.exceptions import ContractViolationError, InvalidArgumentError
from utils.geometry import quat_rotmat_backward, skew
from .sh_engine import eval_sh, eval_sh_backward

logger = logging.getLogger(__name__)

CUTOFF_SIGMA = 3.0  # footprint radius in standard deviations
FRUSTUM_MARGIN = 1.3  # Jacobians use x/z, y/z clamped to this multiple of the half-FOV tangents


@dataclass(eq=False)
class ProjectedGaussian:
    """Screen-space footprint of one Gaussian."""

    mean2d: np.ndarray
    cov2d: np.ndarray
    depth: float
    color: np.ndarray
    opacity: float
    index: int
    planar: bool


@dataclass(eq=False)
class Projection:
    """Batched projection of every primitive; order lists visible ones front to back."""

    means2d: np.ndarray
    cov2d: np.ndarray
    conics: np.ndarray
    depths: np.ndarray
    colors: np.ndarray
    opacities: np.ndarray
    visible: np.ndarray
    extents: np.ndarray
    cam_points: np.ndarray
    jacobians: np.ndarray
    tangent_ratios: np.ndarray
    unclamped: np.ndarray
    view_dirs: np.ndarray
    view_dist: np.ndarray
    plane_index: np.ndarray
    order: np.ndarray

    def projected(self, i):
        return ProjectedGaussian(
            mean2d=self.means2d[i].copy(), cov2d=self.cov2d[i].copy(), depth=float(self.depths[i]),
            color=self.colors[i].copy(), opacity=float(self.opacities[i]), index=int(i),
            planar=bool(self.plane_index[i] >= 0),
        )


@dataclass
class SceneGradients:
    """Gradients with respect to the stored scene parameters (plane_ids are copied, not differentiated)."""

    planar: PlanarGaussians
    freeform: FreeformGaussians
    plane_origins: np.ndarray
    plane_normals: np.ndarray

    @classmethod
    def zeros(cls, scene):
        planar = scene.planar
        freeform = scene.freeform
        return cls(
            planar=PlanarGaussians(planar.plane_ids.copy(), *(np.zeros_like(getattr(planar, name))
                                                             for name in PlanarGaussians.ARRAYS[1:])),
            freeform=FreeformGaussians(*(np.zeros_like(getattr(freeform, name))
                                         for name in FreeformGaussians.ARRAYS)),
            plane_origins=np.zeros((len(scene.planes), 3)),
            plane_normals=np.zeros((len(scene.planes), 3)),
        )

    def add_scaled(self, other, factor):
        """In-place self += factor * other."""
        for name in PlanarGaussians.ARRAYS[1:]:
            getattr(self.planar, name)[...] += factor * getattr(other.planar, name)
        for name in FreeformGaussians.ARRAYS:
            getattr(self.freeform, name)[...] += factor * getattr(other.freeform, name)
        self.plane_origins += factor * other.plane_origins
        self.plane_normals += factor * other.plane_normals
        return self

    def __iadd__(self, other):
        return self.add_scaled(other, 1.0)


@dataclass(eq=False)
class RenderState:
    """Everything render_backward needs from the forward pass."""

    world: object
    projection: Projection
    tiles: list
    members: list
    background: np.ndarray
    sh_degree: int
    num_planes: int


def project_gaussians(camera, means, covariances, opacities, sh, sh_degree, plane_index=None):
    """
    EWA projection of world Gaussians into the camera; culls behind the near plane or off-frame.

    The Jacobian is evaluated at x/z, y/z clamped to FRUSTUM_MARGIN times the field of view, so
    Gaussians just in front of the camera and far off-axis keep a bounded footprint.
    """
    n = len(means)
    if plane_index is None:
        plane_index = -np.ones(n, dtype=np.int64)
    W = camera.rotation
    pc = means @ W.T + camera.translation
    z = pc[:, 2]
    in_front = z > settings.NEAR_PLANE
    zs = np.where(in_front, z, 1.0)
    x, y = pc[:, 0], pc[:, 1]

    limits = FRUSTUM_MARGIN * np.asarray(camera.tan_half_fov)
    ratios = np.stack([x / zs, y / zs], axis=1)
    clamped = np.clip(ratios, -limits, limits)
    unclamped = ratios == clamped

    J = np.zeros((n, 2, 3))
    J[:, 0, 0] = camera.fx / zs
    J[:, 0, 2] = -camera.fx * clamped[:, 0] / zs
    J[:, 1, 1] = camera.fy / zs
    J[:, 1, 2] = -camera.fy * clamped[:, 1] / zs
    T = J @ W
    cov2d = T @ covariances @ np.swapaxes(T, 1, 2) + settings.DILATION * np.eye(2)
    means2d = np.stack([camera.fx * x / zs + camera.cx, camera.fy * y / zs + camera.cy], axis=1)

    det = cov2d[:, 0, 0] * cov2d[:, 1, 1] - cov2d[:, 0, 1] * cov2d[:, 1, 0]
    conics = np.empty_like(cov2d)
    conics[:, 0, 0] = cov2d[:, 1, 1] / det
    conics[:, 1, 1] = cov2d[:, 0, 0] / det
    conics[:, 0, 1] = -cov2d[:, 0, 1] / det
    conics[:, 1, 0] = -cov2d[:, 1, 0] / det

    extents = CUTOFF_SIGMA * np.sqrt(np.stack([cov2d[:, 0, 0], cov2d[:, 1, 1]], axis=1))
    lo = means2d - extents
    hi = means2d + extents
    visible = (in_front & (hi[:, 0] >= 0) & (lo[:, 0] <= camera.width - 1)
               & (hi[:, 1] >= 0) & (lo[:, 1] <= camera.height - 1))

    offsets = means - camera.center
    dist = np.maximum(np.linalg.norm(offsets, axis=1), 1e-12)
    dirs = offsets / dist[:, None]
    colors = eval_sh(sh, dirs, sh_degree) if n else np.zeros((0, 3))

    vis_idx = np.flatnonzero(visible)
    order = vis_idx[np.lexsort((vis_idx, z[vis_idx]))]

    return Projection(
        means2d=means2d, cov2d=cov2d, conics=conics, depths=z, colors=colors,
        opacities=np.asarray(opacities, dtype=np.float64), visible=visible, extents=extents,
        cam_points=pc, jacobians=J, tangent_ratios=clamped, unclamped=unclamped,
        view_dirs=dirs, view_dist=dist,
        plane_index=np.asarray(plane_index, dtype=np.int64), order=order,
    )


def project(camera, g, sh_degree=None):
    """Project one Gaussian3D; returns a ProjectedGaussian or None when culled."""
    degree = sh_degree if sh_degree is not None else int(round(np.sqrt(len(g.sh)))) - 1
    proj = project_gaussians(camera, g.mean[None], g.covariance[None], np.array([g.opacity]),
                             g.sh[None], degree)
    if not proj.visible[0]:
        return None
    return proj.projected(0)


def project_scene(scene, camera, world=None):
    world = scene.world_gaussians() if world is None else world
    return project_gaussians(camera, world.means, world.covariances, world.opacities, world.sh,
                             scene.sh_degree, world.plane_index)


def make_tiles(camera, tile_size=None):
    """Tiles as (y0, y1, x0, x1) half-open pixel ranges in row-major order."""
    size = tile_size or settings.TILE_SIZE
    return [(y0, min(y0 + size, camera.height), x0, min(x0 + size, camera.width))
            for y0 in range(0, camera.height, size)
            for x0 in range(0, camera.width, size)]


def _tile_members(proj, tile):
    """Visible primitives whose footprint box reaches a pixel centre of the tile, front to back."""
    y0, y1, x0, x1 = tile
    idx = proj.order
    lo = proj.means2d[idx] - proj.extents[idx]
    hi = proj.means2d[idx] + proj.extents[idx]
    hit = (hi[:, 0] >= x0) & (lo[:, 0] <= x1 - 1) & (hi[:, 1] >= y0) & (lo[:, 1] <= y1 - 1)
    return idx[hit]


def _run_tiles(fn, items, threads):
    threads = threads or settings.RENDER_THREADS
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _tile_weights(proj, idx, tile):
    """Per-pixel, per-primitive offsets, falloff, alpha, transmittance and blend weights."""
    y0, y1, x0, x1 = tile
    rows, cols = np.mgrid[y0:y1, x0:x1]
    pix = np.stack([cols.ravel(), rows.ravel()], axis=1).astype(np.float64)
    d = pix[:, None, :] - proj.means2d[idx][None, :, :]
    Q = proj.conics[idx]
    dx, dy = d[..., 0], d[..., 1]
    q = Q[:, 0, 0] * dx * dx + (Q[:, 0, 1] + Q[:, 1, 0]) * dx * dy + Q[:, 1, 1] * dy * dy
    G = np.where(q <= CUTOFF_SIGMA ** 2, np.exp(-0.5 * q), 0.0)
    a = proj.opacities[idx][None, :] * G
    T = np.ones_like(a)
    T[:, 1:] = np.cumprod(1.0 - a, axis=1)[:, :-1]
    active = T >= settings.TRANSMITTANCE_EPS
    w = np.where(active, a * T, 0.0)
    return d, G, a, T, active, w


def _plane_onehot(plane_index, num_planes):
    onehot = np.zeros((len(plane_index), num_planes))
    planar = plane_index >= 0
    onehot[np.flatnonzero(planar), plane_index[planar]] = 1.0
    return onehot


def _composite_tile(proj, idx, tile, background, num_planes):
    _, _, _, _, _, w = _tile_weights(proj, idx, tile)
    acc = w.sum(axis=1)
    rgb = w @ proj.colors[idx] + (1.0 - acc)[:, None] * background
    valid = acc > settings.ALPHA_EPS
    depth = np.where(valid, (w @ proj.depths[idx]) / np.where(valid, acc, 1.0), 0.0)
    masks = w @ _plane_onehot(proj.plane_index[idx], num_planes)
    return rgb, depth, acc, masks


def render(scene, camera, background=None, threads=None, tile_size=None):
    """Rasterize the scene; primitives are composited front to back by view depth (ties by index)."""
    world = scene.world_gaussians()
    proj = project_scene(scene, camera, world)
    bg = np.asarray(settings.BACKGROUND if background is None else background, dtype=np.float64)
    tiles = make_tiles(camera, tile_size)
    members = [_tile_members(proj, tile) for tile in tiles]
    num_planes = len(scene.planes)

    results = _run_tiles(lambda k: _composite_tile(proj, members[k], tiles[k], bg, num_planes),
                         list(range(len(tiles))), threads)

    H, W = camera.shape
    rgb = np.empty((H, W, 3))
    depth = np.empty((H, W))
    acc = np.empty((H, W))
    masks = np.empty((num_planes, H, W))
    for (y0, y1, x0, x1), (t_rgb, t_depth, t_acc, t_masks) in zip(tiles, results):
        h, w = y1 - y0, x1 - x0
        rgb[y0:y1, x0:x1] = t_rgb.reshape(h, w, 3)
        depth[y0:y1, x0:x1] = t_depth.reshape(h, w)
        acc[y0:y1, x0:x1] = t_acc.reshape(h, w)
        masks[:, y0:y1, x0:x1] = t_masks.T.reshape(num_planes, h, w)

    state = RenderState(world, proj, tiles, members, bg, scene.sh_degree, num_planes)
    return FrameBuffer(
        rgb=rgb, depth=depth, acc_alpha=acc, plane_masks=masks, plane_ids=scene.plane_ids,
        fingerprint=scene.fingerprint() + camera.fingerprint(), state=state,
    )


def _tile_backward(proj, idx, tile, grad, background, num_planes):
    """Gradients of one tile wrt screen means, conics, opacities, colours and depths of its members."""
    y0, y1, x0, x1 = tile
    d, G, a, T, active, w = _tile_weights(proj, idx, tile)
    g_rgb = grad.rgb[y0:y1, x0:x1].reshape(-1, 3)
    g_depth = grad.depth[y0:y1, x0:x1].ravel()
    g_acc = grad.acc_alpha[y0:y1, x0:x1].ravel()

    colors = proj.colors[idx]
    depths = proj.depths[idx]
    acc = w.sum(axis=1)
    valid = acc > settings.ALPHA_EPS
    acc_safe = np.where(valid, acc, 1.0)
    D = np.where(valid, (w @ depths) / acc_safe, 0.0)
    gd = np.where(valid, g_depth / acc_safe, 0.0)

    # dL/dw for every (pixel, primitive)
    e = g_rgb @ colors.T - (g_rgb @ background)[:, None] + g_acc[:, None]
    e += gd[:, None] * (depths[None, :] - D[:, None])
    if num_planes:
        g_mask = grad.plane_masks[:, y0:y1, x0:x1].reshape(num_planes, -1).T
        g_mask = np.concatenate([g_mask, np.zeros((len(g_mask), 1))], axis=1)
        e += g_mask[:, proj.plane_index[idx]]

    ew = e * w
    behind = np.cumsum(ew[:, ::-1], axis=1)[:, ::-1] - ew
    dL_da = np.where(active, T * e - behind / np.maximum(1.0 - a, 1e-12), 0.0)

    sigma = proj.opacities[idx]
    dL_dq = dL_da * sigma[None, :] * (-0.5 * G)
    Q = proj.conics[idx]
    weighted = np.einsum('pk,pki->ki', dL_dq, d)
    return (
        idx,
        -2.0 * np.einsum('kij,kj->ki', Q, weighted),
        np.einsum('pk,pki,pkj->kij', dL_dq, d, d),
        (dL_da * G).sum(axis=0),
        w.T @ g_rgb,
        w.T @ gd,
    )


def _projection_backward(camera, proj, world, sh_degree, g_mean2d, g_conic, g_color, g_depth):
    """Chain screen-space gradients to world means, covariances and SH coefficients."""
    Q = proj.conics
    g_cov2d = -Q @ g_conic @ Q
    W = camera.rotation
    J = proj.jacobians
    T = J @ W
    Sigma = world.covariances
    g_sigma = np.swapaxes(T, 1, 2) @ g_cov2d @ T
    g_T = (g_cov2d + np.swapaxes(g_cov2d, 1, 2)) @ T @ Sigma
    g_J = g_T @ W.T

    pc = proj.cam_points
    x, y = pc[:, 0], pc[:, 1]
    z = np.where(proj.visible, pc[:, 2], 1.0)
    fx, fy = camera.fx, camera.fy
    rx, ry = proj.tangent_ratios[:, 0], proj.tangent_ratios[:, 1]
    ix, iy = proj.unclamped[:, 0].astype(float), proj.unclamped[:, 1].astype(float)
    g_pc = np.zeros_like(pc)
    g_pc[:, 0] = g_mean2d[:, 0] * fx / z - g_J[:, 0, 2] * fx * ix / z ** 2
    g_pc[:, 1] = g_mean2d[:, 1] * fy / z - g_J[:, 1, 2] * fy * iy / z ** 2
    g_pc[:, 2] = (-g_mean2d[:, 0] * fx * x / z ** 2 - g_mean2d[:, 1] * fy * y / z ** 2 + g_depth
                  - g_J[:, 0, 0] * fx / z ** 2 + g_J[:, 0, 2] * fx * (rx + ix * x / z) / z ** 2
                  - g_J[:, 1, 1] * fy / z ** 2 + g_J[:, 1, 2] * fy * (ry + iy * y / z) / z ** 2)
    g_means = g_pc @ W

    g_sh, g_dirs = eval_sh_backward(world.sh, proj.view_dirs, sh_degree, g_color)
    dirs = proj.view_dirs
    radial = np.sum(dirs * g_dirs, axis=1, keepdims=True)
    g_means += (g_dirs - dirs * radial) / proj.view_dist[:, None]
    return g_means, 0.5 * (g_sigma + np.swapaxes(g_sigma, 1, 2)), g_sh


def _plane_normal_backward(plane, g_tangents, g_normal):
    """Chain gradients of the frame tangents (3, 2) and normal to the stored normal."""
    n = plane.normal
    v, u, a, w_norm = canonical_axes(n)
    g_v, g_u = g_tangents[:, 0], g_tangents[:, 1]
    g_n = g_normal - skew(u) @ g_v
    g_u = g_u + skew(n) @ g_v
    g_w = (g_u - u * (u @ g_u)) / w_norm
    g_n = g_n + skew(a) @ g_w
    return g_n - n * (n @ g_n)


def _parameter_backward(scene, world, g_means, g_sigma, g_opacity, g_sh):
    grads = SceneGradients.zeros(scene)
    m = world.num_planar

    free = scene.freeform
    if len(free):
        gs = g_sigma[m:]
        R = world.freeform_rotations
        s = free.scales
        M = R * s[:, None, :]
        g_M = 2.0 * gs @ M
        grads.freeform.means[...] = g_means[m:]
        grads.freeform.log_scales[...] = (g_M * R).sum(axis=1) * s
        q_norm = np.linalg.norm(free.quats, axis=1, keepdims=True)
        q = free.quats / q_norm
        g_q = quat_rotmat_backward(q, g_M * s[:, None, :])
        grads.freeform.quats[...] = (g_q - q * np.sum(q * g_q, axis=1, keepdims=True)) / q_norm
        sig = free.opacities
        grads.freeform.opacity_logits[...] = g_opacity[m:] * sig * (1.0 - sig)
        grads.freeform.sh[...] = g_sh[m:]

    planar = scene.planar
    if m:
        gs = g_sigma[:m]
        gm = g_means[:m]
        B = world.planar_tangents
        R2 = world.planar_rot2d
        S = planar.scales
        grads.planar.means[...] = np.einsum('nij,ni->nj', B, gm)
        g_cov2 = np.swapaxes(B, 1, 2) @ gs @ B
        g_M2 = 2.0 * g_cov2 @ (R2 * S[:, None, :])
        grads.planar.log_scales[...] = (g_M2 * R2).sum(axis=1) * S
        g_R2 = g_M2 * S[:, None, :]
        c, s_ = np.cos(planar.thetas), np.sin(planar.thetas)
        grads.planar.thetas[...] = (-g_R2[:, 0, 0] * s_ - g_R2[:, 0, 1] * c
                                    + g_R2[:, 1, 0] * c - g_R2[:, 1, 1] * s_)
        sig = planar.opacities
        grads.planar.opacity_logits[...] = g_opacity[:m] * sig * (1.0 - sig)
        grads.planar.sh[...] = g_sh[:m]

        # rigid plane motion: every planar Gaussian contributes to its plane
        pidx = world.plane_index[:m]
        normals = np.stack([p.normal for p in scene.planes])[pidx]
        g_B = gm[:, :, None] * planar.means[:, None, :] + 2.0 * gs @ B @ world.planar_cov2d
        g_n_direct = 2.0 * settings.FLATNESS_FLOOR ** 2 * np.einsum('nij,nj->ni', gs, normals)
        P = len(scene.planes)
        plane_g_B = np.zeros((P, 3, 2))
        plane_g_n = np.zeros((P, 3))
        np.add.at(grads.plane_origins, pidx, gm)
        np.add.at(plane_g_B, pidx, g_B)
        np.add.at(plane_g_n, pidx, g_n_direct)
        for k, plane in enumerate(scene.planes):
            grads.plane_normals[k] = _plane_normal_backward(plane, plane_g_B[k], plane_g_n[k])
    return grads


def render_backward(scene, camera, framebuffer, grad, threads=None):
    """
    Gradients of a scalar loss wrt every stored scene parameter.

    framebuffer must come from render(scene, camera); grad holds dL/d(channel) for each of its
    channels.
    """
    expected = scene.fingerprint() + camera.fingerprint()
    state = framebuffer.state
    if state is None or framebuffer.fingerprint != expected:
        raise ContractViolationError('Backward pass called with a scene or camera that differs '
                                     'from the forward render.')
    if grad.rgb.shape != framebuffer.rgb.shape or grad.plane_masks.shape != framebuffer.plane_masks.shape:
        raise InvalidArgumentError('Upstream gradient shapes do not match the framebuffer.')

    proj = state.projection
    world = state.world
    n = len(world)
    results = _run_tiles(
        lambda k: _tile_backward(proj, state.members[k], state.tiles[k], grad, state.background,
                                 state.num_planes),
        list(range(len(state.tiles))), threads,
    )
    g_mean2d = np.zeros((n, 2))
    g_conic = np.zeros((n, 2, 2))
    g_opacity = np.zeros(n)
    g_color = np.zeros((n, 3))
    g_depth = np.zeros(n)
    for idx, t_mean2d, t_conic, t_opacity, t_color, t_depth in results:
        g_mean2d[idx] += t_mean2d
        g_conic[idx] += t_conic
        g_opacity[idx] += t_opacity
        g_color[idx] += t_color
        g_depth[idx] += t_depth

    g_means, g_sigma, g_sh = _projection_backward(camera, proj, world, state.sh_degree,
                                                  g_mean2d, g_conic, g_color, g_depth)
    return _parameter_backward(scene, world, g_means, g_sigma, g_opacity, g_sh)


def render_views(scene, cameras, threads=None):
    """Render several cameras in order."""
    return [render(scene, camera, threads=threads) for camera in cameras]
