"""Synthetic box-room scenes and datasets for end-to-end checks."""
import logging

import numpy as np
from tqdm import tqdm

from models.camera_model import Camera
from models.config_model import SynthConfig
from models.dataset_model import Dataset, View
from models.mesh_model import SceneMesh
from models.plane_model import Plane
from models.scene_model import FreeformGaussians, PlanarGaussians, Scene
from utils.exceptions import InvalidArgumentError
from utils.geometry import random_rotations
from utils.helpers import array_digest, logit, rng_for
from .sh_engine import SH_C0, rgb_to_sh0
from .splat_engine import render

logger = logging.getLogger(__name__)

FLOOR, CEILING = 0, 5
PALETTE = np.array([
    [0.75, 0.55, 0.35],
    [0.80, 0.80, 0.70],
    [0.55, 0.70, 0.80],
    [0.70, 0.80, 0.55],
    [0.80, 0.60, 0.65],
    [0.90, 0.90, 0.90],
])
CHECKER_SHADE = 0.6
PLANAR_OPACITY = 0.95
PLANAR_SCALE = 0.6  # in units of planar_spacing
CLUTTER_OPACITY = 0.9
CLUTTER_SCALE = 0.05
MASK_COVERAGE = 0.5


def box_planes(config):
    """Inward-facing floor, walls and optional ceiling of the room; labels equal plane ids."""
    lx, ly, lz = config.room_size
    specs = [
        (FLOOR, (0.0, 0.0, 0.0), (0.0, 0.0, 1.0)),
        (1, (-lx / 2, 0.0, lz / 2), (1.0, 0.0, 0.0)),
        (2, (lx / 2, 0.0, lz / 2), (-1.0, 0.0, 0.0)),
        (3, (0.0, -ly / 2, lz / 2), (0.0, 1.0, 0.0)),
        (4, (0.0, ly / 2, lz / 2), (0.0, -1.0, 0.0)),
    ][:1 + config.walls]
    if config.ceiling:
        specs.append((CEILING, (0.0, 0.0, lz), (0.0, 0.0, -1.0)))
    return [Plane(id=pid, origin=o, normal=n, labels=(pid,)) for pid, o, n in specs]


def plane_face(plane, config):
    """World corners (4, 3) of the room face lying on the plane, counter-clockwise seen from inside."""
    lx, ly, lz = config.room_size
    xs, ys, zs = (-lx / 2, lx / 2), (-ly / 2, ly / 2), (0.0, lz)
    corners = np.array([[x, y, z] for x in xs for y in ys for z in zs])
    on = corners[np.abs(plane.signed_distance(corners)) < 1e-9]
    local = plane.to_local(on)[:, :2]
    angle = np.arctan2(local[:, 1] - local[:, 1].mean(), local[:, 0] - local[:, 0].mean())
    return on[np.argsort(angle)]


def _planar_block(plane, config, sh_count):
    local = plane.to_local(plane_face(plane, config))[:, :2]
    lo, hi = local.min(axis=0), local.max(axis=0)
    step = config.planar_spacing
    us = np.arange(lo[0] + step / 2, hi[0], step)
    vs = np.arange(lo[1] + step / 2, hi[1], step)
    grid = np.stack(np.meshgrid(us, vs, indexing='ij'), axis=-1).reshape(-1, 2)
    checker = (np.floor(grid / config.texture_cell).astype(np.int64).sum(axis=1) % 2).astype(bool)
    colors = np.where(checker[:, None], PALETTE[plane.id % len(PALETTE)] * CHECKER_SHADE,
                      PALETTE[plane.id % len(PALETTE)])
    sh = np.zeros((len(grid), sh_count, 3))
    sh[:, 0] = rgb_to_sh0(colors)
    n = len(grid)
    return PlanarGaussians(
        plane_ids=np.full(n, plane.id, dtype=np.int64),
        means=grid,
        log_scales=np.full((n, 2), np.log(PLANAR_SCALE * step)),
        thetas=np.zeros(n),
        opacity_logits=np.full(n, float(logit(PLANAR_OPACITY))),
        sh=sh,
    )


def _clutter(config, rng, sh_count):
    lx, ly, _ = config.room_size
    total = config.clutter_objects * config.clutter_gaussians
    if total == 0:
        return FreeformGaussians.empty(sh_count)
    means, colors = [], []
    margin = 0.4
    for _ in range(config.clutter_objects):
        for _ in range(1000):
            center = rng.uniform([-lx / 2 + margin, -ly / 2 + margin], [lx / 2 - margin, ly / 2 - margin])
            if np.linalg.norm(center) > config.orbit_radius + 0.4:
                break
        else:
            raise InvalidArgumentError('Room too small to place clutter outside the camera orbit.')
        radii = rng.uniform(0.15, 0.3, size=3)
        direction = rng.standard_normal((config.clutter_gaussians, 3))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        offsets = direction * rng.random((config.clutter_gaussians, 1)) ** (1.0 / 3.0) * radii
        means.append(np.array([center[0], center[1], radii[2]]) + offsets)
        colors.append(np.tile(rng.uniform(0.1, 0.9, size=3), (config.clutter_gaussians, 1)))
    sh = np.zeros((total, sh_count, 3))
    sh[:, 0] = rgb_to_sh0(np.concatenate(colors))
    return FreeformGaussians(
        means=np.concatenate(means),
        log_scales=np.full((total, 3), np.log(CLUTTER_SCALE)),
        quats=random_rotations(rng, total),
        opacity_logits=np.full(total, float(logit(CLUTTER_OPACITY))),
        sh=sh,
    )


def orbit_cameras(config):
    """Cameras on a horizontal circle around the room centre, looking outward and slightly down."""
    cameras = []
    for k in range(config.num_views):
        phi = 2.0 * np.pi * k / config.num_views
        heading = np.array([np.cos(phi), np.sin(phi), 0.0])
        eye = config.orbit_radius * heading + np.array([0.0, 0.0, config.camera_height])
        target = eye + heading + np.array([0.0, 0.0, -0.3])
        cameras.append(Camera.look_at(eye, target, config.focal, config.focal, config.width, config.height))
    return cameras


def plane_label_masks(framebuffer):
    """
    Segmentation masks from the plane mask channels.

    A pixel belongs to the plane with the largest soft mask when the planar coverage there exceeds
    0.5, so the masks are disjoint.
    """
    masks = framebuffer.plane_masks
    if len(masks) == 0:
        return {}
    coverage = masks.sum(axis=0)
    winner = masks.argmax(axis=0)
    out = {}
    for k, plane_id in enumerate(framebuffer.plane_ids):
        mask = (coverage > MASK_COVERAGE) & (winner == k)
        if mask.any():
            out[int(plane_id)] = mask
    return out


def dc_colors(sh):
    return np.clip(SH_C0 * sh[:, 0] + 0.5, 0.0, 1.0)


def generate_box_scene(config=None, seed=0, threads=None, progress=False):
    """Ground-truth box scene, its planes and a rendered dataset; a pure function of (config, seed)."""
    config = config or SynthConfig()
    if config.num_views < 1:
        raise InvalidArgumentError('A synthetic dataset needs at least one camera.')
    rng = rng_for(seed, 0, 'synth')
    sh_count = (config.sh_degree + 1) ** 2
    planes = box_planes(config)
    planar = PlanarGaussians.empty(sh_count)
    for plane in planes:
        planar = planar.concat(_planar_block(plane, config, sh_count))
    scene = Scene(planes, planar, _clutter(config, rng, sh_count), config.sh_degree)
    scene.validate()

    views = []
    for k, camera in enumerate(tqdm(orbit_cameras(config), disable=not progress, desc='synth', unit='view')):
        fb = render(scene, camera, threads=threads)
        depth = np.where(fb.valid, fb.depth, 0.0)
        views.append(View(index=k, camera=camera, image=fb.rgb, depth=depth, masks=plane_label_masks(fb)))

    means = np.concatenate([scene.planar_world_means(), scene.freeform.means])
    colors = np.concatenate([dc_colors(scene.planar.sh), dc_colors(scene.freeform.sh)])
    chosen = rng.choice(len(means), size=config.init_points, replace=config.init_points > len(means))
    init_points = means[chosen] + config.init_noise * rng.standard_normal((len(chosen), 3))

    dataset = Dataset(views=views, gt_planes=list(planes), init_points=init_points,
                      init_colors=colors[chosen])
    logger.info('Synthesised %d views, %d planar and %d freeform Gaussians', len(views),
                len(scene.planar), len(scene.freeform))
    return scene, planes, dataset


def dataset_digest(dataset):
    """SHA-256 over every array of the dataset."""
    arrays = []
    for view in dataset.views:
        cam = view.camera
        arrays += [np.array([cam.fx, cam.fy, cam.cx, cam.cy, cam.width, cam.height]),
                   cam.world_to_camera, view.image]
        if view.depth is not None:
            arrays.append(view.depth)
        for label in view.labels:
            arrays += [np.array([label]), view.masks[label]]
    for plane in dataset.gt_planes:
        arrays += [np.array([plane.id]), plane.origin, plane.normal]
    for extra in (dataset.init_points, dataset.init_colors):
        if extra is not None:
            arrays.append(extra)
    return array_digest(*arrays)


def box_plane_meshes(config=None, planes=None):
    """Analytic two-triangle mesh of every room face, labelled by plane id."""
    config = config or SynthConfig()
    planes = planes if planes is not None else box_planes(config)
    vertices, triangles, labels = [], [], []
    for plane in planes:
        base = 4 * len(vertices)
        vertices.append(plane_face(plane, config))
        triangles += [[base, base + 1, base + 2], [base, base + 2, base + 3]]
        labels += [plane.id, plane.id]
    if not vertices:
        return SceneMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64), np.zeros(0, dtype=np.int64))
    return SceneMesh(np.concatenate(vertices), np.array(triangles), np.array(labels))
