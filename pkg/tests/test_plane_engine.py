import math

import numpy as np
import pytest

from engines.plane_engine import (
    PlaneRegistry,
    plane_init_round,
    ransac_plane,
    select_candidates,
    snap,
    update_active_set,
)
from models.config_model import PlaneInitConfig
from models.gaussian_model import planar_to_world
from models.plane_model import Plane, canonical_axes
from models.scene_model import Scene
from utils.exceptions import InvalidArgumentError, InvalidReferenceError
from utils.geometry import normalize


def noisy_plane_points(rng, inliers=160, outliers=40, noise=1e-4):
    normal = normalize(rng.normal(size=3))
    origin = rng.uniform(-1, 1, size=3)
    v, u, _, _ = canonical_axes(normal)
    uv = rng.uniform(-1, 1, size=(inliers, 2))
    on_plane = origin + uv[:, :1] * v + uv[:, 1:] * u + rng.normal(scale=noise, size=(inliers, 1)) * normal
    clutter = origin + rng.uniform(-1, 1, size=(outliers, 3))
    points = np.concatenate([on_plane, clutter])
    perm = rng.permutation(len(points))
    truth = np.flatnonzero(perm < inliers)
    return points[perm], normal, truth


class TestRansac:
    def test_recovers_plane_from_noisy_points(self):
        cfg = PlaneInitConfig(min_inliers=100)
        for trial in range(100):
            rng = np.random.default_rng(trial)
            points, normal, truth = noisy_plane_points(rng)
            result = ransac_plane(points, cfg, rng)
            assert result is not None, f'trial {trial} rejected'
            plane, inliers = result
            angle = math.degrees(math.acos(min(1.0, abs(plane.normal @ normal))))
            assert angle < 0.1
            recall = len(np.intersect1d(inliers, truth)) / len(truth)
            assert recall >= 0.97

    def test_rejects_isotropic_cloud(self):
        rng = np.random.default_rng(5)
        points = normalize(rng.normal(size=(200, 3))) * rng.random((200, 1)) ** (1 / 3)
        assert ransac_plane(points, PlaneInitConfig(min_inliers=100), rng) is None

    def test_rejects_uniform_balls(self):
        cfg = PlaneInitConfig(min_inliers=100)
        for trial in range(100):
            rng = np.random.default_rng(500 + trial)
            points = normalize(rng.normal(size=(200, 3))) * rng.random((200, 1)) ** (1 / 3)
            assert ransac_plane(points, cfg, rng) is None, f'trial {trial} accepted'

    def test_too_few_points(self):
        assert ransac_plane(np.zeros((2, 3))) is None

    def test_orients_toward_camera(self):
        rng = np.random.default_rng(0)
        points, normal, _ = noisy_plane_points(rng, outliers=0)
        eye = points.mean(axis=0) + 5 * normal
        plane, _ = ransac_plane(points, PlaneInitConfig(min_inliers=100), rng, camera_center=eye)
        assert plane.signed_distance(eye[None])[0] > 0


class TestSnap:
    def test_moves_freeform_onto_plane(self, random_scene):
        before_planar = len(random_scene.planar)
        means = random_scene.freeform.means[[0, 2]]
        scene = snap(random_scene, [0, 2], 3)
        plane = scene.plane(3)
        assert len(scene.planar) == before_planar + 2
        assert len(scene.freeform) == len(random_scene.freeform) - 2
        lifted = plane.to_world(scene.planar.means[-2:])
        projected = means - plane.signed_distance(means)[:, None] * plane.normal
        np.testing.assert_allclose(lifted, projected, atol=1e-12)
        np.testing.assert_array_equal(scene.planar.plane_ids[-2:], [3, 3])
        np.testing.assert_array_equal(scene.planar.sh[-2:], random_scene.freeform.sh[[0, 2]])
        np.testing.assert_array_equal(scene.freeform.means, random_scene.freeform.means[[1, 3, 4, 5]])

    def test_empty_selection_is_identity(self, random_scene):
        assert snap(random_scene, [], 0) is random_scene

    @pytest.mark.parametrize('indices', [[0, 0], [99], [-1]])
    def test_bad_indices(self, random_scene, indices):
        with pytest.raises(InvalidReferenceError):
            snap(random_scene, indices, 0)

    def test_unknown_plane(self, random_scene):
        with pytest.raises(InvalidReferenceError):
            snap(random_scene, [0], 42)


class TestActiveSet:
    def test_close_candidate_merges(self, random_scene):
        existing = random_scene.plane(0)
        near = random_scene.planar_world_means(0)[0]
        candidate = Plane(id=-1, origin=near, normal=existing.normal + [0.02, 0, 0], labels=(9,))
        planes, target, merged = update_active_set(random_scene, candidate)
        assert merged and target == 0
        assert len(planes) == len(random_scene.planes)
        assert planes[0].labels == (9,)
        np.testing.assert_array_equal(planes[0].normal, existing.normal)

    def test_distant_candidate_is_appended(self, random_scene):
        candidate = Plane(id=-1, origin=[5, 5, 5], normal=random_scene.plane(0).normal)
        planes, target, merged = update_active_set(random_scene, candidate)
        assert not merged
        assert target == 4
        assert [p.id for p in planes] == [0, 3, 4]

    def test_tilted_candidate_is_appended(self, random_scene):
        existing = random_scene.plane(0)
        candidate = Plane(id=-1, origin=existing.origin, normal=[1, 0, 0])
        _, target, merged = update_active_set(random_scene, candidate)
        assert not merged and target == 4

    def test_coplanar_candidate_near_a_member_merges(self, random_scene):
        existing = random_scene.plane(0)
        centers = random_scene.planar_world_means(0)
        v, _, _, _ = canonical_axes(existing.normal)
        cfg = PlaneInitConfig(merge_distance=0.1)

        near = Plane(id=-1, origin=centers[0] + 0.05 * v, normal=existing.normal, labels=(7,))
        planes, target, merged = update_active_set(random_scene, near, cfg)
        assert merged and target == 0 and planes[0].labels == (7,)

        beyond = centers[np.argmax(centers @ v)] + 0.15 * v
        far = Plane(id=-1, origin=beyond, normal=existing.normal, labels=(7,))
        _, target, merged = update_active_set(random_scene, far, cfg)
        assert not merged and target == 4


class TestCandidates:
    def make_scene(self):
        scene = Scene.empty(0)
        freeform = scene.freeform.concat(type(scene.freeform)(
            means=np.array([[0.0, 0.0, 2.0], [0.1, 0.0, 3.0], [0.0, 0.1, 2.01]]),
            log_scales=np.full((3, 3), np.log(0.05)),
            quats=np.tile([1.0, 0, 0, 0], (3, 1)),
            opacity_logits=np.array([0.0, 0.0, -5.0]),
            sh=np.zeros((3, 1, 3)),
        ))
        return scene.replace(freeform=freeform)

    def test_on_surface_inside_mask_and_opaque(self, camera):
        scene = self.make_scene()
        mask = np.ones(camera.shape, dtype=bool)
        depth = np.full(camera.shape, 2.0)
        # second sits behind the surface, third is nearly transparent
        np.testing.assert_array_equal(select_candidates(scene, camera, mask, depth), [0])
        assert len(select_candidates(scene, camera, ~mask, depth)) == 0

    def test_shape_mismatch(self, camera):
        with pytest.raises(InvalidArgumentError):
            select_candidates(self.make_scene(), camera, np.ones((3, 3), dtype=bool), np.ones((3, 3)))


def flattened_freeform_scene(gt_scene):
    """The ground-truth planar Gaussians as freeform ones, with no planes known."""
    records = [planar_to_world(g, gt_scene.plane(g.plane_id)) for g in gt_scene.planar.records()]
    return Scene.from_records([], [], records, gt_scene.sh_degree)


def closest_plane(plane, candidates):
    return min(candidates, key=lambda other: plane.angle_to(other)
               + abs(other.signed_distance(plane.origin[None])[0]))


class TestPlaneInitRound:
    def test_detects_box_planes(self, tiny_box):
        gt_scene, gt_planes, dataset = tiny_box
        scene = flattened_freeform_scene(gt_scene)
        cfg = PlaneInitConfig(min_inliers=10)
        found, registry = plane_init_round(scene, dataset, cfg=cfg, seed=3, threads=1)

        assert found.planes
        assert len(found.planar) + len(found.freeform) == len(scene.freeform)
        for plane in found.planes:
            best = closest_plane(plane, gt_planes)
            assert math.degrees(plane.angle_to(best)) < 2.0
            assert abs(abs(plane.offset) - abs(best.offset)) < 0.05
            members = found.planar.plane_ids == plane.id
            lifted = plane.to_world(found.planar.means[members])
            assert np.abs(best.signed_distance(lifted)).max() < 0.05
        assert set(registry.consumed.values()) <= {p.id for p in found.planes}
        assert len(registry.events) >= len(found.planes)

        consumed = dict(registry.consumed)
        _, registry = plane_init_round(found, dataset, registry, cfg, seed=3, iteration=1, threads=1)
        labels = [event['label'] for event in registry.events]
        assert len(labels) == len(set(labels))
        assert all(registry.consumed[label] == plane_id for label, plane_id in consumed.items())

    def test_none_mode_keeps_gaussians_freeform(self, tiny_box):
        gt_scene, _, dataset = tiny_box
        scene = flattened_freeform_scene(gt_scene)
        found, registry = plane_init_round(scene, dataset, cfg=PlaneInitConfig(min_inliers=10), seed=3,
                                           inlier_mode='none', threads=1)
        assert found.planes
        assert len(found.planar) == 0
        assert not registry.flagged

    def test_flag_mode_records_inliers(self, tiny_box):
        gt_scene, _, dataset = tiny_box
        scene = flattened_freeform_scene(gt_scene)
        found, registry = plane_init_round(scene, dataset, cfg=PlaneInitConfig(min_inliers=10), seed=3,
                                           inlier_mode='flag', threads=1)
        assert registry.flagged
        assert max(registry.flagged) < len(found.freeform)

    def test_unknown_mode(self, tiny_box):
        with pytest.raises(InvalidArgumentError):
            plane_init_round(tiny_box[0], tiny_box[2], inlier_mode='merge')

    def test_registry_round_trip(self):
        registry = PlaneRegistry(consumed={2: 0, 4: 1}, events=[{'label': 2}], flagged={3, 1})
        again = PlaneRegistry.from_dict(registry.to_dict())
        assert again == registry
