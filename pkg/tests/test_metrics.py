import numpy as np
import pytest

from engines.metrics_engine import (
    PSNR_CAP,
    depth_metrics,
    evaluate_nvs,
    mesh_distance_metrics,
    mesh_segmentation_metrics,
    psnr,
    segmentation_metrics,
    ssim,
)
from models.mesh_model import SceneMesh
from utils.exceptions import InvalidArgumentError, UndefinedMetricError
from utils.helpers import rng_for
from .oracles import depth_naive, nearest_distances, psnr_naive, segmentation_naive, ssim_naive


def two_squares(offset=0.0):
    """Two unit squares side by side on z = offset, labelled 0 and 1."""
    vertices = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0], [2, 0, 0], [2, 1, 0]], dtype=float)
    vertices[:, 2] = offset
    triangles = np.array([[0, 1, 2], [0, 2, 3], [1, 4, 5], [1, 5, 2]])
    return SceneMesh(vertices, triangles, np.array([0, 0, 1, 1]))


class TestImageMetrics:
    def test_psnr_matches_oracle(self, rng):
        a = rng.uniform(size=(9, 7, 3))
        b = np.clip(a + rng.normal(scale=0.05, size=a.shape), 0, 1)
        assert psnr(a, b) == pytest.approx(psnr_naive(a, b), abs=1e-9)

    def test_psnr_is_capped(self, rng):
        a = rng.uniform(size=(4, 4, 3))
        assert psnr(a, a) == PSNR_CAP
        assert psnr(a, a + 1e-7) == PSNR_CAP

    def test_ssim_matches_oracle(self, rng):
        a = rng.uniform(size=(12, 10, 3))
        b = np.clip(a + rng.normal(scale=0.1, size=a.shape), 0, 1)
        assert ssim(a, b) == pytest.approx(ssim_naive(a, b), abs=1e-9)

    def test_ssim_of_identical_images(self, rng):
        a = rng.uniform(size=(12, 10, 3))
        assert ssim(a, a) == pytest.approx(1.0)

    def test_shape_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            psnr(np.zeros((2, 2, 3)), np.zeros((2, 3, 3)))


class TestDepthMetrics:
    def test_matches_oracle(self, rng):
        gt = rng.uniform(1, 3, size=(8, 9))
        gt[rng.uniform(size=gt.shape) < 0.2] = 0.0
        pred = gt * rng.uniform(0.6, 1.5, size=gt.shape)
        pred[0, :3] = 0.0
        ours = depth_metrics(pred, gt)
        expected = depth_naive(pred, gt)
        for key, value in expected.items():
            assert ours[key] == pytest.approx(value, abs=1e-9), key

    def test_validity_mask_restricts_pixels(self):
        gt = np.array([[1.0, 2.0], [3.0, 4.0]])
        pred = np.array([[1.0, 0.0], [3.0, 0.0]])
        valid = np.array([[True, False], [True, False]])
        assert depth_metrics(pred, gt, valid)['rmse'] == 0.0

    def test_no_ground_truth_pixels(self):
        with pytest.raises(UndefinedMetricError):
            depth_metrics(np.ones((2, 2)), np.zeros((2, 2)))


class TestMeshMetrics:
    def test_distances_match_brute_force(self):
        pred, gt = two_squares(0.02), two_squares()
        ours = mesh_distance_metrics(pred, gt, threshold=0.05, n_samples=300, seed=4)
        rng = rng_for(4, 0, 'metrics')
        pred_pts, _ = pred.sample(rng, 300)
        gt_pts, _ = gt.sample(rng, 300)
        to_gt = nearest_distances(pred_pts, gt_pts)
        to_pred = nearest_distances(gt_pts, pred_pts)
        assert ours['accuracy'] == pytest.approx(to_gt.mean(), abs=1e-9)
        assert ours['completeness'] == pytest.approx(to_pred.mean(), abs=1e-9)
        assert ours['chamfer'] == pytest.approx(0.5 * (to_gt.mean() + to_pred.mean()), abs=1e-9)
        precision, recall = np.mean(to_gt < 0.05), np.mean(to_pred < 0.05)
        assert ours['f1'] == pytest.approx(2 * precision * recall / (precision + recall), abs=1e-9)

    def test_far_meshes_have_zero_f1(self):
        metrics = mesh_distance_metrics(two_squares(5.0), two_squares(), threshold=0.05, n_samples=100)
        assert metrics['f1'] == 0.0
        assert metrics['chamfer'] >= 5.0

    def test_empty_mesh_is_undefined(self):
        empty = SceneMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64), np.zeros(0, dtype=np.int64))
        with pytest.raises(UndefinedMetricError):
            mesh_distance_metrics(empty, two_squares(), n_samples=10)

    def test_identical_segmentation(self):
        metrics = mesh_segmentation_metrics(two_squares(), two_squares(), n_samples=500)
        # only samples near the shared edge can pick up the neighbour's label
        assert metrics['voi'] < 0.3
        assert metrics['rand_index'] > 0.9
        assert metrics['covering'] > 0.9


class TestSegmentation:
    def test_matches_oracle(self, rng):
        gt = rng.integers(0, 4, size=60)
        pred = np.where(rng.uniform(size=60) < 0.7, gt, rng.integers(0, 5, size=60))
        ours = segmentation_metrics(pred, gt)
        expected = segmentation_naive(pred, gt)
        for key, value in expected.items():
            assert ours[key] == pytest.approx(value, abs=1e-9), key

    def test_relabelling_is_free(self):
        gt = np.array([0, 0, 1, 1, 2, 2])
        pred = np.array([7, 7, 3, 3, 9, 9])
        assert segmentation_metrics(pred, gt) == pytest.approx({'voi': 0.0, 'rand_index': 1.0, 'covering': 1.0})

    def test_empty_labellings(self):
        with pytest.raises(UndefinedMetricError):
            segmentation_metrics([], [])


class TestNovelViews:
    def test_ground_truth_scene_is_perfect(self, tiny_box):
        gt_scene, _, dataset = tiny_box
        metrics = evaluate_nvs(gt_scene, dataset.views, threads=1)
        assert metrics['psnr'] == PSNR_CAP
        assert metrics['ssim'] == pytest.approx(1.0)
        assert metrics['rmse'] == pytest.approx(0.0, abs=1e-12)
        assert metrics['planar_rmse'] == pytest.approx(0.0, abs=1e-12)
        assert metrics['lpips'] is None
        assert metrics['views'] == len(dataset.views)
        assert metrics['planes'] == len(gt_scene.planes)
        assert metrics['primitives'] == gt_scene.primitive_count

    def test_no_views(self, tiny_box):
        with pytest.raises(InvalidArgumentError):
            evaluate_nvs(tiny_box[0], [])
