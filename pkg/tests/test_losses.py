import numpy as np
import pytest

from engines.loss_engine import loss_flat, loss_mask, loss_photo, loss_reg, loss_tv
from utils.exceptions import InvalidArgumentError


def test_photo_is_mean_absolute_error(rng):
    a = rng.uniform(size=(4, 5, 3))
    b = rng.uniform(size=(4, 5, 3))
    value, grad = loss_photo(a, b)
    assert value == pytest.approx(np.abs(a - b).mean())
    np.testing.assert_allclose(grad, np.sign(a - b) / a.size)
    assert loss_photo(a, a)[0] == 0.0


def test_photo_rejects_shape_mismatch():
    with pytest.raises(InvalidArgumentError):
        loss_photo(np.zeros((2, 2, 3)), np.zeros((2, 3, 3)))


def test_mask_with_no_planes_is_zero():
    value, grad = loss_mask(np.zeros((0, 4, 4)), np.zeros((0, 4, 4), dtype=bool))
    assert value == 0.0
    assert grad.shape == (0, 4, 4)


def test_mask_averages_planes():
    rendered = np.stack([np.full((2, 2), 0.25), np.full((2, 2), 1.0)])
    target = np.stack([np.zeros((2, 2), dtype=bool), np.zeros((2, 2), dtype=bool)])
    value, _ = loss_mask(rendered, target)
    assert value == pytest.approx((0.25 + 1.0) / 2)


def test_tv_matches_finite_differences(rng):
    depth = rng.uniform(1, 2, size=(5, 6))
    valid = rng.uniform(size=(5, 6)) > 0.2
    _, grad = loss_tv(depth, valid)
    h = 1e-6
    for index in [(0, 0), (2, 3), (4, 5), (1, 4)]:
        step = np.zeros_like(depth)
        step[index] = h
        numeric = (loss_tv(depth + step, valid)[0] - loss_tv(depth - step, valid)[0]) / (2 * h)
        assert grad[index] == pytest.approx(numeric, abs=1e-8)


def test_tv_ignores_invalid_neighbours():
    depth = np.array([[1.0, 5.0], [1.0, 1.0]])
    valid = np.array([[True, False], [True, True]])
    value, grad = loss_tv(depth, valid)
    assert value == 0.0
    assert grad[0, 1] == 0.0
    assert loss_tv(depth, np.zeros_like(valid))[0] == 0.0


def test_reg_means_and_gradients(random_scene):
    reg = loss_reg(random_scene)
    planar, freeform = random_scene.planar, random_scene.freeform
    count = len(planar) + len(freeform)
    assert reg.opacity == pytest.approx((planar.opacities.sum() + freeform.opacities.sum()) / count)
    components = planar.scales.size + freeform.scales.size
    assert reg.scale == pytest.approx((planar.scales.sum() + freeform.scales.sum()) / components)

    h = 1e-6
    plus, minus = random_scene.copy(), random_scene.copy()
    plus.freeform.log_scales[2, 1] += h
    minus.freeform.log_scales[2, 1] -= h
    numeric = (loss_reg(plus).scale - loss_reg(minus).scale) / (2 * h)
    assert reg.scale_grad.freeform.log_scales[2, 1] == pytest.approx(numeric, rel=1e-6)

    plus, minus = random_scene.copy(), random_scene.copy()
    plus.planar.opacity_logits[1] += h
    minus.planar.opacity_logits[1] -= h
    numeric = (loss_reg(plus).opacity - loss_reg(minus).opacity) / (2 * h)
    assert reg.opacity_grad.planar.opacity_logits[1] == pytest.approx(numeric, rel=1e-6)


def test_flat_uses_smallest_scale_of_flagged(random_scene):
    flagged = np.zeros(len(random_scene.freeform), dtype=bool)
    assert loss_flat(random_scene, flagged)[0] == 0.0
    flagged[[1, 4]] = True
    value, grad = loss_flat(random_scene, flagged)
    expected = random_scene.freeform.scales[[1, 4]].min(axis=1).mean()
    assert value == pytest.approx(expected)
    assert np.count_nonzero(grad.freeform.log_scales) == 2
    assert not grad.planar.log_scales.any()
