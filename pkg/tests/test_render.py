import numpy as np
import pytest

from engines.splat_engine import make_tiles, project, render, render_backward
from models.camera_model import Camera
from models.framebuffer_model import FrameBufferGrad
from models.gaussian_model import Gaussian3D
from models.scene_model import Scene
from utils.exceptions import ContractViolationError
from .conftest import front_camera, make_random_scene
from .oracles import composite_pixelwise


def single_gaussian_scene(mean, scale=0.1, opacity=0.8, color=(0.2, 0.4, 0.6)):
    record = Gaussian3D(mean, [scale] * 3, [1, 0, 0, 0], opacity,
                        ((np.asarray(color) - 0.5) / 0.28209479177387814)[None])
    return Scene.from_records([], [], [record], sh_degree=0)


@pytest.mark.parametrize('seed', range(10))
def test_tiled_render_matches_pixelwise_oracle(seed):
    rng = np.random.default_rng(seed)
    scene = make_random_scene(rng, n_planar=10, n_free=10, sh_degree=2, spread=0.9)
    camera = front_camera(64, 64, focal=60.0)
    fb = render(scene, camera, threads=1)
    rgb, depth, acc, masks = composite_pixelwise(scene, camera)
    np.testing.assert_allclose(fb.rgb, rgb, rtol=0, atol=1e-10)
    np.testing.assert_allclose(fb.depth, depth, rtol=0, atol=1e-10)
    np.testing.assert_allclose(fb.acc_alpha, acc, rtol=0, atol=1e-10)
    np.testing.assert_allclose(fb.plane_masks, masks, rtol=0, atol=1e-10)


def test_thread_count_does_not_change_pixels(random_scene, camera):
    one = render(random_scene, camera, threads=1, tile_size=8)
    many = render(random_scene, camera, threads=4, tile_size=8)
    np.testing.assert_array_equal(one.rgb, many.rgb)
    np.testing.assert_array_equal(one.depth, many.depth)
    np.testing.assert_array_equal(one.plane_masks, many.plane_masks)


def test_empty_scene_renders_background(camera):
    fb = render(Scene.empty(1), camera, background=(0.1, 0.2, 0.3))
    np.testing.assert_allclose(fb.rgb, np.broadcast_to([0.1, 0.2, 0.3], fb.rgb.shape))
    assert not fb.depth.any()
    assert fb.plane_masks.shape == (0,) + camera.shape


def test_single_gaussian_peak(camera):
    fb = render(single_gaussian_scene([0.0, 0.0, 2.0]), camera)
    r, c = np.unravel_index(np.argmax(fb.acc_alpha), camera.shape)
    # principal point sits between pixels; the peak is one of the four nearest
    assert abs(c - camera.cx) <= 0.5 and abs(r - camera.cy) <= 0.5
    assert fb.acc_alpha.max() <= 0.8
    valid = fb.valid
    np.testing.assert_allclose(fb.depth[valid], 2.0)


def test_front_gaussian_occludes_back():
    camera = front_camera(16, 16, focal=20.0)
    near = Gaussian3D([0, 0, 1.0], [0.3] * 3, [1, 0, 0, 0], 0.99, np.array([[3.0, -3.0, -3.0]]))
    far = Gaussian3D([0, 0, 2.0], [0.6] * 3, [1, 0, 0, 0], 0.99, np.array([[-3.0, 3.0, -3.0]]))
    for order in ([near, far], [far, near]):
        fb = render(Scene.from_records([], [], order, sh_degree=0), camera)
        centre = fb.rgb[8, 8]
        assert centre[0] > 0.9 and centre[1] < 0.1


def test_plane_masks_bounded_by_accumulated_alpha(random_scene, camera):
    fb = render(random_scene, camera)
    total = fb.plane_masks.sum(axis=0)
    assert np.all(total <= fb.acc_alpha + 1e-12)
    assert np.all(fb.acc_alpha <= 1.0)
    assert fb.plane_ids == [0, 3]


def test_behind_camera_is_culled(camera):
    g = Gaussian3D([0, 0, -2.0], [0.1] * 3, [1, 0, 0, 0], 0.5, np.zeros((1, 3)))
    assert project(camera, g) is None
    assert project(camera, Gaussian3D([0, 0, 2.0], [0.1] * 3, [1, 0, 0, 0], 0.5, np.zeros((1, 3)))) is not None


def test_tiles_cover_image_once():
    camera = Camera.look_at([0, 0, 0], [0, 0, 1], 10, 10, 37, 21)
    covered = np.zeros(camera.shape, dtype=int)
    for y0, y1, x0, x1 in make_tiles(camera, 16):
        covered[y0:y1, x0:x1] += 1
    assert np.all(covered == 1)


def test_backward_rejects_foreign_framebuffer(random_scene, camera):
    fb = render(random_scene, camera)
    other = random_scene.copy()
    other.freeform.means[0, 2] += 0.01
    with pytest.raises(ContractViolationError):
        render_backward(other, camera, fb, FrameBufferGrad.zeros_like(fb))
    with pytest.raises(ContractViolationError):
        render_backward(random_scene, camera.translated([0.01, 0, 0]), fb, FrameBufferGrad.zeros_like(fb))


def test_zero_upstream_gives_zero_gradients(random_scene, camera):
    fb = render(random_scene, camera)
    grads = render_backward(random_scene, camera, fb, FrameBufferGrad.zeros_like(fb))
    assert not grads.freeform.means.any()
    assert not grads.planar.thetas.any()
    assert not grads.plane_normals.any()


def test_freeform_only_scene_has_no_masks(camera, rng):
    scene = make_random_scene(rng, n_planar=0, n_free=5, planes=[])
    fb = render(scene, camera)
    assert fb.plane_masks.shape[0] == 0
    assert fb.acc_alpha.max() > 0.1
    assert len(scene.freeform) == 5


def test_close_off_axis_gaussian_is_culled(camera):
    # 10x outside the field of view and 5 cm in front of the camera
    g = Gaussian3D([0.5, 0.0, 0.05], [0.1] * 3, [1, 0, 0, 0], 0.9, np.zeros((1, 3)))
    assert project(camera, g) is None
    fb = render(Scene.from_records([], [], [g], sh_degree=0), camera)
    assert not fb.acc_alpha.any()


def test_clamped_footprint_stays_bounded(camera):
    inside = project(camera, Gaussian3D([0.0, 0.0, 0.5], [0.1] * 3, [1, 0, 0, 0], 0.9, np.zeros((1, 3))))
    edge = project(camera, Gaussian3D([0.4, 0.0, 0.5], [0.1] * 3, [1, 0, 0, 0], 0.9, np.zeros((1, 3))))
    # 0.8 = x/z exceeds 1.3 * tan(half fov) = 0.52, so the off-axis term stops growing
    assert edge is not None
    assert edge.cov2d[0, 0] < 1.5 * inside.cov2d[0, 0]
