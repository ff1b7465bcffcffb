import numpy as np
import pytest
from scipy.ndimage import gaussian_filter

from engines.mesh_engine import (
    ear_clip,
    extract_plane_mesh,
    extract_scene_mesh,
    group_contours,
    marching_squares,
    rasterize_occupancy,
    remove_collinear,
    signed_area,
    unproject_mask,
    voxel_downsample,
)
from engines.metrics_engine import mesh_distance_metrics
from models.camera_model import Camera
from models.config_model import MeshConfig
from models.dataset_model import Dataset, View
from models.mesh_model import OccupancyGrid, SceneMesh, triangle_areas
from models.plane_model import Plane
from models.scene_model import Scene
from utils.exceptions import InvalidArgumentError, TriangulationError


def unit_grid(cells):
    return OccupancyGrid(origin=[0.0, 0.0], cell=1.0, cells=cells)


def clipped_area(outer, holes=()):
    vertices, triangles = ear_clip(outer, holes)
    flat = np.column_stack([vertices, np.zeros(len(vertices))])
    return triangle_areas(flat, triangles).sum()


def disc_grid(radius, hole_radius, hole_offset=0.0, size=80):
    yy, xx = np.mgrid[:size, :size] + 0.5
    centre = size / 2
    cells = (xx - centre) ** 2 + (yy - centre) ** 2 <= radius ** 2
    cells &= (xx - centre - hole_offset) ** 2 + (yy - centre) ** 2 > hole_radius ** 2
    return unit_grid(cells)


def region_areas(grid):
    """(triangulated area, shoelace area, hole count) of every outer contour with its holes."""
    for outer, holes in group_contours(marching_squares(grid, min_points=3)):
        yield clipped_area(outer, holes), signed_area(outer) + sum(signed_area(h) for h in holes), len(holes)


class TestMarchingSquares:
    def test_rectangle(self):
        cells = np.zeros((14, 64), dtype=bool)
        cells[2:12, 2:62] = True
        contours = marching_squares(unit_grid(cells), min_points=4)
        assert len(contours) == 1
        ring = contours[0]
        assert len(ring) == 140
        # corners are chamfered by half a cell each
        assert signed_area(ring) == pytest.approx(599.5)
        assert ring[:, 0].min() == pytest.approx(2.0) and ring[:, 0].max() == pytest.approx(62.0)

    def test_hole_is_clockwise(self):
        cells = np.zeros((34, 34), dtype=bool)
        cells[2:32, 2:32] = True
        cells[12:22, 12:22] = False
        contours = marching_squares(unit_grid(cells), min_points=4)
        areas = sorted(signed_area(c) for c in contours)
        assert areas == pytest.approx([-99.5, 899.5])
        assert sum(areas) == pytest.approx(800.0)

        groups = group_contours(contours)
        assert len(groups) == 1 and len(groups[0][1]) == 1
        outer, holes = groups[0]
        assert clipped_area(outer, holes) == pytest.approx(800.0, abs=1e-9)

    def test_short_contours_dropped(self):
        cells = np.zeros((6, 6), dtype=bool)
        cells[2, 2] = True
        assert len(marching_squares(unit_grid(cells), min_points=4)) == 1
        assert marching_squares(unit_grid(cells), min_points=5) == []

    def test_diagonal_saddle_keeps_regions_apart(self):
        cells = np.zeros((8, 8), dtype=bool)
        cells[2:4, 2:4] = True
        cells[4:6, 4:6] = True
        assert len(marching_squares(unit_grid(cells), min_points=3)) == 2

    def test_grid_origin_and_cell_scale_contours(self):
        cells = np.zeros((6, 6), dtype=bool)
        cells[2:4, 2:4] = True
        grid = OccupancyGrid(origin=[10.0, -5.0], cell=0.5, cells=cells)
        ring = marching_squares(grid, min_points=3)[0]
        assert signed_area(ring) == pytest.approx((4 - 0.5) * 0.25)
        assert ring[:, 0].min() == pytest.approx(11.0)


class TestEarClip:
    def test_square(self):
        vertices, triangles = ear_clip(np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float))
        assert len(triangles) == 2
        assert clipped_area(vertices) == pytest.approx(1.0)

    def test_clockwise_outer_is_reversed(self):
        ring = np.array([[0, 0], [0, 2], [3, 2], [3, 0]], dtype=float)
        assert clipped_area(ring) == pytest.approx(6.0, abs=1e-9)

    def test_concave_polygon(self):
        ring = np.array([[0, 0], [4, 0], [4, 1], [1, 1], [1, 3], [4, 3], [4, 4], [0, 4]], dtype=float)
        assert clipped_area(ring) == pytest.approx(abs(signed_area(ring)), abs=1e-9)

    def test_random_star_polygons(self, rng):
        for _ in range(20):
            angles = np.sort(rng.uniform(0, 2 * np.pi, size=15))
            radii = rng.uniform(0.5, 2.0, size=15)
            ring = np.column_stack([radii * np.cos(angles), radii * np.sin(angles)])
            assert clipped_area(ring) == pytest.approx(signed_area(ring), abs=1e-9)

    def test_two_holes(self):
        outer = np.array([[0, 0], [10, 0], [10, 4], [0, 4]], dtype=float)
        holes = [np.array([[1, 1], [1, 3], [3, 3], [3, 1]], dtype=float),
                 np.array([[6, 1], [6, 3], [9, 3], [9, 1]], dtype=float)]
        assert clipped_area(outer, holes) == pytest.approx(40.0 - 4.0 - 6.0, abs=1e-9)

    @pytest.mark.parametrize('hole_offset', [0.0, 5.0])
    def test_disc_with_a_hole_keeps_its_area(self, hole_offset):
        ((clipped, shoelace, holes),) = region_areas(disc_grid(30, 10, hole_offset))
        assert holes == 1
        assert shoelace == pytest.approx(np.pi * (30 ** 2 - 10 ** 2), rel=0.01)
        assert clipped == pytest.approx(shoelace, abs=1e-6)

    def test_random_blobs_with_punched_holes(self, rng):
        yy, xx = np.mgrid[:60, :60] + 0.5
        holes_seen = 0
        for _ in range(40):
            field = gaussian_filter(rng.normal(size=(60, 60)), sigma=4.0)
            cells = field > np.quantile(field, 0.4)
            for cx, cy, r in zip(rng.uniform(10, 50, 3), rng.uniform(10, 50, 3), rng.uniform(2.5, 6.0, 3)):
                cells &= (xx - cx) ** 2 + (yy - cy) ** 2 > r ** 2
            for clipped, shoelace, holes in region_areas(unit_grid(cells)):
                holes_seen += holes
                assert clipped == pytest.approx(shoelace, abs=1e-6)
        assert holes_seen >= 10

    def test_collinear_vertices_removed(self):
        ring = np.array([[0, 0], [1, 0], [2, 0], [2, 2], [0, 2]], dtype=float)
        assert len(remove_collinear(ring)) == 4

    @pytest.mark.parametrize('ring', [
        [[0, 0], [1, 1]],
        [[0, 0], [1, 0], [2, 0]],
        [[0, 0], [2, 2], [2, 0], [0, 2]],
    ])
    def test_degenerate_rings(self, ring):
        with pytest.raises(TriangulationError):
            ear_clip(np.array(ring, dtype=float))


class TestPointPipeline:
    def test_voxel_downsample_averages(self):
        points = np.array([[0.01, 0.01, 0.0], [0.03, 0.01, 0.0], [0.51, 0.0, 0.0]])
        out = voxel_downsample(points, 0.1)
        np.testing.assert_allclose(out, [[0.02, 0.01, 0.0], [0.51, 0.0, 0.0]])
        with pytest.raises(InvalidArgumentError):
            voxel_downsample(points, 0.0)

    def test_rasterize_marks_cells_with_margin(self):
        grid = rasterize_occupancy(np.array([[0.05, 0.05], [0.25, 0.05]]), 0.1, margin=2)
        assert grid.cells.sum() == 2
        assert grid.shape == (1 + 4, 3 + 4)
        with pytest.raises(InvalidArgumentError):
            rasterize_occupancy(np.zeros((0, 2)), 0.1)

    def test_unprojected_pixels_land_on_plane(self, camera):
        plane = Plane(id=0, origin=[0, 0, 2], normal=[0.2, 0.1, -1])
        mask = np.zeros(camera.shape, dtype=bool)
        mask[3:9, 4:15] = True
        points = unproject_mask(camera, mask, plane)
        assert len(points) == mask.sum()
        np.testing.assert_allclose(plane.signed_distance(points), 0.0, atol=1e-12)
        row, col, valid = camera.pixel_of(points)
        assert valid.all() and mask[row, col].all()

    def test_plane_behind_camera_gives_nothing(self, camera):
        plane = Plane(id=0, origin=[0, 0, -2], normal=[0, 0, 1])
        assert len(unproject_mask(camera, np.ones(camera.shape, dtype=bool), plane)) == 0


def floor_square_dataset():
    """A camera 1 m above the floor looking straight down; the mask covers a 4 m x 4 m square."""
    camera = Camera.look_at([0, 0, 1], [0, 0, 0], 100, 100, 440, 440)
    mask = np.zeros(camera.shape, dtype=bool)
    mask[20:420, 20:420] = True
    view = View(0, camera, np.zeros(camera.shape + (3,)), masks={0: mask})
    plane = Plane(id=0, origin=[0, 0, 0], normal=[0, 0, 1], labels=(0,))
    return Scene.empty(0).replace(planes=[plane]), Dataset([view])


def floor_square_mesh(half=2.0):
    vertices = np.array([[-half, -half, 0], [half, -half, 0], [half, half, 0], [-half, half, 0]], dtype=float)
    return SceneMesh(vertices, np.array([[0, 1, 2], [0, 2, 3]]), np.array([0, 0]))


class TestExtraction:
    config = MeshConfig(voxel_size=0.05, grid_cell=0.05)

    def test_rectangular_footprint(self):
        scene, dataset = floor_square_dataset()
        mesh = extract_plane_mesh(scene, scene.planes[0], dataset, self.config)
        assert mesh.area == pytest.approx(16.0, rel=0.05)
        np.testing.assert_allclose(mesh.vertices[:, 2], 0.0, atol=1e-12)

        merged = extract_scene_mesh(scene, dataset, self.config, threads=1)
        assert set(merged.labels.tolist()) == {0}
        metrics = mesh_distance_metrics(merged, floor_square_mesh(), threshold=0.05, n_samples=20000)
        assert metrics['f1'] >= 0.9
        assert metrics['chamfer'] < 0.05

    def test_plane_without_masks_is_empty(self):
        scene, dataset = floor_square_dataset()
        other = Plane(id=1, origin=[0, 0, 0.5], normal=[0, 0, 1], labels=(7,))
        assert extract_plane_mesh(scene, other, dataset, self.config).is_empty

    def test_no_planes_gives_empty_mesh(self):
        _, dataset = floor_square_dataset()
        assert extract_scene_mesh(Scene.empty(0), dataset, self.config).is_empty
