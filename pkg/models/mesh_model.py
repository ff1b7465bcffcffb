"""Occupancy grids and triangle meshes."""
from dataclasses import dataclass

import numpy as np

from utils.exceptions import InvalidArgumentError, UndefinedMetricError


@dataclass(eq=False)
class OccupancyGrid:
    """Binary raster over plane coordinates; cell (i, j) spans origin + cell * [j, j+1) x [i, i+1)."""

    origin: np.ndarray
    cell: float
    cells: np.ndarray

    def __post_init__(self):
        if not self.cell > 0:
            raise InvalidArgumentError('Cell size must be positive, got %(cell)s.',
                                       params={'cell': self.cell})
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(2)
        self.cells = np.asarray(self.cells, dtype=bool)

    @property
    def shape(self):
        return self.cells.shape

    def cell_index(self, points):
        """(row, col) index of each 2D point."""
        ij = np.floor((np.asarray(points) - self.origin) / self.cell).astype(np.int64)
        return ij[:, 1], ij[:, 0]

    def to_plane(self, grid_xy):
        """Grid coordinates (x = col, y = row, in cells, centres at +0.5) to plane coordinates."""
        return self.origin + np.asarray(grid_xy, dtype=np.float64) * self.cell

    @property
    def occupied_area(self):
        return float(self.cells.sum()) * self.cell ** 2


def triangle_areas(vertices, triangles):
    if len(triangles) == 0:
        return np.zeros(0)
    a, b, c = (vertices[triangles[:, k]] for k in range(3))
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


@dataclass(eq=False)
class PlanarMesh:
    """Triangle mesh of one plane; vertices are world points on the plane."""

    plane_id: int
    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if len(self.triangles) and (self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)):
            raise InvalidArgumentError('Triangle index out of range in mesh of plane %(id)s.',
                                       params={'id': self.plane_id})

    @classmethod
    def empty(cls, plane_id):
        return cls(plane_id, np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))

    @property
    def is_empty(self):
        return len(self.triangles) == 0

    @property
    def labels(self):
        """Per-triangle plane label."""
        return np.full(len(self.triangles), self.plane_id, dtype=np.int64)

    @property
    def area(self):
        return float(triangle_areas(self.vertices, self.triangles).sum())


@dataclass(eq=False)
class SceneMesh:
    """Merged triangle mesh with a plane label per triangle."""

    vertices: np.ndarray
    triangles: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if len(self.labels) != len(self.triangles):
            raise InvalidArgumentError('Expected one label per triangle.')

    @classmethod
    def from_planar_meshes(cls, meshes):
        vertices, triangles, labels = [], [], []
        offset = 0
        for mesh in meshes:
            vertices.append(mesh.vertices)
            triangles.append(mesh.triangles + offset)
            labels.append(mesh.labels)
            offset += len(mesh.vertices)
        if not vertices:
            return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64), np.zeros(0, dtype=np.int64))
        return cls(np.concatenate(vertices), np.concatenate(triangles), np.concatenate(labels))

    @property
    def is_empty(self):
        return len(self.triangles) == 0

    @property
    def area(self):
        return float(self.triangle_areas().sum())

    def triangle_areas(self):
        return triangle_areas(self.vertices, self.triangles)

    def plane_meshes(self):
        """Split back into one PlanarMesh per label (vertices re-indexed)."""
        meshes = []
        for label in np.unique(self.labels):
            tris = self.triangles[self.labels == label]
            used, inverse = np.unique(tris, return_inverse=True)
            meshes.append(PlanarMesh(int(label), self.vertices[used], inverse.reshape(-1, 3)))
        return meshes

    def sample(self, rng, count):
        """Area-uniform point samples with the label of the triangle each came from."""
        areas = self.triangle_areas()
        total = areas.sum()
        if self.is_empty or total <= 0:
            raise UndefinedMetricError('Cannot sample points from an empty mesh.')
        tri_idx = rng.choice(len(self.triangles), size=count, p=areas / total)
        r1 = np.sqrt(rng.random(count))
        r2 = rng.random(count)
        a, b, c = (self.vertices[self.triangles[tri_idx, k]] for k in range(3))
        points = (1 - r1)[:, None] * a + (r1 * (1 - r2))[:, None] * b + (r1 * r2)[:, None] * c
        return points, self.labels[tri_idx]
