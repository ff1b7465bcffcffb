"""
Planar mesh extraction.

Masks of a plane are unprojected onto it, downsampled in voxels and rasterized into an occupancy
grid in plane coordinates; marching squares traces the region boundaries and ear clipping
triangulates each outer contour together with its holes.
"""
import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.ndimage import binary_closing
from django.conf import settings

from models.config_model import MeshConfig
from models.mesh_model import OccupancyGrid, PlanarMesh, SceneMesh
from utils.exceptions import InvalidArgumentError, TriangulationError
from utils.validators import validate_positive

logger = logging.getLogger(__name__)

GRID_MARGIN = 2
AREA_EPS = 1e-14

# Segments per case (bits: bottom-left 1, bottom-right 2, top-right 4, top-left 8), oriented with
# the occupied side on the left. Edges: B(ottom), R(ight), T(op), L(eft).
SEGMENTS = {
    1: [('B', 'L')], 2: [('R', 'B')], 3: [('R', 'L')], 4: [('T', 'R')],
    5: [('B', 'L'), ('T', 'R')], 6: [('T', 'B')], 7: [('T', 'L')], 8: [('L', 'T')],
    9: [('B', 'T')], 10: [('R', 'B'), ('L', 'T')], 11: [('R', 'T')], 12: [('L', 'R')],
    13: [('B', 'R')], 14: [('L', 'B')],
}
# Edge midpoints in doubled grid coordinates relative to the square's bottom-left sample.
EDGE_OFFSETS = {'B': (1, 0), 'R': (2, 1), 'T': (1, 2), 'L': (0, 1)}


def unproject_mask(camera, mask, plane):
    """Intersect the ray of every masked pixel with the plane (parallel and backward hits skipped)."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != camera.shape:
        raise InvalidArgumentError('Mask shape %(mask)s does not match camera %(cam)s.',
                                   params={'mask': mask.shape, 'cam': camera.shape})
    rows, cols = np.nonzero(mask)
    if len(rows) == 0:
        return np.zeros((0, 3))
    dirs = camera.ray_directions(rows, cols)
    center = camera.center
    denom = dirs @ plane.normal
    hit = np.abs(denom) > 1e-12
    t = np.full(len(dirs), -1.0)
    t[hit] = ((plane.origin - center) @ plane.normal) / denom[hit]
    keep = hit & (t > 0)
    return center + t[keep, None] * dirs[keep]


def voxel_downsample(points, voxel):
    """Centroid of the points in every occupied voxel, in ascending voxel order."""
    validate_positive(voxel, 'voxel')
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(points) == 0:
        return points
    keys = np.floor(points / voxel).astype(np.int64)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    sums = np.zeros((len(counts), 3))
    np.add.at(sums, inverse, points)
    return sums / counts[:, None]


def rasterize_occupancy(points, cell, margin=GRID_MARGIN):
    """Occupancy grid over 2D plane coordinates with an empty margin around the points."""
    validate_positive(cell, 'cell')
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(points) == 0:
        raise InvalidArgumentError('Cannot rasterize an empty point set.')
    lo = np.floor(points.min(axis=0) / cell) * cell - margin * cell
    ij = np.floor((points - lo) / cell).astype(np.int64)
    shape = (int(ij[:, 1].max()) + 1 + margin, int(ij[:, 0].max()) + 1 + margin)
    cells = np.zeros(shape, dtype=bool)
    cells[ij[:, 1], ij[:, 0]] = True
    return OccupancyGrid(origin=lo, cell=cell, cells=cells)


def signed_area(ring):
    """Shoelace area; positive for counter-clockwise rings."""
    x, y = ring[:, 0], ring[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def marching_squares(grid, min_points=settings.MIN_CONTOUR_POINTS):
    """
    Closed iso-contours at level 0.5 through cell-centre samples, in plane coordinates.

    Vertices sit on midpoints between neighbouring samples; saddles keep the two occupied
    corners apart. Outer contours are counter-clockwise, holes clockwise. Contours with fewer
    than min_points vertices are dropped.
    """
    cells = np.pad(grid.cells, 1)
    bl = cells[:-1, :-1]
    br = cells[:-1, 1:]
    tr = cells[1:, 1:]
    tl = cells[1:, :-1]
    cases = bl * 1 + br * 2 + tr * 4 + tl * 8

    links = {}
    for i, j in zip(*np.nonzero((cases > 0) & (cases < 15))):
        for start, end in SEGMENTS[int(cases[i, j])]:
            sx, sy = EDGE_OFFSETS[start]
            ex, ey = EDGE_OFFSETS[end]
            links[(2 * j + sx, 2 * i + sy)] = (2 * j + ex, 2 * i + ey)

    contours = []
    for first in sorted(links):
        if first not in links:
            continue
        chain = [first]
        key = links.pop(first)
        while key != first:
            chain.append(key)
            key = links.pop(key)
        if len(chain) < min_points:
            continue
        doubled = np.asarray(chain, dtype=np.float64)
        contours.append(grid.to_plane(doubled / 2.0 - 1.0 + 0.5))
    return contours


def _cross(o, a, b):
    return (a[..., 0] - o[..., 0]) * (b[..., 1] - o[..., 1]) - (a[..., 1] - o[..., 1]) * (b[..., 0] - o[..., 0])


def _crosses(p, q, a, b):
    """Proper intersection of segment p-q with each segment a[k]-b[k]."""
    d1 = _cross(a, b, p)
    d2 = _cross(a, b, q)
    d3 = _cross(p, q, a)
    d4 = _cross(p, q, b)
    return (d1 * d2 < 0) & (d3 * d4 < 0)


def _is_simple(ring):
    n = len(ring)
    a = ring
    b = np.roll(ring, -1, axis=0)
    for i in range(n):
        others = np.array([j for j in range(n) if j not in (i, (i - 1) % n, (i + 1) % n)])
        if len(others) and _crosses(a[i], b[i], a[others], b[others]).any():
            return False
    return True


def remove_collinear(ring, tol=1e-12):
    """Drop vertices lying on the segment between their neighbours (area preserving)."""
    ring = np.asarray(ring, dtype=np.float64)
    scale = max(float(np.abs(ring).max()), 1.0) ** 2
    while len(ring) > 3:
        turn = _cross(np.roll(ring, 1, axis=0), ring, np.roll(ring, -1, axis=0))
        flat = np.abs(turn) <= tol * scale
        if not flat.any():
            break
        # never drop two neighbours in the same pass
        drop = np.flatnonzero(flat)
        drop = drop[np.concatenate([[True], np.diff(drop) > 1])]
        if len(drop) > 1 and drop[0] == 0 and drop[-1] == len(ring) - 1:
            drop = drop[:-1]
        ring = np.delete(ring, drop, axis=0)
    return ring


def _locally_inside(prev, vertex, nxt, target):
    """Whether vertex->target points strictly into the angle at vertex that has the region on its left."""
    if _cross(prev, vertex, nxt) > AREA_EPS:
        return _cross(prev, vertex, target) > AREA_EPS and _cross(vertex, nxt, target) > AREA_EPS
    return _cross(prev, vertex, target) > AREA_EPS or _cross(vertex, nxt, target) > AREA_EPS


def _on_open_segment(p, q, points):
    """Points on segment p-q strictly between its endpoints."""
    d = q - p
    along = (points - p) @ d
    return (np.abs(_cross(p, q, points)) <= AREA_EPS) & (along > 0) & (along < d @ d)


def _in_triangle(a, b, c, points):
    """Points inside or on the boundary of counter-clockwise triangle abc, except copies of its corners."""
    corner = (points == a).all(axis=1) | (points == b).all(axis=1) | (points == c).all(axis=1)
    inside = ((_cross(a, b, points) >= -AREA_EPS) & (_cross(b, c, points) >= -AREA_EPS)
              & (_cross(c, a, points) >= -AREA_EPS))
    return inside & ~corner


def _bridge(polygon, vertices, hole, hole_rings):
    """
    Splice hole (index ring) into polygon through a mutually visible vertex pair.

    The bridge leaves the rightmost hole vertex away from the hole, enters the polygon inside the
    interior angle of its target, crosses no edge and touches no other vertex.
    """
    m = int(np.argmax(vertices[hole][:, 0]))
    anchor = vertices[hole[m]]
    hole_prev, hole_next = vertices[hole[m - 1]], vertices[hole[(m + 1) % len(hole)]]
    rings = [polygon, hole, *hole_rings]
    edges = np.asarray([(ring[k], ring[(k + 1) % len(ring)]) for ring in rings for k in range(len(ring))],
                       dtype=np.int64)
    a, b = vertices[edges[:, 0]], vertices[edges[:, 1]]
    points = vertices[np.unique(np.concatenate(rings))]
    n = len(polygon)
    order = np.argsort(np.linalg.norm(vertices[polygon] - anchor, axis=1), kind='stable')
    for position in order:
        target = vertices[polygon[position]]
        if (target == anchor).all():
            continue
        if not _locally_inside(hole_prev, anchor, hole_next, target):
            continue
        if not _locally_inside(vertices[polygon[position - 1]], target, vertices[polygon[(position + 1) % n]], anchor):
            continue
        if _crosses(anchor, target, a, b).any() or _on_open_segment(anchor, target, points).any():
            continue
        ring = list(hole[m:]) + list(hole[:m + 1])
        return polygon[:position + 1] + ring + polygon[position:]
    raise TriangulationError('No visible bridge from hole vertex %(v)s.', params={'v': int(hole[m])})


def _clip(polygon, vertices):
    idx = list(polygon)
    triangles = []
    k = 0
    misses = 0
    while len(idx) > 3:
        n = len(idx)
        k %= n
        i0, i1, i2 = idx[k - 1], idx[k], idx[(k + 1) % n]
        a, b, c = vertices[i0], vertices[i1], vertices[i2]
        turn = _cross(a, b, c)
        if turn > AREA_EPS and not _in_triangle(a, b, c, vertices[idx]).any():
            triangles.append((i0, i1, i2))
            del idx[k]
            misses = 0
            continue
        # zero-turn vertices go only once a full pass found no ear, so pinch copies stay put
        if abs(turn) <= AREA_EPS and misses >= n:
            del idx[k]
            misses = 0
            continue
        k += 1
        misses += 1
        if misses > 2 * n:
            raise TriangulationError('No ear found among %(n)s remaining vertices.', params={'n': n})
    if len(idx) == 3:
        if _cross(*(vertices[i] for i in idx)) > AREA_EPS:
            triangles.append(tuple(idx))
    return np.asarray(triangles, dtype=np.int64).reshape(-1, 3)


def ear_clip(outer, holes=()):
    """
    Triangulate a simple polygon with optional holes.

    Returns (vertices (V, 2), triangles (T, 3)); the outer ring is made counter-clockwise and
    holes clockwise, collinear vertices are dropped and every hole is bridged to the outer ring.
    """
    rings = []
    for k, ring in enumerate([outer, *holes]):
        ring = np.asarray(ring, dtype=np.float64).reshape(-1, 2)
        if len(ring) < 3:
            raise TriangulationError('Ring %(k)s has fewer than three vertices.', params={'k': k})
        ring = remove_collinear(ring)
        area = signed_area(ring)
        if abs(area) <= AREA_EPS:
            raise TriangulationError('Ring %(k)s has zero area.', params={'k': k})
        if not _is_simple(ring):
            raise TriangulationError('Ring %(k)s is self-intersecting.', params={'k': k})
        if (k == 0) != (area > 0):
            ring = ring[::-1]
        rings.append(ring)

    vertices = np.concatenate(rings)
    offsets = np.cumsum([0] + [len(ring) for ring in rings])
    polygon = list(range(offsets[0], offsets[1]))
    hole_rings = [list(range(offsets[k], offsets[k + 1])) for k in range(1, len(rings))]
    hole_rings.sort(key=lambda ring: -vertices[ring][:, 0].max())
    while hole_rings:
        hole = hole_rings.pop(0)
        polygon = _bridge(polygon, vertices, hole, hole_rings)
    return vertices, _clip(polygon, vertices)


def _point_in_ring(point, ring):
    x, y = point
    a = ring
    b = np.roll(ring, -1, axis=0)
    straddle = (a[:, 1] > y) != (b[:, 1] > y)
    with np.errstate(divide='ignore', invalid='ignore'):
        cross_x = a[:, 0] + (y - a[:, 1]) * (b[:, 0] - a[:, 0]) / (b[:, 1] - a[:, 1])
    return bool(np.count_nonzero(straddle & (x < cross_x)) % 2)


def group_contours(contours):
    """Pair every outer (counter-clockwise) contour with the holes it is the smallest container of."""
    outers = [c for c in contours if signed_area(c) > 0]
    holes = [c for c in contours if signed_area(c) < 0]
    groups = [(outer, []) for outer in outers]
    for hole in holes:
        containing = [k for k, outer in enumerate(outers) if _point_in_ring(hole[0], outer)]
        if not containing:
            logger.warning('Dropping a hole contour with no enclosing outer contour')
            continue
        smallest = min(containing, key=lambda k: signed_area(outers[k]))
        groups[smallest][1].append(hole)
    return groups


def plane_points(plane, dataset, cfg):
    """Voxel-downsampled unprojection of every mask carrying one of the plane's labels."""
    clouds = []
    for view in dataset.views:
        for label in plane.labels:
            if label in view.masks:
                clouds.append(unproject_mask(view.camera, view.masks[label], plane))
    if not clouds:
        return np.zeros((0, 3))
    return voxel_downsample(np.concatenate(clouds), cfg.voxel_size)


def extract_plane_mesh(scene, plane, dataset, cfg=None):
    """Triangle mesh of the region of the plane covered by its masks (empty when none)."""
    cfg = cfg or MeshConfig()
    points = plane_points(plane, dataset, cfg)
    if len(points) == 0:
        return PlanarMesh.empty(plane.id)
    grid = rasterize_occupancy(plane.to_local(points)[:, :2], cfg.grid_cell)
    grid = OccupancyGrid(grid.origin, grid.cell, binary_closing(grid.cells, structure=np.ones((3, 3))))
    contours = marching_squares(grid, cfg.min_contour_points)

    vertices, triangles = [], []
    offset = 0
    for outer, holes in group_contours(contours):
        try:
            verts2d, tris = ear_clip(outer, holes)
        except TriangulationError as exc:
            logger.warning('Plane %d: skipping contour (%s)', plane.id, exc)
            continue
        vertices.append(plane.to_world(verts2d))
        triangles.append(tris + offset)
        offset += len(verts2d)
    if not vertices:
        return PlanarMesh.empty(plane.id)
    mesh = PlanarMesh(plane.id, np.concatenate(vertices), np.concatenate(triangles))
    logger.debug('Plane %d: %d contours, %d triangles, area %.4f', plane.id, len(contours),
                 len(mesh.triangles), mesh.area)
    return mesh


def extract_scene_mesh(scene, dataset, cfg=None, threads=None):
    """Per-plane meshes merged into one mesh with a plane label per triangle."""
    threads = threads or settings.RENDER_THREADS
    planes = list(scene.planes)
    if threads <= 1 or len(planes) <= 1:
        meshes = [extract_plane_mesh(scene, plane, dataset, cfg) for plane in planes]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            meshes = list(pool.map(lambda plane: extract_plane_mesh(scene, plane, dataset, cfg), planes))
    return SceneMesh.from_planar_meshes(meshes)
