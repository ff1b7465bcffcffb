"""
File formats: scenes (PLY), cameras and configs (JSON), images and masks (PNG), float images and
depths (PFM), meshes (OBJ + label sidecar), training logs (JSON lines) and dataset directories.
"""
import io
import json
import logging
import re
from pathlib import Path

import numpy as np
from PIL import Image
from plyfile import PlyData, PlyElement, PlyParseError
from django.conf import settings

from models.camera_model import Camera
from models.dataset_model import Dataset, View
from models.mesh_model import SceneMesh
from models.plane_model import Plane
from models.scene_model import FreeformGaussians, PlanarGaussians, Scene
from .exceptions import InvalidArgumentError, ParseError
from .geometry import rotmat_to_quat

logger = logging.getLogger(__name__)

KIND_FREEFORM, KIND_PLANAR = 0, 1
SH_DEGREE_COMMENT = re.compile(r'^sh_degree (\d+)$')


def _vertex_fields(sh_count):
    names = ['x', 'y', 'z', 'u', 'v', 'theta', 'scale_0', 'scale_1', 'scale_2',
             'rot_0', 'rot_1', 'rot_2', 'rot_3', 'opacity', 'f_dc_0', 'f_dc_1', 'f_dc_2']
    names += [f'f_rest_{i}' for i in range(3 * (sh_count - 1))]
    return [('kind', 'u1'), ('plane_id', 'i4')] + [(name, '<f8') for name in names]


def _sh_columns(sh):
    """(N, K, 3) -> DC (N, 3) and channel-major rest (N, 3 * (K - 1))."""
    rest = np.transpose(sh[:, 1:, :], (0, 2, 1)).reshape(len(sh), -1)
    return sh[:, 0, :], rest


def _sh_from_columns(dc, rest, sh_count):
    sh = np.empty((len(dc), sh_count, 3))
    sh[:, 0, :] = dc
    sh[:, 1:, :] = np.transpose(rest.reshape(len(dc), 3, sh_count - 1), (0, 2, 1))
    return sh


def write_scene_ply(scene, path):
    """
    Little-endian binary PLY: one 'vertex' per primitive (planar first) and one 'plane' per plane.

    Planar rows carry their plane coordinates in (u, v, theta, scale_0, scale_1); x/y/z, scale_2
    and rot_* hold the equivalent world Gaussian for external viewers.
    """
    planar, freeform = scene.planar, scene.freeform
    m, n = len(planar), len(freeform)
    rows = np.zeros(m + n, dtype=_vertex_fields(scene.sh_count))
    rows['kind'][:m] = KIND_PLANAR
    rows['kind'][m:] = KIND_FREEFORM
    rows['plane_id'][:m] = planar.plane_ids
    rows['plane_id'][m:] = -1

    if m:
        world = scene.world_gaussians()
        rows['x'][:m], rows['y'][:m], rows['z'][:m] = world.means[:m].T
        rows['u'][:m], rows['v'][:m] = planar.means.T
        rows['theta'][:m] = planar.thetas
        rows['scale_0'][:m], rows['scale_1'][:m] = planar.log_scales.T
        rows['scale_2'][:m] = np.log(settings.FLATNESS_FLOOR)
        lookup = scene.plane_lookup()
        frames = np.stack([scene.planes[lookup[int(i)]].frame[:3, :3] for i in planar.plane_ids])
        local = np.zeros((m, 3, 3))
        local[:, :2, :2] = world.planar_rot2d
        local[:, 2, 2] = 1.0
        quats = rotmat_to_quat(frames @ local)
        for k in range(4):
            rows[f'rot_{k}'][:m] = quats[:, k]
    if n:
        rows['x'][m:], rows['y'][m:], rows['z'][m:] = freeform.means.T
        for k in range(3):
            rows[f'scale_{k}'][m:] = freeform.log_scales[:, k]
        for k in range(4):
            rows[f'rot_{k}'][m:] = freeform.quats[:, k]

    rows['opacity'] = np.concatenate([planar.opacity_logits, freeform.opacity_logits])
    dc, rest = _sh_columns(np.concatenate([planar.sh, freeform.sh]))
    for k in range(3):
        rows[f'f_dc_{k}'] = dc[:, k]
    for k in range(rest.shape[1]):
        rows[f'f_rest_{k}'] = rest[:, k]

    planes = np.empty(len(scene.planes), dtype=[('id', '<i4'), ('ox', '<f8'), ('oy', '<f8'), ('oz', '<f8'),
                                                ('nx', '<f8'), ('ny', '<f8'), ('nz', '<f8'), ('labels', 'O')])
    for k, plane in enumerate(scene.planes):
        planes[k] = (plane.id, *plane.origin, *plane.normal, np.asarray(plane.labels, dtype=np.int32))

    ply = PlyData(
        [PlyElement.describe(rows, 'vertex'),
         PlyElement.describe(planes, 'plane', val_types={'labels': 'i4'}, len_types={'labels': 'u1'})],
        text=False, byte_order='<', comments=[f'sh_degree {scene.sh_degree}'],
    )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ply.write(str(path))


def _ply_error_offset(data, exc):
    end = data.find(b'end_header')
    if end < 0:
        return 0
    header_len = data.index(b'\n', end) + 1 if b'\n' in data[end:] else len(data)
    element, row = getattr(exc, 'element', None), getattr(exc, 'row', None)
    if element is not None and row is not None and getattr(element, 'name', None) == 'vertex':
        try:
            return min(len(data), header_len + int(row) * element.dtype('<').itemsize)
        except (TypeError, ValueError):
            pass
    return len(data)


def read_scene_ply(path):
    """Inverse of write_scene_ply; malformed or truncated files raise ParseError."""
    path = Path(path)
    data = path.read_bytes()
    try:
        ply = PlyData.read(io.BytesIO(data))
        degree = None
        for comment in ply.comments:
            match = SH_DEGREE_COMMENT.match(comment.strip())
            if match:
                degree = int(match.group(1))
        if degree is None:
            raise ParseError('Missing sh_degree comment.', path=path, offset=0)
        vertex = ply['vertex'].data
        plane_rows = ply['plane'].data
    except ParseError:
        raise
    except (PlyParseError, KeyError, ValueError, IndexError, TypeError) as exc:
        raise ParseError('Malformed scene PLY: %(error)s', path=path, offset=_ply_error_offset(data, exc),
                         params={'error': exc}) from exc

    sh_count = (degree + 1) ** 2
    expected = {name for name, _ in _vertex_fields(sh_count)}
    missing = sorted(expected - set(vertex.dtype.names or ()))
    if missing:
        raise ParseError('Scene PLY lacks properties %(names)s.', path=path, offset=0,
                         params={'names': ', '.join(missing)})

    def col(name, mask):
        return np.asarray(vertex[name][mask], dtype=np.float64)

    planar_rows = vertex['kind'] == KIND_PLANAR
    free_rows = vertex['kind'] == KIND_FREEFORM
    dc = np.stack([np.asarray(vertex[f'f_dc_{k}'], dtype=np.float64) for k in range(3)], axis=1)
    rest = np.stack([np.asarray(vertex[f'f_rest_{k}'], dtype=np.float64)
                     for k in range(3 * (sh_count - 1))], axis=1) if sh_count > 1 else np.zeros((len(dc), 0))
    sh = _sh_from_columns(dc, rest, sh_count)

    planar = PlanarGaussians(
        plane_ids=np.asarray(vertex['plane_id'][planar_rows], dtype=np.int64),
        means=np.stack([col('u', planar_rows), col('v', planar_rows)], axis=1),
        log_scales=np.stack([col('scale_0', planar_rows), col('scale_1', planar_rows)], axis=1),
        thetas=col('theta', planar_rows),
        opacity_logits=col('opacity', planar_rows),
        sh=sh[planar_rows],
    )
    freeform = FreeformGaussians(
        means=np.stack([col(a, free_rows) for a in 'xyz'], axis=1),
        log_scales=np.stack([col(f'scale_{k}', free_rows) for k in range(3)], axis=1),
        quats=np.stack([col(f'rot_{k}', free_rows) for k in range(4)], axis=1),
        opacity_logits=col('opacity', free_rows),
        sh=sh[free_rows],
    )
    planes = [Plane(id=int(row['id']), origin=[row['ox'], row['oy'], row['oz']],
                    normal=[row['nx'], row['ny'], row['nz']], labels=tuple(int(x) for x in row['labels']))
              for row in plane_rows]
    scene = Scene(planes, planar, freeform, degree)
    try:
        scene.validate()
    except Exception as exc:
        raise ParseError('Inconsistent scene PLY: %(error)s', path=path, offset=0,
                         params={'error': exc}) from exc
    return scene


def write_json(data, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=False) + '\n')


def read_json(path):
    path = Path(path)
    text = path.read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError('Invalid JSON: %(error)s', path=path, offset=len(text[:exc.pos].encode()),
                         params={'error': exc.msg}) from exc


def write_cameras(cameras, path, indices=None):
    indices = range(len(cameras)) if indices is None else indices
    write_json({'cameras': [dict(index=int(i), **camera.to_dict()) for i, camera in zip(indices, cameras)]},
               path)


def read_cameras(path):
    """List of (index, Camera)."""
    data = read_json(path)
    try:
        return [(int(entry['index']), Camera.from_dict(entry)) for entry in data['cameras']]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError('Invalid camera file: %(error)s', path=path, offset=0,
                         params={'error': exc}) from exc


def write_png(image, path):
    """8-bit RGB (or grayscale) PNG from floats in [0, 1]; values are rounded to 1/255."""
    arr = np.round(np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr).save(path)


def read_png(path):
    try:
        with Image.open(path) as img:
            arr = np.asarray(img)
    except (OSError, ValueError) as exc:
        raise ParseError('Unreadable PNG: %(error)s', path=path, offset=0, params={'error': exc}) from exc
    return arr.astype(np.float64) / 255.0


def write_mask_png(mask, path):
    write_png(np.asarray(mask, dtype=np.float64), path)


def read_mask_png(path):
    return read_png(path) > 0.5


def write_pfm(array, path):
    """Little-endian float32 PFM; rows stored bottom to top."""
    arr = np.asarray(array, dtype='<f4')
    if arr.ndim == 3 and arr.shape[2] == 3:
        header = b'PF'
    elif arr.ndim == 2:
        header = b'Pf'
    else:
        raise InvalidArgumentError('PFM needs an (H, W) or (H, W, 3) array, got %(shape)s.',
                                   params={'shape': arr.shape})
    height, width = arr.shape[:2]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'wb') as fh:
        fh.write(header + b'\n' + f'{width} {height}\n'.encode() + b'-1.0\n')
        fh.write(np.ascontiguousarray(arr[::-1]).tobytes())


def read_pfm(path):
    path = Path(path)
    data = path.read_bytes()
    offset = 0
    lines = []
    for _ in range(3):
        end = data.find(b'\n', offset)
        if end < 0:
            raise ParseError('Truncated PFM header.', path=path, offset=len(data))
        lines.append(data[offset:end].strip())
        offset = end + 1
    kind = lines[0]
    if kind not in (b'PF', b'Pf'):
        raise ParseError('Not a PFM file.', path=path, offset=0)
    try:
        width, height = (int(v) for v in lines[1].split())
        scale = float(lines[2])
    except ValueError as exc:
        raise ParseError('Malformed PFM header.', path=path, offset=0) from exc
    channels = 3 if kind == b'PF' else 1
    dtype = '<f4' if scale < 0 else '>f4'
    count = width * height * channels
    if len(data) - offset < 4 * count:
        raise ParseError('Truncated PFM data: expected %(want)s bytes.', path=path, offset=len(data),
                         params={'want': 4 * count})
    arr = np.frombuffer(data, dtype=dtype, count=count, offset=offset)
    shape = (height, width, 3) if channels == 3 else (height, width)
    return arr.reshape(shape)[::-1].astype(np.float64)


def write_obj(mesh, path, labels_path=None):
    """OBJ with one 'o plane_<id>' group per plane plus a JSON sidecar of per-triangle labels."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ['# planar mesh']
    lines += [f'v {x!r} {y!r} {z!r}' for x, y, z in mesh.vertices.tolist()]
    for label in np.unique(mesh.labels):
        lines.append(f'o plane_{int(label)}')
        lines += [f'f {a + 1} {b + 1} {c + 1}' for a, b, c in mesh.triangles[mesh.labels == label].tolist()]
    path.write_text('\n'.join(lines) + '\n')
    labels_path = Path(labels_path) if labels_path else path.with_suffix('.labels.json')
    order = np.concatenate([np.flatnonzero(mesh.labels == label) for label in np.unique(mesh.labels)]) \
        if len(mesh.labels) else np.zeros(0, dtype=np.int64)
    write_json({'planes': [int(x) for x in np.unique(mesh.labels)],
                'labels': [int(x) for x in mesh.labels[order]]}, labels_path)


def read_obj(path):
    """SceneMesh from an OBJ written by write_obj (triangle labels from the object groups)."""
    path = Path(path)
    data = path.read_bytes()
    vertices, triangles, labels = [], [], []
    current = -1
    offset = 0
    for raw in data.splitlines(keepends=True):
        line = raw.decode('utf-8', errors='replace').strip()
        try:
            if line.startswith('v '):
                vertices.append([float(x) for x in line.split()[1:4]])
            elif line.startswith('f '):
                triangles.append([int(tok.split('/')[0]) - 1 for tok in line.split()[1:4]])
                labels.append(current)
            elif line.startswith('o '):
                name = line.split(maxsplit=1)[1]
                current = int(name.rsplit('_', 1)[1]) if name.startswith('plane_') else -1
        except (ValueError, IndexError) as exc:
            raise ParseError('Malformed OBJ line: %(line)s', path=path, offset=offset,
                             params={'line': line}) from exc
        offset += len(raw)
    try:
        return SceneMesh(np.asarray(vertices).reshape(-1, 3), np.asarray(triangles).reshape(-1, 3),
                         np.asarray(labels, dtype=np.int64))
    except InvalidArgumentError as exc:
        raise ParseError('Inconsistent OBJ: %(error)s', path=path, offset=0, params={'error': exc}) from exc


def write_log(records, path):
    """Training log as JSON lines."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w') as fh:
        for record in records:
            fh.write(json.dumps(record) + '\n')


def read_log(path):
    path = Path(path)
    records = []
    offset = 0
    for raw in path.read_bytes().splitlines(keepends=True):
        if raw.strip():
            try:
                records.append(json.loads(raw))
            except json.JSONDecodeError as exc:
                raise ParseError('Invalid log record.', path=path, offset=offset + exc.pos) from exc
        offset += len(raw)
    return records


def write_points_ply(points, colors, path):
    rows = np.empty(len(points), dtype=[(a, '<f8') for a in ('x', 'y', 'z', 'red', 'green', 'blue')])
    for k, name in enumerate('xyz'):
        rows[name] = points[:, k]
    for k, name in enumerate(('red', 'green', 'blue')):
        rows[name] = colors[:, k]
    PlyData([PlyElement.describe(rows, 'vertex')], byte_order='<').write(str(path))


def read_points_ply(path):
    path = Path(path)
    data = path.read_bytes()
    try:
        vertex = PlyData.read(io.BytesIO(data))['vertex'].data
        points = np.stack([np.asarray(vertex[a], dtype=np.float64) for a in 'xyz'], axis=1)
        colors = np.stack([np.asarray(vertex[a], dtype=np.float64) for a in ('red', 'green', 'blue')], axis=1)
    except (PlyParseError, KeyError, ValueError, IndexError, TypeError) as exc:
        raise ParseError('Malformed point PLY: %(error)s', path=path, offset=_ply_error_offset(data, exc),
                         params={'error': exc}) from exc
    return points, colors


def write_planes(planes, path):
    write_json({'planes': [{'id': p.id, 'origin': p.origin.tolist(), 'normal': p.normal.tolist(),
                            'labels': list(p.labels)} for p in planes]}, path)


def read_planes(path):
    data = read_json(path)
    try:
        return [Plane(id=int(p['id']), origin=p['origin'], normal=p['normal'], labels=tuple(p.get('labels', ())))
                for p in data['planes']]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError('Invalid plane file: %(error)s', path=path, offset=0, params={'error': exc}) from exc


def write_dataset(dataset, root):
    """
    Dataset directory: cameras.json, images/NNN.pfm (+ .png preview), depths/NNN.pfm,
    masks/NNN_LL.png, planes.json and init_points.ply.
    """
    root = Path(root)
    write_cameras([v.camera for v in dataset.views], root / 'cameras.json', [v.index for v in dataset.views])
    for view in dataset.views:
        name = f'{view.index:03d}'
        write_pfm(view.image, root / 'images' / f'{name}.pfm')
        write_png(view.image, root / 'images' / f'{name}.png')
        if view.depth is not None:
            write_pfm(view.depth, root / 'depths' / f'{name}.pfm')
        for label, mask in view.masks.items():
            write_mask_png(mask, root / 'masks' / f'{name}_{label:02d}.png')
    write_planes(dataset.gt_planes, root / 'planes.json')
    if dataset.init_points is not None:
        colors = dataset.init_colors if dataset.init_colors is not None else np.full_like(dataset.init_points, 0.5)
        write_points_ply(dataset.init_points, colors, root / 'init_points.ply')


def read_dataset(root):
    root = Path(root)
    if not (root / 'cameras.json').exists():
        raise FileNotFoundError(f'{root / "cameras.json"} not found')
    views = []
    for index, camera in read_cameras(root / 'cameras.json'):
        name = f'{index:03d}'
        image = read_pfm(root / 'images' / f'{name}.pfm')
        depth_path = root / 'depths' / f'{name}.pfm'
        depth = read_pfm(depth_path) if depth_path.exists() else None
        masks = {}
        for mask_path in sorted((root / 'masks').glob(f'{name}_*.png')):
            masks[int(mask_path.stem.split('_')[1])] = read_mask_png(mask_path)
        views.append(View(index=index, camera=camera, image=image, depth=depth, masks=masks))
    planes = read_planes(root / 'planes.json') if (root / 'planes.json').exists() else []
    points = colors = None
    if (root / 'init_points.ply').exists():
        points, colors = read_points_ply(root / 'init_points.ply')
    return Dataset(views=views, gt_planes=planes, init_points=points, init_colors=colors)
