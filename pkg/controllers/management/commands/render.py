"""Render command: scene + cameras -> colour PNG, depth PFM (+ preview) and plane mask PNGs."""
import logging
from pathlib import Path

import numpy as np

from controllers.base_controller import BaseCommand
from engines.splat_engine import render
from utils.decorators import command_handler, requires_files
from utils.exceptions import UsageError
from utils.serializers import read_cameras, read_scene_ply, write_mask_png, write_pfm, write_png

logger = logging.getLogger(__name__)


def depth_preview(depth, valid):
    """Depth normalised to [0, 1] over valid pixels, for viewing only."""
    out = np.zeros_like(depth)
    if valid.any():
        lo, hi = depth[valid].min(), depth[valid].max()
        out[valid] = 1.0 - (depth[valid] - lo) / max(hi - lo, 1e-12)
    return out


class Command(BaseCommand):
    name = 'render'
    help = 'Render a scene from the cameras of a camera file.'

    def add_arguments(self, parser):
        parser.add_argument('scene', help='scene PLY')
        parser.add_argument('cameras', help='camera JSON (e.g. <dataset>/cameras.json)')
        parser.add_argument('--out', required=True, help='output directory')
        parser.add_argument('--view', type=int, action='append', help='render only these view indices')

    @command_handler
    @requires_files('scene', 'cameras')
    def handle(self, *args, **options):
        scene = read_scene_ply(options['scene'])
        cameras = read_cameras(options['cameras'])
        if options['view']:
            wanted = set(options['view'])
            unknown = sorted(wanted - {index for index, _ in cameras})
            if unknown:
                raise UsageError('Unknown view indices %(ids)s.', params={'ids': unknown})
            cameras = [(index, camera) for index, camera in cameras if index in wanted]

        out = Path(options['out'])
        for index, camera in cameras:
            fb = render(scene, camera, threads=options['threads'])
            name = f'{index:03d}'
            write_png(fb.rgb, out / f'{name}_rgb.png')
            write_pfm(fb.depth, out / f'{name}_depth.pfm')
            write_png(depth_preview(fb.depth, fb.valid), out / f'{name}_depth.png')
            for plane_id in fb.plane_ids:
                write_mask_png(fb.mask(plane_id) > 0.5, out / f'{name}_mask_{int(plane_id):02d}.png')
            logger.debug('Rendered view %d', index)
        self.echo_config(out, options, scene=Path(options['scene']).name, views=[i for i, _ in cameras])
        return self.emit({'views': len(cameras), 'out': str(out)})
