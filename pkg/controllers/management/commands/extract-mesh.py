"""Planar mesh extraction command."""
import logging
from pathlib import Path

from controllers.base_controller import BaseCommand, add_record_arguments, record_overrides
from engines.mesh_engine import extract_scene_mesh
from models.config_model import MeshConfig
from utils.decorators import command_handler, requires_files
from utils.serializers import read_dataset, read_scene_ply, write_obj

logger = logging.getLogger(__name__)


class Command(BaseCommand):
    name = 'extract-mesh'
    help = 'Extract a labelled planar mesh from a trained scene and its dataset masks.'
    config_class = MeshConfig
    config_section = 'mesh'

    def add_arguments(self, parser):
        parser.add_argument('scene', help='scene PLY')
        parser.add_argument('dataset', help='dataset directory (cameras and masks)')
        parser.add_argument('--out', required=True, help='output directory')
        add_record_arguments(parser, MeshConfig)

    @command_handler
    @requires_files('scene', 'dataset')
    def handle(self, *args, **options):
        config = self.load_config(options, **record_overrides(options, MeshConfig))
        scene = read_scene_ply(options['scene'])
        dataset = read_dataset(options['dataset'])
        mesh = extract_scene_mesh(scene, dataset, config, threads=options['threads'])

        out = Path(options['out'])
        write_obj(mesh, out / 'mesh.obj')
        self.echo_config(out, options, config, scene=Path(options['scene']).name)
        if mesh.is_empty:
            logger.warning('No plane produced a mesh')
        return self.emit({'planes': len(set(mesh.labels.tolist())), 'triangles': len(mesh.triangles),
                          'area': mesh.area})
