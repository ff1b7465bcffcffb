"""Synthetic dataset generation command."""
import logging
from pathlib import Path

from controllers.base_controller import BaseCommand, add_record_arguments, record_overrides
from engines.synth_engine import box_plane_meshes, dataset_digest, generate_box_scene
from models.config_model import SynthConfig
from utils.decorators import command_handler
from utils.serializers import write_dataset, write_obj, write_scene_ply

logger = logging.getLogger(__name__)


class Command(BaseCommand):
    """Generate a box-room dataset (images, depths, masks, GT scene and GT mesh)."""
    name = 'synth'
    help = 'Generate a synthetic box-room dataset.'
    config_class = SynthConfig
    config_section = 'synth'
    config_filename = 'config.json'

    def add_arguments(self, parser):
        parser.add_argument('--out', required=True, help='output dataset directory')
        add_record_arguments(parser, SynthConfig)

    @command_handler
    def handle(self, *args, **options):
        config = self.load_config(options, **record_overrides(options, SynthConfig))
        out = Path(options['out'])

        scene, planes, dataset = generate_box_scene(config, seed=self.seed(options), threads=options['threads'],
                                                    progress=self.progress(options))
        write_dataset(dataset, out)
        write_scene_ply(scene, out / 'gt_scene.ply')
        write_obj(box_plane_meshes(config, planes), out / 'gt_mesh.obj')
        self.echo_config(out, options, config)

        digest = dataset_digest(dataset)
        logger.info('Dataset written to %s', out)
        return self.emit({'views': len(dataset), 'planes': len(planes), 'digest': digest})
