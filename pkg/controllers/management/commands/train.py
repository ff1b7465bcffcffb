"""Training command."""
import logging
import time
from pathlib import Path

from controllers.base_controller import BaseCommand, add_record_arguments, record_overrides
from engines.train_engine import Trainer
from models.config_model import PlaneInitConfig, TrainConfig
from utils.decorators import command_handler, requires_files
from utils.helpers import format_duration
from utils.serializers import read_dataset, read_scene_ply, write_json, write_log, write_planes, write_scene_ply

logger = logging.getLogger(__name__)

PLANE_INIT_PREFIX = 'plane_init_'


class Command(BaseCommand):
    """Reconstruct a scene from a dataset; flags mirror TrainConfig, ablation switches included."""
    name = 'train'
    help = 'Train a hybrid (or 3d-only) scene on a dataset.'
    config_class = TrainConfig
    config_section = 'train'
    config_filename = 'config.json'

    def add_arguments(self, parser):
        parser.add_argument('dataset', help='dataset directory')
        parser.add_argument('--out', required=True, help='output run directory')
        parser.add_argument('--init-scene', help='start from this scene PLY instead of initialising')
        add_record_arguments(parser, TrainConfig, skip=('seed', 'mode'))
        parser.add_argument('--mode', choices=('hybrid', '3d-only'), default=None)
        add_record_arguments(parser, PlaneInitConfig, prefix=PLANE_INIT_PREFIX)

    def build_config(self, options):
        overrides = record_overrides(options, TrainConfig)
        overrides.pop('plane_init', None)
        overrides['seed'] = options['seed']
        config = self.load_config(options, **overrides)
        plane_overrides = record_overrides(options, PlaneInitConfig, prefix=PLANE_INIT_PREFIX)
        if plane_overrides:
            config = config.with_overrides(plane_init=config.plane_init.with_overrides(**plane_overrides))
        return config

    @command_handler
    @requires_files('dataset', 'init_scene')
    def handle(self, *args, **options):
        config = self.build_config(options)
        dataset = read_dataset(options['dataset'])
        scene = read_scene_ply(options['init_scene']) if options['init_scene'] else None
        out = Path(options['out'])

        started = time.perf_counter()
        trainer = Trainer(dataset, config, scene=scene, threads=options['threads'])
        state = trainer.run(progress=self.progress(options))
        elapsed = time.perf_counter() - started

        write_scene_ply(state.scene, out / 'scene.ply')
        write_log(state.log, out / 'log.jsonl')
        write_planes(state.scene.planes, out / 'planes.json')
        write_json(state.registry.to_dict(), out / 'registry.json')
        self.echo_config(out, options, config, dataset=str(Path(options['dataset']).name))
        logger.info('Run written to %s in %s', out, format_duration(elapsed))
        return self.emit({
            'iterations': state.iteration,
            'planes': len(state.scene.planes),
            'planar': len(state.scene.planar),
            'freeform': len(state.scene.freeform),
            'final_loss': state.log[-1]['loss'] if state.log else None,
        })
