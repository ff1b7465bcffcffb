"""Novel-view synthesis evaluation command."""
import logging
from pathlib import Path

from controllers.base_controller import BaseCommand
from engines.metrics_engine import evaluate_nvs
from utils.decorators import command_handler, requires_files
from utils.exceptions import UsageError
from utils.serializers import read_dataset, read_scene_ply, write_json

logger = logging.getLogger(__name__)

SPLITS = ('test', 'train', 'all')


class Command(BaseCommand):
    name = 'eval-nvs'
    help = 'Image and depth metrics of a scene against a dataset.'

    def add_arguments(self, parser):
        parser.add_argument('scene', help='scene PLY')
        parser.add_argument('dataset', help='dataset directory')
        parser.add_argument('--split', choices=SPLITS, default='test')
        parser.add_argument('--out', required=True, help='output directory for nvs_metrics.json')

    @command_handler
    @requires_files('scene', 'dataset')
    def handle(self, *args, **options):
        split = options['split']
        scene = read_scene_ply(options['scene'])
        dataset = read_dataset(options['dataset'])
        views = {'test': dataset.test_views, 'train': dataset.train_views, 'all': dataset.views}[split]
        if not views:
            raise UsageError('The %(split)s split of %(path)s is empty.',
                             params={'split': split, 'path': options['dataset']})
        metrics = evaluate_nvs(scene, views, threads=options['threads'])
        metrics['split'] = split

        out = Path(options['out'])
        write_json(metrics, out / 'nvs_metrics.json')
        self.echo_config(out, options, scene=Path(options['scene']).name, split=split)
        return self.emit(metrics)
