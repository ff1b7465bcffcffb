"""Mesh evaluation command: distance and segmentation metrics."""
import logging
from pathlib import Path

from django.conf import settings

from controllers.base_controller import BaseCommand
from engines.metrics_engine import mesh_distance_metrics, mesh_segmentation_metrics
from utils.decorators import command_handler, requires_files
from utils.exceptions import UsageError
from utils.serializers import read_obj, write_json

logger = logging.getLogger(__name__)


class Command(BaseCommand):
    name = 'eval-mesh'
    help = 'Distance and segmentation metrics of a predicted mesh against a ground-truth mesh.'

    def add_arguments(self, parser):
        parser.add_argument('pred', help='predicted OBJ')
        parser.add_argument('gt', help='ground-truth OBJ')
        parser.add_argument('--out', required=True, help='output directory for mesh_metrics.json')
        parser.add_argument('--threshold', type=float, default=settings.F1_THRESHOLD)
        parser.add_argument('--samples', type=int, default=settings.MESH_SAMPLES)

    @command_handler
    @requires_files('pred', 'gt')
    def handle(self, *args, **options):
        threshold, samples = options['threshold'], options['samples']
        if threshold <= 0 or samples <= 0:
            raise UsageError('threshold and samples must be positive.')
        pred, gt = read_obj(options['pred']), read_obj(options['gt'])
        seed = self.seed(options)
        metrics = mesh_distance_metrics(pred, gt, threshold, samples, seed)
        metrics.update(mesh_segmentation_metrics(pred, gt, samples, seed))
        metrics['threshold'] = threshold

        out = Path(options['out'])
        write_json(metrics, out / 'mesh_metrics.json')
        self.echo_config(out, options, threshold=threshold, samples=samples)
        return self.emit(metrics)
