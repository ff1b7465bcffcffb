"""Report command: summary table over training runs (markdown, optional HTML and PDF)."""
import logging
from pathlib import Path

import markdown

from controllers.base_controller import BaseCommand
from utils.decorators import command_handler, requires_files
from utils.exceptions import UsageError
from utils.helpers import generate_report_pdf
from utils.serializers import read_json, read_log

logger = logging.getLogger(__name__)

COLUMNS = (
    ('Run', 'run'),
    ('Mode', 'mode'),
    ('PSNR', 'psnr'),
    ('SSIM', 'ssim'),
    ('LPIPS', 'lpips'),
    ('Depth RMSE', 'rmse'),
    ('Planar depth RMSE', 'planar_rmse'),
    ('AbsRel', 'abs_rel'),
    ('delta<1.25', 'delta_1'),
    ('Chamfer', 'chamfer'),
    ('F1', 'f1'),
    ('VOI', 'voi'),
    ('Planes', 'planes'),
    ('Primitives', 'primitives'),
    ('% planar', 'planar_percentage'),
    ('Final loss', 'final_loss'),
)


def collect_run(run_dir):
    """Merge config, log and metric files found in one run directory into a flat row."""
    run_dir = Path(run_dir)
    row = {'run': run_dir.name}
    config_path = run_dir / 'config.json'
    if config_path.exists():
        row['mode'] = read_json(config_path).get('config', {}).get('mode')
    log_path = run_dir / 'log.jsonl'
    if log_path.exists():
        log = read_log(log_path)
        if log:
            row['final_loss'] = log[-1].get('loss')
            row['planes'] = log[-1].get('planes')
    for name in ('nvs_metrics.json', 'mesh_metrics.json'):
        path = run_dir / name
        if path.exists():
            row.update({k: v for k, v in read_json(path).items() if k in dict(COLUMNS).values() or k == 'planes'})
    return row


def format_cell(value):
    if value is None:
        return '-'
    if isinstance(value, float):
        return f'{value:.4f}' if abs(value) < 100 else f'{value:.2f}'
    return str(value)


def markdown_table(rows):
    headers = [heading for heading, _ in COLUMNS]
    lines = ['| ' + ' | '.join(headers) + ' |', '|' + '---|' * len(headers)]
    for row in rows:
        lines.append('| ' + ' | '.join(format_cell(row.get(key)) for _, key in COLUMNS) + ' |')
    return '\n'.join(lines)


class Command(BaseCommand):
    name = 'report'
    help = 'Summarise training logs and metrics of several runs in one table.'

    def add_arguments(self, parser):
        parser.add_argument('runs', nargs='+', help='run directories (train output + eval files)')
        parser.add_argument('--out', required=True, help='output directory')
        parser.add_argument('--title', default='Reconstruction summary')
        parser.add_argument('--html', action='store_true', help='also write report.html')
        parser.add_argument('--pdf', action='store_true', help='also write report.pdf')

    @command_handler
    @requires_files('runs')
    def handle(self, *args, **options):
        title = options['title']
        rows = [collect_run(run) for run in options['runs']]
        if not any(len(row) > 1 for row in rows):
            raise UsageError('No logs or metrics found in the given run directories.')

        notes = ['LPIPS needs a pretrained network and is not computed.',
                 'Depth metrics are averaged over evaluated views; planar depth uses plane-mask pixels only.']
        text = f'# {title}\n\n{markdown_table(rows)}\n\n' + '\n'.join(f'- {note}' for note in notes) + '\n'

        out = Path(options['out'])
        out.mkdir(parents=True, exist_ok=True)
        (out / 'report.md').write_text(text)
        if options['html']:
            body = markdown.markdown(text, extensions=['tables'])
            (out / 'report.html').write_text(f'<!DOCTYPE html>\n<html><head><meta charset="utf-8">'
                                             f'<title>{title}</title></head><body>\n{body}\n</body></html>\n')
        if options['pdf']:
            table = [[format_cell(row.get(key)) for _, key in COLUMNS] for row in rows]
            (out / 'report.pdf').write_bytes(
                generate_report_pdf(title, [title for title, _ in COLUMNS], table, notes))
        self.echo_config(out, options, runs=[Path(run).name for run in options['runs']])
        logger.info('Report written to %s', out)
        return text
