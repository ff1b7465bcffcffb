"""Helper functions for the application."""
import hashlib
import io
import logging

import numpy as np
from reportlab.lib import colors
from reportlab.lib.pagesizes import A4, landscape
from reportlab.lib.styles import getSampleStyleSheet
from reportlab.platypus import Paragraph, SimpleDocTemplate, Spacer, Table, TableStyle

PURPOSES = {
    'shuffle': 1,
    'ransac': 2,
    'sample': 3,
    'planar_relocation': 4,
    'dead_relocation': 5,
    'noise': 6,
    'init': 7,
    'synth': 8,
    'metrics': 9,
}


class ColorFormatter(logging.Formatter):
    """Log formatter that colours the level name (TTY only, NO_COLOR unset)."""

    COLORS = {
        'DEBUG': '\033[36m',
        'INFO': '\033[32m',
        'WARNING': '\033[33m',
        'ERROR': '\033[31m',
        'CRITICAL': '\033[35m',
    }

    def format(self, record):
        color = self.COLORS.get(record.levelname)
        if color is None:
            return super().format(record)
        original = record.levelname
        record.levelname = f'{color}{original}\033[0m'
        try:
            return super().format(record)
        finally:
            record.levelname = original


def sigmoid(x):
    """Logistic function, stable for large |x|."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def logit(p):
    """Inverse of the logistic function."""
    p = np.asarray(p, dtype=np.float64)
    return np.log(p) - np.log1p(-p)


def rng_for(seed, iteration, purpose):
    """Generator for one (iteration, purpose) pair, derived from the run seed."""
    return np.random.default_rng([int(seed), int(iteration), PURPOSES[purpose]])


def array_digest(*arrays):
    """SHA-256 over the dtype, shape and bytes of every array."""
    h = hashlib.sha256()
    for arr in arrays:
        arr = np.ascontiguousarray(arr)
        h.update(str(arr.dtype).encode())
        h.update(str(arr.shape).encode())
        h.update(arr.tobytes())
    return h.hexdigest()


def format_duration(seconds):
    """Format a duration in seconds to a human-readable string."""
    minutes, secs = divmod(int(round(seconds)), 60)
    if minutes < 60:
        return f"{minutes}m {secs}s" if minutes else f"{secs}s"
    hours, minutes = divmod(minutes, 60)
    return f"{hours}h" if minutes == 0 else f"{hours}h {minutes}m"


def generate_report_pdf(title, headers, rows, notes=()):
    """Render a summary table to PDF bytes."""
    buffer = io.BytesIO()
    doc = SimpleDocTemplate(buffer, pagesize=landscape(A4))
    styles = getSampleStyleSheet()

    table = Table([list(headers)] + [[str(cell) for cell in row] for row in rows])
    table.setStyle(TableStyle([
        ('BACKGROUND', (0, 0), (-1, 0), colors.HexColor('#1a73e8')),
        ('TEXTCOLOR', (0, 0), (-1, 0), colors.white),
        ('FONTNAME', (0, 0), (-1, 0), 'Helvetica-Bold'),
        ('GRID', (0, 0), (-1, -1), 0.5, colors.gray),
        ('ALIGN', (1, 0), (-1, -1), 'RIGHT'),
    ]))

    story = [Paragraph(title, styles['Title']), Spacer(1, 12), table]
    for note in notes:
        story.extend([Spacer(1, 6), Paragraph(note, styles['Normal'])])
    doc.build(story)
    buffer.seek(0)
    return buffer.read()
