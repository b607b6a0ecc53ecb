"""Human-readable and JSON renderings of a MetricsReport."""

import logging

from honeyscope.utils import write_json

logger = logging.getLogger(__name__)

COLUMNS = ['precision', 'sensitivity', 'specificity', 'f1']


def _row(label, report):
    values = ' '.join(f"{getattr(report, column):>11.3f}" for column in COLUMNS)
    c = report.counts
    return f"{label:<12} {values} {c.tp:>6} {c.fp:>6} {c.fn:>6} {c.tn:>7}"


def format_table(report):
    header = f"{'':<12} " + ' '.join(f"{column:>11}" for column in COLUMNS) + \
        f" {'tp':>6} {'fp':>6} {'fn':>6} {'tn':>7}"
    lines = [header, '-' * len(header), _row('all', report)]
    for name, sub in report.per_class.items():
        lines.append(_row(name, sub))
    if report.undefined:
        lines.append(f"undefined (reported as 0): {', '.join(report.undefined)}")
    return '\n'.join(lines)


def format_pr_table(rows):
    lines = [f"{'threshold':>9} " + ' '.join(f"{column:>11}" for column in COLUMNS)]
    for row in rows:
        lines.append(f"{row['threshold']:>9.2f} " + ' '.join(f"{row[column]:>11.3f}" for column in COLUMNS))
    return '\n'.join(lines)


def write_report(path, report, pr_rows=None, settings=None):
    data = {'metrics': report.to_dict()}
    if pr_rows is not None:
        data['pr_table'] = pr_rows
    if settings is not None:
        data['settings'] = settings
    write_json(path, data)
    logger.info(f"Wrote evaluation report to {path}")
