"""Human-readable tables and grid summaries built from evaluation reports."""
from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from absa_consensus.errors import DataError
from absa_consensus.metrics import EvalReport
from absa_consensus.models import format_decimal
from absa_consensus.stats import ScoreTable, SignificanceReport, condition_annotation

logger = logging.getLogger(__name__)

METRICS = ('c_prec', 'c_rec', 'c_f1')
METRIC_LABELS = {'c_prec': 'cPrec', 'c_rec': 'cRec', 'c_f1': 'cF1'}
NA = 'n/a'

_K_DIR = re.compile(r"^k(\d+)$")
_SEED_DIR = re.compile(r"^seed(-?\d+)$")


def format_percent(value):
    return format_decimal(value * 100.0)


def format_p(p):
    return NA if p is None else f"{p:.4g}"


def condition_label(k):
    return 'Baseline' if k == 1 else f"{k} Views"


def _table(header, rows):
    widths = [max(len(str(cell)) for cell in column) for column in zip(header, *rows)]
    lines = ['  '.join(str(cell).ljust(width) for cell, width in zip(header, widths)).rstrip()]
    lines.append('  '.join('-' * width for width in widths))
    for row in rows:
        lines.append('  '.join(str(cell).ljust(width) for cell, width in zip(row, widths)).rstrip())
    return '\n'.join(lines)


def render_eval_report(report):
    rows = [[METRIC_LABELS[m], format_percent(getattr(report, m))] for m in METRICS]
    rows += [['n_pred', report.n_pred], ['n_gold', report.n_gold]]
    text = _table(['metric', 'value'], rows)

    if not report.assignments:
        return f"{text}\n\nInstances: {NA}\n"
    instance_rows = [
        [iid, len(a.pairs), len(a.unmatched_pred), len(a.unmatched_gold), format_decimal(a.ctp_sum)]
        for iid, a in sorted(report.assignments.items())
    ]
    detail = _table(['id', 'matched', 'unmatched_pred', 'unmatched_gold', 'sum_cTP'], instance_rows)
    return f"{text}\n\n{detail}\n"


def render_significance_report(report, title=None):
    lines = [title] if title else []
    normality_rows = [
        [c, NA if r.w is None else f"{r.w:.4f}", format_p(r.p), 'yes' if r.normal else 'no']
        for c, r in report.normality.items()
    ]
    lines.append(_table(['condition', 'W', 'p', 'normal'], normality_rows))
    lines.append('')
    lines.append(
        f"Omnibus {report.omnibus_test}: statistic={report.omnibus_statistic:.4f} "
        f"p={format_p(report.omnibus_p)} (alpha={report.alpha})"
    )
    lines.append('')
    if report.pairwise:
        pair_rows = [
            [f"{e.first} vs {e.second}", e.test, f"{e.statistic:.4f}", format_p(e.p_raw),
             format_p(e.p_adjusted), e.stars or '-']
            for e in report.pairwise
        ]
        lines.append(_table(['pair', 'test', 'statistic', 'p_raw', 'p_holm', 'stars'], pair_rows))
    else:
        lines.append(f"Pairwise: {NA}")
    return '\n'.join(lines) + '\n'


@dataclass
class GridSummary:
    """Seed-averaged metrics per subset and k, with optional cF1 annotations"""
    cells: dict[str, dict[int, dict[str, float]]] = field(default_factory=dict)
    annotations: dict[str, dict[int, str]] = field(default_factory=dict)

    @property
    def k_values(self):
        return sorted({k for by_k in self.cells.values() for k in by_k})

    def to_dict(self):
        return {
            subset: {
                f"k{k}": {
                    **{m: by_k[k][m] for m in METRICS},
                    'seeds': by_k[k]['seeds'],
                    'annotation': self.annotations.get(subset, {}).get(k, ''),
                }
                for k in sorted(by_k)
            }
            for subset, by_k in sorted(self.cells.items())
        }


def render_results_table(summary):
    header = ['subset']
    for k in summary.k_values:
        header += [f"{condition_label(k)} {METRIC_LABELS[m]}" for m in METRICS]

    rows = []
    for subset, by_k in sorted(summary.cells.items()):
        row = [subset]
        for k in summary.k_values:
            cell = by_k.get(k)
            if cell is None:
                row += [NA] * len(METRICS)
                continue
            marks = summary.annotations.get(subset, {}).get(k, '')
            row += [format_percent(cell['c_prec']), format_percent(cell['c_rec']),
                    format_percent(cell['c_f1']) + marks]
        rows.append(row)
    if not rows:
        return f"Results: {NA}\n"
    return _table(header, rows) + '\n'


def render(report):
    """(machine-readable dict, text) for any report type this package writes"""
    if isinstance(report, EvalReport):
        return report.to_dict(), render_eval_report(report)
    if isinstance(report, SignificanceReport):
        return report.to_dict(), render_significance_report(report)
    if isinstance(report, GridSummary):
        return report.to_dict(), render_results_table(report)
    if isinstance(report, dict) and all(isinstance(r, SignificanceReport) for r in report.values()):
        if not report:
            return {}, f"Significance: {NA}\n"
        data = {name: r.to_dict() for name, r in sorted(report.items())}
        text = '\n'.join(render_significance_report(r, title=f"== {name} ==") for name, r in sorted(report.items()))
        return data, text
    raise TypeError(f"Cannot render {type(report).__name__}")


def collect_grid(task_root):
    """
    Discover ``{subset}/k{K}/seed{S}/report.json`` under one task directory.

    Returns subset -> k -> seed -> EvalReport.
    """
    task_root = Path(task_root)
    grid = {}
    for report_path in sorted(task_root.glob('*/k*/seed*/report.json')):
        seed_dir = report_path.parent
        k_match = _K_DIR.match(seed_dir.parent.name)
        seed_match = _SEED_DIR.match(seed_dir.name)
        if not k_match or not seed_match:
            continue
        subset = seed_dir.parent.parent.name
        try:
            data = json.loads(report_path.read_text(encoding='utf-8'))
        except (OSError, json.JSONDecodeError) as e:
            raise DataError(f"Cannot read {report_path}: {e}") from e
        k, seed = int(k_match.group(1)), int(seed_match.group(1))
        grid.setdefault(subset, {}).setdefault(k, {})[seed] = EvalReport.from_dict(data)
    return grid


def summarize_grid(grid):
    summary = GridSummary()
    for subset, by_k in grid.items():
        for k, by_seed in by_k.items():
            reports = [by_seed[s] for s in sorted(by_seed)]
            cell = {m: float(np.mean([getattr(r, m) for r in reports])) for m in METRICS}
            cell['seeds'] = len(reports)
            summary.cells.setdefault(subset, {})[k] = cell
    return summary


def score_tables(grid, metric='c_f1'):
    """One ScoreTable per subset with conditions ordered by k"""
    tables = {}
    for subset, by_k in sorted(grid.items()):
        ks = sorted(by_k)
        seed_sets = {tuple(sorted(by_k[k])) for k in ks}
        if len(seed_sets) != 1:
            raise DataError(f"Subset {subset} has different seeds per k: {sorted(seed_sets)}")
        conditions = [condition_label(k) for k in ks]
        scores = {
            condition_label(k): [getattr(by_k[k][s], metric) for s in sorted(by_k[k])] for k in ks
        }
        tables[subset] = ScoreTable(conditions, scores)
    return tables


def annotate_summary(summary, reports):
    for subset, report in reports.items():
        ks = sorted(summary.cells.get(subset, {}))
        conditions = [condition_label(k) for k in ks]
        summary.annotations[subset] = {
            k: condition_annotation(report, conditions, condition_label(k)) for k in ks
        }
    return summary


def select_best_k(summary):
    """k with the highest cF1 averaged over subsets; ties go to the smaller k"""
    if not summary.cells:
        raise DataError('No evaluated grid cells to choose k from')
    averages = {}
    for k in summary.k_values:
        values = [by_k[k]['c_f1'] for by_k in summary.cells.values() if k in by_k]
        averages[k] = float(np.mean(values))
    best = max(sorted(averages), key=lambda k: averages[k])
    logger.info(
        'Mean cF1 per k: ' + ', '.join(f"k={k}: {format_percent(v)}" for k, v in sorted(averages.items()))
    )
    return best, averages
