"""
Significance testing of cF1 scores across experimental conditions.

Procedure per table: Shapiro-Wilk on every condition, then an omnibus
gatekeeper (one-way ANOVA when every condition looks normal, Kruskal-Wallis
otherwise). Only when the omnibus p is below alpha are all condition pairs
compared (pooled t-test when both members look normal, Mann-Whitney U
otherwise). Holm-Bonferroni runs over every pairwise p of one subtask.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps
from statsmodels.stats.multitest import multipletests

from absa_consensus.errors import DataError, DegenerateSampleError, DomainError

logger = logging.getLogger(__name__)

ANOVA = 'anova'
KRUSKAL = 'kruskal-wallis'
TTEST = 't-test'
WELCH = 'welch-t-test'
MANN_WHITNEY = 'mann-whitney-u'

# exact Mann-Whitney null distribution up to this pooled size
EXACT_MWU_MAX_N = 16
SHAPIRO_MAX_N = 5000


@dataclass
class ScoreTable:
    conditions: list[str]
    scores: dict[str, list[float]]

    def __post_init__(self):
        if len(self.conditions) < 2:
            raise DataError(f"A score table needs at least two conditions, got {self.conditions}")
        counts = {len(self.scores.get(c, [])) for c in self.conditions}
        if len(counts) != 1:
            raise DataError(f"Conditions have different seed counts: {sorted(counts)}")
        if counts.pop() < 3:
            raise DataError('Every condition needs at least three seeds')
        for condition in self.conditions:
            if not all(math.isfinite(v) for v in self.scores[condition]):
                raise DataError(f"Non-finite score in condition {condition}")

    def means(self):
        return {c: float(np.mean(self.scores[c])) for c in self.conditions}


@dataclass
class NormalityResult:
    w: float | None
    p: float | None
    normal: bool


@dataclass
class PairwiseResult:
    first: str
    second: str
    test: str
    statistic: float
    p_raw: float
    p_adjusted: float | None = None

    @property
    def stars(self):
        return significance_stars(self.p_adjusted)


@dataclass
class SignificanceReport:
    alpha: float
    normality: dict[str, NormalityResult]
    omnibus_test: str
    omnibus_statistic: float
    omnibus_p: float
    pairwise: list[PairwiseResult] = field(default_factory=list)
    means: dict[str, float] = field(default_factory=dict)

    @property
    def gate_passed(self):
        return self.omnibus_p < self.alpha

    def pair(self, first, second):
        for entry in self.pairwise:
            if {entry.first, entry.second} == {first, second}:
                return entry
        return None

    def to_dict(self):
        return {
            'alpha': self.alpha,
            'normality': {
                c: {'W': r.w, 'p': r.p, 'normal': r.normal} for c, r in self.normality.items()
            },
            'omnibus': {'test': self.omnibus_test, 'statistic': self.omnibus_statistic, 'p': self.omnibus_p},
            'pairwise': [
                {
                    'pair': [e.first, e.second],
                    'test': e.test,
                    'statistic': e.statistic,
                    'p_raw': e.p_raw,
                    'p_adjusted': e.p_adjusted,
                    'stars': e.stars,
                }
                for e in self.pairwise
            ],
            'means': self.means,
        }


def significance_stars(p):
    if p is None:
        return ''
    if p < 0.001:
        return '***'
    if p < 0.01:
        return '**'
    if p < 0.05:
        return '*'
    return ''


def _as_array(sample):
    return np.asarray(list(sample), dtype=float)


def shapiro_wilk(sample):
    x = _as_array(sample)
    if x.size < 3:
        raise DomainError(f"Shapiro-Wilk needs at least 3 values, got {x.size}")
    if x.size > SHAPIRO_MAX_N:
        raise DomainError(f"Shapiro-Wilk is only calibrated up to {SHAPIRO_MAX_N} values")
    if np.ptp(x) == 0:
        raise DegenerateSampleError('Shapiro-Wilk is undefined for a zero-variance sample')
    result = sps.shapiro(x)
    return float(result.statistic), float(result.pvalue)


def anova_oneway(groups):
    arrays = [_as_array(g) for g in groups]
    if len(arrays) < 2 or any(a.size < 2 for a in arrays):
        raise DomainError('One-way ANOVA needs at least two groups of two values')
    if all(np.ptp(a) == 0 for a in arrays):
        raise DegenerateSampleError('One-way ANOVA is undefined without within-group variance')
    result = sps.f_oneway(*arrays)
    return float(result.statistic), float(result.pvalue)


def kruskal_wallis(groups):
    arrays = [_as_array(g) for g in groups]
    if len(arrays) < 2 or any(a.size < 1 for a in arrays):
        raise DomainError('Kruskal-Wallis needs at least two non-empty groups')
    pooled = np.concatenate(arrays)
    if pooled.size < 3:
        raise DomainError('Kruskal-Wallis needs at least three values in total')
    if np.ptp(pooled) == 0:
        return 0.0, 1.0
    result = sps.kruskal(*arrays)
    return float(result.statistic), float(result.pvalue)


def t_test_independent(a, b, welch=False):
    x, y = _as_array(a), _as_array(b)
    if x.size < 2 or y.size < 2:
        raise DomainError('The t-test needs at least two values per sample')
    if np.ptp(x) == 0 and np.ptp(y) == 0:
        raise DegenerateSampleError('The t-test is undefined with zero pooled variance')
    result = sps.ttest_ind(x, y, equal_var=not welch)
    return float(result.statistic), float(result.pvalue)


def mann_whitney_u(a, b):
    x, y = _as_array(a), _as_array(b)
    if x.size < 1 or y.size < 1:
        raise DomainError('Mann-Whitney U needs two non-empty samples')
    pooled = np.concatenate([x, y])
    tie_free = np.unique(pooled).size == pooled.size
    method = 'exact' if tie_free and pooled.size <= EXACT_MWU_MAX_N else 'asymptotic'
    result = sps.mannwhitneyu(x, y, alternative='two-sided', method=method)
    return float(result.statistic), min(1.0, float(result.pvalue))


def holm_bonferroni(pvals):
    pvals = [float(p) for p in pvals]
    for p in pvals:
        if not 0.0 <= p <= 1.0:
            raise DomainError(f"p-value outside [0, 1]: {p}")
    if not pvals:
        return []
    _, adjusted, _, _ = multipletests(pvals, method='holm')
    return [float(p) for p in adjusted]


def _normality(table, alpha):
    results = {}
    for condition in table.conditions:
        try:
            w, p = shapiro_wilk(table.scores[condition])
        except DegenerateSampleError:
            results[condition] = NormalityResult(None, None, False)
            continue
        results[condition] = NormalityResult(w, p, p >= alpha)
    return results


def _unadjusted_report(table, alpha, welch=False):
    normality = _normality(table, alpha)
    groups = [table.scores[c] for c in table.conditions]

    if all(r.normal for r in normality.values()):
        omnibus_test = ANOVA
        statistic, p = anova_oneway(groups)
    else:
        omnibus_test = KRUSKAL
        statistic, p = kruskal_wallis(groups)

    report = SignificanceReport(alpha, normality, omnibus_test, statistic, p, means=table.means())
    if not report.gate_passed:
        logger.info(f"Omnibus {omnibus_test} p={p:.4g} >= {alpha}; skipping pairwise comparisons")
        return report

    for first, second in itertools.combinations(table.conditions, 2):
        a, b = table.scores[first], table.scores[second]
        if normality[first].normal and normality[second].normal:
            test = WELCH if welch else TTEST
            statistic, p = t_test_independent(a, b, welch=welch)
        else:
            test = MANN_WHITNEY
            statistic, p = mann_whitney_u(a, b)
        report.pairwise.append(PairwiseResult(first, second, test, statistic, p))
    return report


def significance_for_subtask(tables, alpha=0.05, welch=False):
    """Run every table, then Holm-correct all pairwise p-values of the subtask together"""
    reports = {name: _unadjusted_report(table, alpha, welch) for name, table in tables.items()}
    family = [entry for name in reports for entry in reports[name].pairwise]
    for entry, adjusted in zip(family, holm_bonferroni([e.p_raw for e in family])):
        entry.p_adjusted = adjusted
    return reports


def significance_pipeline(table, alpha=0.05, welch=False):
    return significance_for_subtask({'table': table}, alpha, welch)['table']


def condition_annotation(report, conditions, condition, symbols=('*', '†', '‡')):
    """Markers for significant improvements of ``condition`` over the leading conditions"""
    marks = ''
    for reference, symbol in zip(conditions, symbols):
        if reference == condition:
            break
        entry = report.pair(reference, condition)
        if entry is None or report.means[condition] <= report.means[reference]:
            continue
        marks += symbol * len(entry.stars)
    return marks
