"""
Continuous precision/recall/F1 over valence-arousal tuples.

A prediction earns credit only against a gold tuple of the same categorical
key, and that credit shrinks with the squared VA distance:
``cTP = 1 - dist / 128``. Within one key, predictions and golds are paired
one-to-one so that the summed cTP is maximal.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from absa_consensus.errors import ContractError, DataError
from absa_consensus.models import D_MAX, tuple_key, va_sq_distance

logger = logging.getLogger(__name__)


@dataclass
class MatchAssignment:
    pairs: list[tuple[int, int, float]] = field(default_factory=list)
    unmatched_pred: list[int] = field(default_factory=list)
    unmatched_gold: list[int] = field(default_factory=list)

    @property
    def ctp_sum(self):
        return sum(score for _, _, score in self.pairs)

    def to_dict(self):
        return {
            'pairs': [[p, g, score] for p, g, score in self.pairs],
            'unmatched_pred': list(self.unmatched_pred),
            'unmatched_gold': list(self.unmatched_gold),
        }


@dataclass
class EvalReport:
    c_prec: float
    c_rec: float
    c_f1: float
    n_pred: int
    n_gold: int
    sum_ctp: float
    assignments: dict[str, MatchAssignment] = field(default_factory=dict)

    def to_dict(self):
        return {
            'c_prec': self.c_prec,
            'c_rec': self.c_rec,
            'c_f1': self.c_f1,
            'n_pred': self.n_pred,
            'n_gold': self.n_gold,
            'sum_ctp': self.sum_ctp,
            'instances': {iid: self.assignments[iid].to_dict() for iid in sorted(self.assignments)},
        }

    @classmethod
    def from_dict(cls, data):
        try:
            assignments = {
                iid: MatchAssignment(
                    [tuple(pair) for pair in entry['pairs']],
                    list(entry['unmatched_pred']),
                    list(entry['unmatched_gold']),
                )
                for iid, entry in data.get('instances', {}).items()
            }
            return cls(
                float(data['c_prec']), float(data['c_rec']), float(data['c_f1']),
                int(data['n_pred']), int(data['n_gold']), float(data['sum_ctp']),
                assignments,
            )
        except (KeyError, TypeError, ValueError) as e:
            raise DataError(f"Malformed evaluation report: {e}") from e


def ctp(pred, gold, task=None):
    if task is not None and tuple_key(pred, task) != tuple_key(gold, task):
        raise ContractError(f"cTP is only defined for matching keys: {pred} vs {gold}")
    if not (pred.va.in_range() and gold.va.in_range()):
        raise ContractError(f"VA outside [1, 9]: {pred.va} vs {gold.va}")
    return 1.0 - va_sq_distance(pred.va, gold.va) / D_MAX


def _group_indices(tuples, task):
    groups = {}
    for index, t in enumerate(tuples):
        groups.setdefault(tuple_key(t, task), []).append(index)
    return groups


def match_instance(preds, golds, task):
    pred_groups = _group_indices(preds, task)
    gold_groups = _group_indices(golds, task)

    assignment = MatchAssignment()
    matched_pred = set()
    matched_gold = set()
    for key, p_idx in pred_groups.items():
        g_idx = gold_groups.get(key)
        if not g_idx:
            continue
        scores = np.array([[ctp(preds[p], golds[g]) for g in g_idx] for p in p_idx])
        rows, cols = linear_sum_assignment(scores, maximize=True)
        for r, c in zip(rows, cols):
            assignment.pairs.append((p_idx[r], g_idx[c], float(scores[r, c])))
            matched_pred.add(p_idx[r])
            matched_gold.add(g_idx[c])

    assignment.pairs.sort()
    assignment.unmatched_pred = [i for i in range(len(preds)) if i not in matched_pred]
    assignment.unmatched_gold = [i for i in range(len(golds)) if i not in matched_gold]
    return assignment


def _safe_div(num, den):
    return num / den if den else 0.0


def evaluate_instances(predictions, golds, task):
    """Score id -> tuples mappings that must cover the same ids"""
    missing = sorted(set(golds) - set(predictions))
    extra = sorted(set(predictions) - set(golds))
    if missing or extra:
        raise DataError(f"Prediction/gold id mismatch: missing={missing} extra={extra}")

    assignments = {}
    n_pred = n_gold = 0
    sum_ctp = 0.0
    # sorted ids keep the float summation order independent of input order
    for iid in sorted(golds):
        preds = list(predictions[iid])
        gold = list(golds[iid])
        assignment = match_instance(preds, gold, task)
        assignments[iid] = assignment
        n_pred += len(preds)
        n_gold += len(gold)
        sum_ctp += assignment.ctp_sum

    c_prec = _safe_div(sum_ctp, n_pred)
    c_rec = _safe_div(sum_ctp, n_gold)
    c_f1 = _safe_div(2 * c_prec * c_rec, c_prec + c_rec)
    return EvalReport(c_prec, c_rec, c_f1, n_pred, n_gold, sum_ctp, assignments)


def evaluate(pred_file, gold_file, task):
    from absa_consensus.dataset_io import load_dataset, load_predictions

    gold = load_dataset(gold_file, task)
    predictions = load_predictions(pred_file, task)
    report = evaluate_instances(predictions, {i.id: i.gold or () for i in gold.instances}, task)
    logger.info(
        f"Evaluated {pred_file}: cPrec={report.c_prec:.4f} cRec={report.c_rec:.4f} cF1={report.c_f1:.4f}"
    )
    return report
