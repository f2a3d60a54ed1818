"""Strict-majority voting over k validated runs of one instance."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

from absa_consensus.errors import DomainError, TransportError
from absa_consensus.models import SentimentTuple, VAPair, tuple_key

logger = logging.getLogger(__name__)


@dataclass
class ConsensusResult:
    tuples: list[SentimentTuple]
    support: dict[tuple, int]
    k: int
    threshold: int
    failed_runs: list[int] = field(default_factory=list)


def default_threshold(k):
    """Smallest count strictly greater than k/2"""
    if k < 1:
        raise DomainError(f"k must be at least 1, got {k}")
    return k // 2 + 1


def bounded_mean(values):
    """Correctly rounded mean, never outside [min, max] of its inputs"""
    mean = math.fsum(values) / len(values)
    return min(max(values), max(min(values), mean))


def aggregate(runs, threshold, task):
    if threshold < 1:
        raise DomainError(f"threshold must be at least 1, got {threshold}")
    if threshold > len(runs):
        raise DomainError(f"threshold {threshold} exceeds the {len(runs)} available runs")

    occurrences = {}
    for run in runs:
        for t in run.tuples:
            # dict preserves first-appearance order across runs
            occurrences.setdefault(tuple_key(t, task), []).append(t)

    support = {key: len(group) for key, group in occurrences.items()}
    final = []
    for key, group in occurrences.items():
        if len(group) < threshold:
            continue
        va = VAPair(bounded_mean([t.va.valence for t in group]), bounded_mean([t.va.arousal for t in group]))
        final.append(group[0].with_va(va))

    return ConsensusResult(final, support, len(runs), threshold)


def aggregate_instance(runs, task, threshold=None, strict=False):
    """Vote over the runs that succeeded; the threshold follows the surviving k"""
    failed = [run.run_index for run in runs if run.failed]
    usable = [run for run in runs if not run.failed]
    if failed:
        instance_id = runs[0].instance_id
        if strict:
            raise TransportError(f"Instance {instance_id}: runs {failed} failed and strict mode is on")
        logger.warning(
            f"Instance {instance_id}: {len(failed)} of {len(runs)} runs failed, voting over {len(usable)}"
        )
    if not usable:
        return ConsensusResult([], {}, 0, 0, failed)

    # an override only applies while all k runs are present
    effective = threshold if threshold is not None and not failed else default_threshold(len(usable))
    result = aggregate(usable, effective, task)
    result.failed_runs = failed
    return result
