from __future__ import annotations

import logging
from dataclasses import dataclass

from absa_consensus.errors import ConfigError
from absa_consensus.models import (
    IMPLICIT_PLACEHOLDER,
    PredictionRun,
    check_shape,
    normalize_category,
    tuple_key,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CategoryWhitelist:
    labels: frozenset[str]
    domain: str = ''
    language: str = ''

    @classmethod
    def from_labels(cls, labels, domain='', language=''):
        return cls(frozenset(normalize_category(label) for label in labels if label.strip()), domain, language)

    def __contains__(self, category):
        return category is not None and normalize_category(category) in self.labels

    def __len__(self):
        return len(self.labels)


def clamp_va(t):
    return t.with_va(t.va.clamped())


def _span_present(span, review_text, allow_placeholder):
    span = span.strip()
    if allow_placeholder and span == IMPLICIT_PLACEHOLDER:
        return True
    return span in review_text


def filter_spans(tuples, review_text, allow_placeholder=True):
    """Keep tuples whose aspect and opinion both occur verbatim in the review"""
    return [
        t for t in tuples
        if _span_present(t.aspect, review_text, allow_placeholder)
        and _span_present(t.opinion, review_text, allow_placeholder)
    ]


def filter_categories(tuples, wl, task):
    if not task.has_category:
        return list(tuples)
    if wl is None or not len(wl):
        raise ConfigError(f"{task.value} needs a non-empty category whitelist")
    return [t for t in tuples if t.category in wl]


def build_category_whitelist(train, domain='', language=''):
    labels = set()
    for instance in train:
        for t in instance.gold or ():
            if t.category is not None and t.category.strip():
                labels.add(normalize_category(t.category))
    if not labels:
        raise ConfigError('Training data carries no gold aspect categories to build a whitelist from')
    logger.info(f"Built category whitelist with {len(labels)} labels from {len(train)} instances")
    return CategoryWhitelist(frozenset(labels), domain, language)


def dedupe_by_key(tuples, task):
    seen = set()
    kept = []
    for t in tuples:
        key = tuple_key(t, task)
        if key in seen:
            continue
        seen.add(key)
        kept.append(t)
    return kept


def validate_run(tuples, review, wl, task, run_index=0, allow_placeholder=True):
    """clamp -> span filter -> category filter -> within-run key dedupe"""
    for t in tuples:
        check_shape(t, task)
    kept = [clamp_va(t) for t in tuples]
    kept = filter_spans(kept, review.text, allow_placeholder)
    kept = filter_categories(kept, wl, task)
    kept = dedupe_by_key(kept, task)
    dropped = len(tuples) - len(kept)
    if dropped:
        logger.debug(f"Instance {review.id} run {run_index}: dropped {dropped} of {len(tuples)} tuples")
    return PredictionRun(review.id, run_index, tuple(kept))
