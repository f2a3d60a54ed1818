"""
On-disk formats.

Datasets and predictions are JSON lines of the form::

    {"ID": "...", "Text": "...", "Tuples": [{"Aspect": "...", "Category": "...", "Opinion": "...", "VA": "7.00#7.17"}]}

``Triplet`` / ``Quadruplet`` are accepted in place of ``Tuples`` and VA may be
either the compact ``"V#A"`` string or a ``{"valence": .., "arousal": ..}``
object. Every float written by this module carries exactly two decimals.
"""
from __future__ import annotations

import json
import logging
from pathlib import Path

from absa_consensus.errors import ConfigError, DataError
from absa_consensus.models import (
    DatasetFile,
    PredictionRun,
    ReviewInstance,
    check_shape,
)
from absa_consensus.parsing import record_to_tuple, tuple_to_record
from absa_consensus.utils.fs import write_file_safely
from absa_consensus.validation import CategoryWhitelist

logger = logging.getLogger(__name__)

TUPLE_FIELDS = ('Tuples', 'Quadruplet', 'Triplet', 'Quadruplets', 'Triplets')


def organizer_adapter(record):
    """Map organizer-style records onto the canonical ID / Text / Tuples layout"""
    if not isinstance(record, dict):
        return record
    adapted = dict(record)
    for name in TUPLE_FIELDS[1:]:
        if name in adapted and 'Tuples' not in adapted:
            adapted['Tuples'] = adapted.pop(name)
    return adapted


def _read_jsonl(path):
    path = Path(path)
    try:
        with open(path, 'r', encoding='utf-8', errors='replace') as f:
            lines = f.read().splitlines()
    except OSError as e:
        raise DataError(f"Cannot read {path}: {e}") from e

    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            yield lineno, json.loads(line)
        except json.JSONDecodeError as e:
            raise DataError(f"{path}:{lineno}: malformed JSON record: {e.msg}") from e


def _write_jsonl(path, records):
    lines = [json.dumps(record, ensure_ascii=False) for record in records]
    content = '\n'.join(lines) + '\n' if lines else ''
    result = write_file_safely(path, content)
    if not result['success']:
        raise DataError(f"Cannot write {path}: {result['error']}")


def _flatten_va(raw):
    record = {str(key).strip().lower(): value for key, value in raw.items()}
    va = record.pop('va', None)
    if isinstance(va, dict):
        va = {str(key).strip().lower(): value for key, value in va.items()}
        record.setdefault('valence', va.get('valence', va.get('v')))
        record.setdefault('arousal', va.get('arousal', va.get('a')))
    elif va is not None:
        record['va'] = va
    return record


def _parse_gold(raw_tuples, task, where):
    if not isinstance(raw_tuples, list):
        raise DataError(f"{where}: Tuples must be a list")
    gold = []
    for position, raw in enumerate(raw_tuples):
        if not isinstance(raw, dict):
            raise DataError(f"{where}: tuple {position} is not an object")
        t, reason = record_to_tuple(_flatten_va(raw), task)
        if t is None:
            raise DataError(f"{where}: tuple {position} rejected ({reason}): {raw}")
        if not t.va.in_range():
            raise DataError(f"{where}: tuple {position} has VA outside [1, 9]: {t.va}")
        gold.append(t)
    return tuple(gold)


def load_dataset(path, task, language='', domain='', adapter=organizer_adapter):
    instances = []
    seen = {}
    for lineno, record in _read_jsonl(path):
        where = f"{path}:{lineno}"
        if adapter is not None:
            record = adapter(record)
        if not isinstance(record, dict):
            raise DataError(f"{where}: record is not an object")
        if 'ID' not in record or not isinstance(record.get('Text'), str):
            raise DataError(f"{where}: record needs ID and Text")
        if not record['Text'].strip():
            raise DataError(f"{where}: review text is empty")

        instance_id = str(record['ID'])
        if instance_id in seen:
            raise DataError(f"{where}: duplicate id {instance_id} (first seen on line {seen[instance_id]})")
        seen[instance_id] = lineno

        gold = None
        if record.get('Tuples') is not None:
            gold = _parse_gold(record['Tuples'], task, where)
        instances.append(ReviewInstance(instance_id, record['Text'], gold))

    if not instances:
        logger.warning(f"Dataset {path} is empty")
    else:
        logger.info(f"Loaded {len(instances)} instances from {path}")
    return DatasetFile(task, language, domain, instances)


def load_predictions(path, task):
    """Prediction file in dataset format -> id -> tuple of SentimentTuple"""
    dataset = load_dataset(path, task)
    return {instance.id: instance.gold or () for instance in dataset.instances}


def _dataset_record(instance_id, text, tuples, task):
    record = {'ID': instance_id, 'Text': text}
    if tuples is None:
        return record
    rendered = []
    for t in tuples:
        check_shape(t, task)
        entry = {'Aspect': t.aspect}
        if task.has_category:
            entry['Category'] = t.category
        entry['Opinion'] = t.opinion
        entry['VA'] = t.va.compact()
        rendered.append(entry)
    record['Tuples'] = rendered
    return record


def save_dataset(dataset, path):
    _write_jsonl(path, [
        _dataset_record(i.id, i.text, i.gold, dataset.task) for i in dataset.instances
    ])


def save_predictions(dataset, predictions, path):
    """Write predictions in dataset order; instances without a prediction get an empty list"""
    _write_jsonl(path, [
        _dataset_record(i.id, i.text, predictions.get(i.id, ()), dataset.task) for i in dataset.instances
    ])


def save_runs(runs, path, task):
    records = []
    for instance_id in sorted(runs):
        instance_runs = sorted(runs[instance_id], key=lambda r: r.run_index)
        if not instance_runs:
            records.append({'id': instance_id, 'run': None})
            continue
        for run in instance_runs:
            records.append({
                'id': instance_id,
                'run': run.run_index,
                'failed': run.failed,
                'error': run.error,
                'tuples': [tuple_to_record(t, task) for t in run.tuples],
            })
    _write_jsonl(path, records)


def load_runs(path, task):
    """Reload runs grouped by instance; ids sorted, runs ordered by index"""
    grouped = {}
    for lineno, record in _read_jsonl(path):
        where = f"{path}:{lineno}"
        if not isinstance(record, dict) or 'id' not in record or 'run' not in record:
            raise DataError(f"{where}: run record needs id and run")
        instance_id = str(record['id'])
        runs = grouped.setdefault(instance_id, [])
        if record['run'] is None:
            continue

        tuples = []
        for position, raw in enumerate(record.get('tuples') or []):
            t, reason = record_to_tuple(raw, task)
            if t is None:
                raise DataError(f"{where}: tuple {position} rejected ({reason})")
            tuples.append(t)
        runs.append(PredictionRun(
            instance_id, int(record['run']), tuple(tuples),
            failed=bool(record.get('failed', False)), error=record.get('error'),
        ))

    result = {}
    for instance_id in sorted(grouped):
        runs = sorted(grouped[instance_id], key=lambda r: r.run_index)
        indices = [r.run_index for r in runs]
        if indices != list(range(len(runs))):
            raise DataError(f"{path}: instance {instance_id} has run indices {indices}, expected 0..{len(runs) - 1}")
        result[instance_id] = runs
    return result


def save_generations(generations, path):
    records = [
        g.to_record()
        for instance_id in sorted(generations)
        for g in sorted(generations[instance_id], key=lambda g: g.run_index)
    ]
    _write_jsonl(path, records)


def save_support(results, path, task):
    """Sidecar of per-key vote counts for every consensus result"""
    records = []
    for instance_id in sorted(results):
        result = results[instance_id]
        records.append({
            'id': instance_id,
            'k': result.k,
            'threshold': result.threshold,
            'failed_runs': list(result.failed_runs),
            'support': [{'key': list(key), 'count': count} for key, count in result.support.items()],
        })
    _write_jsonl(path, records)


def load_whitelist(path, domain='', language=''):
    path = Path(path)
    try:
        lines = path.read_text(encoding='utf-8').splitlines()
    except OSError as e:
        raise ConfigError(f"Cannot read category whitelist {path}: {e}") from e
    return CategoryWhitelist.from_labels(lines, domain, language)


def save_whitelist(wl, path):
    content = ''.join(f"{label}\n" for label in sorted(wl.labels))
    result = write_file_safely(path, content)
    if not result['success']:
        raise DataError(f"Cannot write {path}: {result['error']}")


def save_report(report, path):
    """Write ``<path>.json`` and the human-readable ``<path>.txt``"""
    from absa_consensus import reporting

    path = Path(path)
    data, text = reporting.render(report)
    targets = {
        path.with_suffix('.json'): json.dumps(data, sort_keys=True, indent=2, ensure_ascii=False) + '\n',
        path.with_suffix('.txt'): text,
    }
    for target, content in targets.items():
        result = write_file_safely(target, content)
        if not result['success']:
            raise DataError(f"Cannot write {target}: {result['error']}")
    return list(targets)


def dataset_stats(dataset):
    """Sentence and tuple counts, gold-less instances count as sentences only"""
    return {
        'sentences': len(dataset.instances),
        'tuples': sum(len(i.gold or ()) for i in dataset.instances),
    }


def merge_datasets(datasets):
    if not datasets:
        raise DataError('Nothing to merge')
    task = datasets[0].task
    merged = DatasetFile(task, datasets[0].language, datasets[0].domain)
    seen = set()
    for dataset in datasets:
        if dataset.task is not task:
            raise DataError(f"Cannot merge {dataset.task.value} data into {task.value}")
        for instance in dataset.instances:
            if instance.id in seen:
                raise DataError(f"Duplicate id across merged files: {instance.id}")
            seen.add(instance.id)
            merged.instances.append(instance)
    return merged