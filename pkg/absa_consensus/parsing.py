"""
Turn raw generation text into SentimentTuples and back.

The canonical format is one JSON array of flat objects::

    [{"aspect":"Decor","opinion":"nice","valence":"7.00","arousal":"7.17"}]

DimASQP objects add a ``category`` key between aspect and opinion. When the
array as a whole does not decode, every balanced ``{...}`` fragment is
salvaged on its own so one bad element never costs the rest of the run.
"""
from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field

from pydantic import BaseModel, ConfigDict, ValidationError, field_validator, model_validator

from absa_consensus.models import SentimentTuple, VAPair, check_shape, format_decimal

logger = logging.getLogger(__name__)

MISSING_FIELD = 'missing-field'
BAD_NUMBER = 'bad-number'
NOT_AN_OBJECT = 'not-an-object'
TRUNCATED = 'truncated'

_FENCE_RE = re.compile(r"```(?:json)?(.*?)```", re.DOTALL | re.IGNORECASE)
_NUMBER_ERRORS = {'float_parsing', 'float_type', 'finite_number'}
# separators left between salvaged fragments that are not worth reporting
_FILLER_CHARS = '[], \t\r\n'
_FILLER = set(_FILLER_CHARS)


@dataclass
class ParseReport:
    tuples: list[SentimentTuple] = field(default_factory=list)
    rejected: list[tuple[str, str]] = field(default_factory=list)

    @property
    def fully_parsed(self):
        return not self.rejected


class _TupleRecord(BaseModel):
    model_config = ConfigDict(extra='ignore', allow_inf_nan=False)

    aspect: str
    opinion: str
    category: str | None = None
    valence: float
    arousal: float

    @model_validator(mode='before')
    @classmethod
    def _normalize_keys(cls, data):
        if not isinstance(data, dict):
            return data
        data = {str(key).strip().lower(): value for key, value in data.items()}
        # organizer-style "VA": "7.00#7.17"
        va = data.get('va')
        if isinstance(va, str) and '#' in va and 'valence' not in data and 'arousal' not in data:
            data['valence'], _, data['arousal'] = va.partition('#')
        return data

    @field_validator('aspect', 'opinion')
    @classmethod
    def _not_blank(cls, value):
        if not value.strip():
            raise ValueError('blank span')
        return value


def _reason_for(error):
    for detail in error.errors():
        if detail['type'] in _NUMBER_ERRORS:
            return BAD_NUMBER
    return MISSING_FIELD


def record_to_tuple(data, task):
    """Return (tuple, None) or (None, reason)"""
    if not isinstance(data, dict):
        return None, NOT_AN_OBJECT
    try:
        record = _TupleRecord.model_validate(data)
    except ValidationError as e:
        return None, _reason_for(e)

    category = None
    if task.has_category:
        if record.category is None or not record.category.strip():
            return None, MISSING_FIELD
        category = record.category
    return SentimentTuple(record.aspect, record.opinion, VAPair(record.valence, record.arousal), category), None


def _has_content(chars):
    return any(ch not in _FILLER for ch in chars)


def _scan_fragments(text):
    """Yield ('object', fragment) / ('garbage', text) / ('truncated', fragment) in order"""
    depth = 0
    in_string = False
    escaped = False
    start = None
    garbage = []

    for i, ch in enumerate(text):
        if depth == 0:
            if ch == '{':
                if _has_content(garbage):
                    yield 'garbage', ''.join(garbage).strip(_FILLER_CHARS)
                garbage = []
                depth = 1
                start = i
            else:
                garbage.append(ch)
            continue

        if in_string:
            if escaped:
                escaped = False
            elif ch == '\\':
                escaped = True
            elif ch == '"':
                in_string = False
        elif ch == '"':
            in_string = True
        elif ch == '{':
            depth += 1
        elif ch == '}':
            depth -= 1
            if depth == 0:
                yield 'object', text[start:i + 1]
                start = None

    if start is not None:
        yield 'truncated', text[start:]
    elif _has_content(garbage):
        yield 'garbage', ''.join(garbage).strip(_FILLER_CHARS)


_RECORD_KEYS = {'aspect', 'opinion'}


def _is_record(value):
    return isinstance(value, dict) and any(str(key).strip().lower() in _RECORD_KEYS for key in value)


def _flatten_records(value):
    """Unwrap {"tuples": [...]} style wrappers and nested arrays down to the records"""
    if isinstance(value, list):
        for element in value:
            yield from _flatten_records(element)
    elif isinstance(value, dict) and not _is_record(value):
        nested = [v for v in value.values() if isinstance(v, (list, dict))]
        if not nested:
            yield value
        for v in nested:
            yield from _flatten_records(v)
    else:
        yield value


def _decode_top_level(text):
    candidates = [text.strip()]
    fenced = _FENCE_RE.findall(text)
    if fenced:
        candidates.append('\n'.join(fenced).strip())
    for candidate in candidates:
        try:
            return json.loads(candidate)
        except json.JSONDecodeError:
            continue
    raise ValueError('no top-level JSON value')


def parse_generation(text, task):
    """Parse raw model output; never raises"""
    if isinstance(text, (bytes, bytearray)):
        text = bytes(text).decode('utf-8', errors='replace')
    text = text or ''
    report = ParseReport()

    try:
        payload = _decode_top_level(text)
    except ValueError:
        payload = None
    else:
        if not isinstance(payload, (list, dict)):
            report.rejected.append((text.strip(), NOT_AN_OBJECT))
            return report
        for element in _flatten_records(payload):
            t, reason = record_to_tuple(element, task)
            if t is None:
                report.rejected.append((json.dumps(element, ensure_ascii=False), reason))
            else:
                report.tuples.append(t)
        return report

    for kind, fragment in _scan_fragments(text):
        if kind == 'garbage':
            report.rejected.append((fragment, NOT_AN_OBJECT))
        elif kind == 'truncated':
            report.rejected.append((fragment, TRUNCATED))
        else:
            try:
                data = json.loads(fragment)
            except json.JSONDecodeError:
                report.rejected.append((fragment, NOT_AN_OBJECT))
                continue
            t, reason = record_to_tuple(data, task)
            if t is None:
                report.rejected.append((fragment, reason))
            else:
                report.tuples.append(t)

    if report.rejected:
        logger.debug(f"Salvaged {len(report.tuples)} tuples, rejected {len(report.rejected)} fragments")
    return report


def tuple_to_record(t, task):
    check_shape(t, task)
    record = {'aspect': t.aspect}
    if task.has_category:
        record['category'] = t.category
    record['opinion'] = t.opinion
    record['valence'] = format_decimal(t.va.valence)
    record['arousal'] = format_decimal(t.va.arousal)
    return record


def serialize_tuples(tuples, task):
    records = [tuple_to_record(t, task) for t in tuples]
    return json.dumps(records, ensure_ascii=False, separators=(',', ':'))
