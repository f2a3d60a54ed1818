from __future__ import annotations

import logging
import re
import tomllib
from pathlib import Path

from absa_consensus.errors import TemplateError
from absa_consensus.models import SentimentTuple, TaskKind, VAPair
from absa_consensus.parsing import serialize_tuples

logger = logging.getLogger(__name__)

SLOT_RE = re.compile(r"\{\{\s*([a-zA-Z_][a-zA-Z0-9_]*)\s*\}\}")
REQUIRED_SLOTS = ('element_descriptions', 'va_scale', 'output_format', 'text')

TEMPLATES_DIR = Path(__file__).resolve().parent.parent / 'templates' / 'prompts'
DEFAULT_TEMPLATE = TEMPLATES_DIR / 'en.txt'
DEFAULT_SLOTS = TEMPLATES_DIR / 'slots_en.toml'

_FORMAT_EXAMPLES = {
    TaskKind.DIM_ASTE: [
        SentimentTuple('Decor', 'nice', VAPair(7.00, 7.17)),
    ],
    TaskKind.DIM_ASQP: [
        SentimentTuple('Decor', 'nice', VAPair(7.00, 7.17), 'AMBIENCE#GENERAL'),
    ],
}


def load_template(path=None):
    path = Path(path) if path else DEFAULT_TEMPLATE
    try:
        return path.read_text(encoding='utf-8')
    except OSError as e:
        raise TemplateError(f"Cannot read prompt template {path}: {e}") from e


def load_slot_values(path=None):
    """Slot values per task from a TOML file with [DimASTE] / [DimASQP] tables"""
    path = Path(path) if path else DEFAULT_SLOTS
    try:
        with open(path, 'rb') as f:
            data = tomllib.load(f)
    except (OSError, tomllib.TOMLDecodeError) as e:
        raise TemplateError(f"Cannot read slot file {path}: {e}") from e

    values = {}
    for task in TaskKind:
        section = data.get(task.value, {})
        values[task] = {**data.get('common', {}), **section}
    return values


def output_format_block(task):
    return serialize_tuples(_FORMAT_EXAMPLES[task], task)


def build_prompt(template, instance, task, slots=None):
    """Fill every {{slot}}; the review text is inserted verbatim"""
    present = set(SLOT_RE.findall(template))
    missing = [slot for slot in REQUIRED_SLOTS if slot not in present]
    if missing:
        raise TemplateError(f"Template lacks required slots: {missing}")

    values = dict(slots or {})
    values.setdefault('output_format', output_format_block(task))
    values['text'] = instance.text

    def fill(match):
        name = match.group(1)
        if name not in values:
            raise TemplateError(f"Unresolved template slot: {name}")
        return str(values[name])

    # single pass, so braces inside the review text are never re-expanded
    return SLOT_RE.sub(fill, template)
