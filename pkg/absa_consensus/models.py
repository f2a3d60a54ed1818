from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from decimal import ROUND_HALF_EVEN, Decimal

from absa_consensus.errors import ShapeError

VA_MIN = 1.0
VA_MAX = 9.0
# (9 - 1)^2 + (9 - 1)^2
D_MAX = 128.0

IMPLICIT_PLACEHOLDER = 'NULL'

_TWO_PLACES = Decimal('0.01')


class TaskKind(enum.Enum):
    DIM_ASTE = 'DimASTE'
    DIM_ASQP = 'DimASQP'

    @property
    def has_category(self):
        return self is TaskKind.DIM_ASQP

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        normalized = str(value).strip().lower()
        for member in cls:
            if member.value.lower() == normalized or member.name.lower() == normalized:
                return member
        raise ValueError(f"Unknown task: {value}")


@dataclass(frozen=True)
class VAPair:
    valence: float
    arousal: float

    def in_range(self):
        return VA_MIN <= self.valence <= VA_MAX and VA_MIN <= self.arousal <= VA_MAX

    def clamped(self):
        return VAPair(
            min(VA_MAX, max(VA_MIN, self.valence)),
            min(VA_MAX, max(VA_MIN, self.arousal)),
        )

    def compact(self):
        """Render as the organizers' ``V#A`` string"""
        return f"{format_decimal(self.valence)}#{format_decimal(self.arousal)}"


@dataclass(frozen=True)
class SentimentTuple:
    aspect: str
    opinion: str
    va: VAPair
    category: str | None = None

    def with_va(self, va):
        return replace(self, va=va)


@dataclass(frozen=True)
class ReviewInstance:
    id: str
    text: str
    gold: tuple[SentimentTuple, ...] | None = None


@dataclass(frozen=True)
class PredictionRun:
    """Validated tuples of one stochastic generation for one instance"""
    instance_id: str
    run_index: int
    tuples: tuple[SentimentTuple, ...] = ()
    failed: bool = False
    error: str | None = None


@dataclass
class DatasetFile:
    task: TaskKind
    language: str = ''
    domain: str = ''
    instances: list[ReviewInstance] = field(default_factory=list)

    def by_id(self):
        return {instance.id: instance for instance in self.instances}


def format_decimal(value):
    """Two decimals, half-even; float noise below 1e-10 is discarded first"""
    return str(Decimal(f"{value:.10f}").quantize(_TWO_PLACES, rounding=ROUND_HALF_EVEN))


def normalize_category(label):
    return label.strip().upper()


def check_shape(t, task):
    if task.has_category and t.category is None:
        raise ShapeError(f"{task.value} tuple is missing a category: {t}")
    if not task.has_category and t.category is not None:
        raise ShapeError(f"{task.value} tuple must not carry a category: {t}")


def tuple_key(t, task):
    """Categorical identity of a tuple; VA never takes part"""
    check_shape(t, task)
    if task.has_category:
        return (t.aspect.strip(), normalize_category(t.category), t.opinion.strip())
    return (t.aspect.strip(), t.opinion.strip())


def va_sq_distance(p, g):
    return (p.valence - g.valence) ** 2 + (p.arousal - g.arousal) ** 2
