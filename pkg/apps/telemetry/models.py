import threading
from dataclasses import dataclass, field

from django.db import models
from django.utils.translation import gettext_lazy as _

FORMAT_HEADER = 'recist-metrics v1'

ORDER_VIOLATION = 'OrderViolation'


class ExportFormat(models.TextChoices):
    CSV = 'csv', _('CSV')
    JSONL = 'jsonl', _('JSON lines')


class CpuMode(models.TextChoices):
    SYNTHETIC = 'synthetic', _('Synthetic')
    PROCESS = 'process', _('Process')


@dataclass(frozen=True)
class Event:
    sequence: int
    time: float
    layer: str
    kind: str
    node: str = ''
    payload: dict = field(default_factory=dict)


class EventStream:
    """Append-only, thread-safe record of layer events.

    An event stamped earlier than the last accepted one is not appended;
    an ``OrderViolation`` event carrying it is appended instead.
    """

    def __init__(self, events=None):
        self.events = list(events or [])
        self._lock = threading.Lock()

    def __len__(self):
        return len(self.events)

    def __iter__(self):
        return iter(self.snapshot())

    @property
    def last_time(self):
        return self.events[-1].time if self.events else None

    def append(self, time, layer, kind, node='', payload=None):
        with self._lock:
            sequence = len(self.events)
            last = self.last_time
            if last is not None and time < last:
                event = Event(sequence, last, 'telemetry', ORDER_VIOLATION, node, {
                    'layer': layer, 'kind': kind, 'time': time, 'payload': dict(payload or {}),
                })
            else:
                event = Event(sequence, time, layer, kind, node, dict(payload or {}))
            self.events.append(event)
            return event

    def snapshot(self):
        with self._lock:
            return list(self.events)

    def of_kind(self, *kinds):
        return [event for event in self.snapshot() if event.kind in kinds]

    @property
    def violations(self):
        return self.of_kind(ORDER_VIOLATION)


@dataclass
class CpuSeries:
    values: list
    synthetic: bool = False

    @property
    def mean(self):
        return sum(self.values) / len(self.values) if self.values else 0.0

    @property
    def peak(self):
        return max(self.values) if self.values else 0.0


@dataclass
class RecoveryRecord:
    """One healing episode, from the failure flag to the knowledge handoff"""

    node: str
    flagged: float
    recovered: float
    containment: float = 0.0
    diagnosis: float = 0.0
    meta: float = 0.0
    knowledge: float = 0.0
    paths: int = 0
    calls: int = 0
    verdicts: dict = field(default_factory=dict)
    escalated: bool = False
    cpu_mean: float = 0.0
    cpu_max: float = 0.0

    @property
    def elapsed(self):
        return self.recovered - self.flagged

    @property
    def layer_total(self):
        return self.containment + self.diagnosis + self.meta + self.knowledge


@dataclass(frozen=True)
class DecisionQualityRates:
    best: float
    accepted: float
    rejected: float
    harmful: float
    rdr: float
    responses: int

    def as_row(self):
        return {
            'Best': self.best,
            'Accepted': self.accepted,
            'Rejected': self.rejected,
            'Harmful': self.harmful,
            'RDR': self.rdr,
            'responses': self.responses,
        }
