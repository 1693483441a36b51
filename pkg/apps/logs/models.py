import json
from dataclasses import dataclass, field

from django.db import models
from django.utils.translation import gettext_lazy as _


class LogSource(models.TextChoices):
    SYS = 'Sys', _('System')
    NET = 'Net', _('Network')
    CUSTOM = 'Custom', _('Custom')


class Dialect(models.TextChoices):
    CLOUD_STATELESS = 'CloudStateless', _('Cloud stateless metrics')
    ZOOKEEPER = 'ZooKeeper', _('ZooKeeper')
    HADOOP = 'Hadoop', _('Hadoop')
    OPENSSH = 'OpenSSH', _('OpenSSH')
    BGL = 'BGL', _('BlueGene/L')
    SYNTHETIC = 'Synthetic', _('Synthetic')


LOGHUB_DIALECTS = (Dialect.ZOOKEEPER, Dialect.HADOOP, Dialect.OPENSSH, Dialect.BGL)

# Record flags
UNHEALTHY = 'unhealthy'
DEGRADED = 'degraded'
ALERT = 'alert'


@dataclass(frozen=True)
class LogRecord:
    """One parsed log line or metrics row.

    ``timestamp`` is UTC epoch seconds. ``ref`` (``origin:line``) is the
    stable reference diagnosis evidence points at.
    """

    timestamp: float
    source: str
    text: str
    ref: str = ''
    dialect: str = ''
    node_hint: str = None
    severity: str = None
    fields: dict = field(default_factory=dict, compare=True, hash=False)
    flags: frozenset = frozenset()

    @property
    def unhealthy(self):
        return UNHEALTHY in self.flags

    @property
    def degraded(self):
        return DEGRADED in self.flags

    def canonical(self):
        return {
            'dialect': self.dialect,
            'fields': dict(sorted(self.fields.items())),
            'flags': sorted(self.flags),
            'node': self.node_hint,
            'ref': self.ref,
            'severity': self.severity,
            'source': self.source,
            'text': self.text,
            'timestamp': self.timestamp,
        }

    def to_json(self):
        return json.dumps(self.canonical(), sort_keys=True, separators=(',', ':'))

    @classmethod
    def from_canonical(cls, data):
        return cls(
            timestamp=float(data['timestamp']),
            source=data['source'],
            text=data['text'],
            ref=data.get('ref', ''),
            dialect=data.get('dialect', ''),
            node_hint=data.get('node'),
            severity=data.get('severity'),
            fields=dict(data.get('fields') or {}),
            flags=frozenset(data.get('flags') or ()),
        )


@dataclass(frozen=True)
class LogBundle:
    """Records of one node inside the closed window [start, end]"""

    node: str
    start: float
    end: float
    records: tuple = ()

    def __len__(self):
        return len(self.records)

    @property
    def refs(self):
        return [record.ref for record in self.records]

    def by_ref(self):
        return {record.ref: record for record in self.records}


@dataclass
class ParseReport:
    """Rows a parser skipped or degraded, by line number"""

    origin: str = ''
    lines: int = 0
    malformed: list = field(default_factory=list)
    degraded: list = field(default_factory=list)

    @property
    def malformed_count(self):
        return len(self.malformed)

    def as_dict(self):
        return {
            'origin': self.origin,
            'lines': self.lines,
            'malformed': list(self.malformed),
            'degraded': list(self.degraded),
        }
