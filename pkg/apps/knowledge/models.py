import threading
from dataclasses import dataclass, field

import numpy as np
from django.db import models
from django.utils.translation import gettext_lazy as _

from core.conf import section
from core.exceptions import InvalidParameter

from .exceptions import UnknownPartition, UnknownTopic


class StoreScope(models.TextChoices):
    LOCAL = 'Local', _('Local')
    GLOBAL = 'Global', _('Global')


class InsertOutcome(models.TextChoices):
    NEW_TOPIC = 'NewTopic', _('New topic')
    NEW_PARTITION = 'NewPartition', _('New partition')
    REINFORCED = 'Reinforced', _('Reinforced')


def normalize(vector):
    vector = np.asarray(vector, dtype=np.float64)
    norm = np.linalg.norm(vector)
    if norm == 0.0:
        return vector
    return vector / norm


def centroid(vectors):
    """Normalized mean of ``vectors``"""
    return normalize(np.mean(np.vstack(vectors), axis=0))


@dataclass(frozen=True)
class KnowledgeRecord:
    """A healed failure's topic, reason and solution"""

    topic: str
    reason: str
    solution: str
    source: str = ''
    timestamp: float = 0.0
    origin: str = ''
    version: int = 1
    supporting: bool = False

    def __post_init__(self):
        if not self.topic.strip() or not self.reason.strip():
            raise InvalidParameter(_('Knowledge records need a topic and a reason'), origin=self.origin)
        if self.version < 1:
            raise InvalidParameter(_('Record version must be positive'), origin=self.origin)

    @property
    def payload(self):
        return (self.topic, self.reason, self.solution)

    def as_dict(self):
        return {
            'topic': self.topic,
            'reason': self.reason,
            'solution': self.solution,
            'source': self.source,
            'timestamp': self.timestamp,
            'origin': self.origin,
            'version': self.version,
            'supporting': self.supporting,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            topic=data['topic'],
            reason=data['reason'],
            solution=data.get('solution', ''),
            source=data.get('source', ''),
            timestamp=float(data.get('timestamp', 0.0)),
            origin=data.get('origin', ''),
            version=int(data.get('version', 1)),
            supporting=bool(data.get('supporting', False)),
        )


@dataclass
class Member:
    record: KnowledgeRecord
    topic_vector: np.ndarray
    reason_vector: np.ndarray


@dataclass
class Partition:
    id: str
    members: list = field(default_factory=list)
    representative: np.ndarray = None
    version: int = 1

    def refresh(self):
        self.representative = centroid([member.reason_vector for member in self.members])


@dataclass
class Topic:
    id: str
    label: str
    partitions: list = field(default_factory=list)
    representative: np.ndarray = None

    def members(self):
        for partition in self.partitions:
            yield from partition.members

    def refresh(self):
        for partition in self.partitions:
            partition.refresh()
        self.representative = centroid([member.topic_vector for member in self.members()])

    def partition(self, partition_id):
        for partition in self.partitions:
            if partition.id == partition_id:
                return partition
        raise UnknownPartition(topic=self.id, partition=partition_id)


@dataclass(frozen=True)
class KnowledgeThresholds:
    topic: float = 0.75
    reason: float = 0.70
    merge: float = 0.90
    split: float = 0.60

    def __post_init__(self):
        for name in ('topic', 'reason', 'merge', 'split'):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InvalidParameter(_('Knowledge threshold out of range: {name}').format(name=name), value=value)

    @classmethod
    def from_settings(cls, **overrides):
        config = section('KNOWLEDGE')
        values = {
            'topic': config.get('THETA_TOPIC', 0.75),
            'reason': config.get('THETA_REASON', 0.70),
            'merge': config.get('THETA_MERGE', 0.90),
            'split': config.get('THETA_SPLIT', 0.60),
        }
        values.update(overrides)
        return cls(**values)


class RendezvousStore:
    """A local or global store of topics, each holding reason partitions.

    One writer at a time: services take ``lock`` around any mutation.
    ``revision`` counts completed writes; ``version_vector`` remembers the
    last revision synced from each peer.
    """

    def __init__(self, name, scope=StoreScope.LOCAL, thresholds=None, journal=None):
        self.name = name
        self.scope = StoreScope(scope)
        self.thresholds = thresholds or KnowledgeThresholds.from_settings()
        self.topics = []
        self.version_vector = {}
        self.reconciled = set()
        self.revision = 0
        self.journal = journal
        self.lock = threading.RLock()
        self._topic_seq = 0
        self._partition_seq = 0

    def __repr__(self):
        return f'<RendezvousStore {self.name} scope={self.scope.value} topics={len(self.topics)}>'

    def next_topic_id(self):
        self._topic_seq += 1
        return f'Z{self._topic_seq:03d}'

    def next_partition_id(self):
        self._partition_seq += 1
        return f'P{self._partition_seq:03d}'

    def topic(self, topic_id):
        for topic in self.topics:
            if topic.id == topic_id:
                return topic
        raise UnknownTopic(topic=topic_id)

    def members(self):
        for topic in self.topics:
            yield from topic.members()

    def records(self):
        return [member.record for member in self.members()]

    def find(self, origin):
        """(topic, partition, member) holding ``origin``, or None"""
        for topic in self.topics:
            for partition in topic.partitions:
                for member in partition.members:
                    if member.record.origin == origin:
                        return topic, partition, member
        return None

    @property
    def partition_count(self):
        return sum(len(topic.partitions) for topic in self.topics)

    def log(self, op, **fields):
        if self.journal is not None:
            self.journal.append(op, **fields)


@dataclass
class InsertReport:
    outcome: str
    topic: str
    partition: str
    comparisons: int = 0
    topic_merges: int = 0
    partition_merges: int = 0


@dataclass
class MergeReport:
    inserted: list = field(default_factory=list)
    replaced: list = field(default_factory=list)
    blended: list = field(default_factory=list)
    kept: list = field(default_factory=list)

    @property
    def empty(self):
        return not (self.inserted or self.replaced or self.blended or self.kept)

    def as_dict(self):
        return {
            'inserted': list(self.inserted),
            'replaced': list(self.replaced),
            'blended': list(self.blended),
            'kept': list(self.kept),
        }
