import itertools
import logging

import numpy as np
from django.utils.translation import gettext_lazy as _

from continuum.topology import format_number
from core.exceptions import InvalidParameter
from core.signals import emit
from reasoner.exceptions import EmbedderUnavailable
from reasoner.models import EmbedKind
from reasoner.rules import hash_embedding

from .exceptions import DimensionMismatch, InvariantViolation
from .models import (
    InsertOutcome,
    InsertReport,
    KnowledgeRecord,
    Member,
    MergeReport,
    Partition,
    Topic,
    centroid,
    normalize,
)

logger = logging.getLogger(__name__)

LAYER = 'knowledge'


class HashEmbedder:
    """Token-hash embedder that needs no reasoner"""

    def __init__(self, dimension=256):
        self.dimension = dimension

    def embed(self, text, kind=EmbedKind.REASON):
        return hash_embedding(text, self.dimension)


def _vector(vector):
    return np.asarray(vector, dtype=np.float64)


class KnowledgeService:
    """Service for the rendezvous-point knowledge stores"""

    @staticmethod
    def embed(text, kind, embedder):
        if not text or not text.strip():
            raise InvalidParameter(_('Cannot embed empty text'), kind=str(kind))
        vector = _vector(embedder.embed(text, EmbedKind(kind)))
        norm = np.linalg.norm(vector)
        if vector.ndim != 1 or not np.isfinite(norm) or norm == 0.0:
            raise EmbedderUnavailable(_('Embedder returned a degenerate vector'), kind=str(kind))
        return vector / norm

    @staticmethod
    def similarity(a, b):
        a, b = _vector(a), _vector(b)
        if a.shape != b.shape:
            raise DimensionMismatch(left=a.shape[0], right=b.shape[0])
        denominator = np.linalg.norm(a) * np.linalg.norm(b)
        if denominator == 0.0:
            return 0.0
        return float(np.clip(np.dot(a, b) / denominator, -1.0, 1.0))

    @staticmethod
    def _best(target, candidates, counters=None):
        """Index and similarity of the closest candidate; first wins ties"""
        if counters is not None:
            counters.bump('knowledge.comparisons', len(candidates))
        best_index, best_score = None, -2.0
        for index, candidate in enumerate(candidates):
            score = KnowledgeService.similarity(target, candidate.representative)
            if score > best_score:
                best_index, best_score = index, score
        return best_index, best_score

    @staticmethod
    def insert_knowledge(store, record, embedder=None, counters=None, vectors=None, stream=None):
        """Place ``record`` in ``store`` and restore the store invariants.

        ``vectors`` short-circuits embedding with a known (topic, reason) pair.
        """
        with store.lock:
            if vectors is None:
                vectors = (
                    KnowledgeService.embed(record.topic, EmbedKind.TOPIC, embedder),
                    KnowledgeService.embed(record.reason, EmbedKind.REASON, embedder),
                )
            topic_vector, reason_vector = (normalize(vector) for vector in vectors)
            member = Member(record, topic_vector, reason_vector)
            store.log('insert', record=record.as_dict(), topic_vector=topic_vector, reason_vector=reason_vector)
            thresholds = store.thresholds
            index, score = KnowledgeService._best(topic_vector, store.topics, counters)
            comparisons = len(store.topics)
            if index is None or score < thresholds.topic:
                partition = Partition(store.next_partition_id(), [member])
                topic = Topic(store.next_topic_id(), record.topic, [partition])
                store.topics.append(topic)
                outcome = InsertOutcome.NEW_TOPIC
            else:
                topic = store.topics[index]
                index, score = KnowledgeService._best(reason_vector, topic.partitions, counters)
                comparisons += len(topic.partitions)
                if score < thresholds.reason:
                    partition = Partition(store.next_partition_id(), [member])
                    topic.partitions.append(partition)
                    outcome = InsertOutcome.NEW_PARTITION
                else:
                    partition = topic.partitions[index]
                    partition.members.append(member)
                    partition.version += 1
                    outcome = InsertOutcome.REINFORCED
            topic.refresh()
            partition_merges = KnowledgeService.merge_partitions(store, topic.id, journal=False)
            topic_merges = KnowledgeService.merge_topics(store, journal=False)
            store.revision += 1
            located = store.find(record.origin) if record.origin else None
            if located is not None:
                topic, partition, _member = located
        report = InsertReport(
            outcome=outcome,
            topic=topic.id,
            partition=partition.id,
            comparisons=comparisons,
            topic_merges=topic_merges,
            partition_merges=partition_merges,
        )
        emit(stream, record.timestamp, LAYER, 'insert', record.source, outcome=str(outcome), store=store.name)
        logger.info(
            'knowledge_insert store=%s origin=%s outcome=%s topic=%s partition=%s comparisons=%s',
            store.name, record.origin, outcome.value, report.topic, report.partition, comparisons,
        )
        return report

    @staticmethod
    def merge_partitions(store, topic_id, journal=True):
        """Merge the most similar partition pair until none reaches θ_merge"""
        with store.lock:
            topic = store.topic(topic_id)
            if journal:
                store.log('merge_partitions', topic=topic_id)
            merged = 0
            while len(topic.partitions) > 1:
                pair, score = None, -2.0
                for left, right in itertools.combinations(range(len(topic.partitions)), 2):
                    value = KnowledgeService.similarity(
                        topic.partitions[left].representative, topic.partitions[right].representative,
                    )
                    if value > score:
                        pair, score = (left, right), value
                if score < store.thresholds.merge:
                    break
                keep, drop = topic.partitions[pair[0]], topic.partitions.pop(pair[1])
                keep.members.extend(drop.members)
                keep.version = max(keep.version, drop.version) + 1
                keep.refresh()
                merged += 1
                logger.debug('partitions_merged topic=%s keep=%s drop=%s similarity=%.6f', topic.id, keep.id, drop.id, score)
            if merged and journal:
                store.revision += 1
            return merged

    @staticmethod
    def merge_topics(store, journal=True):
        """Merge the most similar topic pair until none reaches θ_topic"""
        with store.lock:
            if journal:
                store.log('merge_topics')
            merged = 0
            while len(store.topics) > 1:
                pair, score = None, -2.0
                for left, right in itertools.combinations(range(len(store.topics)), 2):
                    value = KnowledgeService.similarity(
                        store.topics[left].representative, store.topics[right].representative,
                    )
                    if value > score:
                        pair, score = (left, right), value
                if score < store.thresholds.topic:
                    break
                keep, drop = store.topics[pair[0]], store.topics.pop(pair[1])
                keep.partitions.extend(drop.partitions)
                keep.refresh()
                KnowledgeService.merge_partitions(store, keep.id, journal=False)
                merged += 1
                logger.debug('topics_merged keep=%s drop=%s similarity=%.6f', keep.id, drop.id, score)
            if merged and journal:
                store.revision += 1
            return merged

    @staticmethod
    def divergence(vectors):
        """1 - mean pairwise similarity; 0 for fewer than two vectors"""
        pairs = list(itertools.combinations(vectors, 2))
        if not pairs:
            return 0.0
        return 1.0 - float(np.mean([KnowledgeService.similarity(a, b) for a, b in pairs]))

    @staticmethod
    def split_partition(store, topic_id, partition_id, journal=True):
        """Split a drifting partition in two; returns the resulting partition count.

        Two-means on reason embeddings, seeded by the least similar member
        pair, with one refinement pass. A split is reverted when either half
        would merge again with its sibling or another partition of the topic.
        """
        with store.lock:
            topic = store.topic(topic_id)
            partition = topic.partition(partition_id)
            if journal:
                store.log('split', topic=topic_id, partition=partition_id)
            members = partition.members
            if len(members) < 2:
                return 1
            vectors = [member.reason_vector for member in members]
            div = KnowledgeService.divergence(vectors)
            if div <= store.thresholds.split:
                return 1
            seeds, lowest = None, 2.0
            for left, right in itertools.combinations(range(len(vectors)), 2):
                value = KnowledgeService.similarity(vectors[left], vectors[right])
                if value < lowest:
                    seeds, lowest = (left, right), value
            centers = [vectors[seeds[0]], vectors[seeds[1]]]
            labels = KnowledgeService._assign(vectors, centers)
            if 0 in labels and 1 in labels:
                centers = [centroid([v for v, label in zip(vectors, labels) if label == group]) for group in (0, 1)]
                refined = KnowledgeService._assign(vectors, centers)
                if 0 in refined and 1 in refined:
                    labels = refined
            first = [member for member, label in zip(members, labels) if label == 0]
            second = [member for member, label in zip(members, labels) if label == 1]
            if not first or not second:
                return 1
            halves = [centroid([member.reason_vector for member in first]), centroid([member.reason_vector for member in second])]
            others = [other.representative for other in topic.partitions if other is not partition]
            mergeable = KnowledgeService.similarity(*halves) >= store.thresholds.merge or any(
                KnowledgeService.similarity(half, other) >= store.thresholds.merge
                for half in halves for other in others
            )
            if mergeable:
                logger.debug('split_reverted topic=%s partition=%s', topic_id, partition_id)
                return 1
            partition.members = first
            partition.version += 1
            partition.refresh()
            sibling = Partition(store.next_partition_id(), second)
            sibling.refresh()
            topic.partitions.insert(topic.partitions.index(partition) + 1, sibling)
            if journal:
                store.revision += 1
            logger.info(
                'partition_split topic=%s partition=%s sibling=%s div=%.6f sizes=%s/%s',
                topic_id, partition_id, sibling.id, div, len(first), len(second),
            )
            return 2

    @staticmethod
    def _assign(vectors, centers):
        return [
            0 if KnowledgeService.similarity(vector, centers[0]) >= KnowledgeService.similarity(vector, centers[1]) else 1
            for vector in vectors
        ]

    @staticmethod
    def reorganize(store, journal=True):
        """Merge then split everywhere until nothing changes; returns the number of changes"""
        with store.lock:
            if journal:
                store.log('reorganize')
            changes = KnowledgeService.merge_topics(store, journal=False)
            while True:
                step = 0
                for topic in list(store.topics):
                    step += KnowledgeService.merge_partitions(store, topic.id, journal=False)
                    for partition in list(topic.partitions):
                        step += KnowledgeService.split_partition(store, topic.id, partition.id, journal=False) - 1
                if not step:
                    break
                changes += step
            if changes and journal:
                store.revision += 1
            return changes

    @staticmethod
    def sync_global(global_store, local_store, counters=None, stream=None, time=0.0):
        """Fold a local store's records into the global store.

        Records are matched by origin id. A differing payload goes to the
        higher version; equal versions blend the reason embeddings weighted
        by their similarity and keep the global text. Re-syncing an
        unchanged local store does nothing.
        """
        report = MergeReport()
        with global_store.lock, local_store.lock:
            seen = global_store.version_vector.get(local_store.name)
            if seen == local_store.revision:
                return report
            for member in list(local_store.members()):
                KnowledgeService._sync_member(global_store, member, report, counters)
            global_store.version_vector[local_store.name] = local_store.revision
            global_store.log('synced', peer=local_store.name, revision=local_store.revision)
        emit(
            stream, time, LAYER, 'sync', local_store.name,
            inserted=len(report.inserted), replaced=len(report.replaced), blended=len(report.blended),
        )
        logger.info(
            'knowledge_sync peer=%s revision=%s inserted=%s replaced=%s blended=%s kept=%s',
            local_store.name, local_store.revision, len(report.inserted), len(report.replaced),
            len(report.blended), len(report.kept),
        )
        return report

    @staticmethod
    def _sync_member(global_store, member, report, counters):
        record = member.record
        vectors = (member.topic_vector, member.reason_vector)
        located = global_store.find(record.origin)
        if located is None:
            KnowledgeService.insert_knowledge(global_store, record, counters=counters, vectors=vectors)
            report.inserted.append(record.origin)
            return
        existing = located[2]
        if existing.record.payload == record.payload and existing.record.version >= record.version:
            return
        if (record.origin, record.version, record.payload) in global_store.reconciled:
            return
        if record.version > existing.record.version:
            KnowledgeService.remove(global_store, record.origin)
            KnowledgeService.insert_knowledge(global_store, record, counters=counters, vectors=vectors)
            report.replaced.append(record.origin)
        elif record.version < existing.record.version:
            report.kept.append(record.origin)
        else:
            weight = max(KnowledgeService.similarity(existing.reason_vector, member.reason_vector), 0.0)
            KnowledgeService.blend(
                global_store, record.origin,
                normalize(existing.topic_vector + weight * member.topic_vector),
                normalize(existing.reason_vector + weight * member.reason_vector),
                incoming=record,
            )
            report.blended.append(record.origin)

    @staticmethod
    def remove(store, origin):
        """Drop the record with ``origin``; the emptied partition or topic goes with it"""
        with store.lock:
            located = store.find(origin)
            if located is None:
                return False
            store.log('remove', origin=origin)
            topic, partition, member = located
            partition.members.remove(member)
            if not partition.members:
                topic.partitions.remove(partition)
            if not topic.partitions:
                store.topics.remove(topic)
            else:
                topic.refresh()
                KnowledgeService.merge_partitions(store, topic.id, journal=False)
                KnowledgeService.merge_topics(store, journal=False)
            store.revision += 1
            return True

    @staticmethod
    def blend(store, origin, topic_vector, reason_vector, incoming=None):
        """Replace a member's embeddings and restore the store invariants.

        ``incoming`` is the conflicting record folded in; it is remembered so
        a later sync does not blend it twice.
        """
        with store.lock:
            topic, _partition, member = store.find(origin)
            store.log(
                'blend', origin=origin, topic_vector=topic_vector, reason_vector=reason_vector,
                incoming=None if incoming is None else incoming.as_dict(),
            )
            if incoming is not None:
                store.reconciled.add((incoming.origin, incoming.version, incoming.payload))
            member.topic_vector = normalize(topic_vector)
            member.reason_vector = normalize(reason_vector)
            topic.refresh()
            KnowledgeService.merge_partitions(store, topic.id, journal=False)
            KnowledgeService.merge_topics(store, journal=False)
            store.revision += 1

    @staticmethod
    def check_invariants(store):
        """Raise InvariantViolation if duplicate topics or mergeable partitions remain"""
        similarity = KnowledgeService.similarity
        for left, right in itertools.combinations(store.topics, 2):
            value = similarity(left.representative, right.representative)
            if value >= store.thresholds.topic:
                raise InvariantViolation(_('Duplicate topics'), left=left.id, right=right.id, similarity=value)
        for topic in store.topics:
            if not topic.partitions:
                raise InvariantViolation(_('Topic without partitions'), topic=topic.id)
            for left, right in itertools.combinations(topic.partitions, 2):
                value = similarity(left.representative, right.representative)
                if value >= store.thresholds.merge:
                    raise InvariantViolation(
                        _('Mergeable partitions'), topic=topic.id, left=left.id, right=right.id, similarity=value,
                    )
            for partition in topic.partitions:
                if not partition.members:
                    raise InvariantViolation(_('Empty partition'), topic=topic.id, partition=partition.id)
        return True

    @staticmethod
    def store_outcome(store, outcome, embedder, t=0.0, counters=None, stream=None, persist_supporting=False):
        """Insert a healed outcome's best hypothesis, and optionally its supporting ones.

        Origins carry the heal time so repeated failures of one node stay distinct.
        """
        reports = []
        if outcome.best is None:
            return reports
        hypotheses = [(outcome.best, False)]
        if persist_supporting:
            hypotheses.extend((hypothesis, True) for hypothesis in outcome.supporting)
        for hypothesis, supporting in hypotheses:
            record = KnowledgeRecord(
                topic=hypothesis.topic,
                reason=hypothesis.reason,
                solution=hypothesis.solution,
                source=outcome.node,
                timestamp=t,
                origin=f'{hypothesis.id}@{format_number(t)}',
                supporting=supporting,
            )
            reports.append(KnowledgeService.insert_knowledge(store, record, embedder, counters, stream=stream))
        return reports
