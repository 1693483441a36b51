import random

import numpy as np
from django.test import SimpleTestCase

from core.exceptions import InvalidParameter
from core.models import OperationCounters
from metacognition.models import Hypothesis, MetaOutcome, ReasoningPath

from . import snapshot
from .exceptions import DimensionMismatch, InvariantViolation, MalformedSnapshot
from .journal import KnowledgeJournal
from .models import InsertOutcome, KnowledgeRecord, KnowledgeThresholds, RendezvousStore, StoreScope
from .services import HashEmbedder, KnowledgeService

E = np.eye(4)


def record(origin, topic='disk full', reason='disk full -> write failed', solution='free space', version=1):
    return KnowledgeRecord(topic, reason, solution, source='E1', origin=origin, version=version)


class SimilarityTest(SimpleTestCase):
    """Test cases for embeddings and cosine similarity"""

    def test_similarity(self):
        """Test cosine similarity and the zero-vector case"""
        self.assertEqual(KnowledgeService.similarity(E[0], E[0]), 1.0)
        self.assertEqual(KnowledgeService.similarity(E[0], E[1]), 0.0)
        self.assertEqual(KnowledgeService.similarity(np.zeros(4), E[1]), 0.0)

    def test_dimension_mismatch(self):
        """Test that vectors of different lengths cannot be compared"""
        with self.assertRaises(DimensionMismatch):
            KnowledgeService.similarity(np.ones(3), np.ones(4))

    def test_embed_empty_text(self):
        """Test that empty text is not embedded"""
        with self.assertRaises(InvalidParameter):
            KnowledgeService.embed('  ', 'Topic', HashEmbedder(16))

    def test_embed_is_unit_length(self):
        vector = KnowledgeService.embed('disk full on E1', 'Reason', HashEmbedder(16))
        self.assertAlmostEqual(float(np.linalg.norm(vector)), 1.0)


class InsertTest(SimpleTestCase):
    """Test cases for KnowledgeService.insert_knowledge"""

    def setUp(self):
        self.store = RendezvousStore('edge-1', thresholds=KnowledgeThresholds())
        self.counters = OperationCounters()

    def insert(self, origin, topic_vector, reason_vector):
        return KnowledgeService.insert_knowledge(
            self.store, record(origin), vectors=(topic_vector, reason_vector), counters=self.counters,
        )

    def test_outcomes(self):
        """Test new topic, new partition and reinforcement"""
        first = self.insert('o1', E[0], E[1])
        second = self.insert('o2', E[0], E[2])
        third = self.insert('o3', E[0], E[1])
        fourth = self.insert('o4', E[3], E[1])
        self.assertEqual((first.outcome, first.topic, first.partition), (InsertOutcome.NEW_TOPIC, 'Z001', 'P001'))
        self.assertEqual((second.outcome, second.partition), (InsertOutcome.NEW_PARTITION, 'P002'))
        self.assertEqual((third.outcome, third.partition), (InsertOutcome.REINFORCED, 'P001'))
        self.assertEqual((fourth.outcome, fourth.topic), (InsertOutcome.NEW_TOPIC, 'Z002'))
        self.assertEqual(self.store.topic('Z001').partition('P001').version, 2)
        self.assertEqual(self.store.revision, 4)
        self.assertTrue(KnowledgeService.check_invariants(self.store))

    def test_comparisons_are_counted(self):
        """Test that each insert compares against topics and then partitions"""
        self.insert('o1', E[0], E[1])
        self.insert('o2', E[0], E[2])
        self.assertEqual(self.counters['knowledge.comparisons'], 2)

    def test_blend_merges_topics(self):
        """Test that moving a member next to another topic merges the two"""
        self.insert('o1', E[0], E[1])
        self.insert('o2', E[3], E[2])
        KnowledgeService.blend(self.store, 'o2', E[0], E[2])
        self.assertEqual(len(self.store.topics), 1)
        self.assertEqual(self.store.partition_count, 2)
        self.assertTrue(KnowledgeService.check_invariants(self.store))

    def test_remove(self):
        """Test that removing the last member drops its partition and topic"""
        self.insert('o1', E[0], E[1])
        self.assertTrue(KnowledgeService.remove(self.store, 'o1'))
        self.assertEqual(self.store.topics, [])
        self.assertFalse(KnowledgeService.remove(self.store, 'o1'))

    def test_check_invariants_detects_duplicates(self):
        """Test that a hand-made duplicate topic is reported"""
        self.insert('o1', E[0], E[1])
        self.insert('o2', E[3], E[1])
        self.store.topics[1].representative = E[0]
        with self.assertRaises(InvariantViolation):
            KnowledgeService.check_invariants(self.store)


class SplitTest(SimpleTestCase):
    """Test cases for partition splitting"""

    def setUp(self):
        self.store = RendezvousStore('edge-1', thresholds=KnowledgeThresholds(reason=0.0))

    def test_split_divergent_partition(self):
        """Test that a partition holding two unrelated reasons is split in two"""
        for origin, reason in (('o1', E[1]), ('o2', E[2]), ('o3', E[1])):
            KnowledgeService.insert_knowledge(self.store, record(origin), vectors=(E[0], reason))
        self.assertEqual(self.store.partition_count, 1)
        self.assertEqual(KnowledgeService.split_partition(self.store, 'Z001', 'P001'), 2)
        sizes = sorted(len(partition.members) for partition in self.store.topic('Z001').partitions)
        self.assertEqual(sizes, [1, 2])
        self.assertTrue(KnowledgeService.check_invariants(self.store))

    def test_coherent_partition_is_kept(self):
        """Test that a partition below the split threshold is left alone"""
        for origin in ('o1', 'o2'):
            KnowledgeService.insert_knowledge(self.store, record(origin), vectors=(E[0], E[1]))
        self.assertEqual(KnowledgeService.split_partition(self.store, 'Z001', 'P001'), 1)
        self.assertEqual(KnowledgeService.reorganize(self.store), 0)


class Clustered:
    """Noisy vectors drawn around a few topic and reason centers"""

    def __init__(self, seed, dimension=8, topics=4, reasons=6):
        self.rng = random.Random(seed)
        self.numpy_rng = np.random.default_rng(seed)
        self.dimension = dimension
        self.topic_centers = [self.numpy_rng.normal(size=dimension) for _index in range(topics)]
        self.reason_centers = [self.numpy_rng.normal(size=dimension) for _index in range(reasons)]

    def noise(self):
        return 0.3 * self.numpy_rng.normal(size=self.dimension)

    def vectors(self):
        return (
            self.rng.choice(self.topic_centers) + self.noise(),
            self.rng.choice(self.reason_centers) + self.noise(),
        )


class RandomOperationsTest(SimpleTestCase):
    """Test cases for store invariants under random operation sequences"""

    def test_invariants_hold(self):
        """Test that random inserts, removes, splits, reorganizations and syncs keep both stores valid"""
        for seed in range(20):
            with self.subTest(seed=seed):
                source = Clustered(seed)
                rng = source.rng
                store = RendezvousStore('edge-r', thresholds=KnowledgeThresholds())
                global_store = RendezvousStore('global', StoreScope.GLOBAL, thresholds=KnowledgeThresholds())
                live = set()
                for step in range(150):
                    roll = rng.random()
                    if roll < 0.6 or not live:
                        origin = f'o{step}'
                        KnowledgeService.insert_knowledge(store, record(origin), vectors=source.vectors())
                        live.add(origin)
                    elif roll < 0.75:
                        origin = rng.choice(sorted(live))
                        KnowledgeService.remove(store, origin)
                        live.discard(origin)
                    elif roll < 0.83:
                        KnowledgeService.reorganize(store)
                    elif roll < 0.9:
                        topic = rng.choice(store.topics)
                        KnowledgeService.split_partition(store, topic.id, rng.choice(topic.partitions).id)
                    else:
                        KnowledgeService.sync_global(global_store, store)
                        self.assertLessEqual(live, {item.origin for item in global_store.records()})
                    KnowledgeService.check_invariants(store)
                    KnowledgeService.check_invariants(global_store)
                    self.assertEqual({item.origin for item in store.records()}, live)

    def test_reorganize_reaches_a_fixed_point(self):
        """Test that a second reorganization changes nothing"""
        for seed in range(100):
            with self.subTest(seed=seed):
                source = Clustered(seed)
                thresholds = KnowledgeThresholds() if seed % 2 == 0 else KnowledgeThresholds(reason=0.0)
                store = RendezvousStore('edge-r', thresholds=thresholds)
                for index in range(source.rng.randint(1, 40)):
                    KnowledgeService.insert_knowledge(store, record(f'o{index}'), vectors=source.vectors())
                KnowledgeService.reorganize(store)
                KnowledgeService.check_invariants(store)
                before = snapshot.dumps(store)
                self.assertEqual(KnowledgeService.reorganize(store), 0)
                self.assertEqual(snapshot.dumps(store), before)
                KnowledgeService.check_invariants(store)

    def test_insert_comparisons_are_bounded(self):
        """Test that an insert compares against the topics and one topic's partitions at most"""
        source = Clustered(11)
        store = RendezvousStore('edge-r', thresholds=KnowledgeThresholds(reason=0.0))
        counters = OperationCounters()
        for index in range(300):
            topics = len(store.topics)
            widest = max((len(topic.partitions) for topic in store.topics), default=0)
            before = counters['knowledge.comparisons']
            report = KnowledgeService.insert_knowledge(store, record(f'o{index}'), counters=counters, vectors=source.vectors())
            self.assertEqual(counters['knowledge.comparisons'] - before, report.comparisons)
            self.assertLessEqual(report.comparisons, topics + widest)



class SyncTest(SimpleTestCase):
    """Test cases for folding local stores into the global one"""

    def setUp(self):
        self.embedder = HashEmbedder(32)
        self.global_store = RendezvousStore('global', StoreScope.GLOBAL)
        self.local = RendezvousStore('edge-1')
        for origin, topic in (('o1', 'disk full'), ('o2', 'kernel panic'), ('o3', 'connection refused')):
            KnowledgeService.insert_knowledge(self.local, record(origin, topic=topic), self.embedder)

    def test_sync_is_idempotent(self):
        """Test that re-syncing an unchanged local store changes nothing"""
        first = KnowledgeService.sync_global(self.global_store, self.local)
        self.assertEqual(sorted(first.inserted), ['o1', 'o2', 'o3'])
        before = snapshot.dumps(self.global_store)
        second = KnowledgeService.sync_global(self.global_store, self.local)
        self.assertTrue(second.empty)
        self.assertEqual(snapshot.dumps(self.global_store), before)

    def test_higher_version_wins(self):
        """Test that a newer version replaces the global record and an older one is kept out"""
        KnowledgeService.sync_global(self.global_store, self.local)
        KnowledgeService.remove(self.local, 'o1')
        KnowledgeService.insert_knowledge(self.local, record('o1', solution='remount read-write', version=2), self.embedder)
        report = KnowledgeService.sync_global(self.global_store, self.local)
        self.assertEqual(report.replaced, ['o1'])
        self.assertEqual(self.global_store.find('o1')[2].record.version, 2)

        stale = RendezvousStore('edge-2')
        KnowledgeService.insert_knowledge(stale, record('o1'), self.embedder)
        self.assertEqual(KnowledgeService.sync_global(self.global_store, stale).kept, ['o1'])
        self.assertEqual(self.global_store.find('o1')[2].record.solution, 'remount read-write')

    def test_equal_versions_blend(self):
        """Test that a conflicting record of the same version is blended once"""
        KnowledgeService.sync_global(self.global_store, self.local)
        other = RendezvousStore('edge-2')
        KnowledgeService.insert_knowledge(other, record('o1', reason='disk full -> storage read-only'), self.embedder)
        report = KnowledgeService.sync_global(self.global_store, other)
        self.assertEqual(report.blended, ['o1'])
        self.assertEqual(self.global_store.find('o1')[2].record.reason, 'disk full -> write failed')
        self.assertEqual(len(self.global_store.reconciled), 1)
        self.assertTrue(KnowledgeService.check_invariants(self.global_store))

    def test_store_outcome(self):
        """Test that a healed outcome and its supporting hypotheses are stored"""
        path = ReasoningPath(0, ('x001',))
        best = Hypothesis('E1-H000', path, 'agent-S01', 'ResourceOverload: disk full', 'disk full', 'free space')
        supporting = Hypothesis('E1-H001', ReasoningPath(1, ('x002',)), 'agent-S02', 'ResourceOverload: write', 'write failed', 'retry')
        outcome = MetaOutcome(node='E1', best=best, supporting=[supporting])
        reports = KnowledgeService.store_outcome(self.local, outcome, self.embedder, t=10.0, persist_supporting=True)
        self.assertEqual(len(reports), 2)
        self.assertEqual(self.local.find('E1-H000@10')[2].record.source, 'E1')
        self.assertTrue(self.local.find('E1-H001@10')[2].record.supporting)
        self.assertEqual(KnowledgeService.store_outcome(self.local, MetaOutcome(node='E2'), self.embedder), [])


class PersistenceTest(SimpleTestCase):
    """Test cases for snapshots and the operation journal"""

    def setUp(self):
        self.embedder = HashEmbedder(32)
        self.store = RendezvousStore('edge-1', journal=KnowledgeJournal())
        for origin, topic in (('o1', 'disk full'), ('o2', 'kernel panic'), ('o3', 'disk full')):
            KnowledgeService.insert_knowledge(self.store, record(origin, topic=topic), self.embedder)
        KnowledgeService.remove(self.store, 'o2')

    def test_snapshot_is_stable(self):
        """Test that a loaded snapshot writes back the same text"""
        text = snapshot.dumps(snapshot.loads(snapshot.dumps(self.store)))
        self.assertEqual(snapshot.dumps(snapshot.loads(text)), text)
        loaded = snapshot.loads(text)
        self.assertEqual(sorted(item.origin for item in loaded.records()), ['o1', 'o3'])
        self.assertEqual(loaded.revision, self.store.revision)

    def test_missing_header(self):
        """Test that text without the header is rejected"""
        with self.assertRaises(MalformedSnapshot):
            snapshot.loads('store x Local revision=0 dimension=0\n')

    def test_journal_replay(self):
        """Test that replaying the journal rebuilds the same store"""
        journal = KnowledgeJournal.from_jsonl(self.store.journal.to_jsonl())
        rebuilt = journal.replay('edge-1')
        self.assertEqual(snapshot.dumps(rebuilt), snapshot.dumps(self.store))

    def test_unknown_journal_operation(self):
        """Test that an unknown operation stops the replay"""
        with self.assertRaises(MalformedSnapshot):
            KnowledgeJournal([{'op': 'explode', 'sequence': 0}]).replay('x')
