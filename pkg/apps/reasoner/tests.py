import json
from pathlib import Path

import httpx
import numpy as np
from django.test import SimpleTestCase

from core.models import OperationCounters, SimClock
from diagnosis.models import DiagnosisVariable
from logs.models import Dialect
from logs.services import LogService

from .backends import RemoteBackend, ReplayBackend, ScriptedBackend
from .exceptions import BudgetExceeded, ReasonerUnavailable, ReplayMismatch, SchemaViolation
from .models import EmbedKind, RequestKind, Wire
from .rules import hash_embedding, tokens
from .schemas import Budget, ReasonerRequest
from .services import Reasoner, ReasonerService
from .transcript import Transcript

FIXTURES = Path(__file__).resolve().parent.parent / 'simulation' / 'fixtures'


def variable(id, kind, label, first_seen=0.0):
    return DiagnosisVariable(id, kind, label, evidence=('x:1',), first_seen=first_seen, last_seen=first_seen)


def scripted(**kwargs):
    return Reasoner(ScriptedBackend(latency=kwargs.pop('latency', 0.0)), dimension=64, **kwargs)


class ScriptedBackendTest(SimpleTestCase):
    """Test cases for the rule-table reasoner"""

    def test_extract_openssh(self):
        """Test entity extraction over the OpenSSH corpus"""
        with (FIXTURES / 'openssh.log').open('rb') as stream:
            records = LogService.parse(stream, Dialect.OPENSSH)
        entities = {entity.label: entity for entity in scripted().extract(Dialect.OPENSSH, records).entities}
        self.assertEqual(set(entities), {
            'reverse mapping failed', 'invalid user', 'authentication failure', 'failed password',
            'connection closed preauth', 'too many authentication failures',
        })
        self.assertEqual(entities['reverse mapping failed'].refs, ['openssh:1', 'openssh:15'])
        self.assertEqual(entities['failed password'].kind, 'ErrorCode')

    def test_relation(self):
        """Test rule pairs, the generic resource rule and unrelated pairs"""
        reasoner = scripted()
        disk = variable('x001', 'ResourceIndicator', 'disk full')
        write = variable('x002', 'ErrorCode', 'block write failed')
        crash = variable('x003', 'StateTransition', 'node crashed')
        self.assertEqual(reasoner.relation(disk, write).confidence, 1.0)
        self.assertEqual(reasoner.relation(disk, crash).confidence, 0.75)
        self.assertEqual(reasoner.relation(write, disk).related, 0)

    def test_hypothesize(self):
        """Test that the hypothesis names the path and the root's solution"""
        path = [variable('x001', 'ResourceIndicator', 'disk full'), variable('x002', 'ErrorCode', 'write failed')]
        answer = scripted().hypothesize('E1', 'ResourceOverload', path, [])
        self.assertEqual(answer.topic, 'ResourceOverload: disk full')
        self.assertEqual(answer.reason, 'disk full -> write failed')
        self.assertIn('free space', answer.solution)

    def test_evaluate_risky_solution(self):
        """Test that destructive solutions score low on safety"""
        answer = scripted().evaluate('t', 'r', 'wipe the disk and reboot all nodes', 2, 3)
        self.assertEqual(answer.safety, 0.2)
        self.assertEqual(answer.utility, 0.4)
        self.assertAlmostEqual(answer.coherence, 0.7)

    def test_embed(self):
        """Test unit-length deterministic embeddings of the configured dimension"""
        reasoner = scripted()
        vector = reasoner.embed('Disk full on E1', EmbedKind.TOPIC)
        self.assertEqual(len(vector), 64)
        self.assertAlmostEqual(float(np.linalg.norm(vector)), 1.0)
        self.assertEqual(vector, reasoner.embed('disk FULL on e1'))

    def test_embed_punctuation_only(self):
        """Test that a text without alphanumerics still embeds"""
        self.assertEqual(tokens('!!!'), ['!!!'])
        self.assertAlmostEqual(float(np.linalg.norm(hash_embedding('!!!', 16))), 1.0)

    def test_latency_advances_clock(self):
        """Test that synthetic latency is charged to the simulated clock and counters"""
        clock = SimClock()
        counters = OperationCounters()
        reasoner = scripted(latency=0.5, clock=clock, counters=counters)
        reasoner.embed('a')
        reasoner.embed('b')
        self.assertEqual(clock.now, 1.0)
        self.assertEqual(counters['reasoner.calls'], 2)
        self.assertEqual(counters['reasoner.embed'], 2)

    def test_latency_over_budget(self):
        """Test that latency above the budget raises BudgetExceeded"""
        reasoner = scripted(latency=5.0, budget=Budget(max_seconds=1.0))
        with self.assertRaises(BudgetExceeded):
            reasoner.embed('a')

    def test_invalid_payload(self):
        """Test that a payload outside its schema never reaches the backend"""
        with self.assertRaises(SchemaViolation):
            scripted().embed('')


class TranscriptTest(SimpleTestCase):
    """Test cases for recording and replaying reasoner exchanges"""

    def setUp(self):
        self.recorder = scripted()
        self.recorder.embed('disk full')
        self.recorder.evaluate('t', 'r', 's', 1, 0)

    def test_entries_in_order(self):
        """Test that every call is recorded with its sequence number"""
        entries = self.recorder.transcript.entries
        self.assertEqual([entry['sequence'] for entry in entries], [0, 1])
        self.assertEqual(entries[1]['request']['kind'], RequestKind.EVALUATE)

    def test_jsonl(self):
        """Test that the JSONL form keeps the header and the exchanges"""
        self.recorder.transcript.config_hash = 'abc'
        loaded = Transcript.from_jsonl(self.recorder.transcript.to_jsonl())
        self.assertEqual(loaded.config_hash, 'abc')
        self.assertEqual(loaded.entries, json.loads(json.dumps(self.recorder.transcript.entries)))

    def test_replay_reproduces_responses(self):
        """Test that replay answers identical requests from the transcript"""
        replayer = Reasoner(ReplayBackend(self.recorder.transcript.entries), dimension=64)
        self.assertEqual(replayer.embed('disk full'), self.recorder.embed('disk full'))
        self.assertEqual(replayer.evaluate('t', 'r', 's', 1, 0).coherence, 0.2)
        self.assertTrue(replayer.backend.exhausted)

    def test_replay_mismatch(self):
        """Test that a different request breaks the replay"""
        replayer = Reasoner(ReplayBackend(self.recorder.transcript.entries), dimension=64)
        with self.assertRaises(ReplayMismatch):
            replayer.embed('memory pressure')

    def test_bad_line(self):
        """Test that a line that is not JSON is rejected"""
        with self.assertRaises(SchemaViolation):
            Transcript.from_jsonl('{"type": "header"}\nnot json\n')


class RemoteBackendTest(SimpleTestCase):
    """Test cases for the HTTP backend against a mock transport"""

    def request(self):
        return ReasonerRequest(kind='Evaluate', payload={
            'topic': 't', 'reason': 'r', 'solution': 's', 'depth': 1, 'evidence_count': 0,
        })

    def backend(self, handler, **kwargs):
        client = httpx.Client(transport=httpx.MockTransport(handler))
        return RemoteBackend('http://reasoner.test/v1', client=client, **kwargs)

    def test_native_wire(self):
        """Test posting the request document and reading the answer back"""
        seen = []

        def handler(request):
            seen.append(json.loads(request.content))
            return httpx.Response(200, json={'coherence': 0.5, 'safety': 0.9, 'utility': 0.8, 'usage': {'total_tokens': 12}})

        response, latency = self.backend(handler).handle(self.request())
        self.assertEqual(response['coherence'], 0.5)
        self.assertEqual(seen[0]['constraints']['max_tokens'], 1024)
        self.assertGreaterEqual(latency, 0.0)

    def test_chat_wire_reads_json_out_of_prose(self):
        """Test the chat adapter with a reply wrapped in prose"""

        def handler(request):
            self.assertTrue(request.url.path.endswith('/chat/completions'))
            content = 'Here you go: {"coherence": 0.3, "safety": 0.6, "utility": 0.9} Hope this helps.'
            return httpx.Response(200, json={'choices': [{'message': {'content': content}}]})

        response, _latency = self.backend(handler, wire=Wire.CHAT).handle(self.request())
        self.assertEqual(response['utility'], 0.9)

    def test_retries_then_succeeds(self):
        """Test that transient server errors are retried"""
        calls = []

        def handler(request):
            calls.append(request)
            if len(calls) < 3:
                return httpx.Response(503)
            return httpx.Response(200, json={'coherence': 0.1, 'safety': 0.1, 'utility': 0.1})

        response, _latency = self.backend(handler, retries=2).handle(self.request())
        self.assertEqual(len(calls), 3)
        self.assertEqual(response['safety'], 0.1)

    def test_gives_up(self):
        """Test that exhausted retries raise ReasonerUnavailable"""
        backend = self.backend(lambda request: httpx.Response(200, json={'unexpected': True}), retries=1)
        with self.assertRaises(ReasonerUnavailable):
            backend.handle(self.request())

    def test_token_budget(self):
        """Test that a reply using too many tokens raises BudgetExceeded"""
        backend = self.backend(lambda request: httpx.Response(200, json={
            'coherence': 0.1, 'safety': 0.1, 'utility': 0.1, 'usage': {'total_tokens': 5000},
        }))
        with self.assertRaises(BudgetExceeded):
            backend.handle(self.request())

    def test_missing_endpoint(self):
        """Test that the remote backend needs an endpoint"""
        with self.assertRaises(ReasonerUnavailable):
            RemoteBackend('')


class ReasonerServiceTest(SimpleTestCase):
    """Test cases for building reasoners"""

    def test_build_scripted(self):
        """Test building the scripted backend from a settings section"""
        reasoner = ReasonerService.build('scripted', config={'SYNTHETIC_LATENCY': 0.0, 'MAX_TOKENS': 64}, seed=3)
        self.assertIsInstance(reasoner.backend, ScriptedBackend)
        self.assertEqual(reasoner.budget.max_tokens, 64)
        self.assertEqual(reasoner.seed, 3)

    def test_replay_needs_transcript(self):
        """Test that the replay backend cannot be built without a transcript"""
        with self.assertRaises(ReasonerUnavailable):
            ReasonerService.build('replay', config={})
