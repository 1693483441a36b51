from django.test import SimpleTestCase

from core.models import OperationCounters
from faults.models import FailureEvent, FailureKind
from faults.services import FaultService
from logs.models import LogBundle
from logs.services import LogService
from reasoner.backends import ScriptedBackend
from reasoner.services import Reasoner
from telemetry.models import EventStream

from .exceptions import InvalidDiagnosisGraph
from .models import CausalEdge, DiagnosisGraph, DiagnosisMemory, DiagnosisVariable, SubtreeKind
from .services import DiagnosisService, KeywordClassifier


def bundle_for(kind, node='E1', t=10.0):
    records = FaultService.synthesize_logs(FailureEvent(t, node, kind))
    return LogService.extract_window(records, node, t, 120.0)


def variable(id, label='x', first_seen=0.0, kind='Event'):
    return DiagnosisVariable(id, kind, label, evidence=(f'{id}:1',), first_seen=first_seen, last_seen=first_seen)


class DiagnoseTest(SimpleTestCase):
    """Test cases for the diagnosis of synthesized failure logs"""

    def setUp(self):
        self.counters = OperationCounters()
        self.reasoner = Reasoner(ScriptedBackend(), counters=self.counters, dimension=64)

    def test_disk_full_chain(self):
        """Test variables, edges and the single subtree of a disk-full failure"""
        stream = EventStream()
        result = DiagnosisService.diagnose(bundle_for(FailureKind.DISK_FULL), self.reasoner, counters=self.counters, stream=stream)
        labels = [result.graph.variables[variable_id].label for variable_id in sorted(result.graph.variables)]
        self.assertEqual(labels, ['disk full', 'write failed', 'storage read-only'])
        self.assertEqual(sorted(result.graph.edges), [('x001', 'x002'), ('x001', 'x003'), ('x002', 'x003')])
        self.assertEqual(result.graph.edges[('x001', 'x003')].confidence, 0.75)
        self.assertEqual([subtree.kind for subtree in result.subtrees], [SubtreeKind.RESOURCE_OVERLOAD])
        self.assertEqual(result.consolidated, result.graph)
        self.assertEqual(stream.snapshot()[0].kind, 'diagnosed')

    def test_oracle_calls_are_bounded(self):
        """Test one extraction call plus at most m(m-1)/2 relation calls"""
        DiagnosisService.diagnose(bundle_for(FailureKind.CRASH), self.reasoner, counters=self.counters)
        self.assertEqual(self.counters['diagnosis.pairs'], 3)
        self.assertEqual(self.counters['reasoner.calls'], 4)

    def test_relation_calls_grow_quadratically(self):
        """Test that m variables cost exactly m(m-1)/2 relation calls"""
        for m in range(1, 26):
            with self.subTest(m=m):
                self.counters.reset()
                variables = [variable(f'x{index:03d}', f'event {index}', first_seen=float(index % 7)) for index in range(m)]
                DiagnosisService.infer_edges(variables, self.reasoner, counters=self.counters)
                self.assertEqual(self.counters['diagnosis.pairs'], m * (m - 1) // 2)
                self.assertEqual(self.counters['reasoner.relation'], m * (m - 1) // 2)
                self.assertEqual(self.counters['reasoner.calls'], m * (m - 1) // 2)

    def test_subtrees_include_ancestors(self):
        """Test that each subtree carries every ancestor of its seeds"""
        result = DiagnosisService.diagnose(bundle_for(FailureKind.CRASH), self.reasoner)
        subtrees = {subtree.kind: subtree for subtree in result.subtrees}
        self.assertEqual(set(subtrees), {SubtreeKind.RESOURCE_OVERLOAD, SubtreeKind.TASK_CONTENTION})
        self.assertEqual(subtrees[SubtreeKind.TASK_CONTENTION].variables, {'x001', 'x002'})
        self.assertEqual(subtrees[SubtreeKind.RESOURCE_OVERLOAD].variables, {'x001', 'x002', 'x003'})
        self.assertTrue(result.consolidated.is_dag())

    def test_evidence_points_into_bundle(self):
        """Test that every variable is traced to records of the bundle"""
        bundle = bundle_for(FailureKind.AUTH_STORM)
        result = DiagnosisService.diagnose(bundle, self.reasoner)
        refs = set(bundle.refs)
        for graph_variable in result.graph.variables.values():
            self.assertTrue(set(graph_variable.evidence) <= refs)

    def test_empty_bundle(self):
        """Test that an empty window gives an empty graph without oracle calls"""
        result = DiagnosisService.diagnose(LogBundle('E1', 0.0, 1.0), self.reasoner, counters=self.counters)
        self.assertEqual(result.graph.variables, {})
        self.assertEqual(result.subtrees, [])
        self.assertEqual(self.counters['reasoner.calls'], 0)

    def test_memory(self):
        """Test that the consolidated graph is kept per node"""
        memory = DiagnosisMemory()
        result = DiagnosisService.diagnose(bundle_for(FailureKind.DISK_FULL), self.reasoner, memory=memory, t=10.0)
        self.assertIn('E1', memory)
        self.assertIs(memory.latest('E1'), result.consolidated)


class DiagnosisGraphTest(SimpleTestCase):
    """Test cases for DiagnosisGraph"""

    def test_break_cycles_drops_weakest_edge(self):
        """Test that the lowest-confidence edge of a cycle is removed"""
        graph = DiagnosisGraph('N', [variable('a'), variable('b'), variable('c')], [
            CausalEdge('a', 'b', 0.9), CausalEdge('b', 'c', 0.5), CausalEdge('c', 'a', 0.7),
        ])
        removed = DiagnosisService.break_cycles(graph)
        self.assertEqual([edge.key for edge in removed], [('b', 'c')])
        self.assertTrue(graph.is_dag())

    def test_break_cycles_tie_goes_to_latest_target(self):
        """Test that equal confidences drop the edge into the latest-seen variable"""
        graph = DiagnosisGraph('N', [variable('a', first_seen=1.0), variable('b', first_seen=2.0)], [
            CausalEdge('a', 'b', 0.5), CausalEdge('b', 'a', 0.5),
        ])
        removed = DiagnosisService.break_cycles(graph)
        self.assertEqual([edge.key for edge in removed], [('a', 'b')])

    def test_text_round_trip(self):
        """Test the text form with labels containing spaces and an auxiliary edge"""
        graph = DiagnosisGraph('N', [variable('a', 'disk full', 1.5), variable('b', 'write failed', 2.0)], [
            CausalEdge('a', 'b', 0.75, auxiliary=True),
        ])
        self.assertEqual(DiagnosisGraph.loads(graph.dumps(), node='N'), graph)

    def test_roots_and_sinks(self):
        graph = DiagnosisGraph('N', [variable('a'), variable('b'), variable('c')], [
            CausalEdge('a', 'b'), CausalEdge('a', 'c'),
        ])
        self.assertEqual(graph.roots(), ['a'])
        self.assertEqual(graph.sinks(), ['b', 'c'])
        self.assertEqual(graph.children('a'), ['b', 'c'])

    def test_variable_needs_evidence(self):
        """Test that a variable without evidence is rejected"""
        with self.assertRaises(InvalidDiagnosisGraph):
            DiagnosisVariable('a', 'Event', 'x', evidence=(), first_seen=0.0, last_seen=0.0)

    def test_edge_endpoints_must_exist(self):
        """Test that an edge to an unknown variable is rejected"""
        with self.assertRaises(InvalidDiagnosisGraph):
            DiagnosisGraph('N', [variable('a')], [CausalEdge('a', 'z')])

    def test_classifier_order(self):
        """Test that the first matching category wins"""
        classifier = KeywordClassifier()
        self.assertEqual(classifier.classify('machine check'), SubtreeKind.FIRMWARE_EVENT)
        self.assertEqual(classifier.classify('connection timeout'), SubtreeKind.NETWORK_INSTABILITY)
        self.assertIsNone(classifier.classify('something odd'))
