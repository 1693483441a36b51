from pathlib import Path

from django.test import SimpleTestCase

from continuum.models import Link, Node, NodeState, SystemGraph
from core.exceptions import InvalidParameter
from logs.models import Dialect

from .exceptions import AuditMismatch, IllegalTransition, InvalidScenario, UnknownNode
from .models import FailureEvent, FailureKind, FailureScenario
from .scenario import ScenarioFile
from .services import FaultService

FIXTURES = Path(__file__).resolve().parent.parent / 'simulation' / 'fixtures'


def three_nodes():
    return SystemGraph(
        nodes=[Node('A', 4, 4), Node('B', 4, 4), Node('C', 4, 4)],
        links=[Link('A', 'B', 10, 1), Link('B', 'C', 10, 1)],
    )


class ScenarioFileTest(SimpleTestCase):
    """Test cases for the scenario text format"""

    def test_load_fixture(self):
        """Test reading the bundled multi-corpus scenario"""
        scenario = ScenarioFile.load(FIXTURES / 'scenario_all.txt')
        self.assertEqual(scenario.id, 'all-corpora')
        self.assertEqual(scenario.times, [0.0, 30.0, 60.0, 90.0, 120.0])
        self.assertEqual(scenario.attached_logs['E1'], 'zookeeper')
        self.assertEqual(scenario.events[1].kind, FailureKind.DISK_FULL)

    def test_round_trip(self):
        """Test that dumps then loads gives the same scenario"""
        scenario = FailureScenario('s1', (FailureEvent(0.5, 'A'), FailureEvent(2, 'B', 'NetworkPartition')), {'A': 'zk'})
        self.assertEqual(ScenarioFile.loads(ScenarioFile.dumps(scenario)), scenario)

    def test_header(self):
        """Test that the format header is required and written back"""
        scenario = ScenarioFile.loads('recist-scenario v1\n2 A Crash\n')
        self.assertEqual(scenario.events, (FailureEvent(2.0, 'A'),))
        self.assertTrue(ScenarioFile.dumps(scenario).startswith('recist-scenario v1\n'))
        with self.assertRaises(InvalidScenario):
            ScenarioFile.loads('2 A Crash\n')

    def test_unsorted_events_rejected(self):
        """Test that events out of time order are rejected"""
        with self.assertRaises(InvalidScenario):
            ScenarioFile.loads('recist-scenario v1\n5 A Crash\n1 B Crash\n')

    def test_unknown_kind_reports_line(self):
        """Test that an unknown failure kind names its line"""
        with self.assertRaises(InvalidScenario) as caught:
            ScenarioFile.loads('recist-scenario v1\n1 A Meteor\n')
        self.assertEqual(caught.exception.context['line'], 2)

    def test_negative_time(self):
        """Test that failure times must be non-negative"""
        with self.assertRaises(InvalidParameter):
            FailureEvent(-1.0, 'A')


class ApplyFailuresTest(SimpleTestCase):
    """Test cases for FaultService.apply_failures"""

    def setUp(self):
        self.graph = three_nodes()
        self.scenario = FailureScenario('s', (FailureEvent(1.0, 'A'), FailureEvent(3.0, 'C')))

    def test_only_due_events_apply(self):
        """Test that F(t) holds only events at or before t"""
        self.assertEqual(FaultService.apply_failures(self.graph, self.scenario, 0.5), frozenset())
        self.assertEqual(FaultService.apply_failures(self.graph, self.scenario, 1.0), {'A'})
        self.assertEqual(self.graph.node('A').state, NodeState.DOWN)
        self.assertEqual(self.graph.node('C').state, NodeState.AVAILABLE)

    def test_event_applies_once(self):
        """Test that a recovered node is not failed again by the same event"""
        FaultService.apply_failures(self.graph, self.scenario, 1.0)
        FaultService.transition_state(self.graph, 'A', NodeState.RECOVERING)
        FaultService.transition_state(self.graph, 'A', NodeState.AVAILABLE)
        failed = FaultService.apply_failures(self.graph, self.scenario, 3.0)
        self.assertEqual(failed, {'C'})
        self.assertEqual(self.graph.node('A').state, NodeState.AVAILABLE)

    def test_unknown_node(self):
        """Test that a scenario naming a missing node is rejected"""
        with self.assertRaises(UnknownNode):
            FaultService.apply_failures(self.graph, FailureScenario('s', (FailureEvent(0, 'Z'),)), 0.0)

    def test_negative_time(self):
        """Test that t must be non-negative"""
        with self.assertRaises(InvalidParameter):
            FaultService.apply_failures(self.graph, self.scenario, -1.0)


class TransitionTest(SimpleTestCase):
    """Test cases for the node state machine and its audit trail"""

    def setUp(self):
        self.graph = three_nodes()

    def test_allowed_transitions(self):
        """Test Down to Recovering to Available"""
        FaultService.mark_down(self.graph, 'B', 1.0)
        self.assertEqual(FaultService.transition_state(self.graph, 'B', NodeState.RECOVERING, time=2.0), NodeState.DOWN)
        FaultService.transition_state(self.graph, 'B', NodeState.AVAILABLE, time=3.0)
        self.assertEqual(self.graph.node('B').state, NodeState.AVAILABLE)
        self.assertTrue(FaultService.recovered(self.graph, 'B'))

    def test_illegal_transition(self):
        """Test that Available cannot jump to Recovering"""
        with self.assertRaises(IllegalTransition):
            FaultService.transition_state(self.graph, 'A', NodeState.RECOVERING)

    def test_replay_audit(self):
        """Test rebuilding final states from the trail"""
        initial = self.graph.states()
        FaultService.mark_down(self.graph, 'A', 1.0)
        FaultService.transition_state(self.graph, 'A', NodeState.RECOVERING, time=2.0)
        FaultService.mark_down(self.graph, 'C', 2.5)
        self.assertEqual(FaultService.replay_audit(initial, self.graph.history), self.graph.states())

    def test_replay_audit_mismatch(self):
        """Test that a trail that does not match the start states is rejected"""
        FaultService.mark_down(self.graph, 'A', 1.0)
        with self.assertRaises(AuditMismatch):
            FaultService.replay_audit({'A': NodeState.BUSY}, self.graph.history)


class SynthesizeLogsTest(SimpleTestCase):
    """Test cases for template logs of nodes without a dataset"""

    def test_records_end_at_failure_time(self):
        """Test that synthesized records lead up to the event and name the node"""
        records = FaultService.synthesize_logs(FailureEvent(10.0, 'A', FailureKind.DISK_FULL))
        self.assertEqual([record.timestamp for record in records], [8.0, 9.0, 10.0])
        self.assertTrue(all(record.node_hint == 'A' for record in records))
        self.assertTrue(all(record.dialect == Dialect.SYNTHETIC for record in records))
        self.assertIn('no space left', records[0].text)
