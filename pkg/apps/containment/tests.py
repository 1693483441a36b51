import math
import random

from django.test import SimpleTestCase

from continuum.models import Allocation, Link, Node, NodeState, SystemGraph, Task
from continuum.services import AllocationService
from core.exceptions import InvalidParameter
from core.models import OperationCounters
from faults.services import FaultService

from .exceptions import AgentOffline, ConstraintBreach, NoCapacity
from .models import FailureSet, PlugStructure
from .services import ContainmentService


def chain(*nodes, latency=1.0):
    """Nodes linked in the given order"""
    links = [Link(a.id, b.id, 10.0, latency) for a, b in zip(nodes, nodes[1:])]
    return SystemGraph(nodes=nodes, links=links)


def host_tasks(graph, node_id, *tasks):
    alloc = Allocation()
    for task in tasks:
        alloc = AllocationService.assign_task(graph, alloc, task, node_id)
    return alloc


class AgentTest(SimpleTestCase):
    """Test cases for building monitoring agents"""

    def setUp(self):
        self.graph = chain(Node('A', 4, 8), Node('B', 4, 8), Node('C', 4, 8), Node('D', 4, 8))

    def test_neighborhood_respects_k(self):
        """Test that the view holds nodes within k hops, home excluded"""
        self.assertEqual(ContainmentService.neighborhood(self.graph, 'A', 2), {'B': 1, 'C': 2})

    def test_default_timeout(self):
        """Test the timeout as a multiple of the latency to the farthest neighbour"""
        self.assertEqual(ContainmentService.default_timeout(self.graph, 'A', 2, factor=3.0), 6.0)

    def test_build_agents(self):
        """Test one agent per node with the given timeout"""
        agents = ContainmentService.build_agents(self.graph, k=1, timeout=5.0)
        self.assertEqual(sorted(agents), ['A', 'B', 'C', 'D'])
        self.assertEqual(agents['B'].neighborhood, ['A', 'C'])
        self.assertEqual(agents['B'].timeout, 5.0)

    def test_k_must_be_positive(self):
        """Test that k below one is rejected"""
        with self.assertRaises(InvalidParameter):
            ContainmentService.build_agents(self.graph, k=0)


class ProbeTest(SimpleTestCase):
    """Test cases for probing and failure-set construction"""

    def setUp(self):
        self.graph = chain(Node('A', 4, 8), Node('B', 4, 8), Node('C', 4, 8))
        self.agents = ContainmentService.build_agents(self.graph, k=2, timeout=10.0)

    def test_down_node_times_out(self):
        """Test that a down node times out and a live one answers with its round trip"""
        FaultService.mark_down(self.graph, 'C', 1.0)
        counters = OperationCounters()
        results = ContainmentService.probe_neighborhood(self.agents['A'], self.graph, 1.0, counters=counters)
        self.assertTrue(results['C'].timed_out)
        self.assertFalse(results['B'].timed_out)
        self.assertEqual(results['B'].delay, 2.0)
        self.assertEqual(counters['containment.probe_messages'], 2)

    def test_slow_node_times_out(self):
        """Test that a round trip longer than the timeout counts as a failure"""
        agents = ContainmentService.build_agents(self.graph, k=2, timeout=3.0)
        results = ContainmentService.probe_neighborhood(agents['A'], self.graph, 0.0)
        self.assertTrue(results['C'].timed_out)

    def test_offline_agent(self):
        """Test that an agent whose home is down cannot probe"""
        FaultService.mark_down(self.graph, 'A', 0.0)
        with self.assertRaises(AgentOffline):
            ContainmentService.probe_neighborhood(self.agents['A'], self.graph, 0.0)

    def test_sweep_keeps_first_flag_time(self):
        """Test that a node flagged in two sweeps keeps its first flag time"""
        FaultService.mark_down(self.graph, 'C', 1.0)
        failure_set, _, _ = ContainmentService.sweep(self.agents, self.graph, 1.0)
        ContainmentService.sweep(self.agents, self.graph, 2.0, failure_set)
        self.assertEqual(failure_set, {'C'})
        self.assertEqual(failure_set.flag_time('C'), 1.0)

    def test_down_home_is_adopted(self):
        """Test that a live neighbour probes on behalf of a down agent"""
        FaultService.mark_down(self.graph, 'A', 0.0)
        adopted = ContainmentService.adopters(self.agents, self.graph)
        self.assertEqual(adopted['A'].home, 'B')

    def test_failure_set(self):
        """Test FailureSet flag and discard"""
        failure_set = FailureSet()
        self.assertTrue(failure_set.flag('X', 1.0))
        self.assertFalse(failure_set.flag('X', 2.0))
        self.assertEqual(failure_set.discard('X'), 1.0)
        self.assertEqual(len(failure_set), 0)


class NegotiatePlugTest(SimpleTestCase):
    """Test cases for ContainmentService.negotiate_plug"""

    def test_single_node_takes_everything(self):
        """Test that the first accepted node that fits every task is used alone"""
        graph = chain(Node('A', 4, 8), Node('B', 4, 8), Node('C', 4, 8))
        host_tasks(graph, 'A', Task('T1', 2, 2), Task('T2', 1, 1))
        plug = ContainmentService.negotiate_plug(graph, 'A', ['B', 'C'])
        self.assertEqual(plug.accepted, ('B',))
        self.assertEqual(plug.reroute, {'T1': 'B', 'T2': 'B'})
        self.assertTrue(plug.complete)

    def test_tasks_are_spread_when_no_node_fits_all(self):
        """Test first-fit decreasing over a prefix of accepted nodes"""
        graph = chain(Node('A', 4, 8), Node('B', 2, 8), Node('C', 2, 8))
        host_tasks(graph, 'A', Task('T1', 2, 1), Task('T2', 1.5, 1))
        plug = ContainmentService.negotiate_plug(graph, 'A', ['B', 'C'])
        self.assertEqual(plug.reroute, {'T1': 'B', 'T2': 'C'})
        self.assertEqual(plug.accepted, ('B', 'C'))

    def test_busy_candidate_declines(self):
        """Test that only state code 11 is accepted by default"""
        graph = chain(Node('A', 4, 8), Node('B', 4, 8, state=NodeState.BUSY), Node('C', 4, 8))
        host_tasks(graph, 'A', Task('T1', 1, 1))
        counters = OperationCounters()
        plug = ContainmentService.negotiate_plug(graph, 'A', ['B', 'C'], counters=counters)
        self.assertEqual(plug.accepted, ('C',))
        self.assertEqual(counters['containment.negotiation_messages'], 2)

    def test_critical_task_avoids_vulnerable_node(self):
        """Test that a critical task is not routed to a High vulnerability node"""
        graph = chain(Node('A', 4, 8), Node('B', 4, 8, vulnerability='High'), Node('C', 4, 8))
        host_tasks(graph, 'A', Task('T1', 1, 1, critical=True))
        plug = ContainmentService.negotiate_plug(graph, 'A', ['B', 'C'])
        self.assertEqual(plug.reroute, {'T1': 'C'})

    def test_shortfall(self):
        """Test that a task no neighbour can host raises NoCapacity with the partial plug"""
        graph = chain(Node('A', 4, 8), Node('B', 1, 8), Node('C', 1, 8))
        host_tasks(graph, 'A', Task('T1', 2, 1), Task('T2', 1, 1))
        with self.assertRaises(NoCapacity) as caught:
            ContainmentService.negotiate_plug(graph, 'A', ['B', 'C'])
        plug = caught.exception.plug
        self.assertEqual(plug.shortfall, ('T1',))
        self.assertEqual(plug.reroute, {'T2': 'B'})

    def test_candidates_ordered_by_hops(self):
        """Test that k_N is ordered by hop count then id and capped"""
        graph = chain(Node('A', 1, 1), Node('B', 1, 1), Node('C', 1, 1), Node('D', 1, 1))
        self.assertEqual(ContainmentService.candidates(graph, 'B', k=3, limit=2), ['A', 'C'])


class RedistributeTest(SimpleTestCase):
    """Test cases for redistribution and the full containment pass"""

    def setUp(self):
        self.graph = chain(Node('A', 4, 8), Node('B', 4, 8), Node('C', 4, 8))
        self.alloc = host_tasks(self.graph, 'A', Task('T1', 2, 2), Task('T2', 1, 1))

    def test_contain_moves_tasks_and_starts_recovery(self):
        """Test one containment pass over a crashed node"""
        FaultService.mark_down(self.graph, 'A', 1.0)
        agents = ContainmentService.build_agents(self.graph, k=2, timeout=10.0)
        report = ContainmentService.contain(self.graph, self.alloc, agents, 1.0, config={'k': 2})
        self.assertEqual(report.newly_flagged, ['A'])
        self.assertEqual(report.allocation.mapping, {'T1': 'B', 'T2': 'B'})
        self.assertEqual(report.allocation.pending, ())
        self.assertEqual(self.graph.node('A').state, NodeState.RECOVERING)
        self.assertEqual(self.graph.node('A').active_tasks, set())
        self.assertEqual(report.plugs['A'].created_at, 1.0 + report.probe_delay)

    def test_rejected_rule_queues_task(self):
        """Test that a rule onto a down node is rejected and the task queued"""
        FaultService.mark_down(self.graph, 'A', 1.0)
        FaultService.mark_down(self.graph, 'B', 1.0)
        plug = PlugStructure(failed='A', accepted=('B',), reroute={'T1': 'B'})
        with self.assertRaises(ConstraintBreach) as caught:
            ContainmentService.redistribute(self.graph, self.alloc, plug, 2.0)
        alloc = caught.exception.allocation
        self.assertEqual(sorted(alloc.pending), ['T1', 'T2'])
        self.assertEqual(caught.exception.rejected[0]['code'], 'NodeUnavailable')
        self.assertEqual(self.graph.node('A').state, NodeState.RECOVERING)


def random_connected(rng, count):
    """A random spanning tree over ``count`` nodes plus a few extra links"""
    nodes = [Node(f'N{index:02d}', 4, 8) for index in range(count)]
    pairs = {(rng.randrange(index), index) for index in range(1, count)}
    for _extra in range(rng.randint(0, count)):
        a, b = sorted(rng.sample(range(count), 2))
        pairs.add((a, b))
    links = [Link(nodes[a].id, nodes[b].id, 10.0, 1.0) for a, b in sorted(pairs)]
    return SystemGraph(nodes=nodes, links=links)


class GrowthTest(SimpleTestCase):
    """Test cases for message and comparison counts on growing topologies"""

    def test_probe_messages_match_neighborhood(self):
        """Test one probe message per node of the k-hop view"""
        rng = random.Random(17)
        for count in range(5, 41, 5):
            for k in (1, 2, 3):
                with self.subTest(count=count, k=k):
                    graph = random_connected(rng, count)
                    agents = ContainmentService.build_agents(graph, k=k, probe_interval=1.0, timeout=100.0)
                    home = rng.choice(sorted(graph.nodes))
                    counters = OperationCounters()
                    results = ContainmentService.probe_neighborhood(agents[home], graph, 0.0, counters=counters)
                    view = ContainmentService.neighborhood(graph, home, k)
                    self.assertEqual(counters['containment.probe_messages'], len(view))
                    self.assertEqual(set(results), set(view))

    def test_candidate_comparisons_are_bounded(self):
        """Test that choosing candidates costs O(d log limit) comparisons"""
        rng = random.Random(23)
        for count in range(5, 41, 5):
            for k in (1, 2, 3):
                limit = rng.randint(1, 8)
                with self.subTest(count=count, k=k, limit=limit):
                    graph = random_connected(rng, count)
                    failed = rng.choice(sorted(graph.nodes))
                    counters = OperationCounters()
                    chosen = ContainmentService.candidates(graph, failed, k=k, limit=limit, counters=counters)
                    distances = ContainmentService.neighborhood(graph, failed, k)
                    size = len(distances)
                    self.assertEqual(len(chosen), min(size, limit))
                    self.assertEqual(chosen, sorted(distances, key=lambda node: (distances[node], node))[:limit])
                    self.assertLessEqual(counters['containment.comparisons'], 4 * size * (1 + math.log2(limit)))
