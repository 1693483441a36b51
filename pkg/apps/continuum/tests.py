import itertools
import random
from fractions import Fraction
from pathlib import Path

import networkx as nx
from django.test import SimpleTestCase

from containment.services import ContainmentPolicy
from core.exceptions import InvalidParameter
from faults.models import FailureEvent, FailureScenario
from faults.policies import IdentityPolicy

from .codec import decode_state, decode_vulnerability, encode_state, encode_vulnerability
from .exceptions import (
    CapacityExceeded,
    CodecError,
    CriticalityViolation,
    DisconnectedGraph,
    InvalidTopology,
    NodeUnavailable,
    Unreachable,
)
from .models import Link, Node, NodeState, SystemGraph, Task, ViolationKind, Vulnerability
from .services import AllocationService, MetricsService, ResilienceService
from .topology import TopologyFile, format_number

FIXTURES = Path(__file__).resolve().parent.parent / 'simulation' / 'fixtures'


def line_graph(capacity=4.0, memory=8.0, bandwidth=10.0, latency=5.0):
    return SystemGraph(
        nodes=[Node('A', capacity, memory), Node('B', capacity, memory)],
        links=[Link('A', 'B', bandwidth, latency)],
    )


class TopologyFileTest(SimpleTestCase):
    """Test cases for the topology text format"""

    def test_fixture_round_trip_is_byte_stable(self):
        """Test that load then save reproduces the bundled topology"""
        text = (FIXTURES / 'topology.txt').read_text(encoding='utf-8')
        graph = TopologyFile.loads(text)
        saved = TopologyFile.dumps(graph)
        self.assertEqual(TopologyFile.dumps(TopologyFile.loads(saved)), saved)
        self.assertEqual(graph.host_of('T1'), 'E1')
        self.assertEqual(len(graph.nodes), 5)

    def test_missing_header(self):
        """Test that a file without the header is rejected"""
        with self.assertRaises(InvalidTopology):
            TopologyFile.loads('node A 1 1 Available Low\n')

    def test_header_is_accepted(self):
        """Test that a minimal file with the format header loads"""
        graph = TopologyFile.loads('recist-topology v1\nnode A 1 1 Available Low\n')
        self.assertEqual(sorted(graph.nodes), ['A'])
        self.assertTrue(TopologyFile.dumps(graph).startswith('recist-topology v1\n'))

    def test_bad_record_reports_line(self):
        """Test that a malformed record names its line"""
        with self.assertRaises(InvalidTopology) as caught:
            TopologyFile.loads('recist-topology v1\nnode A one 1 Available Low\n')
        self.assertEqual(caught.exception.context['line'], 2)

    def test_disconnected_graph(self):
        """Test that an unreachable node fails validation"""
        text = 'recist-topology v1\nnode A 1 1 Available Low\nnode B 1 1 Available Low\n'
        with self.assertRaises(DisconnectedGraph):
            TopologyFile.loads(text)

    def test_format_number(self):
        """Test the shortest round-trip number form"""
        self.assertEqual(format_number(3.0), '3')
        self.assertEqual(format_number(0.1), '0.1')
        self.assertEqual(float(format_number(1 / 3)), 1 / 3)


class CodecTest(SimpleTestCase):
    """Test cases for the two-bit wire codes"""

    def test_state_codes(self):
        """Test the positional state ordering"""
        self.assertEqual(encode_state(NodeState.AVAILABLE), '11')
        self.assertEqual(encode_state(NodeState.DOWN), '00')
        for state in NodeState:
            self.assertEqual(decode_state(encode_state(state)), state)

    def test_vulnerability_codes(self):
        """Test vulnerability encoding"""
        self.assertEqual(encode_vulnerability(Vulnerability.HIGH), '01')
        self.assertEqual(decode_vulnerability('10'), Vulnerability.CRITICAL)

    def test_unknown_code(self):
        """Test that an unknown code raises CodecError"""
        with self.assertRaises(CodecError):
            decode_state('2')


class AssignTaskTest(SimpleTestCase):
    """Test cases for AllocationService.assign_task"""

    def setUp(self):
        self.graph = line_graph()
        self.alloc = self.graph.allocation()

    def test_assign_fills_node_to_busy(self):
        """Test that a node with no cpu left becomes Busy"""
        alloc = AllocationService.assign_task(self.graph, self.alloc, Task('T1', 4.0), 'A')
        self.assertEqual(alloc.host('T1'), 'A')
        self.assertEqual(self.graph.node('A').state, NodeState.BUSY)

    def test_move_releases_previous_host(self):
        """Test that moving a task frees its old host"""
        alloc = AllocationService.assign_task(self.graph, self.alloc, Task('T1', 4.0), 'A')
        alloc = AllocationService.assign_task(self.graph, alloc, Task('T1', 4.0), 'B')
        self.assertEqual(alloc.host('T1'), 'B')
        self.assertEqual(self.graph.node('A').state, NodeState.AVAILABLE)
        self.assertEqual(self.graph.cpu_load('A'), 0.0)

    def test_down_node_refuses(self):
        """Test that a Down node refuses tasks"""
        self.graph.set_state('A', NodeState.DOWN)
        with self.assertRaises(NodeUnavailable):
            AllocationService.assign_task(self.graph, self.alloc, Task('T1', 1.0), 'A')

    def test_critical_task_on_vulnerable_node(self):
        """Test that a critical task may not run on a High vulnerability node"""
        self.graph.node('B').vulnerability = Vulnerability.HIGH
        with self.assertRaises(CriticalityViolation):
            AllocationService.assign_task(self.graph, self.alloc, Task('T1', 1.0, critical=True), 'B')

    def test_capacity_exceeded(self):
        """Test that a task larger than the residual capacity is refused"""
        with self.assertRaises(CapacityExceeded):
            AllocationService.assign_task(self.graph, self.alloc, Task('T1', 5.0), 'A')

    def test_refused_task_is_not_registered(self):
        """Test that a refused assignment leaves the task registry untouched"""
        self.graph.set_state('B', NodeState.DOWN)
        self.graph.node('A').vulnerability = Vulnerability.HIGH
        refusals = (
            (Task('big', 5.0), 'A', CapacityExceeded),
            (Task('late', 1.0), 'B', NodeUnavailable),
            (Task('core', 1.0, critical=True), 'A', CriticalityViolation),
        )
        for task, node_id, error in refusals:
            with self.subTest(task=task.id):
                with self.assertRaises(error):
                    AllocationService.assign_task(self.graph, self.alloc, task, node_id)
                self.assertNotIn(task.id, self.graph.tasks)
                self.assertEqual(self.graph.node(node_id).active_tasks, set())
        self.assertEqual(self.graph.tasks, {})


class CheckConstraintsTest(SimpleTestCase):
    """Test cases for AllocationService.check_constraints"""

    def test_feasible_allocation(self):
        """Test that a valid allocation has no violations"""
        graph = line_graph()
        alloc = AllocationService.assign_task(graph, graph.allocation(), Task('T1', 1.0), 'A')
        self.assertEqual(AllocationService.check_constraints(graph, alloc, [graph.task('T1')]), [])

    def test_overload_and_unmapped(self):
        """Test cpu overload and an unmapped task"""
        graph = line_graph()
        tasks = [Task('T1', 3.0), Task('T2', 3.0), Task('T3', 1.0)]
        for task in tasks:
            graph.add_task(task)
        alloc = graph.allocation().with_task('T1', 'A').with_task('T2', 'A')
        kinds = {violation.kind for violation in AllocationService.check_constraints(graph, alloc, tasks)}
        self.assertEqual(kinds, {ViolationKind.CAP_CPU, ViolationKind.UNMAPPED_TASK})

    def test_bandwidth_floor(self):
        """Test that a thin link on the source path is reported"""
        graph = line_graph(bandwidth=0.5)
        alloc = AllocationService.assign_task(graph, graph.allocation(), Task('T1', 1.0), 'B')
        violations = AllocationService.check_constraints(graph, alloc, [graph.task('T1')], sources={'T1': 'A'})
        self.assertEqual([violation.kind for violation in violations], [ViolationKind.BANDWIDTH_FLOOR])


class MetricsTest(SimpleTestCase):
    """Test cases for latency and utilization"""

    def test_latency_adds_network_and_loaded_compute(self):
        """Test network latency plus compute time scaled by the other load"""
        graph = line_graph()
        alloc = graph.allocation()
        alloc = AllocationService.assign_task(graph, alloc, Task('T1', 1.0, compute_time=2.0), 'B')
        alloc = AllocationService.assign_task(graph, alloc, Task('T2', 2.0), 'B')
        latency = MetricsService.compute_latency(graph, alloc, [graph.task('T1')], {'T1': 'A'})
        self.assertAlmostEqual(latency, 5.0 + 2.0 * 1.5)

    def test_latency_unreachable_below_floor(self):
        """Test that no path above the bandwidth floor raises Unreachable"""
        graph = line_graph(bandwidth=0.5)
        alloc = AllocationService.assign_task(graph, graph.allocation(), Task('T1', 1.0), 'B')
        with self.assertRaises(Unreachable):
            MetricsService.compute_latency(graph, alloc, [graph.task('T1')], {'T1': 'A'})

    def test_empty_task_list(self):
        """Test that no tasks means zero latency"""
        graph = line_graph()
        self.assertEqual(MetricsService.compute_latency(graph, graph.allocation(), [], {}), 0.0)

    def test_utilization_matches_formula(self):
        """Test utilization against the direct weighted formula on random graphs"""
        rng = random.Random(2)
        for _trial in range(10000):
            count = rng.randint(1, 3)
            nodes = [Node(f'N{index}', rng.uniform(1, 10), rng.uniform(1, 10)) for index in range(count)]
            graph = SystemGraph(nodes=nodes)
            cpu = mem = 0.0
            for index, node in enumerate(nodes):
                demand = rng.uniform(0.1, node.capacity)
                memory = rng.uniform(0.0, node.memory)
                graph.add_task(Task(f'T{index}', demand, memory))
                graph.place(f'T{index}', node.id)
                cpu += demand
                mem += memory
            alpha = rng.uniform(0.01, 1.0)
            expected = (
                alpha * cpu / sum(node.capacity for node in nodes)
                + (1 - alpha) * mem / sum(node.memory for node in nodes)
            )
            self.assertLessEqual(abs(MetricsService.compute_utilization(graph, alpha) - expected), 1e-12)

    def test_latency_on_source_is_compute_time(self):
        """Test that a task alone on its source node costs exactly its compute time"""
        rng = random.Random(4)
        for _trial in range(200):
            count = rng.randint(1, 5)
            graph = SystemGraph(
                nodes=[Node(f'N{index}', float(rng.randint(1, 8)), 8.0) for index in range(count)],
                links=[Link(f'N{index - 1}', f'N{index}', 10.0, 5.0) for index in range(1, count)],
            )
            alloc = graph.allocation()
            tasks, sources = [], {}
            for index, node_id in enumerate(sorted(graph.nodes)):
                task = Task(f'T{index}', 1.0, compute_time=float(rng.randint(0, 9)))
                alloc = AllocationService.assign_task(graph, alloc, task, node_id)
                tasks.append(task)
                sources[task.id] = node_id
            expected = sum(task.compute_time for task in tasks) / len(tasks)
            self.assertAlmostEqual(MetricsService.compute_latency(graph, alloc, tasks, sources), expected)

    def test_latency_matches_path_enumeration(self):
        """Test latency against the cheapest simple path above the bandwidth floor"""
        rng = random.Random(6)
        for trial in range(300):
            count = 4 if trial % 3 == 0 else rng.randint(2, 6)
            names = [f'N{index}' for index in range(count)]
            pairs = [(names[index - 1], names[index]) for index in range(1, count)]
            if trial % 3:
                pairs += [pair for pair in itertools.combinations(names, 2) if pair not in pairs and rng.random() < 0.3]
            links = [Link(a, b, rng.choice((0.5, 2.0, 10.0)), float(rng.randint(1, 9))) for a, b in pairs]
            graph = SystemGraph(nodes=[Node(name, 4.0, 8.0) for name in names], links=links)
            alloc = graph.allocation()
            task = Task('T', 1.0, compute_time=float(rng.randint(1, 5)))
            host = rng.choice(names)
            alloc = AllocationService.assign_task(graph, alloc, task, host)
            for index in range(rng.randint(0, 3)):
                alloc = AllocationService.assign_task(graph, alloc, Task(f'L{index}', 0.5), host)
            source = rng.choice(names)
            view = nx.Graph()
            view.add_nodes_from(names)
            view.add_edges_from((link.src, link.dst, {'latency': link.latency}) for link in links if link.bandwidth >= 1.0)
            paths = list(nx.all_simple_paths(view, source, host)) if source != host else [[host]]
            compute = task.compute_time * (1 + (graph.cpu_load(host) - task.cpu_demand) / 4.0)
            if not paths:
                with self.assertRaises(Unreachable):
                    MetricsService.compute_latency(graph, alloc, [task], {'T': source})
                continue
            network = min(sum(view.edges[a, b]['latency'] for a, b in zip(path, path[1:])) for path in paths)
            self.assertAlmostEqual(MetricsService.compute_latency(graph, alloc, [task], {'T': source}), network + compute)

    def test_utilization_grows_with_each_task(self):
        """Test that adding a task never lowers utilization"""
        rng = random.Random(8)
        for _trial in range(100):
            graph = SystemGraph(nodes=[Node(f'N{index}', 8.0, 8.0) for index in range(3)])
            alloc = graph.allocation()
            alpha = rng.uniform(0.01, 1.0)
            previous = MetricsService.compute_utilization(graph, alpha)
            self.assertEqual(previous, 0.0)
            for index in range(rng.randint(1, 10)):
                task = Task(f'T{index}', rng.uniform(0.1, 0.8), rng.uniform(0.0, 0.8))
                alloc = AllocationService.assign_task(graph, alloc, task, f'N{index % 3}')
                current = MetricsService.compute_utilization(graph, alpha)
                self.assertGreaterEqual(current, previous)
                previous = current

    def test_utilization_rejects_bad_alpha(self):
        """Test that alpha outside (0, 1] is rejected"""
        with self.assertRaises(InvalidParameter):
            MetricsService.compute_utilization(line_graph(), 0.0)


def small_instance(rng):
    """Complete graph of unit tasks, every node able to talk to every other"""
    count = rng.randint(2, 4)
    nodes = [Node(f'N{index}', float(rng.randint(1, 3)), 4.0) for index in range(count)]
    links = [Link(a.id, b.id, 10.0, 1.0) for a, b in itertools.combinations(nodes, 2)]
    graph = SystemGraph(nodes=nodes, links=links)
    for index in range(rng.randint(1, 4)):
        hosts = [node.id for node in nodes if graph.residual_cpu(node.id) >= 1.0]
        if not hosts:
            break
        graph.add_task(Task(f'T{index}', 1.0))
        graph.place(f'T{index}', rng.choice(hosts))
    return graph


CAPACITY = (3, 2, 4, 3)
MEMORY = (3, 4, 2, 3)
DEMANDS = ((1, 1), (2, 1), (1, 2), (2, 2))


def atlas_topologies():
    """Every connected graph on three or four nodes"""
    return [
        topology for topology in nx.graph_atlas_g()
        if topology.number_of_nodes() in (3, 4) and nx.is_connected(topology)
    ]


def atlas_instance(topology, demands):
    """Place each task on the first node, from a rotating start, that still fits it"""
    count = topology.number_of_nodes()
    nodes = [Node(f'N{index}', float(CAPACITY[index]), float(MEMORY[index])) for index in range(count)]
    links = [Link(f'N{a}', f'N{b}', 10.0, 1.0) for a, b in sorted(topology.edges)]
    graph = SystemGraph(nodes=nodes, links=links)
    for index, (cpu, mem) in enumerate(demands):
        for offset in range(count):
            node_id = f'N{(index + offset) % count}'
            if graph.residual_cpu(node_id) >= cpu and graph.residual_mem(node_id) >= mem:
                graph.add_task(Task(f'T{index}', float(cpu), float(mem)))
                graph.place(f'T{index}', node_id)
                break
    return graph


def first_fit_plan(tasks, nodes, free_cpu, free_mem):
    """Lexicographically smallest assignment that fits, unplaced (None) ranked last"""
    for targets in itertools.product(list(nodes) + [None], repeat=len(tasks)):
        cpu = dict.fromkeys(nodes, 0)
        mem = dict.fromkeys(nodes, 0)
        for (_task, task_cpu, task_mem), target in zip(tasks, targets):
            if target is not None:
                cpu[target] += task_cpu
                mem[target] += task_mem
        if all(cpu[node] <= free_cpu[node] and mem[node] <= free_mem[node] for node in nodes):
            return dict(zip((task for task, _cpu, _mem in tasks), targets))
    raise AssertionError('leaving every task unplaced always fits')


def contained_completion(topology, graph, waves, k):
    """Completed fraction after rerouting each failed node's tasks wave by wave"""
    demand = {task.id: (int(task.cpu_demand), int(task.mem_demand)) for task in graph.tasks.values()}
    capacity = {node.id: (int(node.capacity), int(node.memory)) for node in graph.nodes.values()}
    hosts = {task_id: graph.host_of(task_id) for task_id in graph.tasks}
    failed = set()

    def free(node_id, dimension):
        used = sum(demand[task][dimension] for task, host in hosts.items() if host == node_id)
        return capacity[node_id][dimension] - used

    for wave in waves:
        failed.update(wave)
        for node_id in sorted(wave):
            home = int(node_id[1:])
            hops = nx.single_source_shortest_path_length(topology, home, cutoff=k)
            ranked = sorted((distance, f'N{other}') for other, distance in hops.items() if other != home)
            accepted = [other for _distance, other in ranked[:8] if other not in failed and free(other, 0) > 0]
            displaced = sorted(
                ((task, demand[task][0], demand[task][1]) for task, host in hosts.items() if host == node_id),
                key=lambda item: (-item[1], item[0]),
            )
            if not displaced:
                continue
            free_cpu = {other: free(other, 0) for other in accepted}
            free_mem = {other: free(other, 1) for other in accepted}
            total_cpu = sum(cpu for _task, cpu, _mem in displaced)
            total_mem = sum(mem for _task, _cpu, mem in displaced)
            alone = [other for other in accepted if total_cpu <= free_cpu[other] and total_mem <= free_mem[other]]
            if alone:
                plan = {task: alone[0] for task, _cpu, _mem in displaced}
            else:
                prefix = 0
                while prefix < len(accepted) and (
                    sum(free_cpu[other] for other in accepted[:prefix]) < total_cpu
                    or sum(free_mem[other] for other in accepted[:prefix]) < total_mem
                ):
                    prefix += 1
                prefix = max(prefix, 1) if accepted else 0
                plan = first_fit_plan(displaced, accepted[:prefix], free_cpu, free_mem)
                while None in plan.values() and prefix < len(accepted):
                    prefix += 1
                    plan = first_fit_plan(displaced, accepted[:prefix], free_cpu, free_mem)
            hosts.update(plan)
    completed = sum(1 for host in hosts.values() if host is not None)
    return Fraction(completed, len(hosts))


def best_completion(graph, failed):
    """Most tasks any placement on the surviving nodes could keep, as a fraction"""
    survivors = [node for node in sorted(graph.nodes) if node not in failed]
    tasks = sorted(graph.tasks.values(), key=lambda task: task.id)
    best = 0
    for targets in itertools.product(survivors + [None], repeat=len(tasks)):
        cpu = dict.fromkeys(survivors, 0.0)
        mem = dict.fromkeys(survivors, 0.0)
        for task, target in zip(tasks, targets):
            if target is not None:
                cpu[target] += task.cpu_demand
                mem[target] += task.mem_demand
        if all(cpu[node] <= graph.node(node).capacity and mem[node] <= graph.node(node).memory for node in survivors):
            best = max(best, sum(target is not None for target in targets))
    return Fraction(best, len(tasks))


def survivors_stay_connected(topology, waves):
    down = set()
    for wave in waves:
        down.update(int(node[1:]) for node in wave)
        if not nx.is_connected(topology.subgraph(set(topology) - down)):
            return False
    return True


def failure_waves(nodes):
    """Single failures, simultaneous pairs and pairs one second apart in both orders"""
    for node in nodes:
        yield ((node,),)
    for pair in itertools.combinations(nodes, 2):
        yield (pair,)
        yield ((pair[0],), (pair[1],))
        yield ((pair[1],), (pair[0],))


class ResilienceTest(SimpleTestCase):
    """Test cases for ResilienceService.compute_resilience"""

    def test_identity_policy_counts_surviving_hosts(self):
        """Test that without healing only tasks on surviving hosts complete"""
        rng = random.Random(11)
        for _trial in range(100):
            graph = small_instance(rng)
            for size in (1, 2):
                for failed in itertools.combinations(sorted(graph.nodes), size):
                    scenario = FailureScenario('s', tuple(FailureEvent(0.0, node) for node in failed))
                    expected = Fraction(
                        sum(1 for task in graph.tasks if graph.host_of(task) not in failed), len(graph.tasks),
                    )
                    result = ResilienceService.compute_resilience(graph, [scenario], IdentityPolicy(), exact=True)
                    self.assertEqual(result, expected)

    def test_containment_matches_exhaustive_rerouting(self):
        """Test containment against exhaustive first-fit rerouting on every small topology"""
        policies = {
            k: ContainmentPolicy(k=k, probe_interval=1.0, timeout=100.0, candidate_limit=8, busy_accepts=False)
            for k in (1, 2)
        }
        for topology in atlas_topologies():
            names = [f'N{index}' for index in range(topology.number_of_nodes())]
            for size in range(1, 5):
                for demands in itertools.combinations_with_replacement(DEMANDS, size):
                    graph = atlas_instance(topology, demands)
                    if not graph.tasks:
                        continue
                    bounds = {}
                    for waves in failure_waves(names):
                        if not survivors_stay_connected(topology, waves):
                            continue
                        failed = frozenset(node for wave in waves for node in wave)
                        if failed not in bounds:
                            bounds[failed] = best_completion(graph, failed)
                        events = tuple(
                            FailureEvent(float(time), node) for time, wave in enumerate(waves) for node in wave
                        )
                        scenario = FailureScenario('s', events)
                        for k, policy in policies.items():
                            result = ResilienceService.compute_resilience(graph, [scenario], policy, exact=True)
                            context = (sorted(topology.edges), demands, waves, k)
                            self.assertEqual(result, contained_completion(topology, graph, waves, k), context)
                            self.assertLessEqual(result, bounds[failed], context)


    def test_original_graph_untouched(self):
        """Test that scenarios run on copies of the graph"""
        graph = line_graph()
        AllocationService.assign_task(graph, graph.allocation(), Task('T1', 1.0), 'A')
        scenario = FailureScenario('s', (FailureEvent(0.0, 'A'),))
        self.assertEqual(ResilienceService.compute_resilience(graph, [scenario], IdentityPolicy()), 0.0)
        self.assertEqual(graph.node('A').state, NodeState.AVAILABLE)

    def test_requires_a_scenario_and_a_trial(self):
        """Test parameter checks"""
        with self.assertRaises(InvalidParameter):
            ResilienceService.compute_resilience(line_graph(), [], IdentityPolicy())
        with self.assertRaises(InvalidParameter):
            ResilienceService.compute_resilience(line_graph(), [FailureScenario('s')], IdentityPolicy(), trials=0)
