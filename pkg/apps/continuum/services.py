import logging
import math
import random
from collections import defaultdict
from fractions import Fraction

import networkx as nx
from django.utils.translation import gettext_lazy as _

from core.conf import section
from core.exceptions import HealsimError, InvalidParameter

from .exceptions import (
    CapacityExceeded,
    CriticalityViolation,
    NodeUnavailable,
    TaskNotMapped,
    Unreachable,
    ZeroCapacity,
)
from .models import (
    EPSILON,
    LIVE_STATES,
    RISKY_VULNERABILITIES,
    CompletionReport,
    NodeState,
    Violation,
    ViolationKind,
)

logger = logging.getLogger(__name__)


def _busy_accepts(value):
    if value is None:
        return bool(section('CONTINUUM').get('BUSY_ACCEPTS', False))
    return value


class AllocationService:
    """Service for placing tasks and checking allocation feasibility"""

    @staticmethod
    def accepting_states(busy_accepts=None):
        if _busy_accepts(busy_accepts):
            return (NodeState.AVAILABLE, NodeState.BUSY)
        return (NodeState.AVAILABLE,)

    @staticmethod
    def assign_task(graph, alloc, task, node_id, busy_accepts=None, time=None):
        """Assign ``task`` to ``node_id`` and return the new allocation.

        A task already hosted elsewhere is moved. The host becomes Busy
        when no cpu capacity is left.
        """
        node = graph.node(node_id)
        if node.state not in AllocationService.accepting_states(busy_accepts):
            raise NodeUnavailable(
                _('Node {node} is {state}').format(node=node_id, state=node.state.value),
                node=node_id, state=node.state.value,
            )
        if task.critical and node.vulnerability in RISKY_VULNERABILITIES:
            raise CriticalityViolation(
                _('Critical task {task} cannot run on {node}').format(task=task.id, node=node_id),
                task=task.id, node=node_id,
            )
        previous = alloc.host(task.id)
        already_here = previous == node_id and task.id in node.active_tasks
        cpu_after = graph.cpu_load(node_id) + (0.0 if already_here else task.cpu_demand)
        mem_after = graph.mem_load(node_id) + (0.0 if already_here else task.mem_demand)
        if cpu_after > node.capacity + EPSILON or mem_after > node.memory + EPSILON:
            raise CapacityExceeded(
                _('Task {task} does not fit on {node}').format(task=task.id, node=node_id),
                task=task.id, node=node_id,
            )
        graph.add_task(task)
        if previous is not None and previous != node_id and previous in graph.nodes:
            graph.release(task.id, previous, time=time)
        graph.place(task.id, node_id, time=time)
        return alloc.with_task(task.id, node_id, time=time)

    @staticmethod
    def check_constraints(graph, alloc, tasks, sources=None):
        """Return one Violation per breached constraint; empty means feasible.

        Loads are taken from the allocation, so a mapping can be checked
        before it is applied to the graph. ``sources`` maps task ids to the
        node their requests come from; without it the bandwidth floor is
        not checked.
        """
        violations = []
        cpu_by_node = defaultdict(list)
        mem_by_node = defaultdict(list)
        counted = set()
        known = dict(graph.tasks)
        # Tasks passed in but missing from the registry still load their host.
        known.update({task.id: task for task in tasks if task.id not in known})
        for task_id, node_id in alloc.mapping.items():
            task = known.get(task_id)
            if task is not None and task_id not in counted:
                counted.add(task_id)
                cpu_by_node[node_id].append(task.cpu_demand)
                mem_by_node[node_id].append(task.mem_demand)

        for task in tasks:
            node_id = alloc.host(task.id)
            if node_id is None:
                violations.append(Violation(ViolationKind.UNMAPPED_TASK, task=task.id))
                continue
            node = graph.nodes.get(node_id)
            if node is None:
                violations.append(Violation(
                    ViolationKind.STATE_NOT_AVAILABLE, task=task.id, node=node_id, detail='missing node',
                ))
                continue
            if node.state not in LIVE_STATES:
                violations.append(Violation(
                    ViolationKind.STATE_NOT_AVAILABLE, task=task.id, node=node_id, detail=node.state.value,
                ))
            if task.critical and node.vulnerability in RISKY_VULNERABILITIES:
                violations.append(Violation(
                    ViolationKind.VULN_CRITICAL, task=task.id, node=node_id, detail=node.vulnerability.value,
                ))
            if sources and task.id in sources:
                violations.extend(AllocationService._bandwidth_violations(graph, task.id, sources[task.id], node_id))

        hosts = sorted({alloc.host(task.id) for task in tasks if alloc.host(task.id) in graph.nodes})
        for node_id in hosts:
            node = graph.nodes[node_id]
            if math.fsum(cpu_by_node[node_id]) > node.capacity + EPSILON:
                violations.append(Violation(ViolationKind.CAP_CPU, node=node_id))
            if math.fsum(mem_by_node[node_id]) > node.memory + EPSILON:
                violations.append(Violation(ViolationKind.CAP_MEM, node=node_id))
        return violations

    @staticmethod
    def _bandwidth_violations(graph, task_id, source, host):
        if source == host:
            return []
        view = graph.to_networkx()
        try:
            path = nx.shortest_path(view, source, host, weight='latency')
        except (nx.NetworkXNoPath, nx.NodeNotFound):
            return [Violation(ViolationKind.BANDWIDTH_FLOOR, task=task_id, node=host, detail='no path')]
        found = []
        for a, b in zip(path, path[1:]):
            if view.edges[a, b]['bandwidth'] < graph.bandwidth_floor:
                found.append(Violation(ViolationKind.BANDWIDTH_FLOOR, task=task_id, node=host, detail=f'{a}-{b}'))
        return found


class MetricsService:
    """Service for latency and utilization of an allocation"""

    @staticmethod
    def task_latency(graph, alloc, task, source, routing=None):
        host = alloc.host(task.id)
        if host is None:
            raise TaskNotMapped(_('Task {task} has no host').format(task=task.id), task=task.id)
        graph.node(host)
        graph.node(source)
        network = 0.0
        if source != host:
            if routing is None:
                routing = graph.to_networkx(min_bandwidth=graph.bandwidth_floor, live_only=True)
            try:
                network = nx.shortest_path_length(routing, source, host, weight='latency')
            except (nx.NetworkXNoPath, nx.NodeNotFound):
                raise Unreachable(
                    _('No path from {source} to {host} above the bandwidth floor').format(source=source, host=host),
                    task=task.id, source=source, host=host,
                )
        node = graph.node(host)
        load = graph.cpu_load(host)
        if task.id in node.active_tasks:
            load -= task.cpu_demand
        factor = 1.0 + (max(load, 0.0) / node.capacity if node.capacity > 0 else 0.0)
        return network + task.compute_time * factor

    @staticmethod
    def compute_latency(graph, alloc, tasks, source):
        """Mean per-task latency: network path latency plus load-scaled compute time"""
        tasks = list(tasks)
        if not tasks:
            return 0.0
        routing = graph.to_networkx(min_bandwidth=graph.bandwidth_floor, live_only=True)
        latencies = [
            MetricsService.task_latency(graph, alloc, task, source[task.id], routing=routing)
            for task in tasks
        ]
        return math.fsum(latencies) / len(latencies)

    @staticmethod
    def compute_utilization(graph, alpha=None):
        """Weighted cpu and memory utilization of the whole continuum"""
        if alpha is None:
            alpha = section('CONTINUUM').get('ALPHA', 0.5)
        if not 0 < alpha <= 1:
            raise InvalidParameter(_('alpha must be in (0, 1]'), alpha=alpha)
        if not graph.nodes:
            raise ZeroCapacity(_('Graph has no nodes'))
        total_cpu = math.fsum(node.capacity for node in graph.nodes.values())
        total_mem = math.fsum(node.memory for node in graph.nodes.values())
        if total_cpu <= 0 or total_mem <= 0:
            raise ZeroCapacity(cpu=total_cpu, memory=total_mem)
        cpu_load = math.fsum(graph.cpu_load(node_id) for node_id in graph.nodes)
        mem_load = math.fsum(graph.mem_load(node_id) for node_id in graph.nodes)
        return alpha * (cpu_load / total_cpu) + (1 - alpha) * (mem_load / total_mem)


class ResilienceService:
    """Service for the expected completed-task fraction under failure scenarios"""

    @staticmethod
    def completion_report(graph, alloc, scenario_id):
        """A task completes iff its host is still Available or Busy"""
        indicators = {}
        for task_id in graph.tasks:
            host = alloc.host(task_id)
            node = graph.nodes.get(host) if host is not None else None
            indicators[task_id] = int(node is not None and node.state in LIVE_STATES)
        return CompletionReport(scenario_id=scenario_id, indicators=indicators)

    @staticmethod
    def compute_resilience(graph, scenarios, policy, trials=1, seed=0, exact=False):
        """Mean completed fraction over every (trial, scenario) run.

        ``policy`` exposes ``heal(graph, allocation, scenario, seed)`` and
        returns the final allocation. A policy error scores whatever the
        scenario completed so far; it is logged and not propagated.
        """
        scenarios = list(scenarios)
        if trials < 1:
            raise InvalidParameter(_('trials must be at least 1'), trials=trials)
        if not scenarios:
            raise InvalidParameter(_('At least one scenario is required'))
        rng = random.Random(seed)
        fractions = []
        for trial in range(trials):
            for index, scenario in enumerate(scenarios):
                run_seed = rng.randrange(2 ** 32)
                working = graph.copy()
                alloc = working.allocation()
                try:
                    alloc = policy.heal(working, alloc, scenario, seed=run_seed)
                except HealsimError as exc:
                    alloc = getattr(exc, 'allocation', None) or working.allocation()
                    logger.warning(
                        'pipeline_failure scenario=%s trial=%s index=%s code=%s error=%s',
                        scenario.id, trial, index, exc.code, exc,
                    )
                report = ResilienceService.completion_report(working, alloc, scenario.id)
                fractions.append(report.fraction)
        result = sum(fractions, Fraction(0)) / len(fractions)
        return result if exact else float(result)
