import heapq
import logging
import math
from functools import total_ordering

import networkx as nx
from django.utils.translation import gettext_lazy as _

from continuum.codec import decode_state, encode_state
from continuum.exceptions import ContinuumError
from continuum.models import EPSILON, RISKY_VULNERABILITIES, NodeState
from continuum.services import AllocationService
from core.conf import section
from core.exceptions import InvalidParameter
from core.signals import emit
from faults.services import SUSPECTED_CAUSE, FaultService

from .exceptions import AgentOffline, ConstraintBreach, NoCapacity
from .models import (
    ContainmentReport,
    FailureSet,
    Heartbeat,
    MonitoringAgent,
    PlugStructure,
    ProbeResponse,
    ProbeTimeout,
)

logger = logging.getLogger(__name__)

LAYER = 'containment'


@total_ordering
class _CountedKey:
    """Sort key that counts every comparison made on it"""

    __slots__ = ('value', 'counters')

    def __init__(self, value, counters):
        self.value = value
        self.counters = counters

    def __eq__(self, other):
        return self.value == other.value

    def __lt__(self, other):
        if self.counters is not None:
            self.counters.bump('containment.comparisons')
        return self.value < other.value


class ContainmentService:
    """Service for probing, failure detection, plug negotiation and task rerouting"""

    @staticmethod
    def neighborhood(graph, home, k):
        """Hop distances to every node within ``k`` hops of ``home`` (home excluded)"""
        distances = graph.hop_distances(home, cutoff=k)
        return {node: hops for node, hops in distances.items() if node != home}

    @staticmethod
    def default_timeout(graph, home, k, factor=None, probe_interval=None):
        """``factor`` times the one-way latency to the farthest k-neighbour"""
        if factor is None:
            factor = section('CONTAINMENT').get('TIMEOUT_FACTOR', 3.0)
        if probe_interval is None:
            probe_interval = section('CONTAINMENT').get('PROBE_INTERVAL', 1.0)
        neighbours = ContainmentService.neighborhood(graph, home, k)
        if not neighbours:
            return factor * probe_interval
        lengths = nx.single_source_dijkstra_path_length(graph.to_networkx(), home, weight='latency')
        farthest = max(lengths.get(node, 0.0) for node in neighbours)
        if farthest <= 0:
            return factor * probe_interval
        return factor * farthest

    @staticmethod
    def build_agents(graph, k=None, probe_interval=None, timeout=None, timeout_factor=None):
        """One monitoring agent per node"""
        settings_section = section('CONTAINMENT')
        k = settings_section.get('K', 2) if k is None else k
        probe_interval = settings_section.get('PROBE_INTERVAL', 1.0) if probe_interval is None else probe_interval
        if timeout is None:
            timeout = settings_section.get('TIMEOUT')
        if k < 1:
            raise InvalidParameter(_('k must be at least 1'), k=k)
        agents = {}
        for node_id in graph.nodes:
            agent_timeout = timeout
            if agent_timeout is None:
                agent_timeout = ContainmentService.default_timeout(graph, node_id, k, timeout_factor, probe_interval)
            if not agent_timeout > 0:
                raise InvalidParameter(_('Probe timeout must be positive'), timeout=agent_timeout)
            view = {node: None for node in ContainmentService.neighborhood(graph, node_id, k)}
            agents[node_id] = MonitoringAgent(
                id=f'agent-{node_id}',
                home=node_id,
                k=k,
                probe_interval=probe_interval,
                timeout=agent_timeout,
                view=view,
            )
        return agents

    @staticmethod
    def probe_neighborhood(agent, graph, t, counters=None, origin=None):
        """Probe every node in the agent's view.

        The probe travels the least-latency path over nodes that are not
        Down; its delay is the round trip. Down or too-slow nodes time out.
        ``origin`` lets an adopting agent probe from its own home.
        """
        origin = origin or agent.home
        if graph.node(origin).state == NodeState.DOWN:
            raise AgentOffline(_('Agent {agent} home {node} is down').format(agent=agent.id, node=origin), agent=agent.id)
        routing = graph.to_networkx(live_only=True)
        one_way = nx.single_source_dijkstra_path_length(routing, origin, weight='latency')
        results = {}
        for node_id in agent.neighborhood:
            if counters is not None:
                counters.bump('containment.probe_messages')
            node = graph.node(node_id)
            if node_id == origin:
                delay = 0.0
            elif node.state == NodeState.DOWN or node_id not in one_way:
                results[node_id] = ProbeTimeout(node=node_id, waited=agent.timeout)
                continue
            else:
                delay = 2.0 * one_way[node_id]
            if delay > agent.timeout:
                results[node_id] = ProbeTimeout(node=node_id, waited=agent.timeout)
                continue
            heartbeat = Heartbeat(
                cpu_load=graph.cpu_load(node_id),
                mem_load=graph.mem_load(node_id),
                queue_length=len(node.active_tasks),
            )
            results[node_id] = ProbeResponse(node=node_id, state=node.state, heartbeat=heartbeat, delay=delay)
            agent.view[node_id] = (node.state, heartbeat)
        return results

    @staticmethod
    def build_failure_set(results, t, failure_set=None):
        """Add every timed-out node to F(t); the first flag time wins"""
        failure_set = failure_set if failure_set is not None else FailureSet()
        for node_id in sorted(results):
            if results[node_id].timed_out:
                failure_set.flag(node_id, t)
        return failure_set

    @staticmethod
    def adopters(agents, graph):
        """Map each offline agent's home to the agent that adopts its neighbourhood.

        The adopter is the agent of the smallest live direct neighbour.
        """
        adopted = {}
        for home in sorted(agents):
            if graph.node(home).state != NodeState.DOWN:
                continue
            live = [node for node in graph.neighbors(home) if graph.node(node).state != NodeState.DOWN]
            if live:
                adopted[home] = agents[live[0]]
            else:
                logger.warning('unmonitored_neighborhood home=%s', home)
        return adopted

    @staticmethod
    def sweep(agents, graph, t, failure_set=None, counters=None):
        """Run every live agent once and merge the results into F(t).

        A node is timed out only if no probe of this sweep reached it.
        Returns ``(failure_set, results, max_delay)``.
        """
        merged = {}
        max_delay = 0.0
        probes = [(agent, agent.home) for home, agent in sorted(agents.items()) if graph.node(agent.home).state != NodeState.DOWN]
        for home, adopter in sorted(ContainmentService.adopters(agents, graph).items()):
            probes.append((agents[home], adopter.home))
        for agent, origin in probes:
            results = ContainmentService.probe_neighborhood(agent, graph, t, counters=counters, origin=origin)
            for node_id, result in results.items():
                current = merged.get(node_id)
                if current is None or (current.timed_out and not result.timed_out):
                    merged[node_id] = result
                if not result.timed_out:
                    max_delay = max(max_delay, result.delay)
                else:
                    max_delay = max(max_delay, agent.timeout)
        failure_set = ContainmentService.build_failure_set(merged, t, failure_set)
        return failure_set, merged, max_delay

    @staticmethod
    def candidates(graph, failed, k=None, limit=None, counters=None):
        """k_N: live-or-not neighbours of ``failed`` ordered by (hops, id), at most ``limit``"""
        settings_section = section('CONTAINMENT')
        k = settings_section.get('K', 2) if k is None else k
        limit = settings_section.get('CANDIDATE_LIMIT', 8) if limit is None else limit
        distances = ContainmentService.neighborhood(graph, failed, k)
        keyed = [_CountedKey((hops, node), counters) for node, hops in distances.items()]
        chosen = heapq.nsmallest(limit, keyed)
        return [key.value[1] for key in chosen]

    @staticmethod
    def _fits(graph, task, node_id, cpu_used, mem_used):
        node = graph.node(node_id)
        if task.critical and node.vulnerability in RISKY_VULNERABILITIES:
            return False
        return (
            cpu_used[node_id] + task.cpu_demand <= graph.residual_cpu(node_id) + EPSILON
            and mem_used[node_id] + task.mem_demand <= graph.residual_mem(node_id) + EPSILON
        )

    @staticmethod
    def _pack(graph, tasks, nodes):
        """First-fit decreasing on cpu demand; returns (rules, unplaced)"""
        cpu_used = {node: 0.0 for node in nodes}
        mem_used = {node: 0.0 for node in nodes}
        rules = {}
        unplaced = []
        for task in sorted(tasks, key=lambda task: (-task.cpu_demand, task.id)):
            for node_id in nodes:
                if ContainmentService._fits(graph, task, node_id, cpu_used, mem_used):
                    rules[task.id] = node_id
                    cpu_used[node_id] += task.cpu_demand
                    mem_used[node_id] += task.mem_demand
                    break
            else:
                unplaced.append(task.id)
        return rules, unplaced

    @staticmethod
    def negotiate_plug(graph, failed, k_N, t=0.0, counters=None, busy_accepts=None):
        """Ask each candidate for (C, M, S) and build the plug structure.

        Candidates answering state code 11 are accepted. One accepted node
        that fits every task is used alone; otherwise the shortest prefix
        of accepted nodes whose residual capacity and memory cover the
        tasks, extended while first-fit decreasing leaves tasks over.
        """
        tasks = [graph.task(task_id) for task_id in sorted(graph.node(failed).active_tasks)]
        accepting = {encode_state(state) for state in AllocationService.accepting_states(busy_accepts)}
        accepted = []
        for candidate in k_N:
            if candidate == failed:
                continue
            if counters is not None:
                counters.bump('containment.negotiation_messages')
            reply = (graph.residual_cpu(candidate), graph.residual_mem(candidate), encode_state(graph.node(candidate).state))
            if reply[2] in accepting:
                accepted.append(candidate)
            else:
                logger.debug('candidate_declined failed=%s candidate=%s state=%s', failed, candidate, decode_state(reply[2]))
        if not tasks:
            return PlugStructure(failed=failed, accepted=(), reroute={}, created_at=t)

        total_cpu = math.fsum(task.cpu_demand for task in tasks)
        total_mem = math.fsum(task.mem_demand for task in tasks)
        for node_id in accepted:
            rules, unplaced = ContainmentService._pack(graph, tasks, [node_id])
            if not unplaced:
                return PlugStructure(failed=failed, accepted=(node_id,), reroute=rules, created_at=t)

        prefix = 0
        cpu_sum = mem_sum = 0.0
        while prefix < len(accepted) and (cpu_sum + EPSILON < total_cpu or mem_sum + EPSILON < total_mem):
            cpu_sum += max(graph.residual_cpu(accepted[prefix]), 0.0)
            mem_sum += max(graph.residual_mem(accepted[prefix]), 0.0)
            prefix += 1
        prefix = max(prefix, 1) if accepted else 0
        rules, unplaced = ContainmentService._pack(graph, tasks, accepted[:prefix])
        while unplaced and prefix < len(accepted):
            prefix += 1
            rules, unplaced = ContainmentService._pack(graph, tasks, accepted[:prefix])

        used = tuple(node for node in accepted[:prefix] if node in rules.values())
        plug = PlugStructure(
            failed=failed,
            accepted=used,
            reroute=rules,
            created_at=t,
            shortfall=tuple(sorted(unplaced)),
        )
        if unplaced:
            raise NoCapacity(
                _('{count} task(s) of {node} cannot be placed').format(count=len(unplaced), node=failed),
                plug=plug, node=failed, shortfall=list(plug.shortfall),
            )
        return plug

    @staticmethod
    def redistribute(graph, alloc, plug, t, busy_accepts=None):
        """Apply the plug: move rerouted tasks, queue the rest, start recovery.

        Rules that would break a placement constraint are rejected and
        reported through ConstraintBreach, which carries the allocation
        with the remaining rules applied.
        """
        failed = graph.node(plug.failed)
        stale = sorted(set(failed.active_tasks) | {task for task, node in alloc.mapping.items() if node == plug.failed})
        rejected = []
        for task_id in sorted(plug.reroute):
            target = plug.reroute[task_id]
            if task_id not in stale:
                continue
            try:
                alloc = AllocationService.assign_task(graph, alloc, graph.task(task_id), target, busy_accepts=busy_accepts, time=t)
            except ContinuumError as exc:
                rejected.append({'task': task_id, 'node': target, 'code': exc.code})
                logger.warning('reroute_rejected failed=%s task=%s target=%s code=%s', plug.failed, task_id, target, exc.code)
        for task_id in stale:
            if alloc.host(task_id) == plug.failed:
                alloc = alloc.without_task(task_id, time=t, queue=True)
        graph.clear_tasks(plug.failed)
        if failed.state == NodeState.DOWN:
            FaultService.transition_state(graph, plug.failed, NodeState.RECOVERING, time=t, cause='contained')
        alloc = alloc.at(t)
        if rejected:
            raise ConstraintBreach(
                _('{count} reroute rule(s) rejected for {node}').format(count=len(rejected), node=plug.failed),
                allocation=alloc, rejected=rejected, node=plug.failed,
            )
        return alloc

    @staticmethod
    def contain(graph, alloc, agents, t, failure_set=None, counters=None, stream=None, config=None):
        """One containment pass at time ``t``: sweep, flag, negotiate, redistribute"""
        config = config or {}
        failure_set = failure_set if failure_set is not None else FailureSet()
        before = set(failure_set.as_set())
        failure_set, results, max_delay = ContainmentService.sweep(agents, graph, t, failure_set, counters)
        newly = sorted(set(failure_set.as_set()) - before)
        report = ContainmentReport(allocation=alloc, failure_set=failure_set, newly_flagged=newly, probe_delay=max_delay)
        for node_id in newly:
            emit(stream, t, LAYER, 'flag', node_id, timed_out=True)
            if graph.node(node_id).state != NodeState.DOWN:
                # Unreachable within the timeout counts as failed.
                FaultService.mark_down(graph, node_id, t, cause=SUSPECTED_CAUSE)
        reaction = t + max_delay
        for node_id in newly:
            k_N = ContainmentService.candidates(
                graph, node_id, k=config.get('k'), limit=config.get('candidate_limit'), counters=counters,
            )
            try:
                plug = ContainmentService.negotiate_plug(
                    graph, node_id, k_N, t=reaction, counters=counters, busy_accepts=config.get('busy_accepts'),
                )
            except NoCapacity as exc:
                plug = exc.plug
            emit(
                stream, reaction, LAYER, 'negotiate', node_id,
                candidates=list(k_N), accepted=list(plug.accepted), shortfall=list(plug.shortfall),
            )
            try:
                alloc = ContainmentService.redistribute(graph, alloc, plug, reaction, busy_accepts=config.get('busy_accepts'))
                rejected = []
            except ConstraintBreach as exc:
                alloc = exc.allocation
                rejected = exc.rejected
            emit(
                stream, reaction, LAYER, 'redistribute', node_id,
                moved=sorted(task for task in plug.reroute if alloc.host(task) == plug.reroute[task]),
                queued=list(alloc.pending), rejected=[rule['task'] for rule in rejected],
            )
            report.plugs[node_id] = plug
        report.allocation = alloc
        return report


class ContainmentPolicy:
    """Healing policy that only runs containment at every failure time"""

    name = 'containment'

    def __init__(self, **config):
        self.config = config

    def heal(self, graph, allocation, scenario, seed=0):
        agents = ContainmentService.build_agents(
            graph,
            k=self.config.get('k'),
            probe_interval=self.config.get('probe_interval'),
            timeout=self.config.get('timeout'),
            timeout_factor=self.config.get('timeout_factor'),
        )
        failure_set = FailureSet()
        for t in scenario.times:
            FaultService.apply_failures(graph, scenario, t)
            report = ContainmentService.contain(graph, allocation, agents, t, failure_set, config=self.config)
            allocation = report.allocation
        return allocation
