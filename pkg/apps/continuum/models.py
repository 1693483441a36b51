import copy
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction

import networkx as nx
from django.db import models
from django.utils.translation import gettext_lazy as _

from core.exceptions import InvalidParameter

from .exceptions import DisconnectedGraph, InvalidTopology, NodeNotFound, TaskNotFound

# Residual capacity at or below this is treated as zero.
EPSILON = 1e-9


class NodeState(models.TextChoices):
    DOWN = 'Down', _('Down')
    AVAILABLE = 'Available', _('Available')
    BUSY = 'Busy', _('Busy')
    RECOVERING = 'Recovering', _('Recovering')


class Vulnerability(models.TextChoices):
    LOW = 'Low', _('Low')
    MEDIUM = 'Medium', _('Medium')
    HIGH = 'High', _('High')
    CRITICAL = 'Critical', _('Critical')


class ViolationKind(models.TextChoices):
    CAP_CPU = 'CapCPU', _('CPU capacity exceeded')
    CAP_MEM = 'CapMem', _('Memory capacity exceeded')
    STATE_NOT_AVAILABLE = 'StateNotAvailable', _('Host is not available')
    VULN_CRITICAL = 'VulnCritical', _('Critical task on a vulnerable host')
    BANDWIDTH_FLOOR = 'BandwidthFloor', _('Link below the bandwidth floor')
    UNMAPPED_TASK = 'UnmappedTask', _('Task has no host')


# States in which a node hosts and runs tasks.
LIVE_STATES = (NodeState.AVAILABLE, NodeState.BUSY)

# Critical tasks may not run on these.
RISKY_VULNERABILITIES = (Vulnerability.HIGH, Vulnerability.CRITICAL)


@dataclass
class Node:
    """A device of the continuum with capacity C, memory M, state S and vulnerability V"""

    id: str
    capacity: float
    memory: float
    state: str = NodeState.AVAILABLE
    vulnerability: str = Vulnerability.LOW
    active_tasks: set = field(default_factory=set)

    def __post_init__(self):
        if self.capacity < 0 or self.memory < 0:
            raise InvalidTopology(_('Node {node} has negative capacity or memory').format(node=self.id))
        if self.state not in NodeState.values:
            raise InvalidTopology(_('Unknown node state: {state}').format(state=self.state))
        if self.vulnerability not in Vulnerability.values:
            raise InvalidTopology(_('Unknown vulnerability: {value}').format(value=self.vulnerability))
        self.state = NodeState(self.state)
        self.vulnerability = Vulnerability(self.vulnerability)


@dataclass(frozen=True)
class Task:
    id: str
    cpu_demand: float
    mem_demand: float = 0.0
    compute_time: float = 0.0
    critical: bool = False

    def __post_init__(self):
        if not self.cpu_demand > 0:
            raise InvalidParameter(_('Task {task} needs a positive cpu demand').format(task=self.id))
        if self.mem_demand < 0 or self.compute_time < 0:
            raise InvalidParameter(_('Task {task} has a negative demand').format(task=self.id))


@dataclass(frozen=True)
class Link:
    src: str
    dst: str
    bandwidth: float
    latency: float

    def __post_init__(self):
        if self.src == self.dst:
            raise InvalidTopology(_('Link endpoints must differ: {node}').format(node=self.src))
        if self.bandwidth < 0 or self.latency < 0:
            raise InvalidTopology(_('Link {src}-{dst} has a negative attribute').format(src=self.src, dst=self.dst))

    @property
    def endpoints(self):
        return frozenset((self.src, self.dst))


@dataclass(frozen=True)
class StateChange:
    """One entry of the node-state audit trail"""

    time: float
    node: str
    previous: str
    current: str
    cause: str = ''


@dataclass(frozen=True)
class Violation:
    kind: str
    task: str = ''
    node: str = ''
    detail: str = ''


@dataclass(frozen=True)
class Allocation:
    """Task to node mapping at simulated time ``time``.

    ``pending`` holds tasks that lost their host and could not be placed;
    they count as not completed.
    """

    time: float = 0.0
    mapping: dict = field(default_factory=dict)
    pending: tuple = ()

    def host(self, task_id):
        return self.mapping.get(task_id)

    def at(self, time):
        return replace(self, time=time)

    def with_task(self, task_id, node_id, time=None):
        mapping = dict(self.mapping)
        mapping[task_id] = node_id
        pending = tuple(task for task in self.pending if task != task_id)
        return replace(self, time=self.time if time is None else time, mapping=mapping, pending=pending)

    def without_task(self, task_id, time=None, queue=True):
        mapping = {task: node for task, node in self.mapping.items() if task != task_id}
        pending = self.pending
        if queue and task_id not in pending:
            pending = pending + (task_id,)
        return replace(self, time=self.time if time is None else time, mapping=mapping, pending=pending)


@dataclass(frozen=True)
class CompletionReport:
    scenario_id: str
    indicators: dict = field(default_factory=dict)

    @property
    def fraction(self):
        if not self.indicators:
            return Fraction(1)
        return Fraction(sum(self.indicators.values()), len(self.indicators))


class SystemGraph:
    """The continuum under simulation.

    Links are undirected. ``tasks`` is the registry of every task known to
    the simulation; nodes refer to tasks by id. State changes go through
    ``set_state`` so that ``history`` is a complete audit trail.
    """

    def __init__(self, nodes=(), links=(), tasks=(), bandwidth_floor=1.0):
        self.nodes = {}
        self.links = []
        self.tasks = {}
        self.bandwidth_floor = bandwidth_floor
        self.history = []
        self.applied_failures = set()
        self.time = 0.0
        self._link_index = {}
        for node in nodes:
            self.add_node(node)
        for link in links:
            self.add_link(link)
        for task in tasks:
            self.add_task(task)

    def __repr__(self):
        return f'<SystemGraph nodes={len(self.nodes)} links={len(self.links)} tasks={len(self.tasks)}>'

    # Construction

    def add_node(self, node):
        if node.id in self.nodes:
            raise InvalidTopology(_('Duplicate node: {node}').format(node=node.id))
        self.nodes[node.id] = node
        return node

    def add_link(self, link):
        for endpoint in (link.src, link.dst):
            if endpoint not in self.nodes:
                raise InvalidTopology(_('Link endpoint does not exist: {node}').format(node=endpoint))
        if link.endpoints in self._link_index:
            raise InvalidTopology(_('Duplicate link: {src}-{dst}').format(src=link.src, dst=link.dst))
        self._link_index[link.endpoints] = link
        self.links.append(link)
        return link

    def add_task(self, task):
        known = self.tasks.get(task.id)
        if known is not None and known != task:
            raise InvalidTopology(_('Conflicting definitions for task {task}').format(task=task.id))
        self.tasks[task.id] = task
        return task

    # Lookups

    def node(self, node_id):
        try:
            return self.nodes[node_id]
        except KeyError:
            raise NodeNotFound(_('Node does not exist: {node}').format(node=node_id), node=node_id)

    def task(self, task_id):
        try:
            return self.tasks[task_id]
        except KeyError:
            raise TaskNotFound(_('Task does not exist: {task}').format(task=task_id), task=task_id)

    def neighbors(self, node_id):
        self.node(node_id)
        found = set()
        for link in self.links:
            if link.src == node_id:
                found.add(link.dst)
            elif link.dst == node_id:
                found.add(link.src)
        return sorted(found)

    def host_of(self, task_id):
        for node in self.nodes.values():
            if task_id in node.active_tasks:
                return node.id
        return None

    def states(self):
        return {node_id: node.state for node_id, node in self.nodes.items()}

    # Loads

    def cpu_load(self, node_id):
        node = self.node(node_id)
        return math.fsum(self.task(task_id).cpu_demand for task_id in sorted(node.active_tasks))

    def mem_load(self, node_id):
        node = self.node(node_id)
        return math.fsum(self.task(task_id).mem_demand for task_id in sorted(node.active_tasks))

    def residual_cpu(self, node_id):
        return self.node(node_id).capacity - self.cpu_load(node_id)

    def residual_mem(self, node_id):
        return self.node(node_id).memory - self.mem_load(node_id)

    # Mutation

    def set_state(self, node_id, state, time=None, cause=''):
        """Set a node's state and append the change to the audit trail.

        Returns the prior state.
        """
        node = self.node(node_id)
        previous = node.state
        state = NodeState(state)
        if previous != state:
            node.state = state
            self.history.append(StateChange(
                time=self.time if time is None else time,
                node=node_id,
                previous=previous.value,
                current=state.value,
                cause=cause,
            ))
        return previous

    def place(self, task_id, node_id, update_state=True, time=None):
        self.task(task_id)
        node = self.node(node_id)
        node.active_tasks.add(task_id)
        if update_state and node.state == NodeState.AVAILABLE and self.residual_cpu(node_id) <= EPSILON:
            self.set_state(node_id, NodeState.BUSY, time=time, cause='load')

    def release(self, task_id, node_id, update_state=True, time=None):
        node = self.node(node_id)
        node.active_tasks.discard(task_id)
        if update_state and node.state == NodeState.BUSY and self.residual_cpu(node_id) > EPSILON:
            self.set_state(node_id, NodeState.AVAILABLE, time=time, cause='load')

    def clear_tasks(self, node_id):
        node = self.node(node_id)
        cleared = sorted(node.active_tasks)
        node.active_tasks.clear()
        return cleared

    # Views

    def allocation(self, time=None):
        """Build the allocation implied by the nodes' active tasks"""
        mapping = {}
        for node in self.nodes.values():
            for task_id in sorted(node.active_tasks):
                mapping[task_id] = node.id
        return Allocation(time=self.time if time is None else time, mapping=mapping)

    def to_networkx(self, min_bandwidth=None, live_only=False):
        """Return an undirected networkx view weighted by link latency"""
        view = nx.Graph()
        for node in self.nodes.values():
            if live_only and node.state == NodeState.DOWN:
                continue
            view.add_node(node.id, state=node.state)
        for link in self.links:
            if link.src not in view or link.dst not in view:
                continue
            if min_bandwidth is not None and link.bandwidth < min_bandwidth:
                continue
            view.add_edge(link.src, link.dst, latency=link.latency, bandwidth=link.bandwidth)
        return view

    def hop_distances(self, source, cutoff=None):
        """Hop counts from ``source`` over the static topology"""
        self.node(source)
        return nx.single_source_shortest_path_length(self.to_networkx(), source, cutoff=cutoff)

    def is_connected(self):
        if len(self.nodes) <= 1:
            return True
        return nx.is_connected(self.to_networkx())

    def validate(self):
        if not self.is_connected():
            raise DisconnectedGraph()
        return self

    def copy(self):
        return copy.deepcopy(self)
