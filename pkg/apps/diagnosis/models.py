from dataclasses import dataclass, field

import networkx as nx
from django.db import models
from django.utils.translation import gettext_lazy as _

from continuum.topology import format_number

from .exceptions import InvalidDiagnosisGraph


class VariableKind(models.TextChoices):
    EVENT = 'Event', _('Event')
    METRIC = 'Metric', _('Metric')
    STATE_TRANSITION = 'StateTransition', _('State transition')
    RESOURCE_INDICATOR = 'ResourceIndicator', _('Resource indicator')
    ERROR_CODE = 'ErrorCode', _('Error code')


class SubtreeKind(models.TextChoices):
    RESOURCE_OVERLOAD = 'ResourceOverload', _('Resource overload')
    NETWORK_INSTABILITY = 'NetworkInstability', _('Network instability')
    TASK_CONTENTION = 'TaskContention', _('Task contention')
    THERMAL_ANOMALY = 'ThermalAnomaly', _('Thermal anomaly')
    FIRMWARE_EVENT = 'FirmwareEvent', _('Firmware event')


@dataclass(frozen=True)
class DiagnosisVariable:
    """An observable entity of the failed node, traced to its log records"""

    id: str
    kind: str
    label: str
    evidence: tuple
    first_seen: float
    last_seen: float

    def __post_init__(self):
        if not self.evidence:
            raise InvalidDiagnosisGraph(_('Variable {id} has no evidence').format(id=self.id), variable=self.id)
        if self.kind not in VariableKind.values:
            raise InvalidDiagnosisGraph(_('Unknown variable kind: {kind}').format(kind=self.kind), variable=self.id)
        object.__setattr__(self, 'kind', VariableKind(self.kind))
        object.__setattr__(self, 'evidence', tuple(self.evidence))


@dataclass(frozen=True)
class CausalEdge:
    src: str
    dst: str
    confidence: float = 1.0
    rationale: str = ''
    auxiliary: bool = False

    def __post_init__(self):
        if self.src == self.dst:
            raise InvalidDiagnosisGraph(_('Edge endpoints must differ: {id}').format(id=self.src), variable=self.src)
        if not 0.0 <= self.confidence <= 1.0:
            raise InvalidDiagnosisGraph(_('Edge confidence must be in [0, 1]'), src=self.src, dst=self.dst)

    @property
    def key(self):
        return (self.src, self.dst)


class DiagnosisGraph:
    """Variables and causal edges diagnosed for one node.

    Text form, one record per line::

        var <id> <kind> <label>
        seen <id> <first_seen> <last_seen>
        evidence <id> <ref>
        edge <src> <dst> <confidence> [aux]
    """

    def __init__(self, node, variables=(), edges=()):
        self.node = node
        self.variables = {}
        self.edges = {}
        for variable in variables:
            self.add_variable(variable)
        for edge in edges:
            self.add_edge(edge)

    def __repr__(self):
        return f'<DiagnosisGraph node={self.node} variables={len(self.variables)} edges={len(self.edges)}>'

    def __eq__(self, other):
        if not isinstance(other, DiagnosisGraph):
            return NotImplemented
        return self.node == other.node and self.variables == other.variables and self.edges == other.edges

    def add_variable(self, variable):
        known = self.variables.get(variable.id)
        if known is not None and known != variable:
            raise InvalidDiagnosisGraph(_('Duplicate variable id: {id}').format(id=variable.id), variable=variable.id)
        self.variables[variable.id] = variable
        return variable

    def add_edge(self, edge):
        for endpoint in edge.key:
            if endpoint not in self.variables:
                raise InvalidDiagnosisGraph(_('Edge endpoint does not exist: {id}').format(id=endpoint), variable=endpoint)
        if edge.key in self.edges and self.edges[edge.key] != edge:
            raise InvalidDiagnosisGraph(_('Duplicate edge: {src}-{dst}').format(src=edge.src, dst=edge.dst))
        self.edges[edge.key] = edge
        return edge

    def remove_edge(self, key):
        return self.edges.pop(key, None)

    def variable(self, variable_id):
        return self.variables[variable_id]

    def children(self, variable_id):
        return sorted(dst for src, dst in self.edges if src == variable_id)

    def out_degree(self, variable_id):
        return sum(1 for src, _dst in self.edges if src == variable_id)

    def roots(self):
        targets = {dst for _src, dst in self.edges}
        return sorted(variable_id for variable_id in self.variables if variable_id not in targets)

    def sinks(self):
        sources = {src for src, _dst in self.edges}
        return sorted(variable_id for variable_id in self.variables if variable_id not in sources)

    def to_networkx(self):
        view = nx.DiGraph()
        view.add_nodes_from(sorted(self.variables))
        for (src, dst), edge in sorted(self.edges.items()):
            view.add_edge(src, dst, confidence=edge.confidence, auxiliary=edge.auxiliary)
        return view

    def is_dag(self):
        return nx.is_directed_acyclic_graph(self.to_networkx())

    def ancestors(self, variable_ids):
        view = self.to_networkx()
        found = set()
        for variable_id in variable_ids:
            found |= nx.ancestors(view, variable_id)
        return found

    def induced(self, variable_ids, node=None):
        """Subgraph on ``variable_ids`` with every edge between them"""
        keep = set(variable_ids)
        return DiagnosisGraph(
            self.node if node is None else node,
            variables=[self.variables[variable_id] for variable_id in sorted(keep)],
            edges=[edge for key, edge in sorted(self.edges.items()) if key[0] in keep and key[1] in keep],
        )

    def copy(self):
        return DiagnosisGraph(self.node, self.variables.values(), self.edges.values())

    def dumps(self):
        lines = []
        for variable_id in sorted(self.variables):
            variable = self.variables[variable_id]
            lines.append(f'var {variable.id} {variable.kind.value} {variable.label}')
            lines.append(f'seen {variable.id} {format_number(variable.first_seen)} {format_number(variable.last_seen)}')
            lines.extend(f'evidence {variable.id} {ref}' for ref in variable.evidence)
        for key in sorted(self.edges):
            edge = self.edges[key]
            suffix = ' aux' if edge.auxiliary else ''
            lines.append(f'edge {edge.src} {edge.dst} {format_number(edge.confidence)}{suffix}')
        return '\n'.join(lines) + ('\n' if lines else '')

    @classmethod
    def loads(cls, text, node=''):
        declared = {}
        seen = {}
        evidence = {}
        edges = []
        for number, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split(' ', 3)
            try:
                if parts[0] == 'var':
                    declared[parts[1]] = (parts[2], parts[3])
                elif parts[0] == 'seen':
                    seen[parts[1]] = (float(parts[2]), float(parts[3]))
                elif parts[0] == 'evidence':
                    evidence.setdefault(parts[1], []).append(line.split(' ', 2)[2])
                elif parts[0] == 'edge':
                    tail = parts[3].split()
                    edges.append(CausalEdge(parts[1], parts[2], float(tail[0]), auxiliary=tail[1:] == ['aux']))
                else:
                    raise ValueError(parts[0])
            except (IndexError, ValueError) as exc:
                raise InvalidDiagnosisGraph(_('Bad graph line {number}').format(number=number), line=number, error=str(exc))
        variables = []
        for variable_id, (kind, label) in declared.items():
            first_seen, last_seen = seen.get(variable_id, (0.0, 0.0))
            variables.append(DiagnosisVariable(
                id=variable_id,
                kind=kind,
                label=label,
                evidence=tuple(evidence.get(variable_id, ())),
                first_seen=first_seen,
                last_seen=last_seen,
            ))
        return cls(node, variables, edges)


@dataclass(frozen=True)
class Subtree:
    """One category of the ensemble: its seed variables plus their ancestors"""

    kind: str
    graph: DiagnosisGraph

    @property
    def variables(self):
        return frozenset(self.graph.variables)

    @property
    def edges(self):
        return frozenset(self.graph.edges)


@dataclass
class DiagnosisResult:
    graph: DiagnosisGraph
    subtrees: list
    consolidated: DiagnosisGraph
    removed_edges: list = field(default_factory=list)


class DiagnosisMemory:
    """Consolidated graphs per node, latest last"""

    def __init__(self):
        self.entries = {}

    def store(self, node, graph, t=None):
        self.entries.setdefault(node, []).append((t, graph))

    def latest(self, node):
        stored = self.entries.get(node)
        return stored[-1][1] if stored else None

    def __contains__(self, node):
        return node in self.entries
