import logging
import re

import networkx as nx

from core.signals import emit
from reasoner.exceptions import ReasonerUnavailable

from .models import (
    CausalEdge,
    DiagnosisGraph,
    DiagnosisResult,
    DiagnosisVariable,
    Subtree,
    SubtreeKind,
)

logger = logging.getLogger(__name__)

LAYER = 'diagnosis'


def _keywords(*words):
    return re.compile(r'\b(?:' + '|'.join(re.escape(word) for word in words) + ')', re.IGNORECASE)


class KeywordClassifier:
    """Assigns a variable label to at most one subtree kind.

    Categories are tried in a fixed order; the first keyword hit wins.
    """

    ORDER = (
        (SubtreeKind.THERMAL_ANOMALY, _keywords('temperature', 'thermal', 'overheat', 'fan')),
        (SubtreeKind.FIRMWARE_EVENT, _keywords(
            'firmware', 'bios', 'microcode', 'machine check', 'parity', 'ecc', 'kernel panic', 'tlb',
            'kernel terminated', 'core dump',
        )),
        (SubtreeKind.NETWORK_INSTABILITY, _keywords(
            'connection', 'network', 'socket', 'timeout', 'timed out', 'election', 'session', 'link', 'packet',
            'partition', 'refused', 'unreachable', 'route', 'stream', 'auth', 'password', 'invalid user',
            'preauth', 'reverse mapping', 'disconnect', 'send worker', 'end of stream', 'shuffle', 'fetch',
        )),
        (SubtreeKind.TASK_CONTENTION, _keywords(
            'process', 'worker', 'task', 'container', 'thread', 'queue', 'lock', 'job', 'contention',
        )),
        (SubtreeKind.RESOURCE_OVERLOAD, _keywords(
            'memory', 'cpu', 'disk', 'space', 'overload', 'oom', 'heap', 'saturation', 'pressure', 'throughput',
            'response time', 'crash', 'exhausted', 'full', 'storage', 'write', 'unhealthy',
        )),
    )

    def classify(self, label):
        for kind, pattern in self.ORDER:
            if pattern.search(label):
                return kind
        return None


class DiagnosisService:
    """Service for turning a log bundle into a consolidated causal graph"""

    @staticmethod
    def extract_variables(bundle, reasoner, counters=None):
        """Ask the reasoner for entities, one call per dialect present.

        Entities are merged by (kind, label); ids follow first-seen time,
        then extraction order.
        """
        if not bundle.records:
            return []
        if counters is not None:
            counters.bump('diagnosis.records', len(bundle))
        by_ref = bundle.by_ref()
        groups = {}
        for record in bundle.records:
            groups.setdefault(record.dialect, []).append(record)
        merged = {}
        for dialect, records in groups.items():
            try:
                response = reasoner.extract(dialect, records)
            except ReasonerUnavailable as exc:
                exc.context.update(node=bundle.node, records=len(bundle))
                raise
            for entity in response.entities:
                refs = merged.setdefault((entity.kind, entity.label), [])
                refs.extend(ref for ref in entity.refs if ref in by_ref and ref not in refs)
        drafts = []
        for order, ((kind, label), refs) in enumerate(merged.items()):
            if not refs:
                logger.debug('entity_without_evidence node=%s label=%s', bundle.node, label)
                continue
            refs = sorted(refs, key=lambda ref: (by_ref[ref].timestamp, bundle.refs.index(ref)))
            stamps = [by_ref[ref].timestamp for ref in refs]
            drafts.append((min(stamps), order, kind, label, refs, max(stamps)))
        drafts.sort(key=lambda draft: (draft[0], draft[1]))
        return [
            DiagnosisVariable(
                id=f'x{index:03d}',
                kind=kind,
                label=label,
                evidence=tuple(refs),
                first_seen=first_seen,
                last_seen=last_seen,
            )
            for index, (first_seen, _order, kind, label, refs, last_seen) in enumerate(drafts, start=1)
        ]

    @staticmethod
    def infer_edges(variables, reasoner, counters=None):
        """Ask Φ once per pair that respects temporal precedence.

        Variables are ordered by (first_seen, id); only earlier-to-later
        pairs are asked, so at most m(m-1)/2 oracle calls are made.
        """
        ordered = sorted(variables, key=lambda variable: (variable.first_seen, variable.id))
        edges = []
        for index, src in enumerate(ordered):
            for dst in ordered[index + 1:]:
                if counters is not None:
                    counters.bump('diagnosis.pairs')
                answer = reasoner.relation(src, dst)
                if answer.related:
                    edges.append(CausalEdge(src.id, dst.id, answer.confidence, answer.rationale))
        return edges

    @staticmethod
    def break_cycles(graph):
        """Remove the lowest-confidence edge of each cycle until the graph is a DAG.

        Ties go to the edge whose target was seen latest. Returns the
        removed edges.
        """
        removed = []
        while True:
            view = graph.to_networkx()
            try:
                cycle = nx.find_cycle(view)
            except nx.NetworkXNoCycle:
                return removed
            edges = [graph.edges[(src, dst)] for src, dst in cycle]
            victim = min(edges, key=lambda edge: (
                edge.confidence, -graph.variables[edge.dst].first_seen, edge.src, edge.dst,
            ))
            graph.remove_edge(victim.key)
            removed.append(victim)
            logger.info(
                'cycle_edge_removed node=%s src=%s dst=%s confidence=%s',
                graph.node, victim.src, victim.dst, victim.confidence,
            )

    @staticmethod
    def build_diagnosis_graph(node, variables, edges):
        """Graph over the variables with every cycle broken; returns (graph, removed edges)"""
        graph = DiagnosisGraph(node, variables, edges)
        return graph, DiagnosisService.break_cycles(graph)

    @staticmethod
    def extract_subtrees(graph, classifier=None):
        """One subtree per kind that has seed variables: the seeds and all their ancestors"""
        classifier = classifier or KeywordClassifier()
        seeds = {}
        for variable_id in sorted(graph.variables):
            kind = classifier.classify(graph.variables[variable_id].label)
            if kind is not None:
                seeds.setdefault(kind, []).append(variable_id)
        subtrees = []
        for kind in SubtreeKind:
            if kind not in seeds:
                continue
            members = set(seeds[kind]) | graph.ancestors(seeds[kind])
            subtrees.append(Subtree(kind=kind, graph=graph.induced(members)))
        return subtrees

    @staticmethod
    def consolidate(subtrees, node=None, memory=None, t=None):
        """Union of the ensemble's variables and edges"""
        if node is None:
            node = subtrees[0].graph.node if subtrees else ''
        consolidated = DiagnosisGraph(node)
        for subtree in subtrees:
            for variable in subtree.graph.variables.values():
                consolidated.add_variable(variable)
        for subtree in subtrees:
            for edge in subtree.graph.edges.values():
                consolidated.add_edge(edge)
        if memory is not None:
            memory.store(node, consolidated, t)
        return consolidated

    @staticmethod
    def diagnose(bundle, reasoner, classifier=None, memory=None, counters=None, stream=None, t=None):
        """Full diagnosis of one node's bundle"""
        variables = DiagnosisService.extract_variables(bundle, reasoner, counters)
        edges = DiagnosisService.infer_edges(variables, reasoner, counters)
        graph, removed = DiagnosisService.build_diagnosis_graph(bundle.node, variables, edges)
        subtrees = DiagnosisService.extract_subtrees(graph, classifier)
        consolidated = DiagnosisService.consolidate(subtrees, bundle.node, memory, t)
        emit(
            stream, bundle.end if t is None else t, LAYER, 'diagnosed', bundle.node,
            records=len(bundle), variables=len(variables), edges=len(graph.edges),
            subtrees=[str(subtree.kind) for subtree in subtrees],
        )
        logger.info(
            'diagnosed node=%s records=%s variables=%s edges=%s subtrees=%s',
            bundle.node, len(bundle), len(variables), len(graph.edges), len(subtrees),
        )
        return DiagnosisResult(graph=graph, subtrees=subtrees, consolidated=consolidated, removed_edges=removed)
