import logging
from collections import Counter, deque
from dataclasses import replace

from django.utils.translation import gettext_lazy as _

from continuum.models import NodeState
from core.signals import emit
from diagnosis.models import CausalEdge
from diagnosis.services import DiagnosisService, KeywordClassifier
from faults.services import FaultService

from .exceptions import CapReached, EmptyNarrative, NoBestHypothesis, PathExplosion
from .models import (
    AgentLevel,
    Hypothesis,
    MetaConfig,
    MetaOutcome,
    MicroAgentLedger,
    PathList,
    ReasoningPath,
    Verdict,
    check_weights,
)

logger = logging.getLogger(__name__)

LAYER = 'metacognition'

AUXILIARY_CONFIDENCE = 0.5


def _clamp(value):
    return min(1.0, max(0.0, float(value)))


class MetacognitionService:
    """Service for the hypothesis loop run by reasoning micro-agents"""

    @staticmethod
    def enumerate_paths(graph, max_depth, cap=None, roots=None, start_index=0, strict=False):
        """Root-to-sink simple paths of at most ``max_depth`` variables.

        Depth-first from each root in id order, children in id order.
        ``roots`` restarts the search from other variables.
        """
        paths = PathList()
        roots = graph.roots() if roots is None else sorted(roots)
        children = {variable_id: graph.children(variable_id) for variable_id in graph.variables}

        def visit(trail):
            if paths.truncated:
                return
            current = trail[-1]
            if not children[current]:
                if cap is not None and len(paths) >= cap:
                    paths.truncated = True
                    return
                paths.append(ReasoningPath(start_index + len(paths), tuple(trail)))
                return
            if len(trail) >= max_depth:
                return
            for child in children[current]:
                if child not in trail:
                    visit(trail + [child])

        for root in roots:
            visit([root])
        if paths.truncated:
            logger.warning('path_cap_reached node=%s cap=%s', graph.node, cap)
            if strict:
                raise PathExplosion(paths=paths, node=graph.node, cap=cap)
        return paths

    @staticmethod
    def spawn_micro_agents(graph, paths, config, ledger=None):
        """r = min(r_max, paths) system-level agents, within the global cap"""
        ledger = ledger if ledger is not None else MicroAgentLedger()
        count = min(config.r_max, paths, max(config.agent_cap - ledger.spawned, 0))
        for _index in range(count):
            ledger.spawn(AgentLevel.SYSTEM)
        logger.debug('agents_spawned node=%s count=%s', graph.node, count)
        return ledger

    @staticmethod
    def category(graph, path, classifier=None):
        classifier = classifier or KeywordClassifier()
        kind = classifier.classify(graph.variables[path.variables[0]].label)
        return str(kind) if kind is not None else 'Unclassified'

    @staticmethod
    def generate_hypothesis(agent_id, path, graph, bundle, reasoner, ledger=None, time=0.0, classifier=None):
        """Turn one path into an unscored hypothesis through the reasoner"""
        if ledger is not None:
            ledger.invoke(agent_id, path.index, time)
        refs = set()
        for variable_id in path.variables:
            refs.update(graph.variables[variable_id].evidence)
        evidence = [record for record in bundle.records if record.ref in refs]
        if not evidence:
            raise EmptyNarrative(
                _('Path {index} has no evidence in the bundle').format(index=path.index),
                node=graph.node, path=list(path.variables),
            )
        variables = [graph.variables[variable_id] for variable_id in path.variables]
        answer = reasoner.hypothesize(
            graph.node, MetacognitionService.category(graph, path, classifier), variables, evidence,
        )
        if not (answer.topic.strip() and answer.reason.strip() and answer.solution.strip()):
            raise EmptyNarrative(_('Reasoner returned an empty narrative'), node=graph.node, path=list(path.variables))
        return Hypothesis(
            id=f'{graph.node}-H{path.index:03d}',
            path=path,
            agent=agent_id,
            topic=answer.topic.strip(),
            reason=answer.reason.strip(),
            solution=answer.solution.strip(),
            evidence=tuple(record.ref for record in evidence),
        )

    @staticmethod
    def gamma(components, weights):
        w1, w2, w3 = weights
        coherence, safety, utility = components
        return _clamp(w1 * coherence + w2 * safety + w3 * utility)

    @staticmethod
    def score_hypothesis(hypothesis, weights, reasoner):
        weights = check_weights(weights)
        answer = reasoner.evaluate(
            hypothesis.topic, hypothesis.reason, hypothesis.solution,
            hypothesis.path.depth, len(hypothesis.evidence),
        )
        components = (_clamp(answer.coherence), _clamp(answer.safety), _clamp(answer.utility))
        scored = replace(
            hypothesis,
            coherence=components[0],
            safety=components[1],
            utility=components[2],
            gamma=MetacognitionService.gamma(components, weights),
        )
        if answer.verdict:
            scored = replace(scored, verdict=Verdict(answer.verdict), override=True)
        return scored

    @staticmethod
    def classify_verdict(gamma, thresholds):
        if gamma < thresholds.proliferation:
            return Verdict.HARMFUL
        if gamma >= thresholds.inhibition:
            return Verdict.BEST
        if gamma >= thresholds.acceptance:
            return Verdict.ACCEPTED
        return Verdict.REJECTED

    @staticmethod
    def regulate_population(ledger, verdict, graph, config, explored=(), bridged=(), time=0.0):
        """Grow or stop the population after one verdict.

        Returns ``(ledger, assigned, deltas)`` where ``assigned`` pairs new
        agents with fresh paths. Harmful spawns a batch of auxiliary agents;
        fresh paths come from re-rooting, then from auxiliary bridges, and
        agents left without one stay idle. Best inhibits further spawning.
        """
        if verdict == Verdict.BEST:
            ledger.inhibited = True
            ledger.inhibitions.append({'time': time, 'node': graph.node})
            return ledger, [], []
        if verdict != Verdict.HARMFUL or ledger.inhibited:
            return ledger, [], []
        room = config.agent_cap - ledger.spawned
        if room <= 0:
            ledger.cap_reached = True
            raise CapReached(node=graph.node, cap=config.agent_cap)
        batch = min(config.proliferation_batch, room)
        explored = set(explored)
        starts = {path[0] for path in explored}
        new_paths = []
        deltas = []

        candidates = sorted(
            (variable_id for variable_id in graph.variables
             if variable_id not in starts and graph.out_degree(variable_id) > 0),
            key=lambda variable_id: (-graph.out_degree(variable_id), variable_id),
        )
        for root in candidates:
            if len(new_paths) >= batch:
                break
            for path in MetacognitionService.enumerate_paths(graph, config.max_depth, roots=[root]):
                if path.variables not in explored:
                    new_paths.append(path.variables)
                    explored.add(path.variables)
                    break

        ordered = sorted(graph.variables.values(), key=lambda variable: (variable.first_seen, variable.id))
        working = graph
        for earlier, later in zip(ordered, ordered[1:]):
            if len(new_paths) >= batch:
                break
            key = (earlier.id, later.id)
            if key in bridged or key in graph.edges or (later.id, earlier.id) in graph.edges:
                continue
            edge = CausalEdge(earlier.id, later.id, AUXILIARY_CONFIDENCE, 'auxiliary bridge', auxiliary=True)
            deltas.append(((), (edge,)))
            working = MetacognitionService.restructure_graph(working, [((), (edge,))])
            for path in MetacognitionService.enumerate_paths(working, config.max_depth, roots=working.roots()):
                if key in zip(path.variables, path.variables[1:]) and path.variables not in explored:
                    new_paths.append(path.variables)
                    explored.add(path.variables)
                    break

        agents = [ledger.spawn(AgentLevel.AUXILIARY) for _index in range(batch)]
        ledger.proliferations.append({
            'time': time, 'node': graph.node, 'agents': agents,
            'bridges': [list(edge.key) for _variables, edges in deltas for edge in edges],
        })
        logger.info('proliferation node=%s agents=%s bridges=%s', graph.node, len(agents), len(deltas))
        return ledger, list(zip(agents, new_paths)), deltas

    @staticmethod
    def restructure_graph(graph, deltas):
        """Apply (new variables, new edges) deltas, then restore the DAG property"""
        restructured = graph.copy()
        for variables, edges in deltas:
            for variable in variables:
                restructured.add_variable(variable)
            for edge in edges:
                if edge.key not in restructured.edges:
                    restructured.add_edge(edge)
        DiagnosisService.break_cycles(restructured)
        return restructured

    @staticmethod
    def select_best(outcome, failure_set=None, system_graph=None, t=None, stream=None):
        """Pick H* among Best verdicts and heal the node.

        H* maximizes gamma, earliest path first. The node leaves F(t) and
        moves Recovering to Available.
        """
        node = outcome.node
        best_ones = [hypothesis for hypothesis in outcome.scored if hypothesis.verdict == Verdict.BEST]
        outcome.supporting = [hypothesis for hypothesis in outcome.scored if hypothesis.verdict == Verdict.ACCEPTED]
        if not best_ones:
            outcome.escalated = True
            emit(stream, t, LAYER, 'escalate', node, responses=dict(outcome.responses))
            logger.warning('escalated node=%s scored=%s', node, len(outcome.scored))
            raise NoBestHypothesis(outcome=outcome, node=node)
        outcome.best = max(best_ones, key=lambda hypothesis: (hypothesis.gamma, -hypothesis.path.index))
        if failure_set is not None:
            failure_set.discard(node)
        if system_graph is not None and system_graph.node(node).state == NodeState.RECOVERING:
            FaultService.transition_state(system_graph, node, NodeState.AVAILABLE, time=t, cause='healed')
        emit(stream, t, LAYER, 'recovered', node, hypothesis=outcome.best.id, gamma=outcome.best.gamma)
        logger.info('healed node=%s hypothesis=%s gamma=%.6f', node, outcome.best.id, outcome.best.gamma)
        return outcome

    @staticmethod
    def run(graph, bundle, reasoner, config=None, clock=None, counters=None, stream=None, classifier=None):
        """Drive micro-agents over the paths of ``graph`` until Best or exhaustion"""
        config = config or MetaConfig.from_settings()

        def now():
            return clock.now if clock is not None else bundle.end

        node = graph.node
        paths = MetacognitionService.enumerate_paths(graph, config.max_depth, cap=config.path_cap)
        ledger = MetacognitionService.spawn_micro_agents(graph, len(paths), config)
        emit(stream, now(), LAYER, 'spawn', node, agents=ledger.spawned, level=AgentLevel.SYSTEM.value, paths=len(paths))
        system_agents = ledger.agents_at(AgentLevel.SYSTEM)
        queue = deque(
            (system_agents[index % len(system_agents)], path)
            for index, path in enumerate(paths)
        ) if system_agents else deque()
        explored = {path.variables for path in paths}
        bridged = set()
        deltas = []
        working = graph
        next_index = len(paths)
        outcome = MetaOutcome(node=node, ledger=ledger, paths=len(paths), responses=Counter())

        while queue and not ledger.inhibited:
            agent_id, path = queue.popleft()
            if counters is not None:
                counters.bump('metacognition.invocations')
            emit(stream, now(), LAYER, 'invoke', node, agent=agent_id, level=ledger.agents[agent_id].value, path=path.index)
            try:
                hypothesis = MetacognitionService.generate_hypothesis(
                    agent_id, path, working, bundle, reasoner, ledger, now(), classifier,
                )
            except EmptyNarrative as exc:
                outcome.responses[Verdict.REJECTED.value] += 1
                emit(stream, now(), LAYER, 'verdict', node, verdict=Verdict.REJECTED.value, gamma=None, path=path.index, empty=True)
                logger.info('empty_narrative node=%s path=%s error=%s', node, path.index, exc)
                continue
            hypothesis = MetacognitionService.score_hypothesis(hypothesis, config.weights, reasoner)
            banded = MetacognitionService.classify_verdict(hypothesis.gamma, config.thresholds)
            if hypothesis.override and hypothesis.verdict != banded:
                logger.info('verdict_override node=%s hypothesis=%s band=%s verdict=%s', node, hypothesis.id, banded, hypothesis.verdict)
            verdict = Verdict(hypothesis.verdict) if hypothesis.override else banded
            hypothesis = replace(hypothesis, verdict=verdict)
            outcome.scored.append(hypothesis)
            outcome.responses[verdict.value] += 1
            emit(stream, now(), LAYER, 'verdict', node, verdict=verdict.value, gamma=hypothesis.gamma, path=path.index)
            spawned_before = ledger.spawned
            try:
                ledger, assigned, new_deltas = MetacognitionService.regulate_population(
                    ledger, verdict, working, config, explored, bridged, now(),
                )
            except CapReached:
                logger.warning('agent_cap_reached node=%s cap=%s', node, config.agent_cap)
                continue
            if verdict == Verdict.BEST:
                emit(stream, now(), LAYER, 'inhibit', node, hypothesis=hypothesis.id)
                break
            if new_deltas:
                deltas.extend(new_deltas)
                for _variables, edges in new_deltas:
                    bridged.update(edge.key for edge in edges)
                working = MetacognitionService.restructure_graph(graph, deltas)
            if ledger.spawned > spawned_before:
                emit(
                    stream, now(), LAYER, 'spawn', node,
                    agents=ledger.spawned - spawned_before, level=AgentLevel.AUXILIARY.value, paths=len(assigned),
                )
            for agent_id, variables in assigned:
                explored.add(variables)
                queue.append((agent_id, ReasoningPath(next_index, variables)))
                next_index += 1

        outcome.restructured = MetacognitionService.restructure_graph(graph, deltas)
        outcome.ledger = ledger
        return outcome
