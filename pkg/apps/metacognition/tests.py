import random

import networkx as nx
from django.test import SimpleTestCase

from containment.models import FailureSet
from continuum.models import Node, NodeState, SystemGraph
from core.models import OperationCounters
from diagnosis.models import CausalEdge, DiagnosisGraph, DiagnosisVariable
from diagnosis.services import DiagnosisService
from faults.models import FailureEvent, FailureKind
from faults.services import FaultService
from logs.models import LogBundle, LogRecord, LogSource
from logs.services import LogService
from reasoner.backends import ScriptedBackend
from reasoner.schemas import EvaluateResponse, HypothesizeResponse
from reasoner.services import Reasoner
from telemetry.models import EventStream

from .exceptions import BadThresholds, EmptyNarrative, InvalidWeights, NoBestHypothesis, PathExplosion
from .models import Hypothesis, MetaConfig, ReasoningPath, Thresholds, Verdict, check_weights
from .services import MetacognitionService


def variable(id, label='x', first_seen=0.0, kind='Event', evidence=None):
    return DiagnosisVariable(id, kind, label, evidence=evidence or (f'{id}:1',), first_seen=first_seen, last_seen=first_seen)


def random_dag(rng, size, density):
    ids = [f'v{index:02d}' for index in range(size)]
    edges = [CausalEdge(a, b) for i, a in enumerate(ids) for b in ids[i + 1:] if rng.random() < density]
    return DiagnosisGraph('N', [variable(id) for id in ids], edges)


def brute_force_paths(graph, max_depth):
    view = graph.to_networkx()
    found = set()
    for root in graph.roots():
        for sink in graph.sinks():
            if root == sink:
                found.add((root,))
                continue
            for path in nx.all_simple_paths(view, root, sink, cutoff=max_depth - 1):
                found.add(tuple(path))
    return found


class FixedEvaluator:
    """Reasoner stand-in whose evaluation is fixed"""

    def __init__(self, **answer):
        self.answer = EvaluateResponse(**answer)

    def evaluate(self, *args):
        return self.answer


class RandomScores:
    """Reasoner stand-in with plain narratives and seeded random scores"""

    def __init__(self, rng):
        self.rng = rng

    def hypothesize(self, node, category, variables, evidence):
        return HypothesizeResponse(
            topic=f'{category}: {variables[0].label}',
            reason=' -> '.join(variable.label for variable in variables),
            solution=f'restart {node}',
        )

    def evaluate(self, *args):
        return EvaluateResponse(coherence=self.rng.random(), safety=self.rng.random(), utility=self.rng.random())


def evidence_bundle(graph):
    """One record per variable, matching the evidence refs of ``variable``"""
    records = tuple(
        LogRecord(
            float(index), LogSource.SYS, f'event {variable_id}',
            ref=f'{variable_id}:1', dialect='Synthetic', node_hint=graph.node,
        )
        for index, variable_id in enumerate(sorted(graph.variables))
    )
    return LogBundle(graph.node, 0.0, float(len(records)), records)


class EnumeratePathsTest(SimpleTestCase):
    """Test cases for root-to-sink path enumeration"""

    def test_matches_brute_force(self):
        """Test that enumeration finds exactly the bounded simple paths, in depth-first order"""
        rng = random.Random(11)
        for _trial in range(200):
            graph = random_dag(rng, rng.randint(1, 8), rng.choice([0.2, 0.4, 0.7]))
            max_depth = rng.randint(1, 6)
            paths = MetacognitionService.enumerate_paths(graph, max_depth)
            found = [path.variables for path in paths]
            self.assertEqual(found, sorted(brute_force_paths(graph, max_depth)))
            self.assertEqual([path.index for path in paths], list(range(len(paths))))

    def test_cap(self):
        """Test that the cap truncates enumeration and flags it"""
        graph = DiagnosisGraph('N', [variable('a'), variable('b'), variable('c'), variable('d')], [
            CausalEdge('a', 'b'), CausalEdge('a', 'c'), CausalEdge('a', 'd'),
        ])
        paths = MetacognitionService.enumerate_paths(graph, 4, cap=2)
        self.assertEqual(len(paths), 2)
        self.assertTrue(paths.truncated)
        with self.assertRaises(PathExplosion) as caught:
            MetacognitionService.enumerate_paths(graph, 4, cap=2, strict=True)
        self.assertEqual(len(caught.exception.paths), 2)


class ScoringTest(SimpleTestCase):
    """Test cases for the Γ score and its verdict bands"""

    def setUp(self):
        self.thresholds = Thresholds()

    def test_gamma(self):
        """Test the weighted sum of coherence, safety and utility"""
        self.assertAlmostEqual(MetacognitionService.gamma((0.5, 1.0, 0.2), (0.4, 0.35, 0.25)), 0.2 + 0.35 + 0.05)

    def test_gamma_properties(self):
        """Test range, per-component monotonicity and the weighted sum on random inputs"""
        rng = random.Random(17)
        for _trial in range(5000):
            raw = [rng.random() + 1e-6 for _index in range(3)]
            weights = check_weights(value / sum(raw) for value in raw)
            components = [rng.random() for _index in range(3)]
            gamma = MetacognitionService.gamma(components, weights)
            self.assertTrue(0.0 <= gamma <= 1.0)
            self.assertAlmostEqual(gamma, sum(weight * value for weight, value in zip(weights, components)), places=12)
            for position in range(3):
                raised = list(components)
                raised[position] += rng.random() * (1.0 - raised[position])
                self.assertGreaterEqual(MetacognitionService.gamma(raised, weights), gamma)
        for weights in ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)):
            self.assertEqual(MetacognitionService.gamma((1.0, 1.0, 1.0), weights), 1.0)
            self.assertEqual(MetacognitionService.gamma((0.0, 0.0, 0.0), weights), 0.0)

    def test_verdict_bands(self):
        """Test band edges: pro and acc are inclusive lower bounds, inh is Best"""
        classify = MetacognitionService.classify_verdict
        self.assertEqual(classify(0.0, self.thresholds), Verdict.HARMFUL)
        self.assertEqual(classify(0.349, self.thresholds), Verdict.HARMFUL)
        self.assertEqual(classify(0.35, self.thresholds), Verdict.REJECTED)
        self.assertEqual(classify(0.55, self.thresholds), Verdict.ACCEPTED)
        self.assertEqual(classify(0.85, self.thresholds), Verdict.BEST)
        self.assertEqual(classify(1.0, self.thresholds), Verdict.BEST)

    def test_verdict_bands_on_grid(self):
        """Test that the bands cover [0, 1] without overlap, in order, with inclusive lower edges"""
        classify = MetacognitionService.classify_verdict
        order = [Verdict.HARMFUL, Verdict.REJECTED, Verdict.ACCEPTED, Verdict.BEST]
        grid = [index / 1000 for index in range(1001)]
        rng = random.Random(23)
        for trial in range(200):
            pro, acc, inh = sorted(rng.sample(range(1001), 3))
            if trial % 5 == 0:
                acc = pro
            thresholds = Thresholds(pro / 1000, acc / 1000, inh / 1000)
            bands = {
                Verdict.HARMFUL: lambda value: value < thresholds.proliferation,
                Verdict.REJECTED: lambda value: thresholds.proliferation <= value < thresholds.acceptance,
                Verdict.ACCEPTED: lambda value: thresholds.acceptance <= value < thresholds.inhibition,
                Verdict.BEST: lambda value: value >= thresholds.inhibition,
            }
            previous = 0
            for gamma in grid:
                verdict = classify(gamma, thresholds)
                self.assertEqual([band for band, contains in bands.items() if contains(gamma)], [verdict])
                self.assertGreaterEqual(order.index(verdict), previous)
                previous = order.index(verdict)
            self.assertEqual(classify(thresholds.inhibition, thresholds), Verdict.BEST)
            self.assertEqual(classify(thresholds.acceptance, thresholds), Verdict.ACCEPTED)
            self.assertEqual(
                classify(thresholds.proliferation, thresholds), Verdict.REJECTED if pro < acc else Verdict.ACCEPTED,
            )

    def test_bad_thresholds(self):
        """Test that acc must stay below inh"""
        with self.assertRaises(BadThresholds):
            Thresholds(0.3, 0.9, 0.9)

    def test_bad_weights(self):
        """Test that weights must sum to one"""
        with self.assertRaises(InvalidWeights):
            MetaConfig(weights=(0.5, 0.5, 0.5))
        with self.assertRaises(InvalidWeights):
            MetaConfig(weights=(1.5, -0.5, 0.0))

    def test_components_are_clamped_and_verdict_overrides(self):
        """Test that out-of-range components are clamped and an explicit verdict is kept"""
        hypothesis = Hypothesis('H', ReasoningPath(0, ('a',)), 'agent-S01', 't', 'r', 's', evidence=('a:1',))
        evaluator = FixedEvaluator(coherence=2.0, safety=-1.0, utility=0.5, verdict='Best')
        scored = MetacognitionService.score_hypothesis(hypothesis, (0.4, 0.35, 0.25), evaluator)
        self.assertEqual((scored.coherence, scored.safety, scored.utility), (1.0, 0.0, 0.5))
        self.assertAlmostEqual(scored.gamma, 0.525)
        self.assertEqual(scored.verdict, Verdict.BEST)
        self.assertTrue(scored.override)


class RunTest(SimpleTestCase):
    """Test cases for the micro-agent loop"""

    def setUp(self):
        self.reasoner = Reasoner(ScriptedBackend(), dimension=64)

    def diagnosed(self, kind=FailureKind.DISK_FULL):
        records = FaultService.synthesize_logs(FailureEvent(10.0, 'E1', kind))
        bundle = LogService.extract_window(records, 'E1', 10.0, 120.0)
        return DiagnosisService.diagnose(bundle, self.reasoner).consolidated, bundle

    def two_loose_variables(self):
        records = (
            LogRecord(1.0, LogSource.SYS, 'no space left', ref='r:1', dialect='Synthetic', node_hint='N'),
            LogRecord(2.0, LogSource.SYS, 'write failed', ref='r:2', dialect='Synthetic', node_hint='N'),
        )
        graph = DiagnosisGraph('N', [
            variable('a', 'disk full', 1.0, 'ResourceIndicator', ('r:1',)),
            variable('b', 'write failed', 2.0, 'ErrorCode', ('r:2',)),
        ])
        return graph, LogBundle('N', 0.0, 10.0, records)

    def test_first_path_is_best(self):
        """Test that a strong first hypothesis inhibits the rest of the population"""
        graph, bundle = self.diagnosed()
        stream = EventStream()
        outcome = MetacognitionService.run(graph, bundle, self.reasoner, MetaConfig(), stream=stream)
        self.assertEqual(outcome.paths, 2)
        self.assertEqual(outcome.ledger.spawned, 2)
        self.assertTrue(outcome.ledger.inhibited)
        self.assertEqual(outcome.responses[Verdict.BEST.value], 1)
        self.assertAlmostEqual(outcome.scored[0].gamma, 0.9)
        self.assertAlmostEqual(outcome.ledger.rdr, 0.5)
        self.assertIn('inhibit', [event.kind for event in stream.snapshot()])

    def test_select_best_heals_node(self):
        """Test that H* leaves F(t) and its node becomes Available"""
        graph, bundle = self.diagnosed()
        outcome = MetacognitionService.run(graph, bundle, self.reasoner, MetaConfig())
        system = SystemGraph(nodes=[Node('E1', 4, 4, state=NodeState.RECOVERING)])
        failure_set = FailureSet()
        failure_set.flag('E1', 10.0)
        MetacognitionService.select_best(outcome, failure_set, system, t=11.0)
        self.assertEqual(outcome.best.id, 'E1-H000')
        self.assertNotIn('E1', failure_set)
        self.assertEqual(system.node('E1').state, NodeState.AVAILABLE)
        self.assertEqual(outcome.knowledge()[0], 'ResourceOverload: disk full')

    def test_harmful_proliferates_then_escalates(self):
        """Test auxiliary spawning, bridge edges and escalation without a Best verdict"""
        graph, bundle = self.two_loose_variables()
        config = MetaConfig(weights=(1.0, 0.0, 0.0))
        outcome = MetacognitionService.run(graph, bundle, self.reasoner, config)
        self.assertEqual(
            [hypothesis.verdict for hypothesis in outcome.scored],
            [Verdict.HARMFUL, Verdict.HARMFUL, Verdict.ACCEPTED],
        )
        self.assertEqual(outcome.scored[2].path.variables, ('a', 'b'))
        self.assertEqual(outcome.ledger.spawned, 6)
        self.assertEqual(len(outcome.ledger.proliferations), 2)
        self.assertTrue(outcome.restructured.edges[('a', 'b')].auxiliary)
        with self.assertRaises(NoBestHypothesis) as caught:
            MetacognitionService.select_best(outcome)
        self.assertTrue(caught.exception.outcome.escalated)
        self.assertEqual([hypothesis.id for hypothesis in outcome.supporting], ['N-H002'])

    def test_spawn_is_bounded(self):
        """Test that system agents are capped by r_max, the path count and the global cap"""
        graph, _bundle = self.two_loose_variables()
        ledger = MetacognitionService.spawn_micro_agents(graph, 5, MetaConfig(r_max=3))
        self.assertEqual(ledger.agents_at('System'), ['agent-S01', 'agent-S02', 'agent-S03'])
        ledger = MetacognitionService.spawn_micro_agents(graph, 5, MetaConfig(agent_cap=4), ledger=ledger)
        self.assertEqual(ledger.spawned, 4)
        self.assertEqual(MetacognitionService.spawn_micro_agents(graph, 1, MetaConfig()).spawned, 1)

    def test_agent_cap(self):
        """Test that proliferation stops at the global agent cap"""
        graph, bundle = self.two_loose_variables()
        config = MetaConfig(weights=(1.0, 0.0, 0.0), agent_cap=2)
        outcome = MetacognitionService.run(graph, bundle, self.reasoner, config)
        self.assertTrue(outcome.ledger.cap_reached)
        self.assertEqual(outcome.ledger.spawned, 2)
        self.assertEqual(outcome.responses[Verdict.HARMFUL.value], 2)

    def test_empty_narrative(self):
        """Test that a path without evidence in the bundle yields no hypothesis"""
        graph, _bundle = self.two_loose_variables()
        with self.assertRaises(EmptyNarrative):
            MetacognitionService.generate_hypothesis(
                'agent-S01', ReasoningPath(0, ('a',)), graph, LogBundle('N', 0.0, 1.0), self.reasoner,
            )

    def test_restructure_keeps_dag(self):
        """Test that a delta closing a cycle is resolved by dropping its weakest edge"""
        graph = DiagnosisGraph('N', [variable('a'), variable('b')], [CausalEdge('a', 'b', 0.9)])
        restructured = MetacognitionService.restructure_graph(graph, [((), (CausalEdge('b', 'a', 0.5, auxiliary=True),))])
        self.assertTrue(restructured.is_dag())
        self.assertEqual(sorted(restructured.edges), [('a', 'b')])
        self.assertEqual(sorted(graph.edges), [('a', 'b')])

    def test_terminates_on_random_graphs(self):
        """Test that the loop stops within the agent cap with H* chosen or the node escalated"""
        for seed in range(100):
            rng = random.Random(seed)
            graph = random_dag(rng, rng.randint(1, 10), rng.choice([0.2, 0.4, 0.7]))
            config = MetaConfig(
                r_max=rng.randint(1, 4), agent_cap=rng.randint(1, 12), proliferation_batch=rng.randint(1, 3),
            )
            counters = OperationCounters()
            outcome = MetacognitionService.run(graph, evidence_bundle(graph), RandomScores(rng), config, counters=counters)
            self.assertLessEqual(outcome.ledger.spawned, config.agent_cap)
            self.assertLessEqual(counters['metacognition.invocations'], outcome.paths + outcome.ledger.spawned)
            self.assertEqual(counters['metacognition.invocations'], len(outcome.ledger.invocations))
            try:
                MetacognitionService.select_best(outcome)
            except NoBestHypothesis:
                pass
            self.assertNotEqual(outcome.best is not None, outcome.escalated)
            if any(hypothesis.verdict == Verdict.BEST for hypothesis in outcome.scored):
                self.assertIsNotNone(outcome.best)
