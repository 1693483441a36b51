import logging
from dataclasses import dataclass, field

from django.utils.translation import gettext_lazy as _

from containment.models import FailureSet
from containment.services import ContainmentService
from continuum.exceptions import ContinuumError
from continuum.models import NodeState
from continuum.services import AllocationService
from core.conf import section
from core.models import OperationCounters, SimClock
from core.signals import emit
from diagnosis.models import DiagnosisMemory
from diagnosis.services import DiagnosisService, KeywordClassifier
from faults.services import FaultService
from knowledge.journal import KnowledgeJournal
from knowledge.models import KnowledgeThresholds, RendezvousStore, StoreScope
from knowledge.services import KnowledgeService
from logs.services import LogService
from metacognition.exceptions import NoBestHypothesis
from metacognition.models import MetaConfig, Thresholds
from metacognition.services import MetacognitionService
from reasoner.services import ReasonerService

from .exceptions import MissingInput

logger = logging.getLogger(__name__)

LAYER = 'simulation'

SYNTHETIC_DATASET = 'synthetic'


@dataclass
class PipelineReport:
    allocation: object
    outcomes: dict = field(default_factory=dict)
    healed: list = field(default_factory=list)
    escalated: list = field(default_factory=list)
    unresolved: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.unresolved


class Pipeline:
    """Containment, diagnosis, metacognition and knowledge over one scenario.

    ``datasets`` maps a dataset name to ``(records, DatasetConfig or None)``.
    Nodes without an attached dataset are diagnosed from synthesized logs.
    Everything runs on one simulated clock that reasoner latency advances.
    """

    def __init__(self, graph, scenario, reasoner, datasets=None, config=None, stream=None, counters=None, clock=None):
        self.graph = graph
        self.scenario = scenario
        self.reasoner = reasoner
        self.datasets = datasets or {}
        self.config = config
        self.stream = stream
        self.counters = counters if counters is not None else OperationCounters()
        self.clock = clock if clock is not None else SimClock()
        reasoner.clock = self.clock
        reasoner.counters = self.counters
        self.classifier = KeywordClassifier()
        self.memory = DiagnosisMemory()
        self.failure_set = FailureSet()
        self.meta_config = self._meta_config()
        thresholds = self._knowledge_thresholds()
        self.global_store = RendezvousStore('global', StoreScope.GLOBAL, thresholds, journal=KnowledgeJournal())
        self.local_stores = {}
        self._offsets = self._dataset_offsets()

    def section(self, name):
        if self.config is not None:
            return self.config.section(name)
        return section(name)

    def _meta_config(self):
        values = self.section('metacognition')
        return MetaConfig(
            weights=tuple(values['WEIGHTS']),
            thresholds=Thresholds(values['THETA_PRO'], values['THETA_ACC'], values['THETA_INH']),
            r_max=values['R_MAX'],
            proliferation_batch=values['PROLIFERATION_BATCH'],
            agent_cap=values['AGENT_CAP'],
            max_depth=values['MAX_DEPTH'],
            path_cap=values['PATH_CAP'],
            persist_supporting=values['PERSIST_SUPPORTING'],
        )

    def _knowledge_thresholds(self):
        values = self.section('knowledge')
        return KnowledgeThresholds(
            topic=values['THETA_TOPIC'], reason=values['THETA_REASON'],
            merge=values['THETA_MERGE'], split=values['THETA_SPLIT'],
        )

    def _dataset_offsets(self):
        """Seconds added to simulated time to land inside each dataset's log time.

        A dataset's first failure event lines up with its anchor, by
        default the timestamp of its last record.
        """
        offsets = {}
        for name, (records, dataset) in self.datasets.items():
            times = [event.time for event in self.scenario.events if self.scenario.attached_logs.get(event.node) == name]
            if not times or not records:
                continue
            anchor = dataset.anchor if dataset is not None and dataset.anchor is not None else max(
                record.timestamp for record in records
            )
            offsets[name] = anchor - min(times)
        return offsets

    def local_store(self, node):
        if node not in self.local_stores:
            self.local_stores[node] = RendezvousStore(f'rp-{node}', StoreScope.LOCAL, self.global_store.thresholds)
        return self.local_stores[node]

    def bundle_for(self, node, t):
        delta_d = self.section('logs')['DELTA_D']
        name = self.scenario.attached_logs.get(node)
        if name is not None:
            if name not in self.datasets:
                raise MissingInput(_('Scenario attaches unknown dataset {name}').format(name=name), node=node, dataset=name)
            records, _dataset = self.datasets[name]
            bundle = LogService.extract_window(records, node, t + self._offsets.get(name, 0.0), delta_d)
        else:
            name = SYNTHETIC_DATASET
            event = self.scenario.event_for(node, t)
            records = FaultService.synthesize_logs(event) if event is not None else []
            bundle = LogService.extract_window(records, node, t, delta_d)
        emit(self.stream, self.clock.now, LAYER, 'bundle', node, dataset=name, records=len(bundle))
        return bundle

    def heal(self, node, report):
        """Diagnose, reason and learn for one flagged node"""
        now = self.clock.now
        if self.graph.node(node).state == NodeState.DOWN:
            FaultService.transition_state(self.graph, node, NodeState.RECOVERING, time=now, cause='diagnosing')
        bundle = self.bundle_for(node, now)
        diagnosis = DiagnosisService.diagnose(
            bundle, self.reasoner, self.classifier, self.memory, self.counters, self.stream, t=self.clock.now,
        )
        graph = diagnosis.consolidated if diagnosis.consolidated.variables else diagnosis.graph
        outcome = MetacognitionService.run(
            graph, bundle, self.reasoner, self.meta_config, self.clock, self.counters, self.stream, self.classifier,
        )
        report.outcomes.setdefault(node, []).append(outcome)
        try:
            MetacognitionService.select_best(outcome, self.failure_set, self.graph, self.clock.now, self.stream)
        except NoBestHypothesis:
            report.escalated.append(node)
            return outcome
        report.healed.append(node)
        local = self.local_store(node)
        KnowledgeService.store_outcome(
            local, outcome, self.reasoner, t=self.clock.now, counters=self.counters, stream=self.stream,
            persist_supporting=self.meta_config.persist_supporting,
        )
        KnowledgeService.sync_global(self.global_store, local, self.counters, self.stream, time=self.clock.now)
        return outcome

    def retry_pending(self, alloc):
        """Place queued tasks on the first live node that takes them"""
        busy_accepts = self.section('continuum')['BUSY_ACCEPTS']
        for task_id in list(alloc.pending):
            task = self.graph.task(task_id)
            for node_id in sorted(self.graph.nodes):
                try:
                    alloc = AllocationService.assign_task(
                        self.graph, alloc, task, node_id, busy_accepts=busy_accepts, time=self.clock.now,
                    )
                except ContinuumError:
                    continue
                logger.info('pending_task_placed task=%s node=%s', task_id, node_id)
                break
        return alloc

    def run(self, alloc=None):
        containment = self.section('containment')
        continuum = self.section('continuum')
        agents = ContainmentService.build_agents(
            self.graph,
            k=containment['K'],
            probe_interval=containment['PROBE_INTERVAL'],
            timeout=containment['TIMEOUT'],
            timeout_factor=containment['TIMEOUT_FACTOR'],
        )
        contain_config = {
            'k': containment['K'],
            'candidate_limit': containment['CANDIDATE_LIMIT'],
            'busy_accepts': continuum['BUSY_ACCEPTS'],
        }
        alloc = alloc if alloc is not None else self.graph.allocation(0.0)
        report = PipelineReport(allocation=alloc)
        for t in self.scenario.times:
            self.clock.set(t)
            FaultService.apply_failures(self.graph, self.scenario, t)
            contained = ContainmentService.contain(
                self.graph, alloc, agents, self.clock.now, self.failure_set, self.counters, self.stream, contain_config,
            )
            alloc = contained.allocation
            self.clock.advance(contained.probe_delay)
            for node in contained.newly_flagged:
                self.heal(node, report)
            alloc = self.retry_pending(alloc)
        resolved = set(report.healed) | set(report.escalated)
        report.unresolved = [node for node in self.scenario.nodes if node not in resolved]
        report.allocation = alloc
        logger.info(
            'pipeline_done scenario=%s healed=%s escalated=%s unresolved=%s calls=%s',
            self.scenario.id, len(report.healed), len(report.escalated), len(report.unresolved), self.reasoner.calls,
        )
        return report


class PipelinePolicy:
    """Healing policy that runs the full pipeline with the scripted reasoner"""

    name = 'pipeline'

    def __init__(self, datasets=None, config=None):
        self.datasets = datasets or {}
        self.config = config

    def heal(self, graph, allocation, scenario, seed=0):
        reasoner = ReasonerService.build('scripted', seed=seed)
        pipeline = Pipeline(graph, scenario, reasoner, datasets=self.datasets, config=self.config)
        return pipeline.run(allocation).allocation
