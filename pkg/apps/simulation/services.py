import json
import logging
from dataclasses import replace
from pathlib import Path

from django.utils.translation import gettext_lazy as _

from continuum.exceptions import InvalidTopology
from continuum.topology import TopologyFile
from core.exceptions import HealsimError
from core.models import OperationCounters, SimClock
from faults.exceptions import FaultError
from faults.scenario import ScenarioFile
from faults.services import FaultService
from knowledge import snapshot
from logs.exceptions import LogError
from logs.models import ParseReport
from logs.services import LogService
from reasoner.exceptions import ReasonerError
from reasoner.models import BackendName
from reasoner.services import ReasonerService
from reasoner.transcript import Transcript
from telemetry.exceptions import EmptyScope
from telemetry.models import CpuMode, EventStream, ExportFormat
from telemetry.services import TelemetryService

from .config import ConfigFile
from .exceptions import InvalidConfig, MissingInput, PipelineFailure
from .models import ERROR_FILE, ExitCode, Finding, RunResult
from .pipeline import SYNTHETIC_DATASET, Pipeline

logger = logging.getLogger(__name__)

RUN_SCOPE = 'run'

INPUT_ERRORS = (MissingInput, LogError, InvalidTopology, FaultError)


def _exit_code(exc):
    if isinstance(exc, InvalidConfig):
        return ExitCode.CONFIG_ERROR
    if isinstance(exc, INPUT_ERRORS):
        return ExitCode.INPUT_ERROR
    return ExitCode.PIPELINE_FAILURE


def _require(path, what):
    if path is None or not Path(path).is_file():
        raise MissingInput(_('Missing {what} file: {path}').format(what=what, path=path), input=what, path=str(path))
    return Path(path)


class SimulationService:
    """Service for loading run inputs, running the pipeline and writing outputs"""

    @staticmethod
    def load_dataset(config, dataset, counters=None):
        path = _require(config.resolve(dataset.path), f'dataset {dataset.name}')
        report = ParseReport()
        base_year = dataset.base_year or config.section('logs')['BASE_YEAR']
        with path.open('rb') as stream:
            records = LogService.parse(
                stream, dataset.dialect, origin=dataset.origin or dataset.name,
                base_year=base_year, report=report, counters=counters,
            )
        logger.info(
            'dataset_loaded name=%s dialect=%s records=%s malformed=%s',
            dataset.name, dataset.dialect, len(records), report.malformed_count,
        )
        return records

    @staticmethod
    def load_inputs(config, counters=None):
        """Topology, scenario and every configured dataset, checked against each other"""
        bandwidth_floor = config.section('continuum')['BANDWIDTH_FLOOR']
        graph = TopologyFile.load(_require(config.topology_path, 'topology'), bandwidth_floor=bandwidth_floor)
        scenario = ScenarioFile.load(_require(config.scenario_path, 'scenario'))
        FaultService.validate_scenario(graph, scenario)
        for node, name in sorted(scenario.attached_logs.items()):
            if name not in config.datasets:
                raise MissingInput(
                    _('Scenario attaches {name} to {node} but no such dataset is configured').format(name=name, node=node),
                    node=node, dataset=name,
                )
        datasets = {
            name: (SimulationService.load_dataset(config, dataset, counters), dataset)
            for name, dataset in sorted(config.datasets.items())
        }
        return graph, scenario, datasets

    @staticmethod
    def build_reasoner(config, counters=None, clock=None):
        replay_from = None
        if config.backend == BackendName.REPLAY:
            replay_from = Transcript.load(_require(config.transcript_path, 'transcript'))
        return ReasonerService.build(
            config.backend,
            replay_from=replay_from,
            counters=counters,
            clock=clock,
            seed=config.seed,
            config_hash=config.config_hash,
            config=config.section('reasoner'),
            dimension=config.section('knowledge')['DIMENSION'],
        )

    @staticmethod
    def rates(stream, datasets):
        """Rates for the whole run and for every dataset scope that produced responses"""
        scopes = {RUN_SCOPE: None}
        scopes.update({name: name for name in sorted(datasets)})
        scopes[SYNTHETIC_DATASET] = SYNTHETIC_DATASET
        rates = {}
        for scope, dataset in scopes.items():
            try:
                rates[scope] = TelemetryService.compute_rates(stream, dataset=dataset)
            except EmptyScope:
                logger.info('rates_skipped scope=%s', scope)
        return rates

    @staticmethod
    def recoveries(stream, config):
        telemetry = config.section('telemetry')
        records = TelemetryService.recovery_records(stream, telemetry['UNIT_COST'])
        if CpuMode(telemetry['CPU_MODE']) != CpuMode.PROCESS or not records:
            return records
        weights = {}
        for record in records:
            weights[record.node] = weights.get(record.node, 0) + record.calls
        series = TelemetryService.cpu_series([], mode=CpuMode.PROCESS, interval=telemetry['CPU_INTERVAL'])
        if series.synthetic:
            return records
        per_node = TelemetryService.attribute_cpu(series, weights)
        return [
            replace(record, cpu_mean=per_node[record.node].mean, cpu_max=per_node[record.node].peak)
            for record in records
        ]

    @staticmethod
    def write_outputs(out_dir, config, stream, pipeline):
        outputs = {
            'metrics.csv': TelemetryService.export_events(stream, ExportFormat.CSV),
            'metrics.jsonl': TelemetryService.export_events(stream, ExportFormat.JSONL),
            'rates.csv': TelemetryService.export_rates(SimulationService.rates(stream, config.datasets)),
            'recoveries.csv': TelemetryService.export_recoveries(SimulationService.recoveries(stream, config)),
            'knowledge.snapshot': snapshot.dumps(pipeline.global_store),
            'knowledge.journal': pipeline.global_store.journal.to_jsonl(),
            'transcript.jsonl': pipeline.reasoner.transcript.to_jsonl(),
            'effective_config.ini': config.text,
        }
        for name, text in outputs.items():
            (out_dir / name).write_text(text, encoding='utf-8')
        return sorted(outputs)

    @staticmethod
    def write_error(out_dir, exc, exit_code):
        report = exc.as_report()
        report['exit_code'] = int(exit_code)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / ERROR_FILE).write_text(json.dumps(report, indent=2, sort_keys=True) + '\n', encoding='utf-8')
        return report

    @staticmethod
    def run(config):
        """Run one configuration end to end; never raises a HealsimError"""
        out_dir = Path(config.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        stale = out_dir / ERROR_FILE
        if stale.exists():
            stale.unlink()
        counters = OperationCounters()
        clock = SimClock()
        stream = EventStream()
        try:
            graph, scenario, datasets = SimulationService.load_inputs(config, counters)
            reasoner = SimulationService.build_reasoner(config, counters, clock)
            pipeline = Pipeline(
                graph, scenario, reasoner, datasets=datasets, config=config,
                stream=stream, counters=counters, clock=clock,
            )
            report = pipeline.run()
            SimulationService.write_outputs(out_dir, config, stream, pipeline)
            if not report.ok:
                raise PipelineFailure(
                    _('{count} failed node(s) were neither healed nor escalated').format(count=len(report.unresolved)),
                    unresolved=report.unresolved,
                )
        except HealsimError as exc:
            exit_code = _exit_code(exc)
            error = SimulationService.write_error(out_dir, exc, exit_code)
            logger.error('run_failed code=%s exit=%s error=%s', exc.code, int(exit_code), exc)
            return RunResult(exit_code=exit_code, out_dir=out_dir, error=error)
        logger.info(
            'run_done out=%s healed=%s escalated=%s calls=%s counters=%s',
            out_dir, len(report.healed), len(report.escalated), reasoner.calls, counters.snapshot(),
        )
        return RunResult(exit_code=ExitCode.OK, out_dir=out_dir, healed=report.healed, escalated=report.escalated)

    @staticmethod
    def run_file(path, **overrides):
        """Load, override and run; a broken config still gets an error report"""
        try:
            config = ConfigFile.override(ConfigFile.load(path), **overrides)
        except InvalidConfig as exc:
            out_dir = Path(overrides.get('out') or Path(path).parent / 'out')
            error = SimulationService.write_error(out_dir, exc, ExitCode.CONFIG_ERROR)
            return RunResult(exit_code=ExitCode.CONFIG_ERROR, out_dir=out_dir, error=error)
        return SimulationService.run(config)

    @staticmethod
    def validate(path):
        """Static checks only: config values, input files and dataset references.

        Returns ``(config or None, findings)``.
        """
        path = Path(path)
        try:
            text = path.read_text(encoding='utf-8')
        except OSError as exc:
            return None, [Finding('MissingInput', '', message=str(exc))]
        config, findings = ConfigFile.check(text, base_dir=path.parent)
        if config is None:
            return None, findings
        inputs = [('run', 'topology', config.topology_path), ('run', 'scenario', config.scenario_path)]
        if config.backend == BackendName.REPLAY:
            inputs.append(('run', 'transcript', config.transcript_path))
        inputs.extend(
            (f'dataset:{name}', 'path', config.resolve(dataset.path)) for name, dataset in sorted(config.datasets.items())
        )
        for section_name, key, input_path in inputs:
            if input_path is None or not Path(input_path).is_file():
                findings.append(Finding('MissingInput', section_name, key, str(_('File not found: {path}').format(path=input_path))))
        if config.scenario_path.is_file():
            try:
                scenario = ScenarioFile.load(config.scenario_path)
            except HealsimError as exc:
                findings.append(Finding(exc.code, 'run', 'scenario', str(exc)))
            else:
                for node, name in sorted(scenario.attached_logs.items()):
                    if name not in config.datasets:
                        findings.append(Finding(
                            'MissingInput', f'dataset:{name}', '',
                            str(_('Attached to {node} but not configured').format(node=node)),
                        ))
        return config, findings

    @staticmethod
    def parse(path, dialect, origin=None, base_year=None):
        """Parse one log file into canonical records and a parse report"""
        report = ParseReport()
        with _require(path, 'log').open('rb') as stream:
            records = LogService.parse(stream, dialect, origin=origin or Path(path).stem, base_year=base_year, report=report)
        return records, report

    @staticmethod
    def replay(config, transcript_path):
        """Re-run ``config`` against a recorded transcript and compare the exchanges"""
        recorded = Transcript.load(_require(transcript_path, 'transcript'))
        config = ConfigFile.override(config, backend=BackendName.REPLAY.value, transcript=str(Path(transcript_path).resolve()))
        result = SimulationService.run(config)
        if result.exit_code == ExitCode.OK:
            replayed = Transcript.load(Path(result.out_dir) / 'transcript.jsonl')
            if [entry['response'] for entry in replayed.entries] != [entry['response'] for entry in recorded.entries]:
                exc = ReasonerError(_('Replayed exchanges differ from the transcript'), recorded=len(recorded), replayed=len(replayed))
                error = SimulationService.write_error(result.out_dir, exc, ExitCode.PIPELINE_FAILURE)
                return replace(result, exit_code=ExitCode.PIPELINE_FAILURE, error=error)
        return result
