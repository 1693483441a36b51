import json
import tempfile
from io import StringIO
from pathlib import Path

from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from continuum.services import ResilienceService
from continuum.topology import TopologyFile
from faults.policies import IdentityPolicy
from faults.scenario import ScenarioFile
from reasoner.services import ReasonerService
from reasoner.transcript import Transcript
from telemetry.models import EventStream, ExportFormat
from telemetry.services import TelemetryService

from .config import ConfigFile
from .exceptions import InvalidConfig
from .models import ERROR_FILE, OUTPUT_FILES, ExitCode
from .pipeline import Pipeline, PipelinePolicy
from .services import SimulationService
from .tasks import run_simulation

FIXTURES = Path(__file__).resolve().parent / 'fixtures'

RUN_SECTION = """
[run]
topology = {fixtures}/topology.txt
scenario = {fixtures}/{scenario}
seed = 7
backend = scripted
out = {out}
"""


class WorkspaceMixin:
    """Temporary output directory per test"""

    def setUp(self):
        workspace = tempfile.TemporaryDirectory()
        self.addCleanup(workspace.cleanup)
        self.tmp = Path(workspace.name)

    def config_text(self, scenario='scenario_empty.txt', extra=''):
        return RUN_SECTION.format(fixtures=FIXTURES, scenario=scenario, out=self.tmp / 'out') + extra

    def write_config(self, text, name='config.ini'):
        path = self.tmp / name
        path.write_text(text, encoding='utf-8')
        return path


class ConfigFileTest(WorkspaceMixin, SimpleTestCase):
    """Test cases for run configuration files"""

    def test_defaults_are_filled(self):
        """Test that keys left out come from settings"""
        config = ConfigFile.load(FIXTURES / 'config.ini')
        self.assertEqual(config.seed, 7)
        self.assertEqual(config.section('metacognition')['THETA_PRO'], 0.35)
        self.assertEqual(config.section('metacognition')['WEIGHTS'], (0.4, 0.35, 0.25))
        self.assertEqual(config.section('containment')['K'], 2)
        self.assertEqual(config.topology_path, FIXTURES / 'topology.txt')
        self.assertEqual(config.datasets['zookeeper'].dialect, 'ZooKeeper')

    def test_effective_config_is_stable(self):
        """Test that the effective config reads back to itself"""
        config = ConfigFile.load(FIXTURES / 'config_all.ini')
        again = ConfigFile.loads(config.text, base_dir=FIXTURES)
        self.assertEqual(again.text, config.text)
        self.assertEqual(again.config_hash, config.config_hash)
        self.assertEqual(sorted(again.datasets), ['bgl', 'cloud', 'hadoop', 'openssh', 'zookeeper'])

    def test_unknown_section_and_key(self):
        """Test that unknown sections and keys are reported"""
        config, findings = ConfigFile.check(self.config_text(extra='[logs]\ndelta = 5\n\n[extras]\nx = 1\n'))
        self.assertIsNone(config)
        self.assertEqual(
            sorted((finding.code, finding.section, finding.key) for finding in findings),
            [('UnknownKey', 'logs', 'delta'), ('UnknownSection', 'extras', '')],
        )

    def test_bad_thresholds(self):
        """Test that acc must stay below inh"""
        _config, findings = ConfigFile.check(self.config_text(extra='[metacognition]\ntheta_acc = 0.9\ntheta_inh = 0.9\n'))
        self.assertEqual([(finding.code, finding.section) for finding in findings], [('BadThresholds', 'metacognition')])

    def test_bad_weights(self):
        _config, findings = ConfigFile.check(self.config_text(extra='[metacognition]\nweights = 0.5,0.5,0.5\n'))
        self.assertEqual([finding.code for finding in findings], ['InvalidWeights'])

    def test_out_of_range_value(self):
        """Test that a serializer range error becomes an InvalidValue finding"""
        _config, findings = ConfigFile.check(self.config_text(extra='[containment]\nk = 0\n'))
        self.assertEqual([(finding.code, finding.key) for finding in findings], [('InvalidValue', 'k')])

    def test_replay_needs_transcript(self):
        text = self.config_text().replace('backend = scripted', 'backend = replay')
        _config, findings = ConfigFile.check(text)
        self.assertEqual([finding.code for finding in findings], ['MissingInput'])

    def test_loads_raises(self):
        """Test that loads collects every finding into InvalidConfig"""
        with self.assertRaises(InvalidConfig) as caught:
            ConfigFile.loads('[run]\nseed = -1\n')
        self.assertGreaterEqual(len(caught.exception.context['findings']), 3)

    def test_override(self):
        config = ConfigFile.override(ConfigFile.load(FIXTURES / 'config.ini'), seed=11, backend=None)
        self.assertEqual(config.seed, 11)
        self.assertEqual(config.backend, 'scripted')
        self.assertIn('seed = 11', config.text)


class ValidateTest(WorkspaceMixin, SimpleTestCase):
    """Test cases for static validation"""

    def test_fixture_config_is_clean(self):
        config, findings = SimulationService.validate(FIXTURES / 'config_all.ini')
        self.assertIsNotNone(config)
        self.assertEqual(findings, [])

    def test_missing_files_and_datasets(self):
        """Test that missing inputs and unconfigured datasets are found"""
        path = self.write_config(self.config_text(scenario='scenario.txt', extra='[dataset:bgl]\npath = nowhere.log\ndialect = BGL\n'))
        config, findings = SimulationService.validate(path)
        self.assertIsNotNone(config)
        self.assertEqual(
            sorted((finding.code, finding.section, finding.key) for finding in findings),
            [('MissingInput', 'dataset:bgl', 'path'), ('MissingInput', 'dataset:zookeeper', '')],
        )

    def test_unreadable_config(self):
        config, findings = SimulationService.validate(self.tmp / 'absent.ini')
        self.assertIsNone(config)
        self.assertEqual(findings[0].code, 'MissingInput')


class RunTest(WorkspaceMixin, SimpleTestCase):
    """Test cases for end-to-end runs"""

    def test_fixture_run(self):
        """Test that the fixture run resolves its failed node and writes every output"""
        out = self.tmp / 'run'
        result = SimulationService.run_file(FIXTURES / 'config.ini', out=str(out))
        self.assertEqual(result.exit_code, ExitCode.OK)
        self.assertEqual(result.healed + result.escalated, ['E1'])
        for name in OUTPUT_FILES:
            self.assertTrue((out / name).is_file(), name)
        self.assertFalse((out / ERROR_FILE).exists())
        self.assertTrue((out / 'rates.csv').read_text(encoding='utf-8').splitlines()[2].startswith('run,'))

    def test_runs_are_byte_identical(self):
        """Test that the same config and seed reproduce every output byte for byte"""
        out = self.tmp / 'run'
        SimulationService.run_file(FIXTURES / 'config.ini', out=str(out))
        first = {name: (out / name).read_bytes() for name in OUTPUT_FILES}
        SimulationService.run_file(FIXTURES / 'config.ini', out=str(out))
        second = {name: (out / name).read_bytes() for name in OUTPUT_FILES}
        self.assertEqual(first, second)

    def test_all_corpora(self):
        """Test a scenario touching every supported corpus"""
        result = SimulationService.run_file(FIXTURES / 'config_all.ini', out=str(self.tmp / 'all'))
        self.assertEqual(result.exit_code, ExitCode.OK)
        self.assertEqual(sorted(result.healed + result.escalated), ['C1', 'C2', 'E1', 'E2', 'F1'])
        events = TelemetryService.import_events(
            (self.tmp / 'all' / 'metrics.jsonl').read_text(encoding='utf-8'), ExportFormat.JSONL,
        )
        bundles = {event.node: event.payload['dataset'] for event in events.of_kind('bundle')}
        self.assertEqual(bundles, {'E1': 'zookeeper', 'E2': 'hadoop', 'F1': 'openssh', 'C1': 'bgl', 'C2': 'cloud'})

    def test_empty_scenario(self):
        """Test that a scenario without failures runs clean with empty rates"""
        result = SimulationService.run_file(self.write_config(self.config_text()))
        self.assertEqual(result.exit_code, ExitCode.OK)
        self.assertEqual(result.healed, [])
        self.assertEqual(len((self.tmp / 'out' / 'rates.csv').read_text(encoding='utf-8').splitlines()), 2)

    def test_invalid_config_writes_error(self):
        """Test exit code 2 and an error report for bad thresholds"""
        path = self.write_config(self.config_text(extra='[metacognition]\ntheta_pro = 0.6\n'))
        result = SimulationService.run_file(path, out=str(self.tmp / 'bad'))
        self.assertEqual(result.exit_code, ExitCode.CONFIG_ERROR)
        report = json.loads((self.tmp / 'bad' / ERROR_FILE).read_text(encoding='utf-8'))
        self.assertEqual(report['code'], 'InvalidConfig')
        self.assertEqual(report['exit_code'], 2)

    def test_missing_dataset_is_input_error(self):
        """Test exit code 3 when a configured dataset file is missing"""
        path = self.write_config(self.config_text(extra='[dataset:bgl]\npath = nowhere.log\ndialect = BGL\n'))
        result = SimulationService.run_file(path)
        self.assertEqual(result.exit_code, ExitCode.INPUT_ERROR)
        self.assertEqual(result.error['code'], 'MissingInput')
        self.assertTrue((self.tmp / 'out' / ERROR_FILE).is_file())

    def test_replay_matches(self):
        """Test that replaying a recorded run gives the same exchanges"""
        recorded = self.tmp / 'recorded'
        SimulationService.run_file(FIXTURES / 'config.ini', out=str(recorded))
        config = ConfigFile.override(ConfigFile.load(FIXTURES / 'config.ini'), out=str(self.tmp / 'replayed'))
        result = SimulationService.replay(config, recorded / 'transcript.jsonl')
        self.assertEqual(result.exit_code, ExitCode.OK)
        self.assertEqual(
            Transcript.load(self.tmp / 'replayed' / 'transcript.jsonl').entries,
            Transcript.load(recorded / 'transcript.jsonl').entries,
        )

    def test_worker_task(self):
        """Test the worker task with an eager broker"""
        outcome = run_simulation.delay(str(FIXTURES / 'config.ini'), out=str(self.tmp / 'task')).get()
        self.assertEqual(outcome['exit_code'], 0)
        self.assertIsNone(outcome['error'])


class PipelineTest(SimpleTestCase):
    """Test cases for the pipeline on synthesized logs"""

    def test_synthetic_logs_heal_or_escalate(self):
        """Test that nodes without a dataset are diagnosed from synthesized logs"""
        graph = TopologyFile.load(FIXTURES / 'topology.txt')
        scenario = ScenarioFile.loads('recist-scenario v1\nscenario synthetic\n5 E2 DiskFull\n')
        stream = EventStream()
        pipeline = Pipeline(graph, scenario, ReasonerService.build('scripted'), stream=stream)
        report = pipeline.run()
        self.assertTrue(report.ok)
        self.assertEqual(report.healed + report.escalated, ['E2'])
        bundles = stream.of_kind('bundle')
        self.assertEqual([event.payload['dataset'] for event in bundles], ['synthetic'])
        self.assertEqual(stream.violations, [])

    def test_resilience_with_full_pipeline(self):
        """Test that the pipeline policy is reproducible and never scores below doing nothing"""
        graph = TopologyFile.load(FIXTURES / 'topology.txt')
        scenario = ScenarioFile.loads('recist-scenario v1\nscenario synthetic\n5 E2 DiskFull\n')
        healed = ResilienceService.compute_resilience(graph, [scenario], PipelinePolicy(), seed=3)
        self.assertEqual(healed, ResilienceService.compute_resilience(graph, [scenario], PipelinePolicy(), seed=3))
        self.assertGreaterEqual(healed, ResilienceService.compute_resilience(graph, [scenario], IdentityPolicy()))
        self.assertLessEqual(healed, 1.0)


class CommandTest(WorkspaceMixin, SimpleTestCase):
    """Test cases for the management commands"""

    def test_run(self):
        stdout = StringIO()
        call_command('run', config=str(FIXTURES / 'config.ini'), out=str(self.tmp / 'cmd'), stdout=stdout)
        self.assertIn('out=', stdout.getvalue())

    def test_run_failure_exit_code(self):
        """Test that a broken config ends the command with exit code 2"""
        path = self.write_config(self.config_text(extra='[knowledge]\ntheta_topic = 2\n'))
        with self.assertRaises(CommandError) as caught:
            call_command('run', config=str(path), stdout=StringIO())
        self.assertEqual(caught.exception.returncode, 2)

    def test_validate(self):
        """Test that validate prints the effective config"""
        stdout = StringIO()
        call_command('validate', config=str(FIXTURES / 'config.ini'), stdout=stdout)
        self.assertIn('[dataset:zookeeper]', stdout.getvalue())
        self.assertIn('0 findings', stdout.getvalue())

    def test_parse(self):
        """Test that parse writes JSONL records and a report"""
        stdout, stderr = StringIO(), StringIO()
        call_command('parse', str(FIXTURES / 'bgl.log'), dialect='BGL', stdout=stdout, stderr=stderr)
        first = json.loads(stdout.getvalue().splitlines()[0])
        self.assertEqual(first['ref'], 'bgl:1')
        self.assertIn('malformed', stderr.getvalue())

    def test_kb_inspect(self):
        """Test knowledge inspection on a run's global snapshot"""
        SimulationService.run_file(FIXTURES / 'config.ini', out=str(self.tmp / 'kb'))
        stdout = StringIO()
        call_command('kb', 'inspect', str(self.tmp / 'kb' / 'knowledge.snapshot'), stdout=stdout)
        self.assertIn('store global', stdout.getvalue())
        self.assertIn('invariants hold', stdout.getvalue())
