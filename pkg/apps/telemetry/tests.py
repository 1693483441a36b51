from unittest import mock

import psutil
from django.test import SimpleTestCase

from core.signals import emit

from .exceptions import EmptyScope, MalformedMetrics, SamplerUnavailable
from .models import FORMAT_HEADER, ORDER_VIOLATION, CpuSeries, EventStream, ExportFormat
from .services import TelemetryService


def healing_stream():
    """One node healed on the first path, every layer stamped in order"""
    stream = EventStream()
    stream.append(0.0, 'simulation', 'bundle', 'E1', {'dataset': 'zookeeper'})
    stream.append(0.0, 'containment', 'flag', 'E1', {'timed_out': True})
    stream.append(1.0, 'containment', 'redistribute', 'E1', {})
    stream.append(2.0, 'diagnosis', 'diagnosed', 'E1', {})
    stream.append(2.0, 'metacognition', 'spawn', 'E1', {'agents': 2, 'level': 'System', 'paths': 2})
    stream.append(2.5, 'metacognition', 'invoke', 'E1', {'agent': 'agent-S01', 'level': 'System', 'path': 0})
    stream.append(2.5, 'metacognition', 'verdict', 'E1', {'verdict': 'Best', 'gamma': 0.9, 'path': 0})
    stream.append(3.0, 'metacognition', 'recovered', 'E1', {'hypothesis': 'E1-H000'})
    stream.append(3.5, 'knowledge', 'insert', 'E1', {'outcome': 'NewTopic'})
    return stream


def escalating_stream():
    stream = EventStream()
    stream.append(5.0, 'simulation', 'bundle', 'E2', {'dataset': 'hadoop'})
    stream.append(5.0, 'containment', 'flag', 'E2', {})
    stream.append(6.0, 'diagnosis', 'diagnosed', 'E2', {})
    stream.append(6.0, 'metacognition', 'spawn', 'E2', {'agents': 2, 'level': 'System', 'paths': 2})
    for agent, verdict in (('agent-S01', 'Harmful'), ('agent-S02', 'Harmful'), ('agent-A01', 'Accepted')):
        level = 'System' if '-S' in agent else 'Auxiliary'
        stream.append(6.5, 'metacognition', 'invoke', 'E2', {'agent': agent, 'level': level})
        stream.append(6.5, 'metacognition', 'verdict', 'E2', {'verdict': verdict})
        if verdict == 'Harmful':
            stream.append(6.5, 'metacognition', 'spawn', 'E2', {'agents': 2, 'level': 'Auxiliary', 'paths': 1})
    stream.append(7.0, 'metacognition', 'escalate', 'E2', {})
    return stream


class EventStreamTest(SimpleTestCase):
    """Test cases for EventStream"""

    def test_out_of_order_event_becomes_violation(self):
        """Test that an event stamped before the last one is recorded as a violation"""
        stream = EventStream()
        stream.append(2.0, 'containment', 'flag', 'A')
        event = TelemetryService.record_event(stream, 1.0, 'diagnosis', 'diagnosed', 'A')
        self.assertEqual(event.kind, ORDER_VIOLATION)
        self.assertEqual(event.time, 2.0)
        self.assertEqual(event.payload['time'], 1.0)
        self.assertEqual(len(stream.violations), 1)

    def test_record_without_stream(self):
        self.assertIsNone(TelemetryService.record_event(None, 0.0, 'x', 'y'))

    def test_emitted_events_reach_stream(self):
        """Test that a layer event sent through the signal lands in the stream"""
        stream = EventStream()
        emit(stream, 1.5, 'containment', 'flag', 'A', timed_out=True)
        event, = stream.snapshot()
        self.assertEqual((event.time, event.layer, event.kind, event.node), (1.5, 'containment', 'flag', 'A'))
        self.assertEqual(event.payload, {'timed_out': True})


class RatesTest(SimpleTestCase):
    """Test cases for decision-quality rates"""

    def test_first_path_best(self):
        """Test a run whose only response is Best"""
        rates = TelemetryService.compute_rates(healing_stream())
        self.assertEqual((rates.best, rates.accepted, rates.rejected, rates.harmful), (1.0, 0.0, 0.0, 0.0))
        self.assertEqual(rates.rdr, 0.5)
        self.assertEqual(rates.responses, 1)

    def test_mixed_responses(self):
        """Test shares of several verdicts and system-level reuse"""
        rates = TelemetryService.compute_rates(escalating_stream())
        self.assertAlmostEqual(rates.harmful, 2 / 3)
        self.assertAlmostEqual(rates.accepted, 1 / 3)
        self.assertAlmostEqual(rates.rdr, 2 / 6)

    def test_dataset_scope(self):
        """Test that a dataset scope only counts nodes fed by that dataset"""
        stream = healing_stream()
        for event in escalating_stream():
            stream.append(event.time, event.layer, event.kind, event.node, event.payload)
        self.assertEqual(TelemetryService.compute_rates(stream, dataset='zookeeper').responses, 1)
        self.assertEqual(TelemetryService.compute_rates(stream, dataset='hadoop').responses, 3)
        self.assertEqual(TelemetryService.compute_rates(stream).responses, 4)

    def test_empty_scope(self):
        """Test that a scope without verdicts raises EmptyScope"""
        with self.assertRaises(EmptyScope):
            TelemetryService.compute_rates(healing_stream(), dataset='openssh')

    def test_export_rates(self):
        """Test the rates CSV layout"""
        text = TelemetryService.export_rates({'run': TelemetryService.compute_rates(healing_stream())})
        self.assertEqual(text.splitlines(), [
            FORMAT_HEADER,
            'scope,Best,Accepted,Rejected,Harmful,RDR,responses',
            'run,1,0,0,0,0.5,1',
        ])


class RecoveryRecordsTest(SimpleTestCase):
    """Test cases for per-episode recovery records"""

    def test_layer_times(self):
        """Test that each layer's share is measured between its events"""
        record, = TelemetryService.recovery_records(healing_stream(), unit_cost=1.0)
        self.assertEqual(record.node, 'E1')
        self.assertEqual(record.elapsed, 3.5)
        self.assertEqual(
            (record.containment, record.diagnosis, record.meta, record.knowledge),
            (1.0, 1.0, 1.0, 0.5),
        )
        self.assertEqual(record.layer_total, record.elapsed)
        self.assertEqual((record.paths, record.calls), (2, 1))
        self.assertEqual(record.verdicts['Best'], 1)
        self.assertEqual(record.cpu_max, 1.0)

    def test_escalation_closes_episode(self):
        """Test that an escalated episode ends at the escalation"""
        record, = TelemetryService.recovery_records(escalating_stream(), unit_cost=2.0)
        self.assertTrue(record.escalated)
        self.assertEqual(record.recovered, 7.0)
        self.assertEqual(record.calls, 3)
        self.assertEqual(record.cpu_mean, 6.0)

    def test_export(self):
        text = TelemetryService.export_recoveries(TelemetryService.recovery_records(healing_stream(), unit_cost=1.0))
        lines = text.splitlines()
        self.assertEqual(lines[0], FORMAT_HEADER)
        self.assertTrue(lines[2].startswith('E1,0,3.5,3.5,1,1,1,0.5,2,1,1,0,0,0,0,'))


class ExportEventsTest(SimpleTestCase):
    """Test cases for the event export formats"""

    def test_csv(self):
        """Test that the CSV export reads back to the same events"""
        stream = healing_stream()
        text = TelemetryService.export_events(stream, ExportFormat.CSV)
        self.assertTrue(text.startswith(FORMAT_HEADER + '\nsequence,time,layer,kind,node,payload\n'))
        self.assertEqual(TelemetryService.import_events(text).snapshot(), stream.snapshot())

    def test_jsonl(self):
        """Test that the JSONL export reads back to the same events"""
        stream = escalating_stream()
        text = TelemetryService.export_events(stream, 'jsonl')
        self.assertEqual(TelemetryService.import_events(text, 'jsonl').snapshot(), stream.snapshot())

    def test_missing_header(self):
        """Test that a file without the header is rejected"""
        with self.assertRaises(MalformedMetrics):
            TelemetryService.import_events('sequence,time,layer,kind,node,payload\n')


class CpuTest(SimpleTestCase):
    """Test cases for CPU series"""

    def test_synthetic(self):
        """Test one unit of cost per oracle call"""
        series = TelemetryService.synthetic_cpu([1, 3, 0], unit_cost=2.0)
        self.assertEqual(series.values, [2.0, 6.0, 0.0])
        self.assertEqual((series.mean, series.peak), (8.0 / 3, 6.0))
        self.assertTrue(series.synthetic)

    def test_attribute(self):
        """Test splitting a sampled series by call weight"""
        shares = TelemetryService.attribute_cpu(CpuSeries([10.0, 20.0]), {'E1': 3, 'E2': 1})
        self.assertEqual(shares['E1'].values, [7.5, 15.0])
        self.assertEqual(shares['E2'].values, [2.5, 5.0])

    def test_sampler_unavailable(self):
        """Test that a process that cannot be read raises SamplerUnavailable"""
        process = mock.Mock()
        process.cpu_percent.side_effect = psutil.AccessDenied()
        with self.assertRaises(SamplerUnavailable):
            TelemetryService.sample_cpu(interval=0.0, samples=2, process=process)

    def test_process_mode_falls_back(self):
        """Test that process mode falls back to the synthetic series"""
        with mock.patch.object(TelemetryService, 'sample_cpu', side_effect=SamplerUnavailable(error='no procfs')):
            series = TelemetryService.cpu_series([1, 1], mode='process')
        self.assertTrue(series.synthetic)
        self.assertEqual(series.values, [1.0, 1.0])
