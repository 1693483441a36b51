import csv
import io
import json
import logging
from collections import Counter

import psutil
from django.utils.translation import gettext_lazy as _

from continuum.topology import format_number
from core.conf import section

from .exceptions import EmptyScope, MalformedMetrics, SamplerUnavailable
from .models import (
    FORMAT_HEADER,
    ORDER_VIOLATION,
    CpuMode,
    CpuSeries,
    DecisionQualityRates,
    Event,
    EventStream,
    ExportFormat,
    RecoveryRecord,
)

logger = logging.getLogger(__name__)

VERDICTS = ('Best', 'Accepted', 'Rejected', 'Harmful')

EVENT_COLUMNS = ('sequence', 'time', 'layer', 'kind', 'node', 'payload')

RATE_COLUMNS = ('scope', 'Best', 'Accepted', 'Rejected', 'Harmful', 'RDR', 'responses')

RECOVERY_COLUMNS = (
    'node', 'flagged', 'recovered', 'elapsed', 'containment', 'diagnosis', 'meta', 'knowledge',
    'paths', 'calls', *VERDICTS, 'escalated', 'cpu_mean', 'cpu_max',
)


def _csv_text(header_rows):
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    buffer.write(FORMAT_HEADER + '\n')
    writer.writerows(header_rows)
    return buffer.getvalue()


def _number(value):
    return '' if value is None else format_number(value)


class _Episode:
    def __init__(self, node, flagged):
        self.node = node
        self.flagged = flagged
        self.contained = flagged
        self.diagnosed = None
        self.decided = None
        self.stored = None
        self.escalated = False
        self.paths = 0
        self.calls = 0
        self.verdicts = Counter()
        self.invocations = Counter()

    def close(self, unit_cost):
        diagnosed = self.diagnosed if self.diagnosed is not None else self.contained
        decided = self.decided if self.decided is not None else diagnosed
        stored = self.stored if self.stored is not None else decided
        series = TelemetryService.synthetic_cpu([self.invocations[time] for time in sorted(self.invocations)], unit_cost)
        return RecoveryRecord(
            node=self.node,
            flagged=self.flagged,
            recovered=stored,
            containment=self.contained - self.flagged,
            diagnosis=diagnosed - self.contained,
            meta=decided - diagnosed,
            knowledge=stored - decided,
            paths=self.paths,
            calls=self.calls,
            verdicts={verdict: self.verdicts.get(verdict, 0) for verdict in VERDICTS},
            escalated=self.escalated,
            cpu_mean=series.mean,
            cpu_max=series.peak,
        )


class TelemetryService:
    """Service for the event stream and every metric derived from it"""

    @staticmethod
    def record_event(stream, time, layer, kind, node='', payload=None):
        if stream is None:
            return None
        event = stream.append(time, layer, kind, node, payload)
        if event.kind == ORDER_VIOLATION:
            logger.warning('order_violation layer=%s kind=%s node=%s time=%s last=%s', layer, kind, node, time, event.time)
        return event

    @staticmethod
    def recovery_records(stream, unit_cost=None):
        """One record per healing episode, flag to knowledge handoff.

        Episodes close on escalation, on the node's next flag, or at the end
        of the stream.
        """
        if unit_cost is None:
            unit_cost = section('TELEMETRY').get('UNIT_COST', 1.0)
        open_episodes = {}
        records = []

        def close(node):
            episode = open_episodes.pop(node, None)
            if episode is not None:
                records.append(episode.close(unit_cost))

        for event in stream.snapshot():
            if event.kind == ORDER_VIOLATION:
                continue
            node = event.node
            if event.kind == 'flag':
                close(node)
                open_episodes[node] = _Episode(node, event.time)
                continue
            episode = open_episodes.get(node)
            if episode is None:
                continue
            if event.layer == 'containment':
                episode.contained = event.time
            elif event.kind == 'diagnosed':
                episode.diagnosed = event.time
            elif event.kind == 'spawn' and event.payload.get('level') == 'System':
                episode.paths += event.payload.get('paths', 0)
            elif event.kind == 'invoke':
                episode.calls += 1
                episode.invocations[event.time] += 1
            elif event.kind == 'verdict':
                episode.verdicts[event.payload.get('verdict')] += 1
            elif event.kind == 'recovered':
                episode.decided = event.time
            elif event.kind == 'escalate':
                episode.decided = event.time
                episode.escalated = True
                close(node)
            elif event.kind == 'insert':
                episode.stored = event.time
        for node in sorted(open_episodes):
            close(node)
        records.sort(key=lambda record: (record.flagged, record.node))
        return records

    @staticmethod
    def nodes_for_dataset(stream, dataset):
        return {event.node for event in stream.of_kind('bundle') if event.payload.get('dataset') == dataset}

    @staticmethod
    def compute_rates(stream, dataset=None, nodes=None):
        """Best/Accepted/Rejected/Harmful shares of all responses, plus RDR"""
        if dataset is not None:
            nodes = TelemetryService.nodes_for_dataset(stream, dataset)
        counts = Counter()
        spawned = 0
        invoked = set()
        episodes = Counter()
        for event in stream.snapshot():
            if nodes is not None and event.node not in nodes:
                continue
            if event.kind == 'verdict':
                counts[event.payload.get('verdict')] += 1
            elif event.kind == 'spawn':
                spawned += event.payload.get('agents', 0)
                if event.payload.get('level') == 'System':
                    episodes[event.node] += 1
            elif event.kind == 'invoke' and event.payload.get('level') == 'System':
                invoked.add((event.node, episodes[event.node], event.payload.get('agent')))
        total = sum(counts[verdict] for verdict in VERDICTS)
        if not total:
            raise EmptyScope(dataset=dataset or '', nodes=sorted(nodes or ()))
        return DecisionQualityRates(
            best=counts['Best'] / total,
            accepted=counts['Accepted'] / total,
            rejected=counts['Rejected'] / total,
            harmful=counts['Harmful'] / total,
            rdr=len(invoked) / spawned if spawned else 0.0,
            responses=total,
        )

    @staticmethod
    def sample_cpu(interval=None, samples=5, process=None):
        """Process CPU percent sampled ``samples`` times at ``interval`` wall seconds"""
        if interval is None:
            interval = section('TELEMETRY').get('CPU_INTERVAL', 0.1)
        try:
            process = process or psutil.Process()
            values = [float(process.cpu_percent(interval=interval)) for _index in range(samples)]
        except (psutil.Error, OSError, NotImplementedError) as exc:
            raise SamplerUnavailable(error=str(exc)) from exc
        return CpuSeries(values)

    @staticmethod
    def synthetic_cpu(call_counts, unit_cost=1.0):
        """Simulated CPU series: ``unit_cost`` per oracle call in each interval"""
        return CpuSeries([unit_cost * count for count in call_counts], synthetic=True)

    @staticmethod
    def cpu_series(call_counts, mode=None, interval=None, samples=5):
        """Sampled series in process mode, synthetic otherwise or when sampling fails"""
        config = section('TELEMETRY')
        mode = CpuMode(mode or config.get('CPU_MODE', CpuMode.SYNTHETIC))
        unit_cost = config.get('UNIT_COST', 1.0)
        if mode == CpuMode.PROCESS:
            try:
                return TelemetryService.sample_cpu(interval, samples)
            except SamplerUnavailable as exc:
                logger.warning('cpu_sampler_unavailable error=%s', exc.context.get('error'))
        return TelemetryService.synthetic_cpu(call_counts, unit_cost)

    @staticmethod
    def attribute_cpu(series, weights):
        """Split a process series across nodes by oracle-call weight"""
        nodes = sorted(weights)
        if not nodes:
            return {}
        total = sum(weights.values())
        shares = {node: (weights[node] / total if total else 1.0 / len(nodes)) for node in nodes}
        return {
            node: CpuSeries([value * shares[node] for value in series.values], synthetic=series.synthetic)
            for node in nodes
        }

    @staticmethod
    def export_events(stream, fmt=ExportFormat.CSV):
        fmt = ExportFormat(fmt)
        events = stream.snapshot()
        if fmt == ExportFormat.JSONL:
            lines = [json.dumps({'format': FORMAT_HEADER}, separators=(',', ':'))]
            lines.extend(
                json.dumps({
                    'sequence': event.sequence, 'time': event.time, 'layer': event.layer,
                    'kind': event.kind, 'node': event.node, 'payload': event.payload,
                }, sort_keys=True, separators=(',', ':'))
                for event in events
            )
            return '\n'.join(lines) + '\n'
        rows = [EVENT_COLUMNS]
        rows.extend(
            (
                event.sequence, format_number(event.time), event.layer, event.kind, event.node,
                json.dumps(event.payload, sort_keys=True, separators=(',', ':')),
            )
            for event in events
        )
        return _csv_text(rows)

    @staticmethod
    def import_events(text, fmt=ExportFormat.CSV):
        fmt = ExportFormat(fmt)
        lines = text.splitlines()
        try:
            if fmt == ExportFormat.JSONL:
                if not lines or json.loads(lines[0]).get('format') != FORMAT_HEADER:
                    raise MalformedMetrics(_('Missing metrics header'), expected=FORMAT_HEADER)
                events = []
                for line in lines[1:]:
                    if line.strip():
                        data = json.loads(line)
                        events.append(Event(
                            data['sequence'], data['time'], data['layer'], data['kind'], data['node'], data['payload'],
                        ))
                return EventStream(events)
            if not lines or lines[0] != FORMAT_HEADER:
                raise MalformedMetrics(_('Missing metrics header'), expected=FORMAT_HEADER)
            reader = csv.DictReader(io.StringIO('\n'.join(lines[1:]) + '\n'))
            return EventStream(
                Event(
                    int(row['sequence']), float(row['time']), row['layer'], row['kind'], row['node'],
                    json.loads(row['payload']),
                )
                for row in reader
            )
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise MalformedMetrics(error=str(exc)) from exc

    @staticmethod
    def export_rates(rates):
        """CSV of rates per scope; ``rates`` maps scope name to DecisionQualityRates"""
        rows = [RATE_COLUMNS]
        for scope in sorted(rates):
            row = rates[scope].as_row()
            rows.append((scope, *(_number(row[column]) for column in RATE_COLUMNS[1:-1]), row['responses']))
        return _csv_text(rows)

    @staticmethod
    def export_recoveries(records):
        rows = [RECOVERY_COLUMNS]
        for record in records:
            rows.append((
                record.node, _number(record.flagged), _number(record.recovered), _number(record.elapsed),
                _number(record.containment), _number(record.diagnosis), _number(record.meta),
                _number(record.knowledge), record.paths, record.calls,
                *(record.verdicts.get(verdict, 0) for verdict in VERDICTS),
                int(record.escalated), _number(record.cpu_mean), _number(record.cpu_max),
            ))
        return _csv_text(rows)
