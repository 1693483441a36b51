import csv
import io
import json
import logging
import math

from django.utils.translation import gettext_lazy as _

from core.conf import section
from core.exceptions import InvalidParameter

from .exceptions import MalformedHeader, UnknownDialect
from .models import ALERT, DEGRADED, UNHEALTHY, Dialect, LogBundle, LogRecord, LogSource, ParseReport
from .parsers import CLOUD_STATELESS_COLUMNS, LOGHUB_FORMATS, parse_csv_timestamp

logger = logging.getLogger(__name__)


def _text_lines(stream):
    """Split bytes, text or a file object into lines without line endings.

    Bytes that are not valid UTF-8 survive as surrogate escapes so the
    original bytes can be recovered.
    """
    if hasattr(stream, 'read'):
        stream = stream.read()
    if isinstance(stream, (bytes, bytearray)):
        stream = bytes(stream).decode('utf-8', errors='surrogateescape')
    return stream.splitlines()


class LogService:
    """Service for parsing log corpora and cutting diagnosis windows"""

    @staticmethod
    def parse_cloud_stateless(stream, origin='cloud', report=None, counters=None):
        """Parse the metrics CSV; one record per row, unhealthy rows flagged"""
        lines = _text_lines(stream)
        report = report if report is not None else ParseReport(origin=origin)
        report.origin = origin
        if not lines:
            raise MalformedHeader(_('Empty file has no header'), origin=origin)
        header = [column.strip() for column in next(csv.reader([lines[0]]))]
        missing = [column for column in CLOUD_STATELESS_COLUMNS if column not in header]
        if missing:
            raise MalformedHeader(
                _('Missing columns: {columns}').format(columns=', '.join(missing)),
                origin=origin, missing=missing,
            )
        records = []
        for number, line in enumerate(lines[1:], start=2):
            report.lines += 1
            if counters is not None:
                counters.bump('logs.lines')
            if not line.strip():
                continue
            try:
                cells = next(csv.reader([line]))
                if len(cells) != len(header):
                    raise ValueError(f'expected {len(header)} cells, got {len(cells)}')
                row = dict(zip(header, (cell.strip() for cell in cells)))
                timestamp = parse_csv_timestamp(row['timestamp'])
                if not math.isfinite(timestamp):
                    raise ValueError('timestamp is not finite')
                if row['status'] not in ('0', '1'):
                    raise ValueError(f'status must be 0 or 1, got {row["status"]!r}')
            except (csv.Error, ValueError, OverflowError) as exc:
                report.malformed.append(number)
                logger.debug('malformed_row origin=%s line=%s error=%s', origin, number, exc)
                continue
            records.append(LogRecord(
                timestamp=timestamp,
                source=LogSource.CUSTOM,
                text=line,
                ref=f'{origin}:{number}',
                dialect=Dialect.CLOUD_STATELESS,
                node_hint=row.get('node') or None,
                severity='ERROR' if row['status'] == '1' else 'INFO',
                fields=row,
                flags=frozenset({UNHEALTHY}) if row['status'] == '1' else frozenset(),
            ))
        if report.malformed:
            logger.info('parse_report origin=%s malformed=%s', origin, report.malformed_count)
        return records

    @staticmethod
    def parse_loghub(stream, dialect, origin=None, base_year=None, report=None, counters=None):
        """Parse one Loghub-style text log.

        Lines that do not match the dialect become degraded records that
        inherit the previous timestamp.
        """
        try:
            dialect = Dialect(dialect)
            pattern, build = LOGHUB_FORMATS[dialect]
        except (ValueError, KeyError):
            raise UnknownDialect(_('Unknown dialect: {dialect}').format(dialect=dialect), dialect=str(dialect))
        if base_year is None:
            base_year = section('LOGS').get('BASE_YEAR', 2017)
        origin = origin or dialect.value.lower()
        report = report if report is not None else ParseReport(origin=origin)
        report.origin = origin
        records = []
        previous = 0.0
        for number, line in enumerate(_text_lines(stream), start=1):
            report.lines += 1
            if counters is not None:
                counters.bump('logs.lines')
            if not line.strip():
                continue
            match = pattern.match(line)
            parsed = None
            if match:
                try:
                    parsed = build(match, base_year)
                except (ValueError, OverflowError, KeyError) as exc:
                    logger.debug('bad_timestamp origin=%s line=%s error=%s', origin, number, exc)
            if parsed is None:
                report.degraded.append(number)
                records.append(LogRecord(
                    timestamp=previous,
                    source=LogSource.SYS,
                    text=line,
                    ref=f'{origin}:{number}',
                    dialect=dialect,
                    flags=frozenset({DEGRADED}),
                ))
                continue
            previous = parsed['timestamp']
            records.append(LogRecord(
                timestamp=parsed['timestamp'],
                source=parsed['source'],
                text=line,
                ref=f'{origin}:{number}',
                dialect=dialect,
                severity=parsed['severity'],
                fields=parsed['fields'],
                flags=frozenset({ALERT}) if parsed.get('alert') else frozenset(),
            ))
        return records

    @staticmethod
    def parse(stream, dialect, origin=None, base_year=None, report=None, counters=None):
        """Parse ``stream`` with the parser of ``dialect``"""
        if dialect == Dialect.CLOUD_STATELESS:
            return LogService.parse_cloud_stateless(stream, origin or 'cloud', report, counters)
        return LogService.parse_loghub(stream, dialect, origin, base_year, report, counters)

    @staticmethod
    def extract_window(records, node, t, delta_d):
        """Records of ``node`` with timestamps in the closed window [t - delta_d, t].

        Records without a node hint are attributed to the node being
        diagnosed.
        """
        if not delta_d > 0:
            raise InvalidParameter(_('delta_d must be positive'), delta_d=delta_d)
        start = t - delta_d
        selected = [
            record for record in records
            if start <= record.timestamp <= t and record.node_hint in (None, node)
        ]
        selected.sort(key=lambda record: record.timestamp)
        return LogBundle(node=node, start=start, end=t, records=tuple(selected))

    @staticmethod
    def to_jsonl(records):
        return ''.join(record.to_json() + '\n' for record in records)

    @staticmethod
    def from_jsonl(text):
        return [LogRecord.from_canonical(json.loads(line)) for line in io.StringIO(text) if line.strip()]
