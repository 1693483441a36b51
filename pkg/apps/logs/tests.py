from pathlib import Path

from django.test import SimpleTestCase

from core.exceptions import InvalidParameter
from core.models import OperationCounters

from .exceptions import MalformedHeader, UnknownDialect
from .models import ALERT, DEGRADED, Dialect, LogRecord, LogSource, ParseReport
from .services import LogService

FIXTURES = Path(__file__).resolve().parent.parent / 'simulation' / 'fixtures'
GOLDEN = Path(__file__).resolve().parent / 'fixtures'

CORPORA = (
    ('zookeeper.log', Dialect.ZOOKEEPER),
    ('hadoop.log', Dialect.HADOOP),
    ('openssh.log', Dialect.OPENSSH),
    ('bgl.log', Dialect.BGL),
    ('cloud_stateless.csv', Dialect.CLOUD_STATELESS),
)


def parse_fixture(name, dialect, **kwargs):
    with (FIXTURES / name).open('rb') as stream:
        return LogService.parse(stream, dialect, **kwargs)


class LoghubParseTest(SimpleTestCase):
    """Test cases for the four Loghub dialects on the bundled 20-line corpora"""

    def test_zookeeper(self):
        """Test ZooKeeper timestamps with milliseconds and nested brackets in the component"""
        report = ParseReport()
        records = parse_fixture('zookeeper.log', Dialect.ZOOKEEPER, report=report)
        self.assertEqual(len(records), 20)
        self.assertEqual(report.degraded, [])
        first = records[0]
        self.assertAlmostEqual(first.timestamp, 1438191704.747, places=6)
        self.assertEqual(first.severity, 'INFO')
        self.assertEqual(first.fields['component'], 'QuorumPeer[myid=1]/0:0:0:0:0:0:0:0:2181:FastLeaderElection@774')
        self.assertEqual(first.ref, 'zookeeper:1')
        self.assertEqual(records[1].source, LogSource.NET)

    def test_hadoop(self):
        """Test Hadoop thread and component fields"""
        records = parse_fixture('hadoop.log', Dialect.HADOOP)
        self.assertEqual(len(records), 20)
        self.assertFalse(any(DEGRADED in record.flags for record in records))
        self.assertEqual(records[5].severity, 'WARN')
        self.assertEqual(records[5].fields['thread'], 'LeaseRenewer:msrabi@msra-sa-41:9000')
        self.assertEqual(records[5].fields['component'], 'org.apache.hadoop.hdfs.LeaseRenewer')

    def test_openssh_year_comes_from_base_year(self):
        """Test that Dec 10 12:21:26 lands on the right instant of the base year"""
        records = parse_fixture('openssh.log', Dialect.OPENSSH, base_year=2017)
        self.assertEqual(len(records), 20)
        self.assertEqual(records[18].timestamp, 1512908486.0)
        self.assertEqual(records[0].fields['pid'], '24200')
        self.assertEqual(records[0].fields['host'], 'LabSZ')

    def test_bgl(self):
        """Test BGL stamps with and without microseconds and the alert label"""
        records = parse_fixture('bgl.log', Dialect.BGL)
        self.assertEqual(len(records), 20)
        self.assertEqual(records[11].timestamp, 1117860330.0)
        self.assertEqual(records[11].severity, 'FATAL')
        self.assertIn(ALERT, records[11].flags)
        self.assertNotIn(ALERT, records[0].flags)
        self.assertEqual(sum(ALERT in record.flags for record in records), 4)

    def test_unmatched_line_is_degraded(self):
        """Test that an unreadable line keeps the previous timestamp and is flagged"""
        text = (
            '2015-07-29 17:41:44,747 - INFO  [main:Server@1] - started\n'
            'java.lang.Exception: boom\n'
        )
        report = ParseReport()
        records = LogService.parse_loghub(text, Dialect.ZOOKEEPER, report=report)
        self.assertEqual(records[1].timestamp, records[0].timestamp)
        self.assertIn(DEGRADED, records[1].flags)
        self.assertEqual(report.degraded, [2])

    def test_unknown_dialect(self):
        """Test that an unsupported dialect raises UnknownDialect"""
        with self.assertRaises(UnknownDialect):
            LogService.parse_loghub('', 'Syslog')

    def test_invalid_utf8_survives(self):
        """Test that undecodable bytes are kept rather than dropped"""
        records = LogService.parse_loghub(b'\xff\xfe not a log line\n', Dialect.OPENSSH)
        self.assertEqual(records[0].text.encode('utf-8', errors='surrogateescape'), b'\xff\xfe not a log line')

    def test_counts_lines(self):
        """Test that every read line is counted"""
        counters = OperationCounters()
        parse_fixture('hadoop.log', Dialect.HADOOP, counters=counters)
        self.assertEqual(counters['logs.lines'], 20)

    def test_parse_cost_is_linear(self):
        """Test one counted step per line on corpora of growing length"""
        lines = (FIXTURES / 'zookeeper.log').read_text(encoding='utf-8').splitlines()
        for repeat in (1, 5, 25, 125):
            counters = OperationCounters()
            text = '\n'.join(lines * repeat) + '\n'
            records = LogService.parse(text, Dialect.ZOOKEEPER, counters=counters)
            self.assertEqual(counters['logs.lines'], 20 * repeat)
            self.assertEqual(len(records), 20 * repeat)


class CloudStatelessParseTest(SimpleTestCase):
    """Test cases for the metrics CSV"""

    def test_fixture(self):
        """Test that status 1 rows are unhealthy and fields keep their text"""
        records = parse_fixture('cloud_stateless.csv', Dialect.CLOUD_STATELESS, origin='cloud')
        self.assertEqual(len(records), 20)
        self.assertEqual(sum(record.unhealthy for record in records), 6)
        self.assertEqual(records[0].timestamp, 1700000000.0)
        self.assertEqual(records[0].fields['cpu_usage'], '40.5')
        self.assertEqual(records[-1].severity, 'ERROR')
        self.assertEqual(records[0].ref, 'cloud:2')

    def test_missing_column(self):
        """Test that a header without the required columns is rejected"""
        with self.assertRaises(MalformedHeader):
            LogService.parse_cloud_stateless('timestamp,cpu_usage\n1,2\n')

    def test_malformed_rows_are_skipped(self):
        """Test that bad rows are reported, not parsed"""
        header = 'timestamp,cpu_usage,memory_usage,bandwidth_inbound,bandwidth_outbound,tps,response_time,status'
        text = '\n'.join([
            header,
            '2023-11-14T22:13:20Z,10,10,1,1,1,1,0',
            'yesterday,10,10,1,1,1,1,0',
            '1700000001,10,10,1,1,1,1,7',
            '1700000002,10,10,1,1,1',
        ])
        report = ParseReport()
        records = LogService.parse_cloud_stateless(text, report=report)
        self.assertEqual(len(records), 1)
        self.assertEqual(records[0].timestamp, 1700000000.0)
        self.assertEqual(report.malformed, [3, 4, 5])

    def test_node_column(self):
        """Test that an optional node column fills the node hint"""
        header = 'timestamp,cpu_usage,memory_usage,bandwidth_inbound,bandwidth_outbound,tps,response_time,status,node'
        records = LogService.parse_cloud_stateless(f'{header}\n1,1,1,1,1,1,1,0,C2\n')
        self.assertEqual(records[0].node_hint, 'C2')


class ExtractWindowTest(SimpleTestCase):
    """Test cases for LogService.extract_window"""

    def setUp(self):
        self.records = [
            LogRecord(timestamp, LogSource.SYS, f'line {index}', ref=f'x:{index}', node_hint=hint)
            for index, (timestamp, hint) in enumerate([(0.0, None), (5.0, 'A'), (10.0, 'B'), (15.0, None), (20.0, 'A')])
        ]

    def test_closed_window_and_node_filter(self):
        """Test that both window edges are included and other nodes' records excluded"""
        bundle = LogService.extract_window(self.records, 'A', 15.0, 10.0)
        self.assertEqual(bundle.refs, ['x:1', 'x:3'])
        self.assertEqual((bundle.start, bundle.end), (5.0, 15.0))

    def test_empty_window(self):
        """Test that a window with no records gives an empty bundle"""
        self.assertEqual(len(LogService.extract_window(self.records, 'A', 100.0, 10.0)), 0)

    def test_delta_must_be_positive(self):
        """Test that a zero window is rejected"""
        with self.assertRaises(InvalidParameter):
            LogService.extract_window(self.records, 'A', 15.0, 0.0)


class CanonicalJsonTest(SimpleTestCase):
    """Test cases for the canonical record form"""

    def test_jsonl_round_trip_of_fixture(self):
        """Test that parsed records survive the canonical JSONL form"""
        records = parse_fixture('bgl.log', Dialect.BGL)
        self.assertEqual(LogService.from_jsonl(LogService.to_jsonl(records)), records)

    def test_corpora_match_golden_output(self):
        """Test every line of every bundled corpus against its pinned canonical JSONL"""
        for name, dialect in CORPORA:
            with self.subTest(corpus=name):
                expected = (GOLDEN / f'{Path(name).stem}.jsonl').read_text(encoding='utf-8')
                produced = LogService.to_jsonl(parse_fixture(name, dialect, base_year=2017))
                self.assertEqual(produced.splitlines(), expected.splitlines())
                self.assertEqual(produced, expected)
