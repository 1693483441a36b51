"""Line formats of the supported log corpora.

Each Loghub dialect is one regular expression plus a timestamp builder.
All timestamps are normalized to UTC epoch seconds.
"""
import re
from datetime import datetime, timezone

from dateutil import parser as date_parser

from .models import Dialect, LogSource

ZOOKEEPER_LINE = re.compile(
    r'^(?P<date>\d{4}-\d{2}-\d{2}) (?P<time>\d{2}:\d{2}:\d{2}),(?P<millis>\d{3})'
    r' - (?P<level>[A-Z]+)\s+\[(?P<component>.+?)\] - (?P<content>.*)$'
)

HADOOP_LINE = re.compile(
    r'^(?P<date>\d{4}-\d{2}-\d{2}) (?P<time>\d{2}:\d{2}:\d{2}),(?P<millis>\d{3})'
    r' (?P<level>[A-Z]+) \[(?P<thread>[^\]]*)\] (?P<component>[^:\s]+): (?P<content>.*)$'
)

OPENSSH_LINE = re.compile(
    r'^(?P<month>[A-Z][a-z]{2})\s+(?P<day>\d{1,2}) (?P<time>\d{2}:\d{2}:\d{2})'
    r' (?P<host>\S+) (?P<component>[^\[:\s]+)(?:\[(?P<pid>\d+)\])?: (?P<content>.*)$'
)

BGL_LINE = re.compile(
    r'^(?P<label>\S+) (?P<epoch>\d+) (?P<date>\d{4}\.\d{2}\.\d{2}) (?P<location>\S+)'
    r' (?P<stamp>\d{4}-\d{2}-\d{2}-\d{2}\.\d{2}\.\d{2}(?:\.\d+)?) (?P<location_repeat>\S+)'
    r' (?P<type>\S+) (?P<component>\S+) (?P<level>\S+) (?P<content>.*)$'
)

MONTHS = {
    'Jan': 1, 'Feb': 2, 'Mar': 3, 'Apr': 4, 'May': 5, 'Jun': 6,
    'Jul': 7, 'Aug': 8, 'Sep': 9, 'Oct': 10, 'Nov': 11, 'Dec': 12,
}

# Words that put a line on the network channel instead of the system one.
NETWORK_WORDS = re.compile(
    r'(?i)\b(connection|connect|socket|network|timeout|timed out|packet|port|route|'
    r'election|session|quorum|peer|sshd?|preauth|disconnect|unreachable|stream)\b'
)

CLOUD_STATELESS_COLUMNS = (
    'timestamp', 'cpu_usage', 'memory_usage', 'bandwidth_inbound',
    'bandwidth_outbound', 'tps', 'response_time', 'status',
)


def utc_epoch(moment):
    if moment.tzinfo is None:
        moment = moment.replace(tzinfo=timezone.utc)
    return moment.timestamp()


def channel_for(text):
    return LogSource.NET if NETWORK_WORDS.search(text) else LogSource.SYS


def _dated(date, time, millis):
    moment = datetime.strptime(f'{date} {time}', '%Y-%m-%d %H:%M:%S')
    return utc_epoch(moment) + int(millis) / 1000.0


def parse_zookeeper(match, base_year):
    return {
        'timestamp': _dated(match['date'], match['time'], match['millis']),
        'severity': match['level'],
        'fields': {'component': match['component'], 'content': match['content']},
        'source': channel_for(match['component'] + ' ' + match['content']),
    }


def parse_hadoop(match, base_year):
    return {
        'timestamp': _dated(match['date'], match['time'], match['millis']),
        'severity': match['level'],
        'fields': {'component': match['component'], 'thread': match['thread'], 'content': match['content']},
        'source': channel_for(match['content']),
    }


def parse_openssh(match, base_year):
    hours, minutes, seconds = (int(part) for part in match['time'].split(':'))
    moment = datetime(base_year, MONTHS[match['month']], int(match['day']), hours, minutes, seconds)
    fields = {'component': match['component'], 'host': match['host'], 'content': match['content']}
    if match['pid']:
        fields['pid'] = match['pid']
    return {
        'timestamp': utc_epoch(moment),
        'severity': None,
        'fields': fields,
        'source': LogSource.NET,
    }


def parse_bgl(match, base_year):
    stamp = match['stamp']
    layout = '%Y-%m-%d-%H.%M.%S.%f' if stamp.count('.') == 3 else '%Y-%m-%d-%H.%M.%S'
    fields = {
        'component': match['component'],
        'content': match['content'],
        'label': match['label'],
        'location': match['location'],
        'type': match['type'],
    }
    return {
        'timestamp': utc_epoch(datetime.strptime(stamp, layout)),
        'severity': match['level'],
        'fields': fields,
        'source': LogSource.SYS,
        'alert': match['label'] != '-',
    }


LOGHUB_FORMATS = {
    Dialect.ZOOKEEPER: (ZOOKEEPER_LINE, parse_zookeeper),
    Dialect.HADOOP: (HADOOP_LINE, parse_hadoop),
    Dialect.OPENSSH: (OPENSSH_LINE, parse_openssh),
    Dialect.BGL: (BGL_LINE, parse_bgl),
}


def parse_csv_timestamp(value):
    """Epoch seconds from a numeric or ISO-8601 timestamp cell"""
    value = value.strip()
    try:
        return float(value)
    except ValueError:
        return utc_epoch(date_parser.isoparse(value))
