"""Plain-text knowledge snapshots.

Layout, one record per line::

    healsim-knowledge v1
    store <name> <scope> revision=<n> dimension=<d>
    thresholds topic=<t> reason=<r> merge=<m> split=<s>
    peer <name> <revision>
    topic <id> <label>
    rep <index:value ...>
    partition <id> version=<n>
    rep <index:value ...>
    member <origin> version=<n> supporting=<0|1> time=<t> source=<node>
    text topic <text>
    text reason <text>
    text solution <text>
    tvec <index:value ...>
    rvec <index:value ...>

Vectors are sparse with nine decimals, so the text is byte-stable across
platforms.
"""
import numpy as np
from django.utils.translation import gettext_lazy as _

from continuum.topology import format_number

from .exceptions import MalformedSnapshot
from .models import (
    KnowledgeRecord,
    KnowledgeThresholds,
    Member,
    Partition,
    RendezvousStore,
    Topic,
)

HEADER = 'healsim-knowledge v1'


def format_vector(vector):
    cells = []
    for index, value in enumerate(np.asarray(vector, dtype=np.float64)):
        text = f'{round(float(value), 9) + 0.0:.9f}'
        if float(text) != 0.0:
            cells.append(f'{index}:{text}')
    return ' '.join(cells)


def parse_vector(text, dimension):
    vector = np.zeros(dimension, dtype=np.float64)
    for cell in text.split():
        index, value = cell.split(':', 1)
        vector[int(index)] = float(value)
    return vector


def _line(text):
    return ' '.join(text.split())


def dumps(store):
    with store.lock:
        dimension = 0
        for member in store.members():
            dimension = member.topic_vector.shape[0]
            break
        thresholds = store.thresholds
        lines = [
            HEADER,
            f'store {store.name} {store.scope.value} revision={store.revision} dimension={dimension}',
            'thresholds ' + ' '.join(
                f'{name}={format_number(getattr(thresholds, name))}' for name in ('topic', 'reason', 'merge', 'split')
            ),
        ]
        lines.extend(f'peer {peer} {revision}' for peer, revision in sorted(store.version_vector.items()))
        for topic in store.topics:
            lines.append(f'topic {topic.id} {_line(topic.label)}')
            lines.append(f'rep {format_vector(topic.representative)}')
            for partition in topic.partitions:
                lines.append(f'partition {partition.id} version={partition.version}')
                lines.append(f'rep {format_vector(partition.representative)}')
                for member in partition.members:
                    record = member.record
                    lines.append(
                        f'member {record.origin or "-"} version={record.version} supporting={int(record.supporting)} '
                        f'time={format_number(record.timestamp)} source={record.source or "-"}'
                    )
                    lines.append(f'text topic {_line(record.topic)}')
                    lines.append(f'text reason {_line(record.reason)}')
                    lines.append(f'text solution {_line(record.solution)}')
                    lines.append(f'tvec {format_vector(member.topic_vector)}')
                    lines.append(f'rvec {format_vector(member.reason_vector)}')
    return '\n'.join(lines) + '\n'


def _fields(parts):
    return dict(part.split('=', 1) for part in parts)


def loads(text):
    """Read a snapshot back into a store; representatives are recomputed from members"""
    lines = text.splitlines()
    if not lines or lines[0].strip() != HEADER:
        raise MalformedSnapshot(_('Missing snapshot header'), expected=HEADER)
    store = None
    dimension = 0
    topic = partition = None
    draft = None

    def finish():
        if draft is not None:
            record = KnowledgeRecord(
                topic=draft['topic'], reason=draft['reason'], solution=draft.get('solution', ''),
                source=draft['source'], timestamp=draft['time'], origin=draft['origin'],
                version=draft['version'], supporting=draft['supporting'],
            )
            partition.members.append(Member(record, draft['tvec'], draft['rvec']))

    for number, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        head, _sep, rest = raw.partition(' ')
        try:
            if head == 'store':
                name, scope, *extra = rest.split()
                fields = _fields(extra)
                store = RendezvousStore(name, scope=scope)
                store.revision = int(fields['revision'])
                dimension = int(fields['dimension'])
            elif head == 'thresholds':
                fields = {key: float(value) for key, value in _fields(rest.split()).items()}
                store.thresholds = KnowledgeThresholds(**fields)
            elif head == 'peer':
                peer, revision = rest.split()
                store.version_vector[peer] = int(revision)
            elif head == 'topic':
                finish()
                draft = None
                topic_id, _sep, label = rest.partition(' ')
                topic = Topic(topic_id, label)
                store.topics.append(topic)
            elif head == 'partition':
                finish()
                draft = None
                partition_id, *extra = rest.split()
                partition = Partition(partition_id, version=int(_fields(extra)['version']))
                topic.partitions.append(partition)
            elif head == 'rep':
                continue
            elif head == 'member':
                finish()
                origin, *extra = rest.split()
                fields = _fields(extra)
                draft = {
                    'origin': '' if origin == '-' else origin,
                    'version': int(fields['version']),
                    'supporting': fields['supporting'] == '1',
                    'time': float(fields['time']),
                    'source': '' if fields['source'] == '-' else fields['source'],
                }
            elif head == 'text':
                key, _sep, value = rest.partition(' ')
                draft[key] = value
            elif head == 'tvec':
                draft['tvec'] = parse_vector(rest, dimension)
            elif head == 'rvec':
                draft['rvec'] = parse_vector(rest, dimension)
            else:
                raise ValueError(head)
        except (AttributeError, KeyError, TypeError, ValueError) as exc:
            raise MalformedSnapshot(_('Bad snapshot line {number}').format(number=number), line=number, error=str(exc))
    finish()
    if store is None:
        raise MalformedSnapshot(_('Snapshot names no store'))
    for topic in store.topics:
        topic.refresh()
    store._topic_seq = _highest(topic.id for topic in store.topics)
    store._partition_seq = _highest(partition.id for topic in store.topics for partition in topic.partitions)
    return store


def _highest(ids):
    return max((int(identifier[1:]) for identifier in ids), default=0)
