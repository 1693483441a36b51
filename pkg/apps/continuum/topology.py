"""Reader and writer for ``recist-topology v1`` files.

Records, one per line, in this order::

    node <id> <capacity> <memory> <state> <vulnerability>
    link <src> <dst> <bandwidth> <latency>
    task <id> <cpu> <mem> <compute_time> <critical|normal>
    assign <task> <node>

Blank lines and ``#`` comments are ignored on load and not written back.
"""
from pathlib import Path

from django.utils.translation import gettext_lazy as _

from .exceptions import ContinuumError, InvalidTopology
from .models import Link, Node, SystemGraph, Task

TOPOLOGY_HEADER = 'recist-topology v1'


def format_number(value):
    """Shortest text that reads back to the same float"""
    value = float(value)
    if value.is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


class TopologyFile:
    """Load and save system graphs"""

    @staticmethod
    def loads(text, bandwidth_floor=1.0, validate=True):
        lines = text.splitlines()
        if not lines or lines[0].strip() != TOPOLOGY_HEADER:
            raise InvalidTopology(_('Missing header line: {header}').format(header=TOPOLOGY_HEADER))
        graph = SystemGraph(bandwidth_floor=bandwidth_floor)
        for number, raw in enumerate(lines[1:], start=2):
            line = raw.split('#', 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                TopologyFile._apply(graph, parts)
            except (ValueError, IndexError) as exc:
                raise InvalidTopology(
                    _('Line {line}: cannot read record ({error})').format(line=number, error=exc),
                    line=number,
                )
            except ContinuumError as exc:
                raise InvalidTopology(_('Line {line}: {error}').format(line=number, error=exc), line=number)
        if validate:
            graph.validate()
        return graph

    @staticmethod
    def _apply(graph, parts):
        kind = parts[0]
        if kind == 'node' and len(parts) == 6:
            graph.add_node(Node(
                id=parts[1],
                capacity=float(parts[2]),
                memory=float(parts[3]),
                state=parts[4],
                vulnerability=parts[5],
            ))
        elif kind == 'link' and len(parts) == 5:
            graph.add_link(Link(src=parts[1], dst=parts[2], bandwidth=float(parts[3]), latency=float(parts[4])))
        elif kind == 'task' and len(parts) == 6:
            if parts[5] not in ('critical', 'normal'):
                raise ValueError(f'criticality must be critical or normal, got {parts[5]}')
            graph.add_task(Task(
                id=parts[1],
                cpu_demand=float(parts[2]),
                mem_demand=float(parts[3]),
                compute_time=float(parts[4]),
                critical=parts[5] == 'critical',
            ))
        elif kind == 'assign' and len(parts) == 3:
            if graph.host_of(parts[1]) is not None:
                raise ValueError(f'task {parts[1]} assigned twice')
            # States come from the file as written.
            graph.place(parts[1], parts[2], update_state=False)
        else:
            raise ValueError(f'unknown record {kind!r} with {len(parts) - 1} fields')

    @staticmethod
    def dumps(graph):
        lines = [TOPOLOGY_HEADER]
        for node in graph.nodes.values():
            lines.append(' '.join((
                'node', node.id, format_number(node.capacity), format_number(node.memory),
                node.state.value, node.vulnerability.value,
            )))
        for link in graph.links:
            lines.append(' '.join((
                'link', link.src, link.dst, format_number(link.bandwidth), format_number(link.latency),
            )))
        for task in graph.tasks.values():
            lines.append(' '.join((
                'task', task.id, format_number(task.cpu_demand), format_number(task.mem_demand),
                format_number(task.compute_time), 'critical' if task.critical else 'normal',
            )))
        for task_id in graph.tasks:
            host = graph.host_of(task_id)
            if host is not None:
                lines.append(f'assign {task_id} {host}')
        return '\n'.join(lines) + '\n'

    @staticmethod
    def load(path, bandwidth_floor=1.0, validate=True):
        return TopologyFile.loads(Path(path).read_text(encoding='utf-8'), bandwidth_floor, validate)

    @staticmethod
    def dump(graph, path):
        Path(path).write_text(TopologyFile.dumps(graph), encoding='utf-8')
