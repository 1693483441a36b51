"""Reader and writer for ``recist-scenario v1`` files.

::

    recist-scenario v1
    scenario <id>
    logs <node> <dataset>
    <time> <node> <kind>
"""
from pathlib import Path

from django.utils.translation import gettext_lazy as _

from continuum.topology import format_number
from core.exceptions import HealsimError

from .exceptions import InvalidScenario
from .models import FailureEvent, FailureScenario

SCENARIO_HEADER = 'recist-scenario v1'


class ScenarioFile:
    """Load and save failure scenarios"""

    @staticmethod
    def loads(text, default_id='scenario'):
        lines = text.splitlines()
        if not lines or lines[0].strip() != SCENARIO_HEADER:
            raise InvalidScenario(_('Missing header line: {header}').format(header=SCENARIO_HEADER))
        scenario_id = default_id
        attached = {}
        events = []
        for number, raw in enumerate(lines[1:], start=2):
            line = raw.split('#', 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                if parts[0] == 'scenario' and len(parts) == 2:
                    scenario_id = parts[1]
                elif parts[0] == 'logs' and len(parts) == 3:
                    attached[parts[1]] = parts[2]
                elif len(parts) == 3:
                    events.append(FailureEvent(time=float(parts[0]), node=parts[1], kind=parts[2]))
                else:
                    raise ValueError(f'cannot read {line!r}')
            except (ValueError, HealsimError) as exc:
                raise InvalidScenario(_('Line {line}: {error}').format(line=number, error=exc), line=number)
        times = [event.time for event in events]
        if times != sorted(times):
            raise InvalidScenario(_('Events must be sorted by time'))
        return FailureScenario(id=scenario_id, events=tuple(events), attached_logs=attached)

    @staticmethod
    def dumps(scenario):
        lines = [SCENARIO_HEADER, f'scenario {scenario.id}']
        lines.extend(f'logs {node} {dataset}' for node, dataset in scenario.attached_logs.items())
        lines.extend(f'{format_number(event.time)} {event.node} {event.kind.value}' for event in scenario.events)
        return '\n'.join(lines) + '\n'

    @staticmethod
    def load(path):
        path = Path(path)
        return ScenarioFile.loads(path.read_text(encoding='utf-8'), default_id=path.stem)

    @staticmethod
    def dump(scenario, path):
        Path(path).write_text(ScenarioFile.dumps(scenario), encoding='utf-8')
