import json
import threading
from pathlib import Path

from django.utils.translation import gettext_lazy as _

from .exceptions import SchemaViolation

HEADER_TYPE = 'header'
EXCHANGE_TYPE = 'exchange'


class Transcript:
    """Append-only log of reasoner exchanges, in completion order.

    The first JSONL line names the backend and the config hash; every other
    line is one ``(request, response, latency)`` exchange.
    """

    def __init__(self, backend='', config_hash='', entries=None):
        self.backend = str(backend)
        self.config_hash = config_hash
        self.entries = list(entries or [])
        self._lock = threading.Lock()

    def __len__(self):
        return len(self.entries)

    def append(self, request, response, latency):
        with self._lock:
            entry = {
                'type': EXCHANGE_TYPE,
                'sequence': len(self.entries),
                'request': request,
                'response': response,
                'latency': latency,
            }
            self.entries.append(entry)
            return entry

    def to_jsonl(self):
        header = {'type': HEADER_TYPE, 'backend': self.backend, 'config_hash': self.config_hash}
        lines = [json.dumps(header, sort_keys=True, separators=(',', ':'))]
        with self._lock:
            lines.extend(json.dumps(entry, sort_keys=True, separators=(',', ':')) for entry in self.entries)
        return '\n'.join(lines) + '\n'

    def dump(self, path):
        Path(path).write_text(self.to_jsonl(), encoding='utf-8')

    @classmethod
    def from_jsonl(cls, text):
        transcript = cls()
        for number, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaViolation(_('Transcript line {number} is not JSON').format(number=number), error=str(exc))
            if record.get('type') == HEADER_TYPE:
                transcript.backend = record.get('backend', '')
                transcript.config_hash = record.get('config_hash', '')
            elif record.get('type') == EXCHANGE_TYPE:
                transcript.entries.append(record)
            else:
                raise SchemaViolation(_('Transcript line {number} has no known type').format(number=number))
        return transcript

    @classmethod
    def load(cls, path):
        return cls.from_jsonl(Path(path).read_text(encoding='utf-8'))
