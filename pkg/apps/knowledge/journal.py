import json
import threading
from pathlib import Path

import numpy as np
from django.utils.translation import gettext_lazy as _

from .exceptions import MalformedSnapshot
from .models import KnowledgeRecord, RendezvousStore, StoreScope
from .services import KnowledgeService


def sparse(vector):
    """Nonzero entries of ``vector`` as [index, value] pairs"""
    vector = np.asarray(vector, dtype=np.float64)
    return [[int(index), float(vector[index])] for index in np.flatnonzero(vector)]


def dense(pairs, dimension):
    vector = np.zeros(dimension, dtype=np.float64)
    for index, value in pairs:
        vector[int(index)] = float(value)
    return vector


class KnowledgeJournal:
    """Append-only operation log of one store.

    Each JSONL line is one operation. Embeddings are written in full
    precision so a replay rebuilds the store exactly without an embedder.
    """

    def __init__(self, entries=None):
        self.entries = list(entries or [])
        self._lock = threading.Lock()

    def __len__(self):
        return len(self.entries)

    def append(self, op, **fields):
        entry = {'op': op}
        for key, value in fields.items():
            if isinstance(value, np.ndarray):
                entry['dimension'] = int(value.shape[0])
                value = sparse(value)
            entry[key] = value
        with self._lock:
            entry['sequence'] = len(self.entries)
            self.entries.append(entry)
        return entry

    def to_jsonl(self):
        with self._lock:
            return ''.join(json.dumps(entry, sort_keys=True, separators=(',', ':')) + '\n' for entry in self.entries)

    def dump(self, path):
        Path(path).write_text(self.to_jsonl(), encoding='utf-8')

    @classmethod
    def from_jsonl(cls, text):
        entries = []
        for number, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                entries.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise MalformedSnapshot(_('Journal line {number} is not JSON').format(number=number), error=str(exc))
        return cls(entries)

    @classmethod
    def load(cls, path):
        return cls.from_jsonl(Path(path).read_text(encoding='utf-8'))

    def replay(self, name, scope=StoreScope.LOCAL, thresholds=None):
        """Rebuild the store these operations were recorded from"""
        store = RendezvousStore(name, scope=scope, thresholds=thresholds)
        for entry in self.entries:
            op = entry.get('op')
            try:
                if op == 'insert':
                    vectors = (
                        dense(entry['topic_vector'], entry['dimension']),
                        dense(entry['reason_vector'], entry['dimension']),
                    )
                    KnowledgeService.insert_knowledge(store, KnowledgeRecord.from_dict(entry['record']), vectors=vectors)
                elif op == 'remove':
                    KnowledgeService.remove(store, entry['origin'])
                elif op == 'blend':
                    incoming = entry.get('incoming')
                    KnowledgeService.blend(
                        store, entry['origin'],
                        dense(entry['topic_vector'], entry['dimension']),
                        dense(entry['reason_vector'], entry['dimension']),
                        incoming=None if incoming is None else KnowledgeRecord.from_dict(incoming),
                    )
                elif op == 'merge_partitions':
                    KnowledgeService.merge_partitions(store, entry['topic'])
                elif op == 'merge_topics':
                    KnowledgeService.merge_topics(store)
                elif op == 'split':
                    KnowledgeService.split_partition(store, entry['topic'], entry['partition'])
                elif op == 'reorganize':
                    KnowledgeService.reorganize(store)
                elif op == 'synced':
                    store.version_vector[entry['peer']] = entry['revision']
                else:
                    raise MalformedSnapshot(_('Unknown journal operation: {op}').format(op=op), sequence=entry.get('sequence'))
            except (KeyError, TypeError, ValueError) as exc:
                raise MalformedSnapshot(_('Bad journal entry'), sequence=entry.get('sequence'), error=str(exc))
        return store
