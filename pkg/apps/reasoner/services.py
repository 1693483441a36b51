import logging

from django.utils.translation import gettext_lazy as _
from pydantic import ValidationError

from core.conf import section

from .backends import RemoteBackend, ReplayBackend, ScriptedBackend
from .exceptions import (
    EmbedderUnavailable,
    EvaluatorUnavailable,
    ReasonerUnavailable,
    SchemaViolation,
)
from .models import BackendName, EmbedKind, RequestKind
from .schemas import Budget, ReasonerRequest
from .transcript import Transcript

logger = logging.getLogger(__name__)


def record_payload(record):
    return {
        'ref': record.ref,
        'timestamp': record.timestamp,
        'text': record.text,
        'source': str(record.source),
        'severity': record.severity,
        'fields': {str(key): str(value) for key, value in sorted(record.fields.items())},
        'flags': sorted(record.flags),
    }


def variable_payload(variable):
    return {
        'id': variable.id,
        'kind': str(variable.kind),
        'label': variable.label,
        'first_seen': variable.first_seen,
    }


class Reasoner:
    """The one seam through which every layer asks an oracle.

    Each call is validated, handed to the backend, validated again and
    appended to the transcript. Latency charged by the backend advances
    ``clock`` when one is attached.
    """

    def __init__(self, backend, transcript=None, counters=None, clock=None, budget=None, seed=0, dimension=None):
        self.backend = backend
        self.transcript = transcript if transcript is not None else Transcript(backend=backend.name)
        self.counters = counters
        self.clock = clock
        self.budget = budget or Budget()
        self.seed = seed
        self.dimension = dimension or section('KNOWLEDGE').get('DIMENSION', 256)
        self.calls = 0
        self.elapsed = 0.0

    def dispatch(self, kind, payload):
        kind = RequestKind(kind)
        try:
            request = ReasonerRequest(kind=kind.value, payload=payload, budget=self.budget, seed=self.seed)
        except ValidationError as exc:
            raise SchemaViolation(_('Invalid {kind} payload').format(kind=kind.value), kind=kind.value, errors=exc.errors())
        response, latency = self.backend.handle(request)
        try:
            parsed = request.response_model().model_validate(response)
        except ValidationError as exc:
            raise SchemaViolation(_('Invalid {kind} response').format(kind=kind.value), kind=kind.value, errors=exc.errors())
        self.transcript.append(request.model_dump(mode='json'), parsed.model_dump(mode='json'), latency)
        self.calls += 1
        self.elapsed += latency
        if self.clock is not None:
            self.clock.advance(latency)
        if self.counters is not None:
            self.counters.bump('reasoner.calls')
            self.counters.bump(f'reasoner.{kind.value.lower()}')
        return parsed

    def extract(self, dialect, records):
        return self.dispatch(RequestKind.EXTRACT, {
            'dialect': str(dialect),
            'records': [record_payload(record) for record in records],
        })

    def relation(self, src, dst):
        return self.dispatch(RequestKind.RELATION, {'src': variable_payload(src), 'dst': variable_payload(dst)})

    def hypothesize(self, node, category, variables, evidence):
        return self.dispatch(RequestKind.HYPOTHESIZE, {
            'node': node,
            'category': category,
            'path': [variable_payload(variable) for variable in variables],
            'evidence': [record_payload(record) for record in evidence],
        })

    def evaluate(self, topic, reason, solution, depth, evidence_count):
        try:
            return self.dispatch(RequestKind.EVALUATE, {
                'topic': topic,
                'reason': reason,
                'solution': solution,
                'depth': depth,
                'evidence_count': evidence_count,
            })
        except ReasonerUnavailable as exc:
            raise EvaluatorUnavailable(str(exc), **exc.context) from exc

    def embed(self, text, kind=EmbedKind.REASON):
        try:
            response = self.dispatch(RequestKind.EMBED, {
                'text': text,
                'kind': EmbedKind(kind).value,
                'dimension': self.dimension,
            })
        except ReasonerUnavailable as exc:
            raise EmbedderUnavailable(str(exc), **exc.context) from exc
        return response.vector


class ReasonerService:
    """Service for building reasoners from settings"""

    @staticmethod
    def build_backend(name=None, transcript=None, client=None, config=None):
        config = config if config is not None else section('REASONER')
        name = BackendName(name or config.get('BACKEND', BackendName.SCRIPTED))
        if name == BackendName.SCRIPTED:
            return ScriptedBackend(latency=config.get('SYNTHETIC_LATENCY', 0.0))
        if name == BackendName.REPLAY:
            if transcript is None:
                raise ReasonerUnavailable(_('The replay backend needs a transcript'))
            return ReplayBackend(transcript.entries)
        return RemoteBackend.from_settings(config, client=client)

    @staticmethod
    def build(
        name=None, replay_from=None, counters=None, clock=None, seed=0, config_hash='', client=None,
        config=None, dimension=None,
    ):
        config = config if config is not None else section('REASONER')
        backend = ReasonerService.build_backend(name, transcript=replay_from, client=client, config=config)
        budget = Budget(
            max_tokens=config.get('MAX_TOKENS', 1024),
            max_seconds=config.get('TIMEOUT', 30.0),
        )
        transcript = Transcript(backend=backend.name, config_hash=config_hash)
        logger.info('reasoner_ready backend=%s seed=%s', backend.name, seed)
        return Reasoner(
            backend, transcript=transcript, counters=counters, clock=clock, budget=budget, seed=seed, dimension=dimension,
        )
