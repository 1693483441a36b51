import json
import logging
import os
import time
from pathlib import Path

import httpx
from django.utils.translation import gettext_lazy as _
from pydantic import ValidationError

from .exceptions import BudgetExceeded, ReasonerUnavailable, ReplayMismatch
from .models import BackendName, RequestKind, Wire
from .rules import RuleBook, hash_embedding

logger = logging.getLogger(__name__)

PROMPTS_DIR = Path(__file__).resolve().parent / 'prompts'


class ScriptedBackend:
    """Deterministic rule-table answers for every request kind.

    Each answer is a pure function of the payload and the rule book. The
    charged latency is the configured synthetic latency.
    """

    name = BackendName.SCRIPTED

    def __init__(self, rulebook=None, latency=0.0):
        self.rulebook = rulebook or RuleBook()
        self.latency = latency

    def handle(self, request):
        if self.latency > request.budget.max_seconds:
            raise BudgetExceeded(
                _('Synthetic latency {latency}s is over the {budget}s budget').format(
                    latency=self.latency, budget=request.budget.max_seconds,
                ),
                kind=request.kind,
            )
        payload = request.typed_payload()
        handler = getattr(self, f'_{request.kind.lower()}')
        return handler(payload), self.latency

    def _extract(self, payload):
        found = {}
        for record in payload.records:
            for rule in self.rulebook.rules_for(payload.dialect):
                if rule.matches(record):
                    refs = found.setdefault((rule.kind, rule.label), [])
                    if record.ref not in refs:
                        refs.append(record.ref)
        return {
            'entities': [
                {'kind': kind, 'label': label, 'refs': refs}
                for (kind, label), refs in found.items()
            ],
        }

    def _relation(self, payload):
        related, confidence, rationale = self.rulebook.relation(payload.src, payload.dst)
        return {'related': related, 'confidence': confidence, 'rationale': rationale}

    def _hypothesize(self, payload):
        labels = [variable.label for variable in payload.path]
        return {
            'topic': f'{payload.category}: {labels[0]}',
            'reason': ' -> '.join(labels),
            'solution': self.rulebook.solution_for(labels, payload.node),
        }

    def _evaluate(self, payload):
        coherence = min(1.0, 0.2 + 0.2 * (payload.depth - 1) + 0.1 * min(payload.evidence_count, 4))
        safety = 0.2 if self.rulebook.is_risky(payload.solution) else 0.9
        utility = 0.9 if self.rulebook.is_specific(payload.solution) else 0.4
        return {'coherence': coherence, 'safety': safety, 'utility': utility}

    def _embed(self, payload):
        return {'vector': hash_embedding(payload.text, payload.dimension).tolist()}


class ReplayBackend:
    """Answers from a recorded transcript, in recorded order"""

    name = BackendName.REPLAY

    def __init__(self, entries):
        self.entries = list(entries)
        self.position = 0

    def handle(self, request):
        if self.position >= len(self.entries):
            raise ReplayMismatch(_('Transcript is exhausted'), position=self.position, kind=request.kind)
        entry = self.entries[self.position]
        recorded = entry['request']
        if recorded['kind'] != request.kind or recorded['payload'] != request.payload:
            raise ReplayMismatch(
                _('Request {position} differs from the transcript').format(position=self.position),
                position=self.position, kind=request.kind, recorded=recorded['kind'],
            )
        self.position += 1
        return entry['response'], entry['latency']

    @property
    def exhausted(self):
        return self.position >= len(self.entries)


class RemoteBackend:
    """HTTP backend.

    The native wire posts ``{kind, payload, constraints}`` and expects the
    kind's response document back. The chat wire renders a prompt template
    and reads a JSON object out of a chat-completion reply; embeddings go
    to the ``/embeddings`` route.
    """

    name = BackendName.REMOTE

    def __init__(self, endpoint, wire=Wire.NATIVE, model='', token=None, timeout=30.0, retries=2, client=None):
        if not endpoint:
            raise ReasonerUnavailable(_('Remote reasoner endpoint is not configured'))
        self.endpoint = endpoint.rstrip('/')
        self.wire = Wire(wire)
        self.model = model
        self.retries = retries
        headers = {'Content-Type': 'application/json'}
        if token:
            headers['Authorization'] = f'Bearer {token}'
        self.client = client or httpx.Client(timeout=timeout, headers=headers)
        if client is not None:
            self.client.headers.update(headers)

    @classmethod
    def from_settings(cls, section, client=None):
        token_env = section.get('TOKEN_ENV', 'HEALSIM_REASONER_TOKEN')
        return cls(
            endpoint=section.get('ENDPOINT', ''),
            wire=section.get('WIRE', Wire.NATIVE),
            model=section.get('MODEL', ''),
            token=os.environ.get(token_env),
            timeout=section.get('TIMEOUT', 30.0),
            retries=section.get('RETRIES', 2),
            client=client,
        )

    def handle(self, request):
        response_model = request.response_model()
        last_error = None
        for attempt in range(self.retries + 1):
            started = time.perf_counter()
            try:
                document = self._exchange(request)
                parsed = response_model.model_validate(document)
            except (httpx.HTTPError, ValueError, KeyError, IndexError, TypeError, ValidationError) as exc:
                last_error = exc
                logger.warning('reasoner_retry kind=%s attempt=%s error=%s', request.kind, attempt + 1, exc)
                continue
            latency = time.perf_counter() - started
            if latency > request.budget.max_seconds:
                raise BudgetExceeded(
                    _('Remote call took {latency:.3f}s').format(latency=latency),
                    kind=request.kind, latency=latency,
                )
            return parsed.model_dump(mode='json'), latency
        raise ReasonerUnavailable(
            _('Remote reasoner failed after {attempts} attempt(s)').format(attempts=self.retries + 1),
            kind=request.kind, error=str(last_error),
        )

    def _exchange(self, request):
        if self.wire == Wire.NATIVE:
            reply = self.client.post(self.endpoint, json=request.wire())
            reply.raise_for_status()
            document = reply.json()
            self._check_tokens(document.pop('usage', None), request)
            return document
        if request.kind == RequestKind.EMBED:
            payload = request.typed_payload()
            reply = self.client.post(f'{self.endpoint}/embeddings', json={'model': self.model, 'input': payload.text})
            reply.raise_for_status()
            return {'vector': reply.json()['data'][0]['embedding']}
        reply = self.client.post(f'{self.endpoint}/chat/completions', json={
            'model': self.model,
            'messages': [
                {'role': 'system', 'content': render_prompt('system', {})},
                {'role': 'user', 'content': render_prompt(request.kind.lower(), request.payload)},
            ],
            'max_tokens': request.budget.max_tokens,
            'temperature': 0,
            'seed': request.seed,
        })
        reply.raise_for_status()
        body = reply.json()
        self._check_tokens(body.get('usage'), request)
        return json.loads(_json_object(body['choices'][0]['message']['content']))

    @staticmethod
    def _check_tokens(usage, request):
        if not usage:
            return
        used = usage.get('total_tokens', usage.get('tokens', 0))
        if used > request.budget.max_tokens:
            raise BudgetExceeded(
                _('Response used {used} tokens').format(used=used),
                kind=request.kind, tokens=used,
            )

    def close(self):
        self.client.close()


def render_prompt(name, payload):
    template = (PROMPTS_DIR / f'{name}.txt').read_text(encoding='utf-8')
    return template.replace('{payload}', json.dumps(payload, sort_keys=True, indent=2))


def _json_object(text):
    """The outermost ``{...}`` of a chat reply; models like to add prose around it"""
    start = text.find('{')
    end = text.rfind('}')
    if start < 0 or end < start:
        raise ValueError(f'no JSON object in reply: {text[:80]!r}')
    return text[start:end + 1]
