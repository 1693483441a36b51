"""Request and response schemas shared by every reasoner backend.

Payloads are validated before dispatch and responses after, so the
scripted, replay and remote backends are interchangeable.
"""
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .models import ENTITY_KINDS, VERDICTS, RequestKind

EntityKind = Literal[ENTITY_KINDS]
Verdict = Literal[VERDICTS]


class Schema(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)


class RecordPayload(Schema):
    ref: str
    timestamp: float
    text: str
    source: str = ''
    severity: Optional[str] = None
    fields: dict[str, str] = Field(default_factory=dict)
    flags: list[str] = Field(default_factory=list)


class VariablePayload(Schema):
    id: str
    kind: EntityKind
    label: str = Field(min_length=1)
    first_seen: float = 0.0


class ExtractPayload(Schema):
    dialect: str
    records: list[RecordPayload]


class EntityPayload(Schema):
    kind: EntityKind
    label: str = Field(min_length=1)
    refs: list[str] = Field(min_length=1)


class ExtractResponse(Schema):
    entities: list[EntityPayload] = Field(default_factory=list)


class RelationPayload(Schema):
    src: VariablePayload
    dst: VariablePayload


class RelationResponse(Schema):
    related: Literal[0, 1]
    confidence: float = Field(ge=0.0, le=1.0)
    rationale: str = ''


class HypothesizePayload(Schema):
    node: str
    category: str
    path: list[VariablePayload] = Field(min_length=1)
    evidence: list[RecordPayload] = Field(default_factory=list)


class HypothesizeResponse(Schema):
    topic: str
    reason: str
    solution: str


class EvaluatePayload(Schema):
    topic: str
    reason: str
    solution: str
    depth: int = Field(ge=1)
    evidence_count: int = Field(ge=0)


class EvaluateResponse(Schema):
    coherence: float
    safety: float
    utility: float
    verdict: Optional[Verdict] = None
    rationale: str = ''


class EmbedPayload(Schema):
    text: str = Field(min_length=1)
    kind: Literal['Topic', 'Reason']
    dimension: int = Field(gt=0)


class EmbedResponse(Schema):
    vector: list[float] = Field(min_length=1)


SCHEMAS = {
    RequestKind.EXTRACT: (ExtractPayload, ExtractResponse),
    RequestKind.RELATION: (RelationPayload, RelationResponse),
    RequestKind.HYPOTHESIZE: (HypothesizePayload, HypothesizeResponse),
    RequestKind.EVALUATE: (EvaluatePayload, EvaluateResponse),
    RequestKind.EMBED: (EmbedPayload, EmbedResponse),
}


class Budget(Schema):
    max_tokens: int = Field(default=1024, gt=0)
    max_seconds: float = Field(default=30.0, gt=0)


class ReasonerRequest(Schema):
    """One oracle call: ``payload`` must match the schema of ``kind``"""

    kind: Literal[tuple(RequestKind.values)]
    payload: dict
    budget: Budget = Field(default_factory=Budget)
    seed: int = 0

    @model_validator(mode='after')
    def check_payload(self):
        payload_model, _response = SCHEMAS[RequestKind(self.kind)]
        payload_model.model_validate(self.payload)
        return self

    def typed_payload(self):
        return SCHEMAS[RequestKind(self.kind)][0].model_validate(self.payload)

    def response_model(self):
        return SCHEMAS[RequestKind(self.kind)][1]

    def wire(self):
        """JSON document posted by the remote backend"""
        return {
            'kind': self.kind,
            'payload': self.payload,
            'constraints': {
                'max_tokens': self.budget.max_tokens,
                'max_seconds': self.budget.max_seconds,
                'seed': self.seed,
            },
        }
