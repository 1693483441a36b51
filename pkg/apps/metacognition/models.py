import math
from collections import Counter
from dataclasses import dataclass, field

from django.db import models
from django.utils.translation import gettext_lazy as _

from core.conf import section

from .exceptions import BadThresholds, InvalidWeights


class Verdict(models.TextChoices):
    HARMFUL = 'Harmful', _('Harmful')
    REJECTED = 'Rejected', _('Rejected')
    ACCEPTED = 'Accepted', _('Accepted')
    BEST = 'Best', _('Best')


class AgentLevel(models.TextChoices):
    SYSTEM = 'System', _('System')
    AUXILIARY = 'Auxiliary', _('Auxiliary')


@dataclass(frozen=True)
class ReasoningPath:
    """Variable ids from a root towards a sink, in causal order"""

    index: int
    variables: tuple

    @property
    def depth(self):
        return len(self.variables)


class PathList(list):
    """Enumerated paths; ``truncated`` is set when the cap cut enumeration short"""

    truncated = False


@dataclass(frozen=True)
class Hypothesis:
    id: str
    path: ReasoningPath
    agent: str
    topic: str
    reason: str
    solution: str
    evidence: tuple = ()
    coherence: float = 0.0
    safety: float = 0.0
    utility: float = 0.0
    gamma: float = 0.0
    verdict: str = ''
    override: bool = False

    def as_dict(self):
        return {
            'id': self.id,
            'path': list(self.path.variables),
            'agent': self.agent,
            'topic': self.topic,
            'reason': self.reason,
            'solution': self.solution,
            'evidence': list(self.evidence),
            'coherence': self.coherence,
            'safety': self.safety,
            'utility': self.utility,
            'gamma': self.gamma,
            'verdict': str(self.verdict),
            'override': self.override,
        }


@dataclass(frozen=True)
class Invocation:
    agent: str
    path_index: int
    time: float
    level: str


@dataclass
class MicroAgentLedger:
    """Spawned micro-agents and every call made through them"""

    agents: dict = field(default_factory=dict)
    invocations: list = field(default_factory=list)
    proliferations: list = field(default_factory=list)
    inhibitions: list = field(default_factory=list)
    inhibited: bool = False
    cap_reached: bool = False

    @property
    def spawned(self):
        return len(self.agents)

    def spawn(self, level):
        prefix = 'S' if level == AgentLevel.SYSTEM else 'A'
        agent_id = f'agent-{prefix}{sum(1 for value in self.agents.values() if value == level) + 1:02d}'
        self.agents[agent_id] = AgentLevel(level)
        return agent_id

    def invoke(self, agent_id, path_index, time):
        invocation = Invocation(agent_id, path_index, time, self.agents[agent_id])
        self.invocations.append(invocation)
        return invocation

    def agents_at(self, level):
        return sorted(agent for agent, value in self.agents.items() if value == level)

    @property
    def system_invoked(self):
        return len({call.agent for call in self.invocations if call.level == AgentLevel.SYSTEM})

    @property
    def rdr(self):
        """System-level agents invoked over all spawned agents"""
        if not self.agents:
            return 0.0
        return self.system_invoked / self.spawned


@dataclass(frozen=True)
class Thresholds:
    proliferation: float = 0.35
    acceptance: float = 0.55
    inhibition: float = 0.85

    def __post_init__(self):
        if not 0.0 <= self.proliferation <= self.acceptance < self.inhibition <= 1.0:
            raise BadThresholds(
                pro=self.proliferation, acc=self.acceptance, inh=self.inhibition,
            )


def check_weights(weights):
    weights = tuple(float(weight) for weight in weights)
    if len(weights) != 3 or any(weight < 0 or not math.isfinite(weight) for weight in weights):
        raise InvalidWeights(weights=list(weights))
    if abs(math.fsum(weights) - 1.0) > 1e-9:
        raise InvalidWeights(weights=list(weights))
    return weights


@dataclass(frozen=True)
class MetaConfig:
    weights: tuple = (0.4, 0.35, 0.25)
    thresholds: Thresholds = field(default_factory=Thresholds)
    r_max: int = 8
    proliferation_batch: int = 2
    agent_cap: int = 32
    max_depth: int = 12
    path_cap: int = 64
    persist_supporting: bool = False

    def __post_init__(self):
        object.__setattr__(self, 'weights', check_weights(self.weights))

    @classmethod
    def from_settings(cls, **overrides):
        config = section('METACOGNITION')
        values = {
            'weights': tuple(config.get('WEIGHTS', (0.4, 0.35, 0.25))),
            'thresholds': Thresholds(
                config.get('THETA_PRO', 0.35), config.get('THETA_ACC', 0.55), config.get('THETA_INH', 0.85),
            ),
            'r_max': config.get('R_MAX', 8),
            'proliferation_batch': config.get('PROLIFERATION_BATCH', 2),
            'agent_cap': config.get('AGENT_CAP', 32),
            'max_depth': config.get('MAX_DEPTH', 12),
            'path_cap': config.get('PATH_CAP', 64),
            'persist_supporting': config.get('PERSIST_SUPPORTING', False),
        }
        values.update(overrides)
        return cls(**values)


@dataclass
class MetaOutcome:
    """What the meta-cognitive loop concluded for one node"""

    node: str
    best: Hypothesis = None
    supporting: list = field(default_factory=list)
    scored: list = field(default_factory=list)
    restructured: object = None
    ledger: MicroAgentLedger = field(default_factory=MicroAgentLedger)
    responses: Counter = field(default_factory=Counter)
    paths: int = 0
    escalated: bool = False

    @property
    def healed(self):
        return self.best is not None

    def knowledge(self):
        """(topic, reason, solution) handed to the knowledge layer"""
        if self.best is None:
            return None
        return (self.best.topic, self.best.reason, self.best.solution)

    def dumps(self):
        """Structured text for telemetry and the knowledge handoff"""
        lines = [f'outcome {self.node} healed={int(self.healed)} escalated={int(self.escalated)}']
        if self.best is not None:
            lines.append(f'best {self.best.id} gamma={self.best.gamma:.9f}')
            lines.append(f'topic {self.best.topic}')
            lines.append(f'reason {self.best.reason}')
            lines.append(f'solution {self.best.solution}')
        lines.extend(f'supporting {hypothesis.id} gamma={hypothesis.gamma:.9f}' for hypothesis in self.supporting)
        for verdict in Verdict:
            lines.append(f'responses {verdict.value} {self.responses.get(verdict.value, 0)}')
        lines.append(f'agents spawned={self.ledger.spawned} system_invoked={self.ledger.system_invoked}')
        return '\n'.join(lines) + '\n'
