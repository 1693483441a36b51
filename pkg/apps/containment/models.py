from dataclasses import dataclass, field


@dataclass
class MonitoringAgent:
    """One agent per node, watching the nodes within ``k`` hops of its home"""

    id: str
    home: str
    k: int
    probe_interval: float
    timeout: float
    view: dict = field(default_factory=dict)

    @property
    def neighborhood(self):
        return sorted(self.view)


@dataclass(frozen=True)
class Heartbeat:
    cpu_load: float
    mem_load: float
    queue_length: int


@dataclass(frozen=True)
class ProbeResponse:
    node: str
    state: str
    heartbeat: Heartbeat
    delay: float

    timed_out = False


@dataclass(frozen=True)
class ProbeTimeout:
    node: str
    waited: float

    timed_out = True


class FailureSet:
    """F(t): flagged node ids with the time each was first flagged"""

    def __init__(self):
        self.flagged = {}

    def flag(self, node, t):
        """Flag ``node`` at ``t``; returns True if it was not flagged before"""
        if node in self.flagged:
            return False
        self.flagged[node] = t
        return True

    def discard(self, node):
        return self.flagged.pop(node, None)

    def flag_time(self, node):
        return self.flagged.get(node)

    def __contains__(self, node):
        return node in self.flagged

    def __iter__(self):
        return iter(sorted(self.flagged))

    def __len__(self):
        return len(self.flagged)

    def __eq__(self, other):
        if isinstance(other, FailureSet):
            return self.flagged == other.flagged
        return set(self.flagged) == set(other)

    def __repr__(self):
        return f'FailureSet({sorted(self.flagged)})'

    def as_set(self):
        return frozenset(self.flagged)


@dataclass(frozen=True)
class PlugStructure:
    """Temporary rules moving a failed node's tasks onto accepted neighbours"""

    failed: str
    accepted: tuple = ()
    reroute: dict = field(default_factory=dict)
    created_at: float = 0.0
    shortfall: tuple = ()

    @property
    def complete(self):
        return not self.shortfall


@dataclass
class ContainmentReport:
    """What one containment pass did"""

    allocation: object
    failure_set: FailureSet
    newly_flagged: list = field(default_factory=list)
    plugs: dict = field(default_factory=dict)
    probe_delay: float = 0.0
