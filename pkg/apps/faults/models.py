from dataclasses import dataclass, field

from django.db import models
from django.utils.translation import gettext_lazy as _

from core.exceptions import InvalidParameter


class FailureKind(models.TextChoices):
    CRASH = 'Crash', _('Crash')
    NETWORK_PARTITION = 'NetworkPartition', _('Network partition')
    DISK_FULL = 'DiskFull', _('Disk full')
    AUTH_STORM = 'AuthStorm', _('Authentication storm')


@dataclass(frozen=True)
class FailureEvent:
    time: float
    node: str
    kind: str = FailureKind.CRASH

    def __post_init__(self):
        if self.time < 0:
            raise InvalidParameter(_('Failure time must be non-negative'), time=self.time)
        if self.kind not in FailureKind.values:
            raise InvalidParameter(_('Unknown failure kind: {kind}').format(kind=self.kind), kind=self.kind)
        object.__setattr__(self, 'kind', FailureKind(self.kind))


@dataclass(frozen=True)
class FailureScenario:
    """A failure scenario: timed node outages plus optional log datasets per node.

    ``attached_logs`` maps a node id to a dataset name known to the run.
    Events are kept sorted by time; equal times keep their given order.
    """

    id: str
    events: tuple = ()
    attached_logs: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, 'events', tuple(sorted(self.events, key=lambda event: event.time)))

    @property
    def times(self):
        return sorted({event.time for event in self.events})

    @property
    def nodes(self):
        return sorted({event.node for event in self.events})

    def event_for(self, node, until):
        """Latest event for ``node`` at or before ``until``"""
        found = None
        for event in self.events:
            if event.node == node and event.time <= until:
                found = event
        return found
