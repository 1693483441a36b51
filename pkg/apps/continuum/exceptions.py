from django.utils.translation import gettext_lazy as _

from core.exceptions import HealsimError


class ContinuumError(HealsimError):
    code = 'ContinuumError'


class NodeNotFound(ContinuumError):
    code = 'NodeNotFound'
    default_message = _('Node does not exist')


class TaskNotFound(ContinuumError):
    code = 'TaskNotFound'
    default_message = _('Task does not exist')


class NodeUnavailable(ContinuumError):
    code = 'NodeUnavailable'
    default_message = _('Node is not available')


class CapacityExceeded(ContinuumError):
    code = 'CapacityExceeded'
    default_message = _('Node capacity exceeded')


class CriticalityViolation(ContinuumError):
    code = 'CriticalityViolation'
    default_message = _('Critical task on a vulnerable node')


class Unreachable(ContinuumError):
    code = 'Unreachable'
    default_message = _('No path satisfies the bandwidth floor')


class ZeroCapacity(ContinuumError):
    code = 'ZeroCapacity'
    default_message = _('Total capacity is zero')


class TaskNotMapped(ContinuumError):
    code = 'TaskNotMapped'
    default_message = _('Task is not mapped to a node')


class InvalidTopology(ContinuumError):
    code = 'InvalidTopology'
    default_message = _('Invalid topology')


class DisconnectedGraph(InvalidTopology):
    code = 'DisconnectedGraph'
    default_message = _('Graph is not connected')


class CodecError(ContinuumError):
    code = 'CodecError'
    default_message = _('Unknown state code')

