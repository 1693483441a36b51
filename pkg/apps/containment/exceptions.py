from django.utils.translation import gettext_lazy as _

from core.exceptions import HealsimError


class ContainmentError(HealsimError):
    code = 'ContainmentError'


class AgentOffline(ContainmentError):
    code = 'AgentOffline'
    default_message = _('Monitoring agent home node is down')


class NoCapacity(ContainmentError):
    """Accepted neighbours cannot host every task; ``plug`` is the partial plug"""

    code = 'NoCapacity'
    default_message = _('Neighbours cannot cover the failed node tasks')

    def __init__(self, message=None, plug=None, **context):
        self.plug = plug
        super().__init__(message, **context)


class ConstraintBreach(ContainmentError):
    """Some reroute rules were rejected; ``allocation`` has the others applied"""

    code = 'ConstraintBreach'
    default_message = _('Reroute rule violates a placement constraint')

    def __init__(self, message=None, allocation=None, rejected=(), **context):
        self.allocation = allocation
        self.rejected = list(rejected)
        super().__init__(message, **context)
