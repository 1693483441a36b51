from django.utils.translation import gettext_lazy as _

from core.exceptions import HealsimError


class FaultError(HealsimError):
    code = 'FaultError'


class UnknownNode(FaultError):
    code = 'UnknownNode'
    default_message = _('Scenario refers to an unknown node')


class IllegalTransition(FaultError):
    code = 'IllegalTransition'
    default_message = _('State transition is not allowed')


class AuditMismatch(FaultError):
    code = 'AuditMismatch'
    default_message = _('Audit trail does not match the replayed states')


class InvalidScenario(FaultError):
    code = 'InvalidScenario'
    default_message = _('Invalid scenario')
