from django.utils.translation import gettext_lazy as _

from core.exceptions import HealsimError


class DiagnosisError(HealsimError):
    code = 'DiagnosisError'


class InvalidDiagnosisGraph(DiagnosisError):
    code = 'InvalidDiagnosisGraph'
    default_message = _('Invalid diagnosis graph')
