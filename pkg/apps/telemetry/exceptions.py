from django.utils.translation import gettext_lazy as _

from core.exceptions import HealsimError


class TelemetryError(HealsimError):
    code = 'TelemetryError'


class EmptyScope(TelemetryError):
    code = 'EmptyScope'
    default_message = _('No verdicts were recorded for this scope')


class SamplerUnavailable(TelemetryError):
    code = 'SamplerUnavailable'
    default_message = _('CPU sampling is not supported on this host')


class MalformedMetrics(TelemetryError):
    code = 'MalformedMetrics'
    default_message = _('Metrics file cannot be read')
