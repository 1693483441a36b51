from django.utils.translation import gettext_lazy as _

from core.exceptions import ConfigurationError, HealsimError


class SimulationError(HealsimError):
    code = 'SimulationError'


class InvalidConfig(ConfigurationError):
    code = 'InvalidConfig'
    default_message = _('Configuration file is invalid')


class MissingInput(SimulationError):
    code = 'MissingInput'
    default_message = _('An input file does not exist')


class PipelineFailure(SimulationError):
    code = 'PipelineFailure'
    default_message = _('The healing pipeline failed')
