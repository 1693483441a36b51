from django.utils.translation import gettext_lazy as _


class HealsimError(Exception):
    """Base class for every error raised by the simulator.

    ``code`` is a stable identifier used in machine-readable reports.
    Extra keyword arguments are kept as context for those reports.
    """

    code = 'HealsimError'
    default_message = _('Simulator error')

    def __init__(self, message=None, **context):
        self.context = context
        super().__init__(str(message if message is not None else self.default_message))

    def as_report(self):
        """Return a JSON-friendly description of the error"""
        return {
            'code': self.code,
            'message': str(self),
            'context': {key: _plain(value) for key, value in sorted(self.context.items())},
        }


class InvalidParameter(HealsimError):
    code = 'InvalidParameter'
    default_message = _('Invalid parameter')


class ConfigurationError(HealsimError):
    code = 'ConfigurationError'
    default_message = _('Invalid configuration')


def _plain(value):
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    if isinstance(value, (list, tuple, set, frozenset)):
        items = [_plain(item) for item in value]
        return sorted(items, key=str) if isinstance(value, (set, frozenset)) else items
    if isinstance(value, dict):
        return {str(key): _plain(item) for key, item in value.items()}
    return str(value)
