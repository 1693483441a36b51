from django.utils.translation import gettext_lazy as _

from core.exceptions import HealsimError


class LogError(HealsimError):
    code = 'LogError'


class MalformedHeader(LogError):
    code = 'MalformedHeader'
    default_message = _('CSV header is missing required columns')


class MalformedRow(LogError):
    code = 'MalformedRow'
    default_message = _('CSV row cannot be read')


class UnknownDialect(LogError):
    code = 'UnknownDialect'
    default_message = _('Unknown log dialect')
