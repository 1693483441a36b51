from django.utils.translation import gettext_lazy as _

from core.exceptions import HealsimError


class ReasonerError(HealsimError):
    code = 'ReasonerError'


class ReasonerUnavailable(ReasonerError):
    code = 'ReasonerUnavailable'
    default_message = _('Reasoner backend did not return a usable answer')


class SchemaViolation(ReasonerError):
    code = 'SchemaViolation'
    default_message = _('Reasoner payload or response does not match its schema')


class BudgetExceeded(ReasonerError):
    code = 'BudgetExceeded'
    default_message = _('Reasoner call exceeded its budget')


class EvaluatorUnavailable(ReasonerUnavailable):
    code = 'EvaluatorUnavailable'
    default_message = _('Hypothesis evaluator is unavailable')


class EmbedderUnavailable(ReasonerUnavailable):
    code = 'EmbedderUnavailable'
    default_message = _('Embedder is unavailable')


class ReplayMismatch(ReasonerError):
    code = 'ReplayMismatch'
    default_message = _('Request does not match the recorded transcript')
