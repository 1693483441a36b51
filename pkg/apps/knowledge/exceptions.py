from django.utils.translation import gettext_lazy as _

from core.exceptions import HealsimError


class KnowledgeError(HealsimError):
    code = 'KnowledgeError'


class DimensionMismatch(KnowledgeError):
    code = 'DimensionMismatch'
    default_message = _('Vectors have different dimensions')


class UnknownTopic(KnowledgeError):
    code = 'UnknownTopic'
    default_message = _('Topic does not exist')


class UnknownPartition(KnowledgeError):
    code = 'UnknownPartition'
    default_message = _('Partition does not exist')


class InvariantViolation(KnowledgeError):
    code = 'InvariantViolation'
    default_message = _('Knowledge store invariant does not hold')


class MalformedSnapshot(KnowledgeError):
    code = 'MalformedSnapshot'
    default_message = _('Snapshot or journal cannot be read')
