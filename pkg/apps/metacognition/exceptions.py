from django.utils.translation import gettext_lazy as _

from core.exceptions import HealsimError


class MetacognitionError(HealsimError):
    code = 'MetacognitionError'


class PathExplosion(MetacognitionError):
    """More root-to-sink paths than the cap; ``paths`` holds the truncated list"""

    code = 'PathExplosion'
    default_message = _('Too many reasoning paths')

    def __init__(self, message=None, paths=None, **context):
        self.paths = paths
        super().__init__(message, **context)


class EmptyNarrative(MetacognitionError):
    code = 'EmptyNarrative'
    default_message = _('Hypothesis has no supporting evidence or text')


class BadThresholds(MetacognitionError):
    code = 'BadThresholds'
    default_message = _('Thresholds must satisfy 0 <= pro <= acc < inh <= 1')


class InvalidWeights(MetacognitionError):
    code = 'InvalidWeights'
    default_message = _('Weights must be non-negative and sum to 1')


class CapReached(MetacognitionError):
    code = 'CapReached'
    default_message = _('Micro-agent cap reached')


class NoBestHypothesis(MetacognitionError):
    """No hypothesis reached the inhibition threshold; ``outcome`` is the partial result"""

    code = 'NoBestHypothesis'
    default_message = _('No hypothesis was good enough to heal the node')

    def __init__(self, message=None, outcome=None, **context):
        self.outcome = outcome
        super().__init__(message, **context)
