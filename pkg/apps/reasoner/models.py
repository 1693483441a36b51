from django.db import models
from django.utils.translation import gettext_lazy as _


class RequestKind(models.TextChoices):
    EXTRACT = 'Extract', _('Extract entities')
    RELATION = 'Relation', _('Causal relation')
    HYPOTHESIZE = 'Hypothesize', _('Hypothesize')
    EVALUATE = 'Evaluate', _('Evaluate hypothesis')
    EMBED = 'Embed', _('Embed text')


class EmbedKind(models.TextChoices):
    TOPIC = 'Topic', _('Topic')
    REASON = 'Reason', _('Reason')


class BackendName(models.TextChoices):
    SCRIPTED = 'scripted', _('Scripted rules')
    REPLAY = 'replay', _('Transcript replay')
    REMOTE = 'remote', _('Remote HTTP')


class Wire(models.TextChoices):
    NATIVE = 'native', _('Native JSON document')
    CHAT = 'chat', _('Chat completion adapter')


# Variable kinds an extraction may report.
ENTITY_KINDS = ('Event', 'Metric', 'StateTransition', 'ResourceIndicator', 'ErrorCode')

VERDICTS = ('Harmful', 'Rejected', 'Accepted', 'Best')
