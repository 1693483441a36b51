from django.utils.translation import gettext_lazy as _
from rest_framework import serializers

from continuum.topology import format_number
from core.exceptions import HealsimError
from logs.models import Dialect
from metacognition.models import Thresholds, check_weights
from reasoner.models import BackendName, Wire
from telemetry.models import CpuMode


class WeightsField(serializers.Field):
    """Comma separated Γ weights, e.g. ``0.4,0.35,0.25``"""

    default_error_messages = {
        'invalid': _('Weights must be three comma separated numbers.'),
    }

    def to_internal_value(self, data):
        if isinstance(data, str):
            data = [part for part in data.split(',') if part.strip()]
        try:
            return tuple(float(value) for value in data)
        except (TypeError, ValueError):
            self.fail('invalid')

    def to_representation(self, value):
        return ','.join(format_number(weight) for weight in value)


class RunSerializer(serializers.Serializer):
    """Run section serializer"""
    topology = serializers.CharField()
    scenario = serializers.CharField()
    seed = serializers.IntegerField(min_value=0)
    backend = serializers.ChoiceField(choices=BackendName.choices)
    out = serializers.CharField()
    transcript = serializers.CharField(required=False, allow_blank=True)

    def validate(self, attrs):
        if attrs.get('backend') == BackendName.REPLAY and not attrs.get('transcript'):
            raise serializers.ValidationError(_('The replay backend needs a transcript path.'), code='MissingInput')
        return attrs


class ContinuumSerializer(serializers.Serializer):
    """Continuum section serializer"""
    alpha = serializers.FloatField(min_value=0.0, max_value=1.0)
    bandwidth_floor = serializers.FloatField(min_value=0.0)
    busy_accepts = serializers.BooleanField()


class ContainmentSerializer(serializers.Serializer):
    """Containment section serializer"""
    k = serializers.IntegerField(min_value=1)
    probe_interval = serializers.FloatField(min_value=0.0)
    timeout = serializers.FloatField(min_value=0.0, allow_null=True)
    timeout_factor = serializers.FloatField(min_value=0.0)
    candidate_limit = serializers.IntegerField(min_value=1)

    def validate_probe_interval(self, value):
        if value <= 0:
            raise serializers.ValidationError(_('Probe interval must be positive.'))
        return value


class LogsSerializer(serializers.Serializer):
    """Logs section serializer"""
    delta_d = serializers.FloatField()
    base_year = serializers.IntegerField(min_value=1970)

    def validate_delta_d(self, value):
        if value <= 0:
            raise serializers.ValidationError(_('delta_d must be positive.'))
        return value


class MetacognitionSerializer(serializers.Serializer):
    """Metacognition section serializer"""
    weights = WeightsField()
    theta_pro = serializers.FloatField()
    theta_acc = serializers.FloatField()
    theta_inh = serializers.FloatField()
    r_max = serializers.IntegerField(min_value=1)
    proliferation_batch = serializers.IntegerField(min_value=1)
    agent_cap = serializers.IntegerField(min_value=1)
    max_depth = serializers.IntegerField(min_value=1)
    path_cap = serializers.IntegerField(min_value=1)
    persist_supporting = serializers.BooleanField()

    def validate(self, attrs):
        try:
            Thresholds(attrs['theta_pro'], attrs['theta_acc'], attrs['theta_inh'])
        except HealsimError as exc:
            raise serializers.ValidationError(str(exc), code=exc.code)
        try:
            check_weights(attrs['weights'])
        except HealsimError as exc:
            raise serializers.ValidationError(str(exc), code=exc.code)
        return attrs


class KnowledgeSerializer(serializers.Serializer):
    """Knowledge section serializer"""
    theta_topic = serializers.FloatField(min_value=0.0, max_value=1.0)
    theta_reason = serializers.FloatField(min_value=0.0, max_value=1.0)
    theta_merge = serializers.FloatField(min_value=0.0, max_value=1.0)
    theta_split = serializers.FloatField(min_value=0.0, max_value=1.0)
    dimension = serializers.IntegerField(min_value=1)


class ReasonerSerializer(serializers.Serializer):
    """Reasoner section serializer; the backend itself is chosen in [run]"""
    endpoint = serializers.CharField(allow_blank=True)
    wire = serializers.ChoiceField(choices=Wire.choices)
    model = serializers.CharField(allow_blank=True)
    token_env = serializers.CharField()
    timeout = serializers.FloatField(min_value=0.0)
    retries = serializers.IntegerField(min_value=0)
    max_tokens = serializers.IntegerField(min_value=1)
    synthetic_latency = serializers.FloatField(min_value=0.0)


class TelemetrySerializer(serializers.Serializer):
    """Telemetry section serializer"""
    cpu_mode = serializers.ChoiceField(choices=CpuMode.choices)
    cpu_interval = serializers.FloatField(min_value=0.0)
    unit_cost = serializers.FloatField(min_value=0.0)


class DatasetSerializer(serializers.Serializer):
    """One ``[dataset:<name>]`` section"""
    path = serializers.CharField()
    dialect = serializers.ChoiceField(choices=[choice for choice in Dialect.choices if choice[0] != Dialect.SYNTHETIC])
    origin = serializers.CharField(required=False, allow_blank=True)
    base_year = serializers.IntegerField(required=False, min_value=1970)
    anchor = serializers.FloatField(required=False, allow_null=True)


SECTION_SERIALIZERS = {
    'run': RunSerializer,
    'continuum': ContinuumSerializer,
    'containment': ContainmentSerializer,
    'logs': LogsSerializer,
    'metacognition': MetacognitionSerializer,
    'knowledge': KnowledgeSerializer,
    'reasoner': ReasonerSerializer,
    'telemetry': TelemetrySerializer,
}
