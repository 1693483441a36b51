from django.dispatch import receiver

from core.signals import layer_event

from .services import TelemetryService


@receiver(layer_event)
def record_layer_event(sender, stream, time, layer, kind, node='', payload=None, **kwargs):
    """Append every layer event to the stream it was emitted for"""
    TelemetryService.record_event(stream, time, layer, kind, node, payload or {})
