from django.dispatch import Signal

# Sent by every layer when something observable happens. Receivers get
# ``stream`` plus the event fields: time, layer, kind, node, payload.
layer_event = Signal()


def emit(stream, time, layer, kind, node='', **payload):
    """Send a layer event if a telemetry stream is attached"""
    if stream is None:
        return
    layer_event.send(
        sender=layer,
        stream=stream,
        time=time,
        layer=layer,
        kind=kind,
        node=node,
        payload=payload,
    )
