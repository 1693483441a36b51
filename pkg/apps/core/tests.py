import json

from django.test import SimpleTestCase, override_settings

from telemetry.models import EventStream

from .conf import healsim_settings, section
from .exceptions import HealsimError, InvalidParameter
from .models import OperationCounters, SimClock
from .signals import emit, layer_event


class OperationCountersTest(SimpleTestCase):
    """Test cases for OperationCounters"""

    def setUp(self):
        self.counters = OperationCounters()

    def test_bump_and_get(self):
        """Test bumping a counter by one and by an amount"""
        self.counters.bump('reasoner.calls')
        self.counters.bump('reasoner.calls', 4)
        self.assertEqual(self.counters.get('reasoner.calls'), 5)
        self.assertEqual(self.counters['reasoner.calls'], 5)
        self.assertEqual(self.counters.get('missing'), 0)

    def test_snapshot_and_reset_by_prefix(self):
        """Test that snapshot and reset only touch the given prefix"""
        self.counters.bump('knowledge.comparisons', 3)
        self.counters.bump('containment.messages', 2)
        self.assertEqual(self.counters.snapshot('knowledge.'), {'knowledge.comparisons': 3})
        self.counters.reset('knowledge.')
        self.assertEqual(self.counters.snapshot(), {'containment.messages': 2})


class SimClockTest(SimpleTestCase):
    """Test cases for SimClock"""

    def test_advance(self):
        """Test advancing the clock"""
        clock = SimClock()
        self.assertEqual(clock.advance(1.5), 1.5)
        self.assertEqual(clock.advance(0), 1.5)

    def test_negative_advance_rejected(self):
        """Test that the clock cannot move backwards"""
        with self.assertRaises(InvalidParameter):
            SimClock().advance(-1)

    def test_set_only_moves_forward(self):
        """Test that set ignores earlier moments"""
        clock = SimClock(now=10.0)
        self.assertEqual(clock.set(5.0), 10.0)
        self.assertEqual(clock.set(12.0), 12.0)


class HealsimErrorTest(SimpleTestCase):
    """Test cases for the base error"""

    def test_default_message(self):
        """Test that an error without a message uses the class default"""
        self.assertEqual(str(InvalidParameter()), 'Invalid parameter')

    def test_report_is_json_friendly(self):
        """Test that context values of any type survive json.dumps"""
        error = HealsimError('boom', nodes={'b', 'a'}, limit=3, detail=object)
        report = error.as_report()
        self.assertEqual(report['code'], 'HealsimError')
        self.assertEqual(report['message'], 'boom')
        self.assertEqual(report['context']['nodes'], ['a', 'b'])
        json.dumps(report)


class ConfTest(SimpleTestCase):
    """Test cases for settings access"""

    def test_section_is_case_insensitive(self):
        """Test reading a section by lower-case name"""
        self.assertEqual(section('knowledge')['THETA_TOPIC'], 0.75)

    def test_settings_are_copied(self):
        """Test that callers cannot mutate the settings through the returned dict"""
        copy = healsim_settings()
        copy['KNOWLEDGE']['THETA_TOPIC'] = 0.1
        self.assertEqual(section('KNOWLEDGE')['THETA_TOPIC'], 0.75)

    @override_settings(HEALSIM={})
    def test_missing_section(self):
        """Test that an absent section reads as empty"""
        self.assertEqual(section('LOGS'), {})


class LayerEventTest(SimpleTestCase):
    """Test cases for the layer event signal"""

    def test_emit_appends_to_stream(self):
        """Test that an emitted event lands in the attached stream"""
        stream = EventStream()
        emit(stream, 2.0, 'containment', 'flag', 'N1', timed_out=True)
        event = stream.snapshot()[0]
        self.assertEqual((event.time, event.layer, event.kind, event.node), (2.0, 'containment', 'flag', 'N1'))
        self.assertEqual(event.payload, {'timed_out': True})

    def test_emit_without_stream_sends_nothing(self):
        """Test that no signal is sent when no stream is attached"""
        received = []

        def receiver(**kwargs):
            received.append(kwargs)

        layer_event.connect(receiver)
        try:
            emit(None, 0.0, 'diagnosis', 'diagnosed', 'N1')
        finally:
            layer_event.disconnect(receiver)
        self.assertEqual(received, [])
