"""Two-bit wire codes for node state and vulnerability.

Both use the same positional ordering: 00, 11, 01, 10.
"""
from django.utils.translation import gettext_lazy as _

from .exceptions import CodecError
from .models import NodeState, Vulnerability

STATE_CODES = {
    NodeState.DOWN: '00',
    NodeState.AVAILABLE: '11',
    NodeState.BUSY: '01',
    NodeState.RECOVERING: '10',
}

VULNERABILITY_CODES = {
    Vulnerability.LOW: '00',
    Vulnerability.MEDIUM: '11',
    Vulnerability.HIGH: '01',
    Vulnerability.CRITICAL: '10',
}

_STATES_BY_CODE = {code: state for state, code in STATE_CODES.items()}
_VULNERABILITIES_BY_CODE = {code: value for value, code in VULNERABILITY_CODES.items()}


def encode_state(state):
    try:
        return STATE_CODES[NodeState(state)]
    except ValueError:
        raise CodecError(_('Unknown node state: {state}').format(state=state))


def decode_state(code):
    try:
        return _STATES_BY_CODE[code]
    except KeyError:
        raise CodecError(_('Unknown state code: {code}').format(code=code))


def encode_vulnerability(value):
    try:
        return VULNERABILITY_CODES[Vulnerability(value)]
    except ValueError:
        raise CodecError(_('Unknown vulnerability: {value}').format(value=value))


def decode_vulnerability(code):
    try:
        return _VULNERABILITIES_BY_CODE[code]
    except KeyError:
        raise CodecError(_('Unknown vulnerability code: {code}').format(code=code))
