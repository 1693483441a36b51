"""Rule tables behind the scripted backend.

Entity rules map a log line (or a metrics row) to one diagnostic entity;
causal pairs say which entity leads to which; solutions name the
corrective action for a root entity.
"""
import hashlib
import math
import re
from dataclasses import dataclass

import numpy as np

from logs.models import UNHEALTHY, Dialect

EVENT = 'Event'
METRIC = 'Metric'
STATE_TRANSITION = 'StateTransition'
RESOURCE_INDICATOR = 'ResourceIndicator'
ERROR_CODE = 'ErrorCode'


@dataclass(frozen=True)
class TextRule:
    pattern: re.Pattern
    kind: str
    label: str

    def matches(self, record):
        return bool(self.pattern.search(record.text))


@dataclass(frozen=True)
class ThresholdRule:
    """Fires when a numeric CSV column crosses ``limit``"""

    column: str
    above: bool
    limit: float
    kind: str
    label: str

    def matches(self, record):
        try:
            value = float(record.fields[self.column])
        except (KeyError, ValueError):
            return False
        if not math.isfinite(value):
            return False
        return value > self.limit if self.above else value < self.limit


@dataclass(frozen=True)
class FlagRule:
    flag: str
    kind: str
    label: str

    def matches(self, record):
        return self.flag in record.flags


def _rule(pattern, kind, label):
    return TextRule(re.compile(pattern, re.IGNORECASE), kind, label)


ZOOKEEPER_RULES = (
    _rule(r'connection refused', ERROR_CODE, 'connection refused'),
    _rule(r'connection broken', EVENT, 'connection broken'),
    _rule(r'send worker leaving thread|interrupted while waiting for message', EVENT, 'send worker interrupted'),
    _rule(r'new election|leader election|\bLOOKING\b', STATE_TRANSITION, 'leader election'),
    _rule(r'end ?of ?stream', EVENT, 'end of stream'),
    _rule(r'closed socket connection for client|session closed', STATE_TRANSITION, 'session closed'),
    _rule(r'expiring session|session expired', STATE_TRANSITION, 'session expired'),
    _rule(r'timed out|sockettimeoutexception|connection timeout', EVENT, 'connection timeout'),
)

HADOOP_RULES = (
    _rule(r'no space left|disk full|diskerrorexception', RESOURCE_INDICATOR, 'disk full'),
    _rule(r'createblockoutputstream|bad datanode|datastreamer exception|block write failed', ERROR_CODE, 'block write failed'),
    _rule(r'no route to host', ERROR_CODE, 'no route to host'),
    _rule(r'retrying connect to server|connection retry', EVENT, 'connection retry'),
    _rule(r'(?:task ?attempt|attempt_)\S*.*fail', STATE_TRANSITION, 'task attempt failed'),
    _rule(r'container killed|killing container', STATE_TRANSITION, 'container killed'),
    _rule(r'shuffle\S*.*fail|fetch failure|failed to fetch', ERROR_CODE, 'shuffle fetch failure'),
)

OPENSSH_RULES = (
    _rule(r'reverse mapping checking .* failed|possible break-in attempt', EVENT, 'reverse mapping failed'),
    _rule(r'invalid user', EVENT, 'invalid user'),
    _rule(r'failed password', ERROR_CODE, 'failed password'),
    _rule(r'authentication failure(?!s)', EVENT, 'authentication failure'),
    _rule(r'too many authentication failures|maximum authentication attempts exceeded', EVENT, 'too many authentication failures'),
    _rule(r'(?:connection closed|received disconnect).*\[preauth\]', STATE_TRANSITION, 'connection closed preauth'),
)

BGL_RULES = (
    _rule(r'parity error', ERROR_CODE, 'cache parity error'),
    _rule(r'machine check', EVENT, 'machine check'),
    _rule(r'kernel panic|\bpanic\b', STATE_TRANSITION, 'kernel panic'),
    _rule(r'kernel terminated|terminated for reason', STATE_TRANSITION, 'kernel terminated'),
    _rule(r'tlb error', ERROR_CODE, 'tlb error'),
    _rule(r'core dump|generating core', EVENT, 'core dump'),
)

CLOUD_STATELESS_RULES = (
    ThresholdRule('cpu_usage', True, 90.0, RESOURCE_INDICATOR, 'cpu saturation'),
    ThresholdRule('memory_usage', True, 90.0, RESOURCE_INDICATOR, 'memory pressure'),
    ThresholdRule('response_time', True, 1000.0, METRIC, 'response time degradation'),
    ThresholdRule('tps', False, 10.0, METRIC, 'throughput drop'),
    FlagRule(UNHEALTHY, STATE_TRANSITION, 'service unhealthy'),
)

SYNTHETIC_RULES = (
    _rule(r'memory exhausted|out of memory', RESOURCE_INDICATOR, 'memory exhausted'),
    _rule(r'process .*aborted', EVENT, 'process aborted'),
    _rule(r'\bcrashed\b', STATE_TRANSITION, 'node crashed'),
    _rule(r'lost carrier|link lost', EVENT, 'link lost'),
    _rule(r'timed out', EVENT, 'connection timeout'),
    _rule(r'partitioned', STATE_TRANSITION, 'node partitioned'),
    _rule(r'no space left', RESOURCE_INDICATOR, 'disk full'),
    _rule(r'write failed', ERROR_CODE, 'write failed'),
    _rule(r'read-only', STATE_TRANSITION, 'storage read-only'),
) + OPENSSH_RULES[3:]

ENTITY_RULES = {
    Dialect.ZOOKEEPER: ZOOKEEPER_RULES,
    Dialect.HADOOP: HADOOP_RULES,
    Dialect.OPENSSH: OPENSSH_RULES,
    Dialect.BGL: BGL_RULES,
    Dialect.CLOUD_STATELESS: CLOUD_STATELESS_RULES,
    Dialect.SYNTHETIC: SYNTHETIC_RULES,
}


def _chain(*labels):
    return tuple(zip(labels, labels[1:]))


CAUSAL_PAIRS = frozenset(
    _chain('connection refused', 'connection broken', 'send worker interrupted', 'leader election')
    + _chain('end of stream', 'session closed', 'session expired')
    + _chain('connection timeout', 'session expired')
    + _chain('disk full', 'block write failed', 'task attempt failed', 'container killed')
    + _chain('no route to host', 'connection retry', 'task attempt failed')
    + _chain('shuffle fetch failure', 'task attempt failed')
    + _chain('reverse mapping failed', 'invalid user', 'failed password',
             'too many authentication failures', 'connection closed preauth')
    + _chain('authentication failure', 'too many authentication failures')
    + _chain('cache parity error', 'machine check', 'kernel panic', 'kernel terminated')
    + _chain('tlb error', 'core dump', 'kernel terminated')
    + _chain('cpu saturation', 'response time degradation', 'service unhealthy')
    + _chain('memory pressure', 'response time degradation')
    + _chain('cpu saturation', 'throughput drop')
    + _chain('memory exhausted', 'process aborted', 'node crashed')
    + _chain('link lost', 'connection timeout', 'node partitioned')
    + _chain('disk full', 'write failed', 'storage read-only')
)

# Any resource or metric entity may precede a state transition.
GENERIC_SOURCES = (RESOURCE_INDICATOR, METRIC)
GENERIC_CONFIDENCE = 0.75

SOLUTIONS = {
    'connection refused': 'restart the refusing server process and let the ensemble re-elect a leader',
    'end of stream': 'reconnect the client session and check that the server accepts connections',
    'connection timeout': 'raise the client timeout and restore connectivity to the peer',
    'disk full': 'free space on the full volume by rotating logs, then remount it read-write',
    'no route to host': 'restore the route to the unreachable host and rerun the failed task',
    'shuffle fetch failure': 'restart the node manager serving map outputs and rerun the reducer',
    'reverse mapping failed': 'block the offending source address and review the exposed accounts',
    'invalid user': 'block the offending source address and review the exposed accounts',
    'authentication failure': 'block the offending source address and rotate the exposed credentials',
    'cache parity error': 'drain the node, replace the faulty memory module and rerun diagnostics',
    'machine check': 'drain the node and run hardware diagnostics before returning it to service',
    'tlb error': 'drain the node and update the processor microcode',
    'cpu saturation': 'scale out the service and shed load from the saturated instance',
    'memory pressure': 'raise the memory limit and restart the leaking instance',
    'memory exhausted': 'restart the failed service with a raised memory limit and rebalance its tasks',
    'link lost': 'reroute traffic over a redundant link and restore the failed interface',
}

GENERIC_SOLUTION = 'inspect {label} on {node} and restart the affected service'

RISKY_WORDS = ('wipe', 'format', 'delete all', 'disable monitoring', 'kill -9', 'reboot all')

TOKEN = re.compile(r'[a-z0-9]+')


def tokens(text):
    """Lowercase alphanumeric tokens; a text without any is one token"""
    text = text.lower()
    found = TOKEN.findall(text)
    return found or [text.strip()]


def token_bin(token, dimension):
    digest = hashlib.blake2b(token.encode('utf-8'), digest_size=8).digest()
    return int.from_bytes(digest, 'big') % dimension


def hash_embedding(text, dimension=256):
    """Bag-of-token count vector hashed into ``dimension`` bins, unit length"""
    vector = np.zeros(dimension, dtype=float)
    for token in tokens(text):
        vector[token_bin(token, dimension)] += 1.0
    norm = np.linalg.norm(vector)
    if norm == 0:
        vector[0] = 1.0
        return vector
    return vector / norm


class RuleBook:
    """The scripted reasoner's knowledge, bundled so tests can swap it"""

    def __init__(self, entity_rules=None, pairs=None, solutions=None, risky_words=RISKY_WORDS):
        self.entity_rules = ENTITY_RULES if entity_rules is None else entity_rules
        self.pairs = CAUSAL_PAIRS if pairs is None else frozenset(pairs)
        self.solutions = SOLUTIONS if solutions is None else dict(solutions)
        self.risky_words = tuple(risky_words)

    def rules_for(self, dialect):
        return self.entity_rules.get(dialect, SYNTHETIC_RULES)

    def relation(self, src, dst):
        """(related, confidence, rationale) for the ordered pair"""
        if (src.label, dst.label) in self.pairs:
            return 1, 1.0, f'rule: {src.label} leads to {dst.label}'
        if src.kind in GENERIC_SOURCES and dst.kind == STATE_TRANSITION:
            return 1, GENERIC_CONFIDENCE, f'rule: {src.kind} precedes {dst.kind}'
        return 0, 0.0, 'no rule'

    def solution_for(self, labels, node):
        for label in labels:
            if label in self.solutions:
                return self.solutions[label]
        return GENERIC_SOLUTION.format(label=labels[-1], node=node)

    def is_specific(self, solution):
        return solution in self.solutions.values()

    def is_risky(self, solution):
        lowered = solution.lower()
        return any(word in lowered for word in self.risky_words)
