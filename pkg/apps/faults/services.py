import logging

from django.utils.translation import gettext_lazy as _

from continuum.exceptions import NodeNotFound
from continuum.models import NodeState
from core.exceptions import InvalidParameter
from logs.models import Dialect, LogRecord

from .exceptions import AuditMismatch, IllegalTransition, UnknownNode
from .templates import FAILURE_LOG_TEMPLATES

logger = logging.getLogger(__name__)

# Causes recorded in the audit trail when a node goes down.
FAILURE_CAUSE = 'failure'
SUSPECTED_CAUSE = 'suspected'


class FaultService:
    """Service for injecting failures and moving nodes through their states"""

    TRANSITIONS = frozenset({
        (NodeState.DOWN, NodeState.RECOVERING),
        (NodeState.RECOVERING, NodeState.AVAILABLE),
        (NodeState.AVAILABLE, NodeState.BUSY),
        (NodeState.BUSY, NodeState.AVAILABLE),
    })

    @staticmethod
    def validate_scenario(graph, scenario):
        for event in scenario.events:
            if event.node not in graph.nodes:
                raise UnknownNode(
                    _('Scenario {scenario} refers to unknown node {node}').format(scenario=scenario.id, node=event.node),
                    scenario=scenario.id, node=event.node,
                )

    @staticmethod
    def apply_failures(graph, scenario, t):
        """Bring down every node whose failure event is due and return F(t).

        Each event is applied once; a node that has since completed its
        recovery is not failed again by the same event.
        """
        if t < 0:
            raise InvalidParameter(_('Time must be non-negative'), t=t)
        FaultService.validate_scenario(graph, scenario)
        for index, event in enumerate(scenario.events):
            if event.time > t:
                break
            key = (scenario.id, index)
            if key in graph.applied_failures:
                continue
            graph.applied_failures.add(key)
            FaultService.mark_down(graph, event.node, event.time, cause=f'{FAILURE_CAUSE}:{event.kind.value}')
            logger.info('failure_applied scenario=%s node=%s kind=%s time=%s', scenario.id, event.node, event.kind, event.time)
        return FaultService.failed_nodes(graph, scenario, t)

    @staticmethod
    def failed_nodes(graph, scenario, t):
        return frozenset(
            event.node for event in scenario.events
            if event.time <= t and not FaultService.recovered(graph, event.node)
        )

    @staticmethod
    def recovered(graph, node_id):
        """True if the node finished a recovery after its latest failure"""
        for change in reversed(graph.history):
            if change.node != node_id:
                continue
            if change.previous == NodeState.RECOVERING and change.current == NodeState.AVAILABLE:
                return True
            if change.current == NodeState.DOWN:
                return False
        return False

    @staticmethod
    def mark_down(graph, node_id, t, cause=FAILURE_CAUSE):
        """Set a node Down; allowed from any state"""
        try:
            return graph.set_state(node_id, NodeState.DOWN, time=t, cause=cause)
        except NodeNotFound:
            raise UnknownNode(_('Unknown node: {node}').format(node=node_id), node=node_id)

    @staticmethod
    def transition_state(graph, node_id, to, time=None, cause='transition'):
        """Move a node along an allowed transition and return its prior state"""
        node = graph.node(node_id)
        to = NodeState(to)
        if (node.state, to) not in FaultService.TRANSITIONS:
            raise IllegalTransition(
                _('Illegal transition for {node}: {src} to {dst}').format(node=node_id, src=node.state.value, dst=to.value),
                node=node_id, previous=node.state.value, to=to.value,
            )
        return graph.set_state(node_id, to, time=time, cause=cause)

    @staticmethod
    def replay_audit(initial_states, history):
        """Rebuild final node states from initial states and the audit trail"""
        states = {node: NodeState(state) for node, state in initial_states.items()}
        for change in history:
            if states.get(change.node) != change.previous:
                raise AuditMismatch(
                    _('Node {node} was {state}, trail says {expected}').format(
                        node=change.node, state=states.get(change.node), expected=change.previous,
                    ),
                    node=change.node,
                )
            states[change.node] = NodeState(change.current)
        return states

    @staticmethod
    def synthesize_logs(event, spacing=1.0):
        """Template log lines leading up to a failure, ending at the event time"""
        templates = FAILURE_LOG_TEMPLATES[event.kind]
        records = []
        count = len(templates)
        for index, (source, severity, text) in enumerate(templates):
            records.append(LogRecord(
                timestamp=event.time - spacing * (count - 1 - index),
                source=source,
                text=text.format(node=event.node),
                ref=f'synthetic-{event.node}-{event.kind.value}:{index + 1}',
                dialect=Dialect.SYNTHETIC,
                node_hint=event.node,
                severity=severity,
            ))
        return records
