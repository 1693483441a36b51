from .services import FaultService


class IdentityPolicy:
    """Healing policy that does nothing: failures happen, tasks stay put"""

    name = 'identity'

    def heal(self, graph, allocation, scenario, seed=0):
        for t in scenario.times:
            FaultService.apply_failures(graph, scenario, t)
        return allocation
