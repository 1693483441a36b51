import logging

from celery import shared_task

from .services import SimulationService

logger = logging.getLogger(__name__)


@shared_task
def run_simulation(config_path, seed=None, backend=None, out=None):
    """Run a config file in a worker and return the exit code and outcome"""
    result = SimulationService.run_file(config_path, seed=seed, backend=backend, out=out)
    logger.info('run_simulation config=%s exit=%s', config_path, int(result.exit_code))
    return {
        'exit_code': int(result.exit_code),
        'out_dir': str(result.out_dir),
        'healed': list(result.healed),
        'escalated': list(result.escalated),
        'error': result.error,
    }
