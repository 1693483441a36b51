import logging

from django.core.management.base import BaseCommand


class SimulationCommand(BaseCommand):
    """Shared ``--quiet`` handling for the simulator commands"""

    def add_arguments(self, parser):
        parser.add_argument('--quiet', action='store_true', help='Only log warnings and errors')

    def execute(self, *args, **options):
        if options.get('quiet'):
            logging.getLogger().setLevel(logging.WARNING)
        return super().execute(*args, **options)
