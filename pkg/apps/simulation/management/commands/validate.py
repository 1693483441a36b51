from django.core.management.base import CommandError

from simulation.models import ExitCode
from simulation.services import SimulationService

from ._base import SimulationCommand


class Command(SimulationCommand):
    help = 'Check a run config and its inputs without running, then print the effective config'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--config', required=True, help='Run config (INI)')

    def handle(self, *args, **options):
        config, findings = SimulationService.validate(options['config'])
        for finding in findings:
            self.stdout.write(str(finding))
        if config is not None:
            self.stdout.write(config.text)
        if findings:
            code = ExitCode.CONFIG_ERROR if config is None else ExitCode.INPUT_ERROR
            raise CommandError(f'{len(findings)} finding(s)', returncode=int(code))
        self.stdout.write(self.style.SUCCESS('0 findings'))
