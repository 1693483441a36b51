from django.core.management.base import CommandError

from core.exceptions import HealsimError
from simulation.config import ConfigFile
from simulation.exceptions import InvalidConfig
from simulation.models import ExitCode
from simulation.services import SimulationService

from ._base import SimulationCommand


class Command(SimulationCommand):
    help = 'Re-run a config against a recorded reasoner transcript'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--config', required=True, help='Run config (INI)')
        parser.add_argument('--transcript', required=True, help='transcript.jsonl of an earlier run')
        parser.add_argument('--seed', type=int, help='Override [run] seed')
        parser.add_argument('--out', help='Override [run] out')

    def handle(self, *args, **options):
        try:
            config = ConfigFile.override(ConfigFile.load(options['config']), seed=options['seed'], out=options['out'])
        except InvalidConfig as exc:
            raise CommandError(f'{exc.code}: {exc}', returncode=int(ExitCode.CONFIG_ERROR))
        try:
            result = SimulationService.replay(config, options['transcript'])
        except HealsimError as exc:
            raise CommandError(f'{exc.code}: {exc}', returncode=int(ExitCode.INPUT_ERROR))
        if result.exit_code != ExitCode.OK:
            raise CommandError(
                f"{result.error['code']}: {result.error['message']}", returncode=int(result.exit_code),
            )
        self.stdout.write(self.style.SUCCESS(f'replayed out={result.out_dir}'))
