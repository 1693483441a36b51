from django.core.management.base import CommandError

from simulation.models import ExitCode
from simulation.services import SimulationService

from ._base import SimulationCommand


class Command(SimulationCommand):
    help = 'Run the healing pipeline for one config and write every output under --out'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--config', required=True, help='Run config (INI)')
        parser.add_argument('--seed', type=int, help='Override [run] seed')
        parser.add_argument('--backend', choices=['scripted', 'replay', 'remote'], help='Override [run] backend')
        parser.add_argument('--out', help='Override [run] out')

    def handle(self, *args, **options):
        result = SimulationService.run_file(
            options['config'], seed=options['seed'], backend=options['backend'], out=options['out'],
        )
        if result.exit_code != ExitCode.OK:
            raise CommandError(
                f"{result.error['code']}: {result.error['message']} (see {result.out_dir / 'error.json'})",
                returncode=int(result.exit_code),
            )
        self.stdout.write(self.style.SUCCESS(
            f'healed={len(result.healed)} escalated={len(result.escalated)} out={result.out_dir}'
        ))
