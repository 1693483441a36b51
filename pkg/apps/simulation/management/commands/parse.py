import json

from django.core.management.base import CommandError

from core.exceptions import HealsimError
from logs.models import Dialect
from logs.services import LogService
from simulation.models import ExitCode
from simulation.services import SimulationService

from ._base import SimulationCommand


class Command(SimulationCommand):
    help = 'Parse one log file into canonical JSONL records'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('path', help='Log file to parse')
        parser.add_argument(
            '--dialect', required=True,
            choices=[value for value in Dialect.values if value != Dialect.SYNTHETIC],
        )
        parser.add_argument('--origin', help='Origin used in record refs; defaults to the file stem')
        parser.add_argument('--base-year', type=int, help='Year for timestamps that carry none')
        parser.add_argument('--out', help='Write records here instead of stdout')

    def handle(self, *args, **options):
        try:
            records, report = SimulationService.parse(
                options['path'], options['dialect'], origin=options['origin'], base_year=options['base_year'],
            )
        except HealsimError as exc:
            raise CommandError(f'{exc.code}: {exc}', returncode=int(ExitCode.INPUT_ERROR))
        text = LogService.to_jsonl(records)
        if options['out']:
            with open(options['out'], 'w', encoding='utf-8') as handle:
                handle.write(text)
        else:
            self.stdout.write(text, ending='')
        self.stderr.write(json.dumps(report.as_dict(), sort_keys=True))
