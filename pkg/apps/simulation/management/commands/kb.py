import json
from pathlib import Path

from django.core.management.base import CommandError

from core.exceptions import HealsimError
from knowledge import snapshot
from knowledge.models import StoreScope
from knowledge.services import KnowledgeService
from simulation.models import ExitCode

from ._base import SimulationCommand


def _load(path):
    try:
        return snapshot.loads(Path(path).read_text(encoding='utf-8'))
    except OSError as exc:
        raise CommandError(f'MissingInput: {exc}', returncode=int(ExitCode.INPUT_ERROR))


class Command(SimulationCommand):
    help = 'Inspect a knowledge snapshot or merge local snapshots into a global one'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        actions = parser.add_subparsers(dest='action', required=True)
        inspect = actions.add_parser('inspect', help='Summarize topics and partitions')
        inspect.add_argument('snapshot')
        merge = actions.add_parser('merge', help='Sync local snapshots into a global snapshot')
        merge.add_argument('global_snapshot')
        merge.add_argument('local_snapshots', nargs='+')
        merge.add_argument('--out', required=True, help='Where to write the merged global snapshot')

    def handle(self, *args, **options):
        try:
            if options['action'] == 'inspect':
                self.inspect(_load(options['snapshot']))
            else:
                self.merge(options)
        except HealsimError as exc:
            raise CommandError(f'{exc.code}: {exc}', returncode=int(ExitCode.INPUT_ERROR))

    def inspect(self, store):
        self.stdout.write(f'store {store.name} {store.scope} revision={store.revision}')
        for topic in store.topics:
            self.stdout.write(f'topic {topic.id} {topic.label} partitions={len(topic.partitions)}')
            for partition in topic.partitions:
                members = ','.join(member.record.origin for member in partition.members)
                self.stdout.write(f'  partition {partition.id} version={partition.version} members={members}')
        KnowledgeService.check_invariants(store)
        self.stdout.write(self.style.SUCCESS('invariants hold'))

    def merge(self, options):
        global_store = _load(options['global_snapshot'])
        if global_store.scope != StoreScope.GLOBAL:
            raise CommandError(f'{options["global_snapshot"]} is not a global store', returncode=int(ExitCode.INPUT_ERROR))
        reports = {}
        for path in options['local_snapshots']:
            local = _load(path)
            reports[local.name] = KnowledgeService.sync_global(global_store, local).as_dict()
        KnowledgeService.check_invariants(global_store)
        Path(options['out']).write_text(snapshot.dumps(global_store), encoding='utf-8')
        self.stdout.write(json.dumps(reports, indent=2, sort_keys=True))
