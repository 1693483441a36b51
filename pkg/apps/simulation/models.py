import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from django.db import models
from django.utils.translation import gettext_lazy as _

OUTPUT_FILES = (
    'metrics.csv',
    'metrics.jsonl',
    'rates.csv',
    'recoveries.csv',
    'knowledge.snapshot',
    'knowledge.journal',
    'transcript.jsonl',
    'effective_config.ini',
)

ERROR_FILE = 'error.json'


class ExitCode(models.IntegerChoices):
    OK = 0, _('OK')
    CONFIG_ERROR = 2, _('Configuration error')
    INPUT_ERROR = 3, _('Input error')
    PIPELINE_FAILURE = 4, _('Pipeline failure')


@dataclass(frozen=True)
class Finding:
    code: str
    section: str
    key: str = ''
    message: str = ''

    def as_dict(self):
        return {'code': self.code, 'section': self.section, 'key': self.key, 'message': self.message}

    def __str__(self):
        where = f'{self.section}.{self.key}' if self.key else self.section
        return f'{self.code} [{where}] {self.message}'


@dataclass(frozen=True)
class DatasetConfig:
    name: str
    path: str
    dialect: str
    origin: str = ''
    base_year: int = None
    anchor: float = None


@dataclass(frozen=True)
class SimConfig:
    """A validated run configuration.

    ``sections`` maps a section name to its validated values with every
    default filled in; paths are kept as written and resolved against
    ``base_dir``.
    """

    sections: dict
    datasets: dict = field(default_factory=dict)
    base_dir: Path = Path('.')
    text: str = ''

    def section(self, name):
        """Values of one section keyed like ``settings.HEALSIM``"""
        return {key.upper(): value for key, value in self.sections.get(name, {}).items()}

    def resolve(self, path):
        path = Path(path)
        return path if path.is_absolute() else self.base_dir / path

    @property
    def run(self):
        return self.sections['run']

    @property
    def seed(self):
        return self.run['seed']

    @property
    def backend(self):
        return self.run['backend']

    @property
    def topology_path(self):
        return self.resolve(self.run['topology'])

    @property
    def scenario_path(self):
        return self.resolve(self.run['scenario'])

    @property
    def out_dir(self):
        return self.resolve(self.run['out'])

    @property
    def transcript_path(self):
        transcript = self.run.get('transcript')
        return self.resolve(transcript) if transcript else None

    @property
    def config_hash(self):
        return hashlib.sha256(self.text.encode('utf-8')).hexdigest()


@dataclass
class RunResult:
    exit_code: int
    out_dir: Path
    healed: list = field(default_factory=list)
    escalated: list = field(default_factory=list)
    error: dict = None
