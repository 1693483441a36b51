"""Run configuration files.

A run config is an INI file with one section per layer plus one
``[dataset:<name>]`` section per log corpus::

    [run]
    topology = topology.txt
    scenario = scenario.txt

    [metacognition]
    theta_pro = 0.35

    [dataset:zookeeper]
    path = zookeeper.log
    dialect = ZooKeeper

Keys left out take their defaults from ``settings.HEALSIM``. Unknown
sections and keys are errors.
"""
import configparser
from dataclasses import replace
from pathlib import Path

from django.utils.translation import gettext_lazy as _

from continuum.topology import format_number
from core.conf import healsim_settings

from .exceptions import InvalidConfig
from .models import DatasetConfig, Finding, SimConfig
from .serializers import SECTION_SERIALIZERS, DatasetSerializer

DATASET_PREFIX = 'dataset:'

# Settings keys that are not run-config keys.
SKIPPED_DEFAULTS = {'reasoner': {'backend'}}

NULLABLE = {'none', 'null', ''}


def _defaults():
    healsim = healsim_settings()
    defaults = {}
    for name in SECTION_SERIALIZERS:
        if name == 'run':
            continue
        skipped = SKIPPED_DEFAULTS.get(name, set())
        defaults[name] = {
            key.lower(): value for key, value in healsim.get(name.upper(), {}).items()
            if key.lower() not in skipped
        }
    defaults['run'] = {
        'seed': healsim.get('SEED', 0),
        'backend': healsim.get('REASONER', {}).get('BACKEND', 'scripted'),
        'out': 'out',
        'transcript': '',
    }
    return defaults


def _text(value):
    if value is None:
        return ''
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        return format_number(value)
    if isinstance(value, (tuple, list)):
        return ','.join(_text(item) for item in value)
    return str(value)


def _findings(section, errors):
    findings = []
    for key, details in errors.items():
        for detail in details:
            code = getattr(detail, 'code', '') or ''
            findings.append(Finding(
                code=code if code[:1].isupper() else 'InvalidValue',
                section=section,
                key='' if key == 'non_field_errors' else key,
                message=str(detail),
            ))
    return findings


class ConfigFile:
    """Load, check and write run configurations"""

    @staticmethod
    def check(text, base_dir='.'):
        """Parse and validate; returns (config or None, findings)"""
        parser = configparser.ConfigParser(interpolation=None, default_section='__none__')
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            return None, [Finding('InvalidConfig', '', message=str(exc))]
        defaults = _defaults()
        findings = []
        sections = {}
        datasets = {}
        for name in parser.sections():
            values = {key: value.strip() for key, value in parser.items(name)}
            if name.startswith(DATASET_PREFIX):
                dataset, dataset_findings = ConfigFile._dataset(name[len(DATASET_PREFIX):], values)
                findings.extend(dataset_findings)
                if dataset is not None:
                    datasets[dataset.name] = dataset
                continue
            serializer_class = SECTION_SERIALIZERS.get(name)
            if serializer_class is None:
                findings.append(Finding('UnknownSection', name, message=str(_('Unknown section'))))
                continue
            sections[name] = values
        for name, serializer_class in SECTION_SERIALIZERS.items():
            values = sections.get(name, {})
            fields = serializer_class().fields
            unknown = sorted(set(values) - set(fields))
            findings.extend(Finding('UnknownKey', name, key, str(_('Unknown key'))) for key in unknown)
            data = dict(defaults.get(name, {}))
            for key, value in values.items():
                if key in fields:
                    data[key] = None if getattr(fields[key], 'allow_null', False) and value.lower() in NULLABLE else value
            serializer = serializer_class(data=data)
            if serializer.is_valid():
                sections[name] = dict(serializer.validated_data)
            else:
                findings.extend(_findings(name, serializer.errors))
        if findings:
            return None, findings
        config = SimConfig(sections=sections, datasets=datasets, base_dir=Path(base_dir))
        return replace(config, text=ConfigFile.dumps(config)), findings

    @staticmethod
    def _dataset(name, values):
        section = f'{DATASET_PREFIX}{name}'
        if not name:
            return None, [Finding('InvalidValue', section, message=str(_('Dataset sections need a name')))]
        fields = DatasetSerializer().fields
        findings = [Finding('UnknownKey', section, key, str(_('Unknown key'))) for key in sorted(set(values) - set(fields))]
        data = {key: value for key, value in values.items() if key in fields}
        for key in ('anchor', 'base_year'):
            if key in data and data[key].lower() in NULLABLE:
                del data[key]
        serializer = DatasetSerializer(data=data)
        if not serializer.is_valid():
            return None, findings + _findings(section, serializer.errors)
        return DatasetConfig(name=name, **serializer.validated_data), findings

    @staticmethod
    def loads(text, base_dir='.'):
        config, findings = ConfigFile.check(text, base_dir)
        if config is None:
            raise InvalidConfig(
                _('{count} configuration problem(s): {first}').format(count=len(findings), first=findings[0]),
                findings=[finding.as_dict() for finding in findings],
            )
        return config

    @staticmethod
    def load(path):
        path = Path(path)
        try:
            text = path.read_text(encoding='utf-8')
        except OSError as exc:
            raise InvalidConfig(_('Cannot read config file {path}').format(path=path), error=str(exc))
        return ConfigFile.loads(text, base_dir=path.parent)

    @staticmethod
    def dumps(config):
        """Effective configuration as INI with sorted sections and keys"""
        blocks = {name: values for name, values in config.sections.items()}
        for name, dataset in config.datasets.items():
            values = {
                'path': dataset.path,
                'dialect': dataset.dialect,
                'origin': dataset.origin,
                'base_year': dataset.base_year,
                'anchor': dataset.anchor,
            }
            blocks[f'{DATASET_PREFIX}{name}'] = {key: value for key, value in values.items() if value is not None}
        lines = []
        for name in sorted(blocks):
            lines.append(f'[{name}]')
            lines.extend(f'{key} = {_text(value)}'.rstrip() for key, value in sorted(blocks[name].items()))
            lines.append('')
        return '\n'.join(lines)

    @staticmethod
    def override(config, **values):
        """Copy of ``config`` with ``[run]`` keys replaced; ``None`` values are ignored"""
        run = dict(config.run)
        run.update({key: value for key, value in values.items() if value is not None})
        updated = replace(config, sections=dict(config.sections, run=run))
        return replace(updated, text=ConfigFile.dumps(updated))
