"""
Run configuration: a JSON document with nested sections.

Every key not given falls back to DEFAULT_CONFIG (or the per-kind tables
below). Unknown keys, type mismatches and out-of-range values are rejected
with the dotted key path. `parse_config(serialize_config(c))` reproduces `c`.

DEFAULT_CONFIG
    dataset     kind (required): 'blobs' | 'csv'
                blobs: num_classes 10, feature_dim 16, samples_per_class_train 200,
                       samples_per_class_test 50, cluster_spread 0.3, data_seed 0
                csv:   path (required), train_fraction 0.8, split_seed 0
    stream      classes_per_task 2, class_order_seeds [0]
    model       hidden_dims [64, 64], activation 'relu'
    scheme      kind (required), fraction 0.5, step 2, count 2, seed 0, index 1
    optimizer   kind 'sgd' plus per-kind hyperparameters (OPTIMIZER_DEFAULTS)
    credit      enabled false, project_newer false, passes 1
    training    epochs_first 40, epochs_rest 40, batch_size 32, kl_weight 1.0,
                temperature 2.0, normalize_kl false, cache_targets false,
                log_every 50, save_snapshots false,
                kl_support 'covered' | 'seen'
    seeds       [0, 1, 2, 3, 4]
    output_dir  'results'
    arms        [] -> one arm named 'default'; otherwise a list of
                {name, scheme?, optimizer?, credit?} overriding those sections
"""
from dataclasses import dataclass
from typing import Any, Callable, Dict, List
import copy
import hashlib
import json
import logging
import os

from core.credit_optimizer import CreditSettings
from core.continual_trainer import TrainingSettings
from core.errors import ConfigError
from core.knowledge_space import (KL_SUPPORTS, SCHEME1, SCHEME2, SCHEME3, SCHEME4, SCHEME_KINDS,
                                  SINGLE_FUNCTION, MatchingScheme)
from core.update_rules import UPDATE_RULES, UpdateRule, make_update_rule
from network.mlp import ACTIVATIONS
from utils.validators import ConfigValidator

logger = logging.getLogger(__name__)

DATASET_DEFAULTS = {
    'blobs': {
        'kind': 'blobs',
        'num_classes': 10,
        'feature_dim': 16,
        'samples_per_class_train': 200,
        'samples_per_class_test': 50,
        'cluster_spread': 0.3,
        'data_seed': 0,
    },
    'csv': {
        'kind': 'csv',
        'path': '',
        'train_fraction': 0.8,
        'split_seed': 0,
    },
}

OPTIMIZER_DEFAULTS = {
    'sgd': {'kind': 'sgd', 'lr': 0.05},
    'adam': {'kind': 'adam', 'lr': 1e-3, 'beta1': 0.9, 'beta2': 0.999, 'eps': 1e-8},
    'rmsprop': {'kind': 'rmsprop', 'lr': 1e-3, 'decay': 0.9, 'eps': 1e-8},
    'adadelta': {'kind': 'adadelta', 'lr': 1.0, 'decay': 0.95, 'eps': 1e-6},
}

DEFAULT_CONFIG = {
    'stream': {'classes_per_task': 2, 'class_order_seeds': [0]},
    'model': {'hidden_dims': [64, 64], 'activation': 'relu'},
    'scheme': {'kind': 'strong', 'fraction': 0.5, 'step': 2, 'count': 2, 'seed': 0, 'index': 1},
    'optimizer': OPTIMIZER_DEFAULTS['sgd'],
    'credit': {'enabled': False, 'project_newer': False, 'passes': 1},
    'training': {
        'epochs_first': 40,
        'epochs_rest': 40,
        'batch_size': 32,
        'kl_weight': 1.0,
        'temperature': 2.0,
        'normalize_kl': False,
        'cache_targets': False,
        'log_every': 50,
        'save_snapshots': False,
        'kl_support': 'covered',
    },
    'seeds': [0, 1, 2, 3, 4],
    'output_dir': 'results',
    'arms': [],
}

TOP_LEVEL_KEYS = ('dataset', 'stream', 'model', 'scheme', 'optimizer', 'credit', 'training',
                  'seeds', 'output_dir', 'arms')
ARM_KEYS = ('name', 'scheme', 'optimizer', 'credit')


def _join(path: str, key) -> str:
    if isinstance(key, int):
        return f"{path}[{key}]"
    return f"{path}.{key}" if path else key


def _coerce(path: str, value: Any, default: Any) -> Any:
    """Check `value` against the type of `default`"""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(path, f"expected a list, got {value!r}")
        return [_coerce(_join(path, i), item, 0) for i, item in enumerate(value)]
    raise ConfigError(path, f"unsupported value {value!r}")


def _merge_section(path: str, given: Any, defaults: Dict[str, Any]) -> Dict[str, Any]:
    if not isinstance(given, dict):
        raise ConfigError(path, f"expected a section (object), got {given!r}")
    merged = copy.deepcopy(defaults)
    for key, value in given.items():
        if key not in defaults:
            raise ConfigError(_join(path, key), "unknown key")
        merged[key] = _coerce(_join(path, key), value, defaults[key])
    return merged


def _require_kind(path: str, given: Any, options) -> str:
    if not isinstance(given, dict):
        raise ConfigError(path, f"expected a section (object), got {given!r}")
    if 'kind' not in given:
        raise ConfigError(_join(path, 'kind'), "missing required key")
    kind = given['kind']
    if not isinstance(kind, str):
        raise ConfigError(_join(path, 'kind'), f"expected a string, got {kind!r}")
    ConfigValidator.choice(_join(path, 'kind'), kind, options)
    return kind


def _resolve_dataset(given: Any) -> dict:
    kind = _require_kind('dataset', given, DATASET_DEFAULTS)
    section = _merge_section('dataset', given, DATASET_DEFAULTS[kind])
    if kind == 'blobs':
        for key in ('num_classes', 'feature_dim', 'samples_per_class_train', 'samples_per_class_test',
                    'cluster_spread'):
            ConfigValidator.positive(f"dataset.{key}", section[key])
        ConfigValidator.non_negative('dataset.data_seed', section['data_seed'])
    else:
        if not section['path']:
            raise ConfigError('dataset.path', "missing required key")
        ConfigValidator.open_unit('dataset.train_fraction', section['train_fraction'])
        ConfigValidator.non_negative('dataset.split_seed', section['split_seed'])
    return section


def _resolve_scheme(path: str, given: Any) -> dict:
    _require_kind(path, given, SCHEME_KINDS)
    section = _merge_section(path, given, DEFAULT_CONFIG['scheme'])
    kind = section['kind']
    if kind in (SCHEME1, SCHEME2):
        ConfigValidator.fraction(_join(path, 'fraction'), section['fraction'])
    if kind == SCHEME3:
        ConfigValidator.at_least(_join(path, 'step'), section['step'], 2)
    if kind == SCHEME4:
        ConfigValidator.at_least(_join(path, 'count'), section['count'], 1)
        ConfigValidator.non_negative(_join(path, 'seed'), section['seed'])
    if kind == SINGLE_FUNCTION:
        ConfigValidator.at_least(_join(path, 'index'), section['index'], 1)
    return section


def _resolve_optimizer(path: str, given: Any) -> dict:
    if not isinstance(given, dict):
        raise ConfigError(path, f"expected a section (object), got {given!r}")
    kind = _require_kind(path, dict({'kind': 'sgd'}, **given), OPTIMIZER_DEFAULTS)
    section = _merge_section(path, given, OPTIMIZER_DEFAULTS[kind])
    ConfigValidator.positive(_join(path, 'lr'), section['lr'])
    for key in ('beta1', 'beta2', 'decay'):
        if key in section:
            ConfigValidator.open_unit(_join(path, key), section[key])
    if 'eps' in section:
        ConfigValidator.positive(_join(path, 'eps'), section['eps'])
    return section


def _resolve_credit(path: str, given: Any, defaults: dict) -> dict:
    section = _merge_section(path, given, defaults)
    ConfigValidator.at_least(_join(path, 'passes'), section['passes'], 1)
    return section


def _resolve(document: Any) -> dict:
    if not isinstance(document, dict):
        raise ConfigError('', "configuration must be a JSON object")
    for key in document:
        if key not in TOP_LEVEL_KEYS:
            raise ConfigError(key, "unknown key")
    for key in ('dataset', 'scheme'):
        if key not in document:
            raise ConfigError(key, "missing required key")

    resolved = {
        'dataset': _resolve_dataset(document['dataset']),
        'stream': _merge_section('stream', document.get('stream', {}), DEFAULT_CONFIG['stream']),
        'model': _merge_section('model', document.get('model', {}), DEFAULT_CONFIG['model']),
        'scheme': _resolve_scheme('scheme', document['scheme']),
        'optimizer': _resolve_optimizer('optimizer', document.get('optimizer', {})),
        'credit': _resolve_credit('credit', document.get('credit', {}), DEFAULT_CONFIG['credit']),
        'training': _merge_section('training', document.get('training', {}), DEFAULT_CONFIG['training']),
        'seeds': _coerce('seeds', document.get('seeds', DEFAULT_CONFIG['seeds']), []),
        'output_dir': _coerce('output_dir', document.get('output_dir', DEFAULT_CONFIG['output_dir']), ''),
    }

    stream = resolved['stream']
    ConfigValidator.positive('stream.classes_per_task', stream['classes_per_task'])
    ConfigValidator.non_empty('stream.class_order_seeds', stream['class_order_seeds'])
    for i, seed in enumerate(stream['class_order_seeds']):
        ConfigValidator.non_negative(f"stream.class_order_seeds[{i}]", seed)
    dataset = resolved['dataset']
    if dataset['kind'] == 'blobs' and dataset['num_classes'] % stream['classes_per_task'] != 0:
        raise ConfigError('stream.classes_per_task',
                          f"{dataset['num_classes']} classes cannot be split into tasks of "
                          f"{stream['classes_per_task']}")

    model = resolved['model']
    for i, width in enumerate(model['hidden_dims']):
        ConfigValidator.positive(f"model.hidden_dims[{i}]", width)
    ConfigValidator.choice('model.activation', model['activation'], ACTIVATIONS)

    training = resolved['training']
    for key in ('epochs_first', 'epochs_rest', 'batch_size', 'temperature'):
        ConfigValidator.positive(f"training.{key}", training[key])
    for key in ('kl_weight', 'log_every'):
        ConfigValidator.non_negative(f"training.{key}", training[key])
    ConfigValidator.choice('training.kl_support', training['kl_support'], KL_SUPPORTS)

    ConfigValidator.non_empty('seeds', resolved['seeds'])
    for i, seed in enumerate(resolved['seeds']):
        ConfigValidator.non_negative(f"seeds[{i}]", seed)
    if not resolved['output_dir']:
        raise ConfigError('output_dir', "must not be empty")

    resolved['arms'] = _resolve_arms(document.get('arms', []), resolved)
    return resolved


def _resolve_arms(given: Any, resolved: dict) -> List[dict]:
    if not isinstance(given, list):
        raise ConfigError('arms', f"expected a list, got {given!r}")
    arms, names = [], set()
    for i, arm in enumerate(given):
        path = f"arms[{i}]"
        if not isinstance(arm, dict):
            raise ConfigError(path, f"expected a section (object), got {arm!r}")
        for key in arm:
            if key not in ARM_KEYS:
                raise ConfigError(_join(path, key), "unknown key")
        if 'name' not in arm:
            raise ConfigError(_join(path, 'name'), "missing required key")
        name = _coerce(_join(path, 'name'), arm['name'], '')
        ConfigValidator.arm_name(_join(path, 'name'), name)
        if name in names:
            raise ConfigError(_join(path, 'name'), f"duplicate arm name '{name}'")
        names.add(name)
        arms.append({
            'name': name,
            'scheme': _resolve_scheme(_join(path, 'scheme'), arm['scheme']) if 'scheme' in arm
            else copy.deepcopy(resolved['scheme']),
            'optimizer': _resolve_optimizer(_join(path, 'optimizer'), arm['optimizer']) if 'optimizer' in arm
            else copy.deepcopy(resolved['optimizer']),
            'credit': _resolve_credit(_join(path, 'credit'), arm.get('credit', {}), resolved['credit']),
        })
    return arms


@dataclass(frozen=True)
class ArmConfig:
    name: str
    scheme: MatchingScheme
    optimizer: Dict[str, Any]
    credit_enabled: bool
    credit: CreditSettings

    def rule_factory(self) -> Callable[[], UpdateRule]:
        kind = self.optimizer['kind']
        hyperparameters = {k: v for k, v in self.optimizer.items() if k != 'kind'}
        return lambda: make_update_rule(kind, **hyperparameters)


class RunConfig:
    """Fully resolved configuration with typed views of its sections"""

    def __init__(self, data: dict):
        self.data = data

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.data == other.data

    def get(self, dotted: str, default: Any = None) -> Any:
        """Value at a dotted path such as 'training.temperature'"""
        node = self.data
        for key in dotted.split('.'):
            if not isinstance(node, dict) or key not in node:
                return default
            node = node[key]
        return node

    @property
    def dataset(self) -> dict:
        return self.data['dataset']

    @property
    def classes_per_task(self) -> int:
        return self.data['stream']['classes_per_task']

    @property
    def class_order_seeds(self) -> List[int]:
        return list(self.data['stream']['class_order_seeds'])

    @property
    def seeds(self) -> List[int]:
        return list(self.data['seeds'])

    @property
    def hidden_dims(self) -> List[int]:
        return list(self.data['model']['hidden_dims'])

    @property
    def activation(self) -> str:
        return self.data['model']['activation']

    @property
    def output_dir(self) -> str:
        return self.data['output_dir']

    @property
    def save_snapshots(self) -> bool:
        return self.data['training']['save_snapshots']

    def training_settings(self) -> TrainingSettings:
        training = {k: v for k, v in self.data['training'].items() if k != 'save_snapshots'}
        return TrainingSettings(**training)

    def arms(self) -> List[ArmConfig]:
        sections = self.data['arms'] or [{
            'name': 'default',
            'scheme': self.data['scheme'],
            'optimizer': self.data['optimizer'],
            'credit': self.data['credit'],
        }]
        return [
            ArmConfig(
                name=arm['name'],
                scheme=MatchingScheme(**arm['scheme']),
                optimizer=dict(arm['optimizer']),
                credit_enabled=arm['credit']['enabled'],
                credit=CreditSettings(arm['credit']['project_newer'], arm['credit']['passes']),
            )
            for arm in sections
        ]

    def with_output_dir(self, output_dir: str) -> 'RunConfig':
        data = copy.deepcopy(self.data)
        data['output_dir'] = output_dir
        return RunConfig(data)


def parse_config(text: str) -> RunConfig:
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError('', f"not valid JSON: {e}") from e
    return RunConfig(_resolve(document))


def serialize_config(config: RunConfig) -> str:
    return json.dumps(config.data, indent=2, sort_keys=True) + '\n'


def config_hash(config: RunConfig) -> str:
    """Identity of everything that affects results; the output directory is excluded"""
    data = {k: v for k, v in config.data.items() if k != 'output_dir'}
    canonical = json.dumps(data, sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()[:12]


class ConfigManager:
    """
    Loads a run configuration file, resolves it against the defaults and
    echoes the result to the log.
    """

    def __init__(self, config_file: str = "config.json"):
        self.config_file = config_file
        self.logger = logging.getLogger(__name__)
        self.config = self._load_config()

    def _load_config(self) -> RunConfig:
        if not os.path.exists(self.config_file):
            raise ConfigError('', f"configuration file not found: {self.config_file}")
        try:
            with open(self.config_file, 'r') as f:
                text = f.read()
        except IOError as e:
            raise ConfigError('', f"cannot read {self.config_file}: {e}") from e

        config = parse_config(text)
        self.logger.info(f"Loaded configuration from {self.config_file} (hash {config_hash(config)})")
        self.logger.info(f"Resolved configuration:\n{serialize_config(config)}")
        return config

    def get(self, key: str, default: Any = None) -> Any:
        return self.config.get(key, default)

    def save(self, path: str):
        with open(path, 'w') as f:
            f.write(serialize_config(self.config))
