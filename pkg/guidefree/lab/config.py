"""
Experiment configuration: one JSON document with a required integer "version".
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

from guidefree.common.utils import ConfigError
from guidefree.diffusion.sampler import GuidanceSpec
from guidefree.diffusion.schedule import NoiseSchedule
from guidefree.objectives.training import TrainSpec
from guidefree.worlds.mixture import GaussianMixtureWorld, default_world, default_world_1d

CONFIG_VERSION = 1

WORLD_PRESETS = {
    'default': default_world,
    'default_1d': default_world_1d,
}

DEFAULT_GAMMA_GRID = [0.1, 0.2, 0.3, 0.4, 0.5, 0.7, 0.9, 1.0, 1.5, 2.0, 3.0]


def _take(config: Dict[str, Any], path: str, allowed) -> Dict[str, Any]:
    if not isinstance(config, dict):
        raise ConfigError(path or 'config', 'expected an object, got {}'.format(type(config).__name__))
    unknown = set(config) - set(allowed)
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError('{}.{}'.format(path, key) if path else key, 'unknown field')
    return config


@dataclass(frozen=True)
class WorldConfig:
    """
    Either a named preset or an explicit mixture (the output of GaussianMixtureWorld.to_config).
    """
    preset: Optional[str] = 'default'
    mixture: Optional[Dict[str, Any]] = None

    def __post_init__(self):
        if (self.preset is None) == (self.mixture is None):
            raise ConfigError('world', 'give exactly one of "preset" and "mixture"')
        if self.preset is not None and self.preset not in WORLD_PRESETS:
            raise ConfigError('world.preset', 'unknown preset {!r}, expected one of {}'.format(
                self.preset, sorted(WORLD_PRESETS)))

    def build(self) -> GaussianMixtureWorld:
        if self.preset is not None:
            return WORLD_PRESETS[self.preset]()
        return GaussianMixtureWorld.from_config(self.mixture)

    def to_dict(self) -> Dict[str, Any]:
        return {'preset': self.preset} if self.preset is not None else {'mixture': self.mixture}

    @classmethod
    def from_dict(cls, config: Dict[str, Any]) -> WorldConfig:
        config = _take(config, 'world', ('preset', 'mixture'))
        if 'mixture' in config:
            world = cls(None, config['mixture'])
            world.build()
            return world
        return cls(config.get('preset', 'default'))


@dataclass(frozen=True)
class ModelConfig:
    hidden_layers: int = 3
    width: int = 128
    embedding_dim: int = 16

    def __post_init__(self):
        for name in ('hidden_layers', 'width', 'embedding_dim'):
            if getattr(self, name) < 1:
                raise ConfigError('model.{}'.format(name), 'must be >= 1')

    def to_dict(self) -> Dict[str, Any]:
        return {'hidden_layers': self.hidden_layers, 'width': self.width, 'embedding_dim': self.embedding_dim}

    @classmethod
    def from_dict(cls, config: Dict[str, Any]) -> ModelConfig:
        return cls(**_take(config, 'model', cls.__dataclass_fields__))


@dataclass(frozen=True)
class EvalConfig:
    """
    Metric evaluation during training: every `every` checkpoints, `samples_per_class` generations against
    `truth_samples` ground-truth samples per class. every = 0 disables evaluation.
    """
    every: int = 1
    samples_per_class: int = 4096
    truth_samples: int = 4096
    gamma_grid: List[float] = field(default_factory=lambda: list(DEFAULT_GAMMA_GRID))

    def __post_init__(self):
        if self.every < 0:
            raise ConfigError('eval.every', 'must be >= 0')
        if self.samples_per_class < 2 or self.truth_samples < 2:
            raise ConfigError('eval', 'need at least 2 samples per class')
        if any(g < -1 for g in self.gamma_grid):
            raise ConfigError('eval.gamma_grid', 'guidance scales must be >= -1')

    def to_dict(self) -> Dict[str, Any]:
        return {
            'every': self.every, 'samples_per_class': self.samples_per_class, 'truth_samples': self.truth_samples,
            'gamma_grid': list(self.gamma_grid),
        }

    @classmethod
    def from_dict(cls, config: Dict[str, Any]) -> EvalConfig:
        config = dict(_take(config, 'eval', cls.__dataclass_fields__))
        if 'gamma_grid' in config:
            config['gamma_grid'] = [float(g) for g in config['gamma_grid']]
        return cls(**config)


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    seed: int
    world: WorldConfig = field(default_factory=WorldConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    schedule: NoiseSchedule = field(default_factory=NoiseSchedule)
    train: TrainSpec = field(default_factory=TrainSpec)
    guidance: GuidanceSpec = field(default_factory=GuidanceSpec)
    eval: EvalConfig = field(default_factory=EvalConfig)
    out: str = 'runs'
    estimate_sigma_data: bool = True
    version: int = CONFIG_VERSION
    base_dir: Optional[Path] = field(default=None, compare=False)

    def __post_init__(self):
        if not self.name:
            raise ConfigError('name', 'must not be empty')
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2 ** 64:
            raise ConfigError('seed', 'must be an unsigned 64-bit integer, got {!r}'.format(self.seed))

    def to_dict(self) -> Dict[str, Any]:
        return {
            'version': self.version,
            'name': self.name,
            'seed': self.seed,
            'world': self.world.to_dict(),
            'model': self.model.to_dict(),
            'schedule': self.schedule.to_config(),
            'train': self.train.to_config(),
            'guidance': self.guidance.to_config(),
            'eval': self.eval.to_dict(),
            'out': self.out,
            'estimate_sigma_data': self.estimate_sigma_data,
        }

    @classmethod
    def from_dict(cls, config: Dict[str, Any], base_dir: Optional[Path] = None) -> ExperimentConfig:
        allowed = ('version', 'name', 'seed', 'world', 'model', 'schedule', 'train', 'guidance', 'eval', 'out',
                   'estimate_sigma_data')
        config = _take(config, '', allowed)
        if 'version' not in config:
            raise ConfigError('version', 'missing field')
        if config['version'] != CONFIG_VERSION:
            raise ConfigError('version', 'unsupported version {!r}, expected {}'.format(
                config['version'], CONFIG_VERSION))
        for key in ('name', 'seed'):
            if key not in config:
                raise ConfigError(key, 'missing field')
        return cls(
            name=str(config['name']),
            seed=config['seed'],
            world=WorldConfig.from_dict(config.get('world', {})),
            model=ModelConfig.from_dict(config.get('model', {})),
            schedule=NoiseSchedule.from_config(_take(config.get('schedule', {}), 'schedule',
                                                     NoiseSchedule.__dataclass_fields__)),
            train=TrainSpec.from_config(_take(config.get('train', {}), 'train', TrainSpec.__dataclass_fields__)),
            guidance=GuidanceSpec.from_config(_take(config.get('guidance', {}), 'guidance',
                                                    GuidanceSpec.__dataclass_fields__)),
            eval=EvalConfig.from_dict(config.get('eval', {})),
            out=str(config.get('out', 'runs')),
            estimate_sigma_data=bool(config.get('estimate_sigma_data', True)),
            version=config['version'],
            base_dir=base_dir,
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + '\n'

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()

    def resolve(self, path: Optional[str]) -> Optional[Path]:
        """Paths inside the config are relative to the directory of the config file."""
        if path is None:
            return None
        path = Path(path)
        if path.is_absolute() or self.base_dir is None:
            return path
        return self.base_dir / path

    def init_checkpoint(self) -> Optional[Path]:
        path = self.resolve(self.train.init_checkpoint)
        if path is not None and not path.is_file():
            raise ConfigError('train.init_checkpoint', 'checkpoint not found: {}'.format(path))
        return path

    def output_dir(self, override: Optional[str] = None) -> Path:
        root = Path(override) if override is not None else self.resolve(self.out)
        return root / self.name


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError('config', 'file not found: {}'.format(path))
    try:
        document = json.loads(path.read_text(encoding='utf-8'))
    except json.JSONDecodeError as e:
        raise ConfigError('config', 'invalid JSON in {}: {}'.format(path, e)) from e
    return ExperimentConfig.from_dict(document, base_dir=path.parent)
