"""
Run directories and their artifacts.

    <out>/<name>/
        config.json      the experiment config as run
        manifest.json    config hash, artifact paths and digests, wall-clock
        checkpoints/     iter_<iteration>.ckpt and final.ckpt
        metrics.csv      one MetricRecord per evaluated checkpoint
        reports/         JSON reports (best checkpoints, verify results)
        plots/           SVG charts and PNG previews
"""
from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from guidefree import __version__
from guidefree.common.utils import MissingArtifactError
from guidefree.metrics.fidelity import MetricRecord
from guidefree.numerics.checkpoint import file_digest

logger = logging.getLogger(__name__)

WALL_CLOCK_FIELDS = ('started_at', 'finished_at', 'wall_clock_seconds')


def dump_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + '\n'


def write_json(path: Path, obj: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_json(obj), encoding='utf-8')
    return path


def read_json(path: Path) -> Any:
    path = Path(path)
    if not path.is_file():
        raise MissingArtifactError('missing file: {}'.format(path))
    return json.loads(path.read_text(encoding='utf-8'))


@dataclass(frozen=True)
class RunLayout:
    root: Path

    @property
    def config(self) -> Path:
        return self.root / 'config.json'

    @property
    def manifest(self) -> Path:
        return self.root / 'manifest.json'

    @property
    def checkpoints(self) -> Path:
        return self.root / 'checkpoints'

    @property
    def metrics(self) -> Path:
        return self.root / 'metrics.csv'

    @property
    def reports(self) -> Path:
        return self.root / 'reports'

    @property
    def plots(self) -> Path:
        return self.root / 'plots'

    def checkpoint(self, iteration: int) -> Path:
        return self.checkpoints / 'iter_{:08d}.ckpt'.format(iteration)

    @property
    def final_checkpoint(self) -> Path:
        return self.checkpoints / 'final.ckpt'

    def checkpoint_files(self) -> List[Path]:
        return sorted(self.checkpoints.glob('iter_*.ckpt'))

    def create(self) -> RunLayout:
        for directory in (self.checkpoints, self.reports, self.plots):
            directory.mkdir(parents=True, exist_ok=True)
        return self

    def relative(self, path: Path) -> str:
        return Path(path).relative_to(self.root).as_posix()


@dataclass
class RunManifest:
    name: str
    config_hash: str
    version: str = __version__
    artifacts: Dict[str, str] = field(default_factory=dict)
    digests: Dict[str, str] = field(default_factory=dict)
    started_at: float = 0.0
    finished_at: float = 0.0
    wall_clock_seconds: float = 0.0

    def start(self) -> RunManifest:
        self.started_at = time.time()
        return self

    def finish(self) -> RunManifest:
        self.finished_at = time.time()
        self.wall_clock_seconds = self.finished_at - self.started_at
        return self

    def add(self, layout: RunLayout, key: str, path: Path):
        """Registers an artifact under `key` with its path relative to the run root and its sha256."""
        self.artifacts[key] = layout.relative(path)
        self.digests[key] = file_digest(path)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def deterministic_dict(self) -> Dict[str, Any]:
        return {k: v for k, v in self.to_dict().items() if k not in WALL_CLOCK_FIELDS}

    @classmethod
    def from_dict(cls, config: Dict[str, Any]) -> RunManifest:
        return cls(**config)

    def save(self, layout: RunLayout) -> Path:
        return write_json(layout.manifest, self.to_dict())

    @classmethod
    def load(cls, layout: RunLayout) -> RunManifest:
        return cls.from_dict(read_json(layout.manifest))


def write_metrics(path: Path, records: Sequence[MetricRecord], gammas: Optional[Sequence[float]] = None) -> Path:
    """
    One row per record; a gamma sweep prefixes each row with its guidance scale.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    prefix = [] if gammas is None else ['gamma']
    with path.open('w', newline='', encoding='utf-8') as f:
        writer = csv.DictWriter(f, fieldnames=prefix + MetricRecord.field_names())
        writer.writeheader()
        for i, record in enumerate(records):
            row = record.to_row()
            if gammas is not None:
                row['gamma'] = repr(float(gammas[i]))
            writer.writerow(row)
    return path


def _read_rows(path: Path, kind: str) -> List[Dict[str, str]]:
    path = Path(path)
    if not path.is_file():
        raise MissingArtifactError('missing {} CSV: {}'.format(kind, path))
    with path.open(newline='', encoding='utf-8') as f:
        rows = list(csv.DictReader(f))
    if not rows:
        raise MissingArtifactError('empty {} CSV: {}'.format(kind, path))
    return rows


def read_metrics(path: Path) -> List[MetricRecord]:
    return [MetricRecord.from_row(row) for row in _read_rows(path, 'metrics')]


def read_gamma_sweep(path: Path) -> List[Tuple[float, MetricRecord]]:
    return [(float(row['gamma']), MetricRecord.from_row(row)) for row in _read_rows(path, 'gamma sweep')]


def write_samples(path: Path, samples, latents=None) -> Path:
    """
    One row per sample: index, the sample coordinates x0.. and, when given, the initial latent z0.. it started from.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dim = samples.shape[1]
    header = ['index'] + ['x{}'.format(i) for i in range(dim)]
    if latents is not None:
        header += ['z{}'.format(i) for i in range(dim)]
    with path.open('w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for i, x in enumerate(samples):
            row = [i] + [repr(float(v)) for v in x]
            if latents is not None:
                row += [repr(float(v)) for v in latents[i]]
            writer.writerow(row)
    return path


def run_label(run_dir: Path) -> str:
    """Name from the run's manifest, falling back to the directory name."""
    layout = RunLayout(Path(run_dir))
    if layout.manifest.is_file():
        return RunManifest.load(layout).name
    return Path(run_dir).name
