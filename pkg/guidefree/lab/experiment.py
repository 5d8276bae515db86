"""
Orchestration behind the train, sample, metrics and sweep commands.

Every random stream is derived from the config seed with a fixed key, so a run does not depend on how many draws
another part of the pipeline consumed:

    (seed, 0)            sigma_data estimate
    (seed, 1)            model initialization
    (seed, 2)            training
    (seed, 3, iteration) metric evaluation of one checkpoint
    (seed, 4)            ground-truth samples for metrics
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from guidefree.common.utils import ConfigError
from guidefree.diffusion.sampler import GuidanceSpec, initial_latents, model_score_source, sample_ode
from guidefree.diffusion.schedule import NoiseSchedule
from guidefree.lab.config import ExperimentConfig, load_config
from guidefree.lab.plots import sample_charts, tradeoff_chart
from guidefree.lab.runs import RunLayout, RunManifest, write_json, write_metrics, write_samples
from guidefree.metrics.evaluation import evaluate_model, truth_per_class
from guidefree.metrics.fidelity import MetricRecord, best_checkpoints, trajectory_report
from guidefree.numerics.checkpoint import load_checkpoint, save_checkpoint
from guidefree.numerics.network import DenoiserModel, init_model
from guidefree.numerics.rng import child_rng, make_rng
from guidefree.objectives.training import train
from guidefree.worlds.mixture import GaussianMixtureWorld

logger = logging.getLogger(__name__)

SIGMA_DATA_SAMPLES = 4096
THREADS_VARIABLE = 'GUIDEFREE_THREADS'


def thread_count() -> int:
    value = os.environ.get(THREADS_VARIABLE)
    if value is None:
        return os.cpu_count() or 1
    try:
        threads = int(value)
    except ValueError as e:
        raise ConfigError(THREADS_VARIABLE, 'not an integer: {!r}'.format(value)) from e
    if threads < 1:
        raise ConfigError(THREADS_VARIABLE, 'must be >= 1, got {}'.format(threads))
    return threads


def estimate_sigma_data(world: GaussianMixtureWorld, seed: int) -> float:
    return float(world.sample_labeled(SIGMA_DATA_SAMPLES, child_rng(seed, 0)).x.std())


def _check_world(model: DenoiserModel, world: GaussianMixtureWorld, path: Path):
    if model.data_dim != world.dim or model.num_classes != world.num_classes:
        raise ConfigError('train.init_checkpoint', '{} holds a {}-dim {}-class model, the world is {}-dim {}-class'
                          .format(path, model.data_dim, model.num_classes, world.dim, world.num_classes))


def prepare(config: ExperimentConfig) -> Tuple[GaussianMixtureWorld, NoiseSchedule, DenoiserModel]:
    """
    World, schedule and starting model of a run. A base checkpoint brings its own sigma_data.
    """
    world = config.world.build()
    init = config.init_checkpoint()
    if init is not None:
        model = load_checkpoint(init).model
        _check_world(model, world, init)
        logger.info('starting from %s', init)
        return world, config.schedule.with_sigma_data(model.sigma_data), model
    if config.train.objective.fine_tuning:
        raise ConfigError('train.init_checkpoint',
                          '{} fine-tunes a base checkpoint and none is given'.format(config.train.objective.value))
    schedule = config.schedule
    if config.estimate_sigma_data:
        schedule = schedule.with_sigma_data(estimate_sigma_data(world, config.seed))
    model = init_model(world.dim, world.num_classes, child_rng(config.seed, 1), config.model.hidden_layers,
                       config.model.width, config.model.embedding_dim, schedule.sigma_data)
    return world, schedule, model


@dataclass
class _Evaluator:
    config: ExperimentConfig
    world: GaussianMixtureWorld
    schedule: NoiseSchedule
    truth: List[np.ndarray]

    def __call__(self, model: DenoiserModel, iteration: int, loss: float) -> MetricRecord:
        return evaluate_model(model, self.world, self.schedule, self.config.guidance,
                              child_rng(self.config.seed, 3, iteration), self.truth,
                              self.config.eval.samples_per_class, iteration, loss)


def _evaluator(config: ExperimentConfig, world: GaussianMixtureWorld, schedule: NoiseSchedule) -> _Evaluator:
    truth = truth_per_class(world, config.eval.truth_samples, child_rng(config.seed, 4))
    return _Evaluator(config, world, schedule, truth)


def _write_metric_reports(layout: RunLayout, manifest: RunManifest, records: Sequence[MetricRecord]):
    if not records:
        return
    manifest.add(layout, 'metrics', write_metrics(layout.metrics, records))
    report = write_json(layout.reports / 'best_checkpoints.json', best_checkpoints(records))
    manifest.add(layout, 'reports/best_checkpoints', report)
    trajectory = write_json(layout.reports / 'trajectory.json', trajectory_report(records))
    manifest.add(layout, 'reports/trajectory', trajectory)


def run_training(config: ExperimentConfig, out: Optional[str] = None, progress: bool = True) -> RunLayout:
    """
    Trains one config into its run directory: config, checkpoints at the configured cadence plus final.ckpt,
    metrics and the manifest.
    """
    world, schedule, model = prepare(config)
    layout = RunLayout(config.output_dir(out)).create()
    manifest = RunManifest(config.name, config.config_hash()).start()
    layout.config.write_text(config.to_json(), encoding='utf-8')
    manifest.add(layout, 'config', layout.config)

    evaluate = _evaluator(config, world, schedule) if config.eval.every > 0 else None
    checkpoints = []

    def on_checkpoint(iteration, current, loss):
        path = save_checkpoint(layout.checkpoint(iteration), current, iteration, config.seed)
        manifest.add(layout, 'checkpoints/{}'.format(iteration), path)
        checkpoints.append(iteration)
        if evaluate is not None and (len(checkpoints) - 1) % config.eval.every == 0:
            return evaluate(current, iteration, loss)
        return None

    result = train(config.train, world, schedule, model, child_rng(config.seed, 2), on_checkpoint, progress)
    final = save_checkpoint(layout.final_checkpoint, result.model, config.train.iterations, config.seed)
    manifest.add(layout, 'checkpoints/final', final)
    _write_metric_reports(layout, manifest, result.records)
    manifest.finish().save(layout)
    logger.info('run %s finished in %.1fs: %s', config.name, manifest.wall_clock_seconds, layout.root)
    return layout


def evaluate_run(run_dir: Path, threads: int = 1) -> List[MetricRecord]:
    """
    Recomputes metrics for every stored checkpoint of a run, in parallel threads.
    """
    layout = RunLayout(Path(run_dir))
    config = load_config(layout.config)
    world = config.world.build()
    files = layout.checkpoint_files()
    if not files:
        raise ConfigError('checkpoints', 'no checkpoints in {}'.format(layout.checkpoints))
    first = load_checkpoint(files[0]).model
    evaluate = _evaluator(config, world, config.schedule.with_sigma_data(first.sigma_data))

    def run(path):
        checkpoint = load_checkpoint(path)
        return evaluate(checkpoint.model, checkpoint.iteration, float('nan'))

    with ThreadPoolExecutor(max_workers=threads) as pool:
        records = sorted(pool.map(run, files), key=lambda r: r.iteration)

    manifest = RunManifest.load(layout) if layout.manifest.is_file() else RunManifest(config.name,
                                                                                       config.config_hash())
    _write_metric_reports(layout, manifest, records)
    manifest.save(layout)
    return records


def schedule_for_checkpoint(checkpoint_path: Path, model: DenoiserModel,
                            config: Optional[ExperimentConfig] = None) -> NoiseSchedule:
    """
    The schedule of the config that produced the checkpoint when it sits in a run directory, else the defaults.
    """
    if config is None:
        run_config = Path(checkpoint_path).parent.parent / 'config.json'
        if run_config.is_file():
            config = load_config(run_config)
    schedule = config.schedule if config is not None else NoiseSchedule()
    return schedule.with_sigma_data(model.sigma_data)


def sample_latents(schedule: NoiseSchedule, n: int, dim: int, seed: int, class_id: int, shared: bool) -> np.ndarray:
    """Shared latents come from the seed itself, per-class latents from a stream keyed by the class."""
    rng = make_rng(seed) if shared else child_rng(seed, class_id + 1)
    return initial_latents(schedule, n, dim, rng)


def run_sampling(checkpoint_path: Path, class_ids: Optional[Sequence[int]], n: int, gamma: float, seed: int,
                 out_dir: Path, shared_noise: bool = False, config: Optional[ExperimentConfig] = None) -> List[Path]:
    """
    Samples classes from a checkpoint with classifier-free guidance scale gamma (0 = unguided). Writes one CSV per
    class with the initial latent of every sample, a scatter SVG and a PNG preview.
    """
    model = load_checkpoint(checkpoint_path).model
    class_ids = list(range(model.num_classes)) if class_ids is None else list(class_ids)
    for c in class_ids:
        if not 0 <= c < model.num_classes:
            raise ConfigError('class', 'class {} out of range [0, {})'.format(c, model.num_classes))
    if n < 1:
        raise ConfigError('n', 'must be >= 1')
    schedule = schedule_for_checkpoint(checkpoint_path, model, config)
    guidance = GuidanceSpec.cfg(gamma) if gamma != 0 else GuidanceSpec()
    source = model_score_source(model)

    out_dir = Path(out_dir)
    paths, samples = [], []
    for c in class_ids:
        latents = sample_latents(schedule, n, model.data_dim, seed, c, shared_noise)
        x = sample_ode(source, schedule, guidance, c, n, None, model.data_dim, latents)
        samples.append(x)
        paths.append(write_samples(out_dir / 'samples' / 'class{}_gamma{:g}.csv'.format(c, gamma), x, latents))
    title = 'gamma = {:g}{}'.format(gamma, ', shared noise' if shared_noise else '')
    paths += sample_charts(samples, out_dir / 'plots' / 'samples_gamma{:g}.svg'.format(gamma), title, class_ids)
    return paths


def gamma_sweep(checkpoint_path: Path, config: ExperimentConfig, out_dir: Path, threads: int = 1,
                grid: Optional[Sequence[float]] = None) -> Path:
    """
    Metrics of one checkpoint across guidance scales. All scales start from the same latents and ground truth.
    """
    model = load_checkpoint(checkpoint_path).model
    world = config.world.build()
    schedule = schedule_for_checkpoint(checkpoint_path, model, config)
    grid = list(config.eval.gamma_grid if grid is None else grid)
    n = config.eval.samples_per_class
    truth = truth_per_class(world, config.eval.truth_samples, child_rng(config.seed, 4))
    latents = sample_latents(schedule, n, model.data_dim, config.seed, 0, shared=True)

    def run(gamma):
        guidance = GuidanceSpec.cfg(gamma) if gamma != 0 else GuidanceSpec()
        return evaluate_model(model, world, schedule, guidance, make_rng(config.seed), truth, n, latents=latents)

    with ThreadPoolExecutor(max_workers=threads) as pool:
        records = list(pool.map(run, grid))

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = write_metrics(out_dir / 'gamma_sweep.csv', records, gammas=grid)
    tradeoff_chart([('guidance scale', records)], out_dir / 'gamma_tradeoff.svg', 'guidance sweep')
    logger.info('gamma sweep over %d scales written to %s', len(grid), path)
    return path


def sweep_configs(config_paths: Sequence[Path], out: Optional[str] = None, threads: int = 1) -> List[RunLayout]:
    """
    Trains independent configs in parallel threads; each run stays single-threaded over its model.
    """
    configs = [load_config(p) for p in config_paths]
    names = [c.name for c in configs]
    if len(set(names)) != len(names):
        raise ConfigError('name', 'sweep configs need distinct names, got {}'.format(names))
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda c: run_training(c, out, progress=False), configs))
