"""
End-to-end class separation of a base run and the run fine-tuned from it.

The base model separates classes poorly, fine-tuning lifts Bayes accuracy past a threshold while recall falls, and
both guidance and fine-tuning pull shared-noise samples of different classes apart. Every sweep below starts from
the latents and ground truth of the base config, so base and fine-tuned samples pair up one to one.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple

from guidefree.common.utils import ConfigError
from guidefree.lab.config import load_config
from guidefree.lab.experiment import gamma_sweep
from guidefree.lab.runs import MissingArtifactError, RunLayout, read_gamma_sweep, read_metrics, write_json
from guidefree.metrics.fidelity import MetricRecord, trajectory_report

logger = logging.getLogger(__name__)

BASE_BAYES_ACC_BELOW = 0.85
FINETUNED_BAYES_ACC_ABOVE = 0.95
UNGUIDED, GUIDED = 0.0, 1.0


@dataclass
class StoryReport:
    criteria: Dict[str, bool]
    values: Dict[str, object]

    @property
    def passed(self) -> bool:
        return all(self.criteria.values())

    def to_dict(self) -> dict:
        return {'passed': self.passed, 'criteria': self.criteria, 'values': self.values}


def story_criteria(base_unguided: MetricRecord, base_guided: MetricRecord, finetuned: MetricRecord,
                   trajectory: Sequence[MetricRecord], base_below: float = BASE_BAYES_ACC_BELOW,
                   finetuned_above: float = FINETUNED_BAYES_ACC_ABOVE) -> StoryReport:
    """
    base_unguided and base_guided evaluate the final base checkpoint at guidance scales 0 and 1, finetuned the final
    fine-tuned checkpoint unguided; trajectory holds the metrics of every fine-tuning checkpoint.
    """
    if not trajectory:
        raise MissingArtifactError('no evaluated fine-tuning checkpoints')
    shape = trajectory_report(trajectory)
    best = shape['bayes_acc']['best']
    criteria = {
        'base_below': bool(base_unguided.bayes_acc < base_below),
        'finetune_above': best is not None and bool(best > finetuned_above),
        'bayes_acc_rises': shape['bayes_acc_rises'],
        'mean_llr_rises': shape['mean_llr_rises'],
        'recall_falls': shape['recall_falls'],
        'fd_interior_minimum': shape['fd_interior_minimum'] is True,
        'guidance_raises_bayes_acc': bool(base_guided.bayes_acc > base_unguided.bayes_acc),
        'guidance_separates_pairs': bool(base_guided.pair_distance > base_unguided.pair_distance),
        'finetune_separates_pairs': bool(finetuned.pair_distance > base_unguided.pair_distance),
    }
    values = {
        'base_bayes_acc': base_unguided.bayes_acc,
        'guided_bayes_acc': base_guided.bayes_acc,
        'base_pair_distance': base_unguided.pair_distance,
        'guided_pair_distance': base_guided.pair_distance,
        'finetuned_pair_distance': finetuned.pair_distance,
        'thresholds': {'base_below': base_below, 'finetune_above': finetuned_above},
        'trajectory': shape,
    }
    return StoryReport(criteria, values)


def run_story(base_dir: Path, finetune_dir: Path, out_dir: Optional[Path] = None,
              threads: int = 1) -> Tuple[StoryReport, Path]:
    """
    Sweeps the final base checkpoint over guidance scales 0 and 1 and the final fine-tuned checkpoint at 0, then
    checks the story against the fine-tuning metrics. Writes both sweeps and story.json under out_dir.
    """
    base, finetune = RunLayout(Path(base_dir)), RunLayout(Path(finetune_dir))
    out_dir = Path(out_dir) if out_dir is not None else finetune.reports / 'story'
    config = load_config(base.config)
    if load_config(finetune.config).world != config.world:
        raise ConfigError('world', '{} and {} sample different worlds'.format(base.root, finetune.root))

    swept = gamma_sweep(base.final_checkpoint, config, out_dir / 'base', threads, [UNGUIDED, GUIDED])
    by_gamma = dict(read_gamma_sweep(swept))
    swept = gamma_sweep(finetune.final_checkpoint, config, out_dir / 'finetune', threads, [UNGUIDED])
    finetuned = dict(read_gamma_sweep(swept))[UNGUIDED]

    report = story_criteria(by_gamma[UNGUIDED], by_gamma[GUIDED], finetuned, read_metrics(finetune.metrics))
    for name, ok in report.criteria.items():
        logger.info('%s %s', 'PASS' if ok else 'FAIL', name)
    path = write_json(out_dir / 'story.json', report.to_dict())
    logger.info('class separation story %s: %s', 'passed' if report.passed else 'failed', path)
    return report, path
