from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from guidefree.common.utils import class_color
from guidefree.lab.elements import Curve, ElementBuffer, PointCloud
from guidefree.lab.png import render_png
from guidefree.lab.runs import MissingArtifactError, RunLayout, read_metrics, run_label
from guidefree.lab.svg import render_chart, write_svg
from guidefree.metrics.fidelity import MetricRecord

logger = logging.getLogger(__name__)

CURVE_METRICS = {
    'fd': 'Frechet distance',
    'bayes_acc': 'Bayes accuracy',
    'mean_llr': 'mean log-likelihood ratio',
    'recall_proxy': 'recall proxy',
}

LabeledRecords = Tuple[str, Sequence[MetricRecord]]


def curve_charts(runs: Sequence[LabeledRecords], out_dir: Path) -> List[Path]:
    """
    One SVG per metric with one curve per run against the training iteration.
    """
    paths = []
    for metric, title in CURVE_METRICS.items():
        buffer = ElementBuffer()
        for i, (label, records) in enumerate(runs):
            buffer.add(Curve(label, [r.iteration for r in records], [getattr(r, metric) for r in records],
                             class_color(i)))
        document = render_chart(buffer, title, 'iteration', metric)
        paths.append(write_svg(Path(out_dir) / '{}.svg'.format(metric), document))
    return paths


def tradeoff_chart(runs: Sequence[LabeledRecords], path: Path, title: str = 'fidelity vs class separation') -> Path:
    buffer = ElementBuffer()
    for i, (label, records) in enumerate(runs):
        buffer.add(Curve(label, [r.bayes_acc for r in records], [r.fd for r in records], class_color(i)))
    return write_svg(path, render_chart(buffer, title, 'bayes_acc', 'fd'))


def sample_buffer(samples: Sequence[np.ndarray], labels: Optional[Sequence[str]] = None,
                  class_ids: Optional[Sequence[int]] = None) -> ElementBuffer:
    class_ids = list(range(len(samples))) if class_ids is None else list(class_ids)
    labels = ['class {}'.format(c) for c in class_ids] if labels is None else labels
    return ElementBuffer([PointCloud(label, x, class_color(c)) for label, x, c in zip(labels, samples, class_ids)])


def sample_charts(samples: Sequence[np.ndarray], svg_path: Path, title: str = '',
                  class_ids: Optional[Sequence[int]] = None, labels: Optional[Sequence[str]] = None,
                  png: bool = True) -> List[Path]:
    """
    Scatter of generated samples per class as SVG and, optionally, a PNG preview next to it.
    """
    buffer = sample_buffer(samples, labels, class_ids)
    paths = [write_svg(svg_path, render_chart(buffer, title, 'x0', 'x1'))]
    if png:
        paths.append(render_png(Path(svg_path).with_suffix('.png'), buffer))
    return paths


def read_samples(path: Path) -> np.ndarray:
    with Path(path).open(newline='', encoding='utf-8') as f:
        reader = csv.DictReader(f)
        columns = [name for name in (reader.fieldnames or []) if name.startswith('x')]
        rows = [[float(row[name]) for name in columns] for row in reader]
    return np.array(rows, dtype=np.float64).reshape(-1, len(columns))


def plot_runs(run_dirs: Sequence[Path], out_dir: Optional[Path] = None) -> List[Path]:
    """
    Learning curves and the trade-off chart for one or more runs, overlaid with legend entries taken from the run
    manifests, plus scatters of any sample CSVs stored under <run>/samples.
    """
    if not run_dirs:
        raise MissingArtifactError('no run directories given')
    layouts = [RunLayout(Path(d)) for d in run_dirs]
    runs = [(run_label(layout.root), read_metrics(layout.metrics)) for layout in layouts]
    out_dir = Path(out_dir) if out_dir is not None else layouts[0].plots
    paths = curve_charts(runs, out_dir)
    paths.append(tradeoff_chart(runs, out_dir / 'tradeoff.svg'))
    for layout in layouts:
        for csv_path in sorted((layout.root / 'samples').glob('*.csv')):
            chart = layout.plots / '{}.svg'.format(csv_path.stem)
            samples = [read_samples(csv_path)]
            paths.extend(sample_charts(samples, chart, csv_path.stem, labels=[csv_path.stem], png=False))
    logger.info('wrote %d plots to %s', len(paths), out_dir)
    return paths
