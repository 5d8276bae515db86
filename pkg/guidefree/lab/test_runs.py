import csv

import numpy as np
import pytest

from guidefree.lab.runs import (
    MissingArtifactError, RunLayout, RunManifest, read_json, read_metrics, run_label, write_json, write_metrics,
    write_samples
)
from guidefree.metrics.fidelity import MetricRecord

RECORDS = [
    MetricRecord(0, float('nan'), 2.5, 0.6, 0.1, 0.9),
    MetricRecord(10, 0.75, 1.25, 0.8, 0.4, 0.85),
]


def test_layout_paths(tmp_path):
    layout = RunLayout(tmp_path / 'run').create()
    assert layout.checkpoints.is_dir() and layout.reports.is_dir() and layout.plots.is_dir()
    assert layout.checkpoint(500).name == 'iter_00000500.ckpt'
    assert layout.relative(layout.final_checkpoint) == 'checkpoints/final.ckpt'
    for iteration in (20, 3, 100):
        layout.checkpoint(iteration).write_bytes(b'x')
    layout.final_checkpoint.write_bytes(b'x')
    assert [p.name for p in layout.checkpoint_files()] == [
        'iter_00000003.ckpt', 'iter_00000020.ckpt', 'iter_00000100.ckpt'
    ]


def test_manifest_round_trip(tmp_path):
    layout = RunLayout(tmp_path).create()
    artifact = write_json(layout.reports / 'a.json', {'b': 1, 'a': [1, 2]})
    manifest = RunManifest('base', 'f' * 64).start()
    manifest.add(layout, 'reports/a', artifact)
    manifest.finish().save(layout)
    loaded = RunManifest.load(layout)
    assert loaded == manifest
    assert loaded.artifacts == {'reports/a': 'reports/a.json'}
    assert len(loaded.digests['reports/a']) == 64
    assert 'wall_clock_seconds' not in loaded.deterministic_dict()
    assert loaded.wall_clock_seconds >= 0.0


def test_json_is_sorted(tmp_path):
    path = write_json(tmp_path / 'x.json', {'b': 1, 'a': 2})
    assert path.read_text().index('"a"') < path.read_text().index('"b"')
    with pytest.raises(MissingArtifactError):
        read_json(tmp_path / 'missing.json')


def test_metrics_round_trip(tmp_path):
    path = write_metrics(tmp_path / 'metrics.csv', RECORDS)
    loaded = read_metrics(path)
    assert [r.to_row() for r in loaded] == [r.to_row() for r in RECORDS]


def test_empty_or_missing_metrics_name_the_file(tmp_path):
    empty = write_metrics(tmp_path / 'empty.csv', [])
    with pytest.raises(MissingArtifactError, match='empty.csv'):
        read_metrics(empty)
    with pytest.raises(FileNotFoundError, match='absent.csv'):
        read_metrics(tmp_path / 'absent.csv')


def test_sample_csv_records_latents(tmp_path):
    samples = np.array([[0.5, -1.0], [2.0, 0.25]])
    latents = np.array([[1.0, 2.0], [3.0, 4.0]])
    path = write_samples(tmp_path / 'samples' / 'class0.csv', samples, latents)
    with path.open() as f:
        rows = list(csv.DictReader(f))
    assert list(rows[0]) == ['index', 'x0', 'x1', 'z0', 'z1']
    assert float(rows[1]['x1']) == 0.25
    assert float(rows[1]['z0']) == 3.0


def test_run_label_prefers_manifest_name(tmp_path):
    layout = RunLayout(tmp_path / 'dir_name').create()
    assert run_label(layout.root) == 'dir_name'
    RunManifest('pretty', '0' * 64).save(layout)
    assert run_label(layout.root) == 'pretty'
