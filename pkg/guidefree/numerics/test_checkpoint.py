import numpy as np
import pytest

from guidefree.common.utils import CheckpointFormatError, MissingArtifactError, ShapeError
from guidefree.numerics.checkpoint import (
    HEADER_DTYPE, file_digest, from_bytes, load_checkpoint, save_checkpoint, to_bytes
)
from guidefree.numerics.network import init_model
from guidefree.numerics.rng import make_rng


def test_checkpoint_restores_identical_state(tmp_path):
    model = init_model(2, 3, make_rng(1), hidden_layers=2, width=16, sigma_data=1.3)
    path = save_checkpoint(tmp_path / 'ckpt.bin', model, iteration=42, seed=9)
    restored = load_checkpoint(path)
    assert restored.iteration == 42 and restored.seed == 9
    assert restored.model.sigma_data == 1.3
    assert restored.model.shapes() == model.shapes()
    for a, b in zip(model.params, restored.model.params):
        assert np.array_equal(a, b)


def test_same_state_same_bytes(tmp_path):
    a = save_checkpoint(tmp_path / 'a.bin', init_model(2, 2, make_rng(5), width=8), 0, 5)
    b = save_checkpoint(tmp_path / 'b.bin', init_model(2, 2, make_rng(5), width=8), 0, 5)
    assert file_digest(a) == file_digest(b)


def test_layout_is_header_then_float64_buffers():
    model = init_model(2, 2, make_rng(2), hidden_layers=1, width=4, embedding_dim=2)
    data = to_bytes(model, 3, 4)
    assert len(data) == HEADER_DTYPE.itemsize + 8 * model.num_parameters()
    first = np.frombuffer(data, dtype='<f8', count=model.params[0].size, offset=HEADER_DTYPE.itemsize)
    assert np.array_equal(first, model.params[0].ravel())


def test_rejects_truncated_and_foreign_files():
    model = init_model(2, 2, make_rng(2), hidden_layers=1, width=4)
    data = to_bytes(model, 0, 0)
    with pytest.raises(ShapeError):
        from_bytes(data[:-8])
    with pytest.raises(CheckpointFormatError, match='magic'):
        from_bytes(b'NOTACKPT' + data[8:])
    newer = np.frombuffer(data[:HEADER_DTYPE.itemsize], dtype=HEADER_DTYPE).copy()
    newer['version'] = 2
    with pytest.raises(CheckpointFormatError, match='version 2'):
        from_bytes(newer.tobytes() + data[HEADER_DTYPE.itemsize:])


def test_missing_checkpoint_is_a_missing_artifact(tmp_path):
    with pytest.raises(MissingArtifactError, match='nothing.ckpt'):
        load_checkpoint(tmp_path / 'nothing.ckpt')
