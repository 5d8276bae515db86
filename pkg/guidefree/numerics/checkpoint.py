"""
Checkpoint file format.

A fixed-size little-endian header (see HEADER_DTYPE) followed by every parameter buffer of the model, in parameter
order (W_0, b_0, ..., W_H, b_H, E), as row-major little-endian float64. Identical state gives identical bytes.
"""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from guidefree.common.utils import CheckpointFormatError, MissingArtifactError, ShapeError
from guidefree.numerics.network import DenoiserModel

logger = logging.getLogger(__name__)

MAGIC = b'GFDENOIS'
FORMAT_VERSION = 1

HEADER_DTYPE = np.dtype([
    ('magic', 'S8'),
    ('version', '<u4'),
    ('data_dim', '<u4'),
    ('hidden_layers', '<u4'),
    ('width', '<u4'),
    ('num_classes', '<u4'),
    ('embedding_dim', '<u4'),
    ('iteration', '<u8'),
    ('seed', '<u8'),
    ('sigma_data', '<f8'),
])


@dataclass
class Checkpoint:
    model: DenoiserModel
    iteration: int
    seed: int


def to_bytes(model: DenoiserModel, iteration: int, seed: int) -> bytes:
    header = np.zeros(1, dtype=HEADER_DTYPE)
    header[0] = (
        MAGIC, FORMAT_VERSION, model.data_dim, model.hidden_layers, model.width, model.num_classes,
        model.embedding_dim, iteration, seed, model.sigma_data
    )
    chunks = [header.tobytes()]
    for p in model.params:
        chunks.append(np.ascontiguousarray(p, dtype='<f8').tobytes())
    return b''.join(chunks)


def from_bytes(data: bytes) -> Checkpoint:
    if len(data) < HEADER_DTYPE.itemsize:
        raise ShapeError('checkpoint truncated: {} bytes'.format(len(data)))
    header = np.frombuffer(data, dtype=HEADER_DTYPE, count=1)[0]
    if header['magic'] != MAGIC:
        raise CheckpointFormatError('not a checkpoint file (magic {!r})'.format(header['magic']))
    if header['version'] != FORMAT_VERSION:
        raise CheckpointFormatError('unsupported checkpoint version {}'.format(header['version']))

    shell = DenoiserModel(
        int(header['data_dim']), int(header['num_classes']), int(header['hidden_layers']), int(header['width']),
        int(header['embedding_dim']), float(header['sigma_data'])
    )
    expected = HEADER_DTYPE.itemsize + 8 * shell.num_parameters()
    if len(data) != expected:
        raise ShapeError('checkpoint has {} bytes, architecture needs {}'.format(len(data), expected))

    params = []
    offset = HEADER_DTYPE.itemsize
    for shape in shell.shapes():
        count = int(np.prod(shape))
        params.append(np.frombuffer(data, dtype='<f8', count=count, offset=offset).reshape(shape).astype(np.float64))
        offset += 8 * count
    return Checkpoint(shell.with_params(params), int(header['iteration']), int(header['seed']))


def save_checkpoint(path: Path, model: DenoiserModel, iteration: int, seed: int) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(to_bytes(model, iteration, seed))
    logger.info('wrote checkpoint %s (iteration %d)', path, iteration)
    return path


def load_checkpoint(path: Path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise MissingArtifactError('checkpoint not found: {}'.format(path))
    return from_bytes(path.read_bytes())


def file_digest(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
