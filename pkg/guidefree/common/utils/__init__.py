from typing import Sequence

import numpy as np
import pygame as pg


NULL_CLASS = -1


class GuidefreeError(Exception):
    pass


class ConfigError(GuidefreeError, ValueError):
    def __init__(self, field_path: str, message: str):
        super().__init__('{}: {}'.format(field_path, message))
        self.field_path = field_path


class ShapeError(GuidefreeError, ValueError):
    pass


class CheckpointFormatError(GuidefreeError, ValueError):
    pass


class MissingArtifactError(GuidefreeError, FileNotFoundError):
    pass


class NormalizationError(GuidefreeError, ValueError):
    pass


class DivergenceError(GuidefreeError, ArithmeticError):
    def __init__(self, iteration: int, message: str = 'non-finite value'):
        super().__init__('{} at iteration {}'.format(message, iteration))
        self.iteration = iteration


class ConvergenceError(GuidefreeError, ArithmeticError):
    def __init__(self, iterations: int, residual: float):
        super().__init__('no convergence after {} iterations (residual {:.3e})'.format(iterations, residual))
        self.iterations = iterations
        self.residual = residual


def gray(b=127) -> pg.Color:
    return pg.Color(b, b, b)


class Colors:
    BACKGROUND = gray(255)
    AXIS = gray(60)
    GRID = gray(225)
    TEXT = gray(40)


CLASS_COLORS = [
    pg.Color(31, 119, 180),
    pg.Color(214, 39, 40),
    pg.Color(44, 160, 44),
    pg.Color(148, 103, 189),
    pg.Color(255, 127, 14),
    pg.Color(140, 86, 75),
]


def class_color(class_id: int) -> pg.Color:
    if class_id == NULL_CLASS:
        return gray(120)
    return CLASS_COLORS[class_id % len(CLASS_COLORS)]


def hex_color(color: pg.Color) -> str:
    return '#{:02x}{:02x}{:02x}'.format(color.r, color.g, color.b)


def format_float(f):
    return '{:.4g}'.format(f)


def as_rows(x, dim: int) -> np.ndarray:
    """
    Makes sure x is a float64 array of shape [N, dim]. A single point of shape [dim] becomes [1, dim].
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape == (dim,):
        x = x.reshape(1, dim)
    if x.ndim != 2 or x.shape[1] != dim:
        raise ShapeError('expected points of dimension {}, got shape {}'.format(dim, x.shape))
    return x


def per_row(value, n: int, dtype=np.float64) -> np.ndarray:
    """
    Broadcasts a scalar or a length-n sequence to an array of shape [n].
    """
    arr = np.asarray(value, dtype=dtype)
    if arr.ndim == 0:
        return np.full(n, arr, dtype=dtype)
    if arr.shape != (n,):
        raise ShapeError('expected {} values, got shape {}'.format(n, arr.shape))
    return arr


def total_variation(p: Sequence[float], q: Sequence[float]) -> float:
    return 0.5 * float(np.abs(np.asarray(p, dtype=np.float64) - np.asarray(q, dtype=np.float64)).sum())

