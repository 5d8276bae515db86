from __future__ import annotations

import numbers
from typing import Sequence, Tuple

import numpy as np

DEFAULT_CANVAS_SIZE = np.array([640, 480])
DEFAULT_MARGIN = 56
TARGET_NUM_TICKS = 6
TARGET_DIVIDENDS = [1, 2, 2.5, 5, 10]


class CoordinateSystem:
    """
    Affine map from data coordinates to canvas pixels (y pointing down).
    """
    def __init__(self, coord: np.ndarray, canvas_size: Sequence[int] = tuple(DEFAULT_CANVAS_SIZE)):
        self.coord: np.ndarray = coord
        self.canvas_size = np.asarray(canvas_size)

    @classmethod
    def fit(cls, x_range: Tuple[float, float], y_range: Tuple[float, float],
            canvas_size: Sequence[int] = tuple(DEFAULT_CANVAS_SIZE), margin: int = DEFAULT_MARGIN) -> CoordinateSystem:
        """
        Maps the data box x_range * y_range onto the canvas minus `margin` pixels on every side.
        """
        x_range, y_range = _widen(x_range), _widen(y_range)
        width, height = np.asarray(canvas_size) - 2 * margin
        scale = (width / (x_range[1] - x_range[0]), -height / (y_range[1] - y_range[0]))
        to_origin = create_affine_transformation(translation=(-x_range[0], -y_range[0]))
        to_canvas = create_affine_transformation(translation=(margin, margin + height), scale=scale)
        return cls(to_canvas @ to_origin, canvas_size)

    def transform(self, mat: np.ndarray):
        """
        Transform the given points with the internal coordinates.

        :param mat: Column vectors with shape [2, N], or a single point of shape [2].
        :return: Canvas positions with the same shape.
        """
        return transform(self.coord, mat)

    def transform_inverse(self, mat: np.ndarray):
        inv = np.linalg.pinv(self.coord)
        return transform(inv, mat)

    def data_box(self) -> np.ndarray:
        """
        Data coordinates of the canvas corners [[x_min, y_min], [x_max, y_max]].
        """
        corners = np.array([[0, self.canvas_size[1]], [self.canvas_size[0], 0]], dtype=np.float64).T
        return self.transform_inverse(corners).T


def _widen(bounds: Tuple[float, float]) -> Tuple[float, float]:
    low, high = float(bounds[0]), float(bounds[1])
    if high - low < 1e-12:
        pad = max(abs(low), 1.0) * 0.5
        return low - pad, high + pad
    return low, high


def create_affine_transformation(
        translation: numbers.Number | Tuple[numbers.Number, numbers.Number] | np.ndarray = 0,
        scale: numbers.Number | Tuple[numbers.Number, numbers.Number] | np.ndarray = 1
) -> np.ndarray:
    if isinstance(scale, numbers.Number):
        scale = (scale, scale)
    scale_coord = np.array(
        [[scale[0], 0, 0],
         [0, scale[1], 0],
         [0, 0, 1]], dtype=np.float64
    )
    if isinstance(translation, numbers.Number):
        translation = (translation, translation)
    translate_coord = np.array(
        [[1, 0, translation[0]],
         [0, 1, translation[1]],
         [0, 0, 1]], dtype=np.float64
    )
    return translate_coord @ scale_coord


def transform(transform_matrix: np.ndarray, mat: np.ndarray):
    """
    Computes transform_matrix @ mat. A [3, 3] matrix pads mat of shape [2, N] with a row of ones; a single point of
    shape [2] is treated as [2, 1] and returned as [2].
    """
    expanded = False
    mat = np.asarray(mat, dtype=np.float64)
    if mat.shape == (2,):
        mat = mat.reshape((2, 1))
        expanded = True

    padded = False
    if transform_matrix.shape == (3, 3):
        mat = np.concatenate([mat, np.ones((1, mat.shape[1]))], axis=0)
        padded = True

    result = transform_matrix @ mat

    if expanded:
        result = result[:, 0]
    if padded:
        result = result[:-1]
    return result


def adapt_quotient(quotient: float) -> float:
    """
    Rounds a tick spacing to the closest 1, 2, 2.5 or 5 times a power of ten.
    """
    if quotient <= 0 or not np.isfinite(quotient):
        raise ValueError('Invalid quotient: {}'.format(quotient))
    numb_ten_potency = 0
    while quotient > 10:
        quotient *= 0.1
        numb_ten_potency += 1
    while quotient < 1:
        quotient *= 10
        numb_ten_potency -= 1

    diffs = [abs(quotient - target) for target in TARGET_DIVIDENDS]
    index = int(np.argmin(diffs))
    return TARGET_DIVIDENDS[index] * (10.0 ** numb_ten_potency)


def ticks(low: float, high: float, target_num_ticks: int = TARGET_NUM_TICKS) -> np.ndarray:
    """
    Evenly spaced round values covering [low, high].
    """
    low, high = _widen((low, high))
    dividend = adapt_quotient((high - low) / target_num_ticks)
    first = np.ceil(low / dividend - 1e-9) * dividend
    values = np.arange(first, high + 1e-9 * dividend, dividend)
    values[np.abs(values) < 1e-12 * dividend] = 0.0
    return values


def padded_range(values: np.ndarray, fraction: float = 0.05) -> Tuple[float, float]:
    values = np.asarray(values, dtype=np.float64)
    values = values[np.isfinite(values)]
    if values.size == 0:
        return 0.0, 1.0
    low, high = float(values.min()), float(values.max())
    pad = fraction * (high - low)
    return _widen((low - pad, high + pad))


def test_single_dimension():
    coordinate_system = CoordinateSystem.fit((-1, 1), (-1, 1))

    point = coordinate_system.transform(np.array([1.0, -1.0]))
    assert tuple(point.shape) == (2,), point.shape
    expected = DEFAULT_CANVAS_SIZE - DEFAULT_MARGIN
    np.testing.assert_allclose(point, expected)


def test_multi_dimension():
    coordinate_system = CoordinateSystem.fit((0, 10), (0, 5))

    points = np.array([[0, 0], [10, 5], [5, 2.5]]).T
    canvas = coordinate_system.transform(points)
    assert canvas.shape == (2, 3)
    np.testing.assert_allclose(coordinate_system.transform_inverse(canvas), points, atol=1e-9)


def test_y_axis_points_down():
    coordinate_system = CoordinateSystem.fit((0, 1), (0, 1))
    low, high = coordinate_system.transform(np.array([[0, 0], [0, 1]]).T).T
    assert high[1] < low[1]


def test_adapt_quotient():
    assert adapt_quotient(0.21) == 0.2
    assert adapt_quotient(3.9) == 5
    assert adapt_quotient(240) == 250


def test_ticks_cover_range():
    values = ticks(-0.3, 2.1)
    assert values[0] >= -0.3 and values[-1] <= 2.1
    assert 0.0 in values
    assert len(values) >= 3
