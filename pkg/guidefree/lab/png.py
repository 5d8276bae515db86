"""
Raster previews of sample scatters, drawn headless onto a pygame Surface.
"""
import logging
from pathlib import Path
from typing import Sequence

import numpy as np
import pygame as pg

from guidefree.common.utils import Colors
from guidefree.lab.coordinate_system import DEFAULT_CANVAS_SIZE, CoordinateSystem, padded_range, ticks
from guidefree.lab.elements import ElementBuffer

logger = logging.getLogger(__name__)


def draw_coordinate_system(screen: pg.Surface, coordinate_system: CoordinateSystem, x_range, y_range):
    for x in ticks(*x_range):
        top = coordinate_system.transform(np.array([x, y_range[1]]))
        bottom = coordinate_system.transform(np.array([x, y_range[0]]))
        color = Colors.AXIS if x == 0 else Colors.GRID
        pg.draw.line(screen, color, tuple(top), tuple(bottom))
    for y in ticks(*y_range):
        left = coordinate_system.transform(np.array([x_range[0], y]))
        right = coordinate_system.transform(np.array([x_range[1], y]))
        color = Colors.AXIS if y == 0 else Colors.GRID
        pg.draw.line(screen, color, tuple(left), tuple(right))


def render_png(path: Path, buffer: ElementBuffer, canvas_size: Sequence[int] = tuple(DEFAULT_CANVAS_SIZE),
               x_range=None, y_range=None) -> Path:
    low, high = buffer.data_bounds()
    x_range = x_range or padded_range(np.array([low[0], high[0]]))
    y_range = y_range or padded_range(np.array([low[1], high[1]]))
    coordinate_system = CoordinateSystem.fit(x_range, y_range, canvas_size)

    screen = pg.Surface(tuple(int(v) for v in canvas_size))
    screen.fill(Colors.BACKGROUND)
    draw_coordinate_system(screen, coordinate_system, x_range, y_range)
    buffer.render(screen, coordinate_system)

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pg.image.save(screen, str(path))
    logger.info('wrote %s', path)
    return path
