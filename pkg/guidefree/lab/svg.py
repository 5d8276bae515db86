"""
Plain SVG charts: grid, axes with round ticks, curves or point clouds, and a legend.
"""
from __future__ import annotations

import logging
from pathlib import Path
from typing import List, Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

from guidefree.common.utils import Colors, format_float, hex_color
from guidefree.lab.coordinate_system import (
    DEFAULT_CANVAS_SIZE, DEFAULT_MARGIN, CoordinateSystem, padded_range, ticks
)
from guidefree.lab.elements import ElementBuffer

logger = logging.getLogger(__name__)

FONT = 'font-family="sans-serif" font-size="11"'


def _text(x: float, y: float, content: str, anchor: str = 'middle', extra: str = '') -> str:
    return '<text x="{:.2f}" y="{:.2f}" text-anchor="{}" fill="{}" {} {}>{}</text>'.format(
        x, y, anchor, hex_color(Colors.TEXT), FONT, extra, escape(content))


def _grid(coordinate_system: CoordinateSystem, x_range, y_range) -> List[str]:
    fragments = []
    width, height = coordinate_system.canvas_size
    grid, axis = hex_color(Colors.GRID), hex_color(Colors.AXIS)
    for x in ticks(*x_range):
        cx = coordinate_system.transform(np.array([x, y_range[0]]))[0]
        fragments.append('<line x1="{0:.2f}" y1="{1}" x2="{0:.2f}" y2="{2}" stroke="{3}"/>'.format(
            cx, DEFAULT_MARGIN, height - DEFAULT_MARGIN, grid))
        fragments.append(_text(cx, height - DEFAULT_MARGIN + 16, format_float(x)))
    for y in ticks(*y_range):
        cy = coordinate_system.transform(np.array([x_range[0], y]))[1]
        fragments.append('<line x1="{1}" y1="{0:.2f}" x2="{2}" y2="{0:.2f}" stroke="{3}"/>'.format(
            cy, DEFAULT_MARGIN, width - DEFAULT_MARGIN, grid))
        fragments.append(_text(DEFAULT_MARGIN - 6, cy + 4, format_float(y), anchor='end'))
    fragments.append('<rect x="{0}" y="{0}" width="{1}" height="{2}" fill="none" stroke="{3}"/>'.format(
        DEFAULT_MARGIN, width - 2 * DEFAULT_MARGIN, height - 2 * DEFAULT_MARGIN, axis))
    return fragments


def _legend(buffer: ElementBuffer, canvas_width: int) -> List[str]:
    fragments = []
    x = canvas_width - DEFAULT_MARGIN - 140
    for i, element in enumerate(e for e in buffer if e.visible and e.name):
        y = DEFAULT_MARGIN + 14 + 16 * i
        fragments.append('<rect x="{}" y="{}" width="10" height="10" fill="{}"/>'.format(
            x, y - 9, hex_color(element.color)))
        fragments.append(_text(x + 16, y, element.name, anchor='start'))
    return fragments


def render_chart(buffer: ElementBuffer, title: str = '', x_label: str = '', y_label: str = '',
                 canvas_size: Sequence[int] = tuple(DEFAULT_CANVAS_SIZE), x_range=None, y_range=None,
                 legend: bool = True) -> str:
    """
    Renders every element of the buffer into one SVG document. Axis ranges default to the padded data bounds.
    """
    low, high = buffer.data_bounds()
    x_range = x_range or padded_range(np.array([low[0], high[0]]))
    y_range = y_range or padded_range(np.array([low[1], high[1]]))
    coordinate_system = CoordinateSystem.fit(x_range, y_range, canvas_size)
    width, height = (int(v) for v in canvas_size)

    fragments = [
        '<svg xmlns="http://www.w3.org/2000/svg" width="{0}" height="{1}" viewBox="0 0 {0} {1}">'.format(width, height),
        '<rect width="100%" height="100%" fill="{}"/>'.format(hex_color(Colors.BACKGROUND)),
    ]
    fragments += _grid(coordinate_system, x_range, y_range)
    fragments.append('<g>')
    fragments += buffer.render_svg(coordinate_system)
    fragments.append('</g>')
    if title:
        fragments.append(_text(width / 2, DEFAULT_MARGIN / 2, title, extra='font-weight="bold"'))
    if x_label:
        fragments.append(_text(width / 2, height - 12, x_label))
    if y_label:
        fragments.append(_text(16, height / 2, y_label, extra='transform="rotate(-90 16 {})"'.format(height / 2)))
    if legend:
        fragments += _legend(buffer, width)
    fragments.append('</svg>')
    return '\n'.join(fragments) + '\n'


def write_svg(path: Path, document: str, label: Optional[str] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(document, encoding='utf-8')
    logger.info('wrote %s', label or path)
    return path
