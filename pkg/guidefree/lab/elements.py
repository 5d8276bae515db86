import abc
from itertools import chain
from typing import Iterator, List, Optional, Tuple

import numpy as np
import pygame as pg

from guidefree.common.utils import hex_color
from guidefree.lab.coordinate_system import CoordinateSystem

POINT_RADIUS = 1.6
LINE_WIDTH = 1.8


class Element(abc.ABC):
    def __init__(self, name: str, color: pg.Color):
        self.name = name
        self.color = color
        self.visible = True

    @abc.abstractmethod
    def get_array(self) -> np.ndarray:
        """
        Returns the data coordinates of the element with shape (2, N).
        """

    @abc.abstractmethod
    def render_svg(self, coordinate_system: CoordinateSystem) -> List[str]:
        """
        SVG fragments of the element in canvas coordinates.
        """

    @abc.abstractmethod
    def render(self, screen: pg.Surface, coordinate_system: CoordinateSystem):
        """
        Draws the element onto a pygame surface.
        """

    def finite_array(self) -> np.ndarray:
        array = self.get_array()
        return array[:, np.all(np.isfinite(array), axis=0)]


class Curve(Element):
    def __init__(self, name: str, x: np.ndarray, y: np.ndarray, color: pg.Color, markers: bool = True):
        super().__init__(name, color)
        self.coordinates = np.vstack([np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)])
        self.markers = markers

    def get_array(self):
        return self.coordinates

    def render_svg(self, coordinate_system: CoordinateSystem) -> List[str]:
        canvas = coordinate_system.transform(self.finite_array())
        if canvas.shape[1] == 0:
            return []
        points = ' '.join('{:.2f},{:.2f}'.format(x, y) for x, y in canvas.T)
        fragments = ['<polyline fill="none" stroke="{}" stroke-width="{}" points="{}"/>'.format(
            hex_color(self.color), LINE_WIDTH, points)]
        if self.markers:
            fragments.extend('<circle cx="{:.2f}" cy="{:.2f}" r="2.5" fill="{}"/>'.format(x, y, hex_color(self.color))
                             for x, y in canvas.T)
        return fragments

    def render(self, screen: pg.Surface, coordinate_system: CoordinateSystem):
        canvas = coordinate_system.transform(self.finite_array()).T
        if len(canvas) >= 2:
            pg.draw.lines(screen, self.color, False, [tuple(p) for p in canvas], width=2)


class PointCloud(Element):
    def __init__(self, name: str, points: np.ndarray, color: pg.Color, radius: float = POINT_RADIUS):
        super().__init__(name, color)
        points = np.asarray(points, dtype=np.float64)
        if points.ndim == 2 and points.shape[1] == 1:
            points = np.hstack([points, np.zeros_like(points)])
        self.coordinates = points.T
        self.radius = radius

    def get_array(self):
        return self.coordinates

    def render_svg(self, coordinate_system: CoordinateSystem) -> List[str]:
        canvas = coordinate_system.transform(self.finite_array())
        color = hex_color(self.color)
        return [
            '<circle cx="{:.2f}" cy="{:.2f}" r="{}" fill="{}" fill-opacity="0.6"/>'.format(x, y, self.radius, color)
            for x, y in canvas.T
        ]

    def render(self, screen: pg.Surface, coordinate_system: CoordinateSystem):
        for position in coordinate_system.transform(self.finite_array()).T:
            pg.draw.circle(screen, self.color, tuple(position), max(int(round(self.radius)), 1))


class ElementBuffer:
    def __init__(self, elements: Optional[List[Element]] = None):
        self.elements: List[Element] = list(elements or [])

    def __iter__(self) -> Iterator[Element]:
        return iter(self.elements)

    def __len__(self):
        return len(self.elements)

    def add(self, element: Element) -> Element:
        self.elements.append(element)
        return element

    def data_bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        arrays = [e.finite_array() for e in self.elements if e.visible]
        stacked = np.hstack(arrays) if arrays else np.zeros((2, 0))
        if stacked.shape[1] == 0:
            return np.zeros(2), np.ones(2)
        return stacked.min(axis=1), stacked.max(axis=1)

    def render_svg(self, coordinate_system: CoordinateSystem) -> List[str]:
        return list(chain.from_iterable(e.render_svg(coordinate_system) for e in self.elements if e.visible))

    def render(self, screen: pg.Surface, coordinate_system: CoordinateSystem):
        for element in self.elements:
            if element.visible:
                element.render(screen, coordinate_system)
