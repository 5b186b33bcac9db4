"""Synthetic towns: a square study area with random rectangular buildings."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Polygon


@dataclass
class Town:
    boundary: Polygon
    buildings: list[Polygon]


def make_town(seed: int, size: float = 200.0, n_buildings: int = 25,
              min_side: float = 8.0, max_side: float = 30.0) -> Town:
    """Square town of side ``size`` metres with axis-aligned random blocks.

    Blocks may overlap each other; they are kept a little inside the
    boundary so open space stays connected around the edge.
    """
    rng = np.random.default_rng(seed)
    margin = 0.05 * size
    buildings = []
    for _ in range(n_buildings):
        w, h = rng.uniform(min_side, max_side, size=2)
        x0 = rng.uniform(margin, size - margin - w)
        y0 = rng.uniform(margin, size - margin - h)
        buildings.append(Polygon.rectangle(float(x0), float(y0), float(x0 + w), float(y0 + h)))
    return Town(Polygon.rectangle(0.0, 0.0, size, size), buildings)
