"""End-to-end driver: footprints to graph, graph to metric table."""

from __future__ import annotations

import logging
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cgraph import CompressedCsr, build_from_source, hilbert_reorder, load_vgacsr, save_vgacsr
from .errors import InputError
from .geometry import Polygon, generate_grid, load_boundary, load_buildings, rasterize_obstacles
from .hll import MAX_PRECISION, MIN_PRECISION, HllParams
from .hyperball import run as hyperball_run
from .metrics import MetricTable, mean_depth, metric_table
from .oracle import depth_entropy, exact_bfs_all
from .sparksieve import SweepParams, visible_sources

log = logging.getLogger("hypervga")

MODES = ("hyperball", "exact")


@dataclass
class RunConfig:
    buildings: Path | None = None
    boundary: Path | None = None
    spacing: float = 5.0
    radius: float = math.inf  # metres
    depth: int | None = None  # None means unlimited
    precision: int = 10
    mode: str = "hyperball"
    hilbert: bool = False
    graph: Path | None = None
    out: Path | None = None
    mmap: bool = False
    threads: int = field(default_factory=lambda: os.cpu_count() or 1)

    def validate(self) -> None:
        if not MIN_PRECISION <= self.precision <= MAX_PRECISION:
            raise InputError(f"precision must be in [{MIN_PRECISION}, {MAX_PRECISION}], "
                             f"got {self.precision}")
        if not self.spacing > 0:
            raise InputError(f"spacing must be > 0, got {self.spacing}")
        if not self.radius > 0:
            raise InputError(f"radius must be > 0 or unlimited, got {self.radius}")
        if self.depth is not None and self.depth < 1:
            raise InputError(f"depth must be >= 1 or unlimited, got {self.depth}")
        if self.mode not in MODES:
            raise InputError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.threads < 1:
            raise InputError("threads must be >= 1")


class PhaseTimer:
    """Monotonic wall time per named phase."""

    def __init__(self):
        self.phases: dict[str, float] = {}

    def __call__(self, name: str):
        return _Phase(self, name)

    def report(self) -> str:
        return " ".join(f"{k}={v:.3f}s" for k, v in self.phases.items())


class _Phase:
    def __init__(self, timer: PhaseTimer, name: str):
        self.timer, self.name = timer, name

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        dt = time.perf_counter() - self.t0
        self.timer.phases[self.name] = self.timer.phases.get(self.name, 0.0) + dt
        log.info("phase %s: %.3f s", self.name, dt)


def build_graph(boundary: Polygon, buildings: list[Polygon], spacing: float,
                radius: float = math.inf, *, threads: int = 1, hilbert: bool = False,
                timer: PhaseTimer | None = None) -> CompressedCsr:
    timer = timer or PhaseTimer()
    with timer("grid"):
        grid, nodes = generate_grid(boundary, buildings, spacing)
        obstacles = rasterize_obstacles(buildings, grid)
    params = SweepParams(radius)
    n = len(nodes)
    batch = max(64, min(10_000, -(-n // (4 * threads))))

    def produce(start: int, stop: int):
        return visible_sources(np.arange(start, stop), grid, nodes, obstacles, params)

    with timer("visibility"):
        csr = build_from_source(produce, n, batch_size=batch, workers=threads, grid=grid,
                                cell_index=nodes.cell_of_node)
    if hilbert:
        with timer("hilbert"):
            csr = hilbert_reorder(csr)
    log.info("graph: %d nodes, %d directed edges, %d stream bytes",
             csr.n_nodes, csr.edge_count, csr.stream.size)
    return csr


@dataclass
class AnalysisResult:
    table: MetricTable
    iterations: int
    converged: bool
    timer: PhaseTimer


def analyze(graph: CompressedCsr, mode: str = "hyperball", precision: int = 10,
            depth: int | None = None, timer: PhaseTimer | None = None) -> AnalysisResult:
    timer = timer or PhaseTimer()
    if mode == "hyperball":
        params = HllParams(precision)
        with timer("bfs"):
            state = hyperball_run(graph, params, depth)
        log.info("hyperball: %d iterations (%d steps), converged=%s",
                 state.iteration, state.steps, state.converged)
        with timer("metrics"):
            table = metric_table(graph, state.sum_d, state.sum_d2)
        return AnalysisResult(table, state.iteration, state.converged, timer)
    if mode == "exact":
        with timer("bfs"):
            res = exact_bfs_all(graph, depth)
        with timer("metrics"):
            sum_d = res.sum_d.astype(np.float64)
            md = mean_depth(sum_d, graph.node_sizes())
            ent, rel = depth_entropy(res.depth_hist, md)
            table = metric_table(graph, sum_d, res.sum_d2.astype(np.float64), ent, rel)
        depth_reached = res.max_depth
        return AnalysisResult(table, depth_reached, True, timer)
    raise InputError(f"unknown mode {mode!r}")


def load_or_build(config: RunConfig, timer: PhaseTimer) -> CompressedCsr:
    """Use the cached graph when it exists, otherwise build from footprints."""
    if config.boundary is None and config.graph is not None:
        with timer("load"):
            graph = load_vgacsr(config.graph, mmap=config.mmap)
        if config.hilbert and graph.hilbert_inverse is None:
            with timer("hilbert"):
                graph = hilbert_reorder(graph)
        return graph
    if config.boundary is None:
        raise InputError("need --boundary (and optionally --buildings) or an existing --graph")
    boundary = load_boundary(config.boundary)
    buildings = load_buildings(config.buildings) if config.buildings else []
    graph = build_graph(boundary, buildings, config.spacing, config.radius,
                        threads=config.threads, hilbert=config.hilbert, timer=timer)
    if config.graph is not None:
        with timer("serialize"):
            save_vgacsr(graph, config.graph)
    return graph
