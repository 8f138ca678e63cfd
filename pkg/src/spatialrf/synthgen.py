"""Synthetic autocorrelated landscapes and clustered sampling designs.

The benchmark mimics the structure of a remote-sensing case study: a few
predictor fields that drive the response, distractor fields that do not, a
smooth elevation-like surface, coordinate layers, and training samples
taken in a handful of tight spatial clusters. Only the signal fields enter
the response, so any importance a model gives to coordinates or elevation
is spurious by construction.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import ConfigError, DesignInfeasibleError
from .raster import RasterGrid, RasterStack, coordinate_layers
from .samples import SampleTable, Task, extract_at_samples


@dataclass(frozen=True)
class FieldSpec:
    ncols: int
    nrows: int
    autocorr_range: float
    cell_size: float = 1.0
    sill: float = 1.0
    seed: int = 0
    x_min: float = 0.0
    y_min: float = 0.0

    def check(self) -> None:
        if self.ncols < 16 or self.nrows < 16:
            raise ConfigError(f"field grid must be at least 16x16, got {self.nrows}x{self.ncols}")
        if not self.autocorr_range > 0:
            raise ConfigError("autocorrelation range must be positive")
        if self.autocorr_range >= min(self.ncols, self.nrows) / 4:
            raise ConfigError(
                f"autocorrelation range {self.autocorr_range} is too large for a "
                f"{self.nrows}x{self.ncols} grid (must be < {min(self.ncols, self.nrows) / 4})"
            )
        if not self.sill > 0 or not self.cell_size > 0:
            raise ConfigError("sill and cell size must be positive")


def gaussian_random_field(spec: FieldSpec) -> RasterGrid:
    """Seeded white noise smoothed by a Gaussian kernel, standardized.

    The kernel's standard deviation is ``autocorr_range`` cells and it is
    truncated at three times that. The result has mean 0 and variance
    ``sill`` over the grid.
    """
    spec.check()
    pad = int(math.ceil(3 * spec.autocorr_range))
    rng = np.random.default_rng(spec.seed)
    noise = rng.standard_normal((spec.nrows + 2 * pad, spec.ncols + 2 * pad))
    smooth = gaussian_filter(noise, sigma=spec.autocorr_range, truncate=3.0, mode="constant")
    field_ = smooth[pad : pad + spec.nrows, pad : pad + spec.ncols]
    field_ = (field_ - field_.mean()) / field_.std() * math.sqrt(spec.sill)
    return RasterGrid(field_, spec.x_min, spec.y_min, spec.cell_size)


@dataclass(frozen=True)
class DesignSpec:
    n_clusters: int = 11
    cluster_radius: float = 4.0
    samples_per_cluster: int = 49  # every cell of a radius-4 disc
    seed: int = 1
    max_tries: int = 10_000

    def check(self) -> None:
        if self.n_clusters < 2:
            raise ConfigError("a clustered design needs at least two clusters")
        if self.cluster_radius < 0 or self.samples_per_cluster < 1:
            raise ConfigError("cluster radius must be >= 0 and samples per cluster >= 1")


def clustered_design(template: RasterGrid, spec: DesignSpec) -> list[tuple[int, int, float, float]]:
    """Sample locations grouped in circular clusters.

    Cluster centers are cell centers drawn by rejection sampling so that
    every cluster lies a radius away from the grid edge and centers are at
    least four radii apart. A cluster contains the cell centers within the
    radius of its center, subsampled to ``samples_per_cluster``.
    Returns ``(id, group, x, y)`` tuples.
    """
    spec.check()
    rng = np.random.default_rng(spec.seed)
    margin = int(math.ceil(spec.cluster_radius))
    rows = template.nrows - 2 * margin
    cols = template.ncols - 2 * margin
    if rows < 1 or cols < 1:
        raise DesignInfeasibleError("cluster radius leaves no room for cluster centers")
    min_dist = 4 * spec.cluster_radius
    centers: list[tuple[int, int]] = []
    tries = 0
    while len(centers) < spec.n_clusters:
        if tries >= spec.max_tries:
            raise DesignInfeasibleError(
                f"placed only {len(centers)} of {spec.n_clusters} clusters after {tries} draws"
            )
        tries += 1
        r = margin + int(rng.integers(rows))
        c = margin + int(rng.integers(cols))
        if all(math.hypot(r - r0, c - c0) >= min_dist for r0, c0 in centers):
            centers.append((r, c))

    xs, ys = template.cell_centers()
    out = []
    next_id = 0
    offsets = [
        (dr, dc)
        for dr in range(-margin, margin + 1)
        for dc in range(-margin, margin + 1)
        if math.hypot(dr, dc) <= spec.cluster_radius
    ]
    for group, (r, c) in enumerate(centers):
        cells = [(r + dr, c + dc) for dr, dc in offsets]
        if len(cells) > spec.samples_per_cluster:
            keep = np.sort(rng.choice(len(cells), spec.samples_per_cluster, replace=False))
            cells = [cells[i] for i in keep]
        for rr, cc in cells:
            out.append((next_id, group, float(xs[cc]), float(ys[rr])))
            next_id += 1
    return out


@dataclass(frozen=True)
class BenchmarkSpec:
    """Every constant of a synthetic benchmark; recorded in its description."""

    ncols: int = 256
    nrows: int = 256
    cell_size: float = 10.0
    n_signal: int = 2
    n_distractor: int = 2
    signal_range: float = 12.0
    distractor_range: float = 2.0
    elevation_range: float | None = None  # None: just under a quarter grid
    signal_weights: tuple = (1.0, -0.5)
    step_weight: float = 1.0
    step_threshold: float = 0.5
    noise_fraction: float = 0.3
    noise_range: float = 0.0  # 0 gives spatially white noise
    n_classes: int = 4
    design: DesignSpec = field(default_factory=DesignSpec)
    seed: int = 1

    def check(self) -> None:
        if self.n_signal < 1:
            raise ConfigError("a benchmark needs at least one signal field")
        if len(self.signal_weights) != self.n_signal:
            raise ConfigError(
                f"{len(self.signal_weights)} signal weights for {self.n_signal} signal fields"
            )
        if self.n_classes < 2:
            raise ConfigError("classification benchmarks need at least two classes")
        if self.noise_fraction < 0:
            raise ConfigError("noise fraction must be >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["signal_weights"] = list(self.signal_weights)
        return d


@dataclass(eq=False)
class Benchmark:
    table: SampleTable
    stack: RasterStack
    response: RasterGrid
    description: dict


def _sub_seeds(seed: int, n: int) -> list[int]:
    return [int(s) for s in np.random.SeedSequence(int(seed)).generate_state(n, dtype=np.uint32)]


def signal_response(signals, spec: BenchmarkSpec) -> np.ndarray:
    """Noise-free response: linear in the signals plus a step on signal 1."""
    out = np.zeros_like(signals[0])
    for w, s in zip(spec.signal_weights, signals):
        out = out + w * s
    return out + spec.step_weight * (signals[0] > spec.step_threshold)


def make_benchmark(task="regression", seed: int | None = None, spec: BenchmarkSpec | None = None) -> Benchmark:
    """Build the stack, response surface and clustered sample table."""
    spec = spec or BenchmarkSpec()
    if seed is not None:
        spec = replace(spec, seed=int(seed), design=replace(spec.design, seed=int(seed)))
    spec.check()
    task = Task.parse(task)
    n_fields = spec.n_signal + spec.n_distractor + 2
    seeds = _sub_seeds(spec.seed, n_fields + 1)
    elevation_range = spec.elevation_range or (min(spec.ncols, spec.nrows) / 4 - 1)

    def grf(rng_range, s):
        return gaussian_random_field(
            FieldSpec(spec.ncols, spec.nrows, rng_range, spec.cell_size, seed=s)
        )

    signals = [grf(spec.signal_range, seeds[i]) for i in range(spec.n_signal)]
    distractors = [grf(spec.distractor_range, seeds[spec.n_signal + i]) for i in range(spec.n_distractor)]
    elevation = grf(elevation_range, seeds[n_fields - 2])
    if spec.noise_range > 0:
        latent = grf(spec.noise_range, seeds[n_fields - 1]).values
    else:
        latent = np.random.default_rng(seeds[n_fields - 1]).standard_normal((spec.nrows, spec.ncols))
        latent = (latent - latent.mean()) / latent.std()

    clean = signal_response([g.values for g in signals], spec)
    noise_sd = spec.noise_fraction * float(clean.std())
    response = clean + noise_sd * latent
    template = signals[0]

    bands = [(f"signal_{i + 1}", g) for i, g in enumerate(signals)]
    bands += [(f"distractor_{i + 1}", g) for i, g in enumerate(distractors)]
    bands.append(("elevation", elevation))
    stack = RasterStack(tuple(bands)).merge(coordinate_layers(template))

    description = {
        "task": task.value,
        "spec": spec.to_dict(),
        "elevation_range": elevation_range,
        "noise_sd": noise_sd,
        "response": (
            "sum_i signal_weights[i] * signal_{i+1} + step_weight * [signal_1 > step_threshold]"
            " + noise_sd * latent, latent a standardized GRF of range noise_range"
        ),
        "causal_features": [f"signal_{i + 1}" for i in range(spec.n_signal)],
        "non_causal_features": [n for n, _ in stack.bands if not n.startswith("signal_")],
    }
    if task is Task.CLASSIFICATION:
        cuts = np.quantile(response, np.linspace(0, 1, spec.n_classes + 1)[1:-1])
        classes = np.searchsorted(cuts, response, side="right")
        description["class_cuts"] = [float(c) for c in cuts]
        description["classes"] = [f"class_{i}" for i in range(spec.n_classes)]
        response_grid = RasterGrid(classes.astype(float), template.x_min, template.y_min, template.cell_size)
    else:
        response_grid = RasterGrid(response, template.x_min, template.y_min, template.cell_size)

    design = clustered_design(template, spec.design)
    description["n_samples"] = len(design)
    points = []
    for sid, group, x, y in design:
        r, c = template.cell_index(x, y)
        value = response_grid.values[r, c]
        points.append((sid, group, x, y, f"class_{int(value)}" if task is Task.CLASSIFICATION else float(value)))
    table = extract_at_samples(stack, points, task)
    return Benchmark(table, stack, response_grid, description)
