"""Discrete parameter grids, sampled subsets and nearest-neighbor queries.

The training loop operates on a finite tensor-product grid of parameter
points. Points are addressed by a flat index in row-major order (dimension 0
slowest), which fixes the index <-> coordinate mapping used by serialization
and the audit log.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ParamPoint = np.ndarray  # 1-D float vector of length space.dim


@dataclass(frozen=True)
class DiscreteParamSpace:
    """Inclusive tensor-product grid over per-dimension [min, max] ranges."""

    ranges: tuple[tuple[float, float], ...]
    counts: tuple[int, ...]
    points: np.ndarray = field(repr=False, compare=False)

    @property
    def dim(self) -> int:
        return len(self.counts)

    @property
    def n_points(self) -> int:
        return int(np.prod(self.counts))

    def axis_values(self, d: int) -> np.ndarray:
        lo, hi = self.ranges[d]
        return np.linspace(lo, hi, self.counts[d])

    def point(self, index: int) -> ParamPoint:
        return self.points[index]

    def contains(self, coords: ParamPoint) -> bool:
        coords = np.asarray(coords, dtype=float)
        if coords.shape != (self.dim,):
            return False
        return all(lo <= c <= hi for c, (lo, hi) in zip(coords, self.ranges))

    def scales(self, normalized: bool) -> np.ndarray | None:
        """Per-dimension distance scaling: 1/(max-min) when normalized, else None."""
        if not normalized:
            return None
        return np.array([1.0 / (hi - lo) for lo, hi in self.ranges])


def build_grid(
    ranges: tuple[tuple[float, float], ...], counts: tuple[int, ...]
) -> DiscreteParamSpace:
    """Build the evenly spaced, endpoint-inclusive grid.

    Raises ValueError for counts < 2 or inverted/empty ranges.
    """
    ranges = tuple((float(lo), float(hi)) for lo, hi in ranges)
    counts = tuple(int(c) for c in counts)
    if len(ranges) != len(counts) or not counts:
        raise ValueError("ranges and counts must be non-empty and equally long")
    for c in counts:
        if c < 2:
            raise ValueError(f"each dimension needs at least 2 points, got {c}")
    for lo, hi in ranges:
        if not lo < hi:
            raise ValueError(f"inverted range ({lo}, {hi})")
    axes = [np.linspace(lo, hi, c) for (lo, hi), c in zip(ranges, counts)]
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.stack([m.reshape(-1) for m in mesh], axis=1)
    return DiscreteParamSpace(ranges=ranges, counts=counts, points=points)


@dataclass(frozen=True)
class SampleSet:
    """Ordered, duplicate-free flat indices of sampled grid points."""

    indices: tuple[int, ...]

    def __post_init__(self):
        if len(set(self.indices)) != len(self.indices):
            raise ValueError("sample indices must be unique")

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def validate(self, space: DiscreteParamSpace) -> None:
        for i in self.indices:
            if not 0 <= i < space.n_points:
                raise ValueError(f"sample index {i} outside grid of {space.n_points}")

    def extended(self, index: int) -> "SampleSet":
        return SampleSet(self.indices + (int(index),))


def corner_indices(space: DiscreteParamSpace) -> SampleSet:
    """Flat indices of all 2^dim extreme-coordinate combinations."""
    multi = np.array(
        np.meshgrid(*[[0, c - 1] for c in space.counts], indexing="ij")
    ).reshape(space.dim, -1)
    flat = np.ravel_multi_index(multi, space.counts)
    return SampleSet(tuple(int(i) for i in sorted(flat)))


def random_subset(
    space: DiscreteParamSpace, sampled: SampleSet, size: int, rng_seed: int
) -> list[int]:
    """Draw `size` unique unsampled grid indices, uniformly without replacement.

    Deterministic: candidates are the ascending-sorted unsampled indices and
    the draw is ``default_rng(rng_seed).choice(candidates, size, replace=False)``.
    """
    taken = set(sampled)
    candidates = np.array([i for i in range(space.n_points) if i not in taken])
    if size > candidates.size:
        raise ValueError(
            f"subset size {size} exceeds {candidates.size} available candidates"
        )
    rng = np.random.default_rng(rng_seed)
    chosen = rng.choice(candidates, size=size, replace=False)
    return [int(i) for i in chosen]


def knn_indices(
    space: DiscreteParamSpace,
    query: ParamPoint,
    sampled: SampleSet,
    k: int,
    scale: np.ndarray | None = None,
) -> list[int]:
    """The k sampled indices nearest to `query` in Euclidean distance.

    Ascending by distance; exact ties broken by lower grid index. `scale`
    optionally weights each coordinate before the distance is taken.
    """
    if not 1 <= k <= len(sampled):
        raise ValueError(f"k={k} outside [1, {len(sampled)}]")
    query = np.asarray(query, dtype=float)
    idx = np.array(list(sampled))
    diff = space.points[idx] - query[None, :]
    if scale is not None:
        diff = diff * np.asarray(scale)[None, :]
    d2 = np.sum(diff * diff, axis=1)
    order = sorted(range(len(idx)), key=lambda j: (d2[j], idx[j]))
    return [int(idx[j]) for j in order[:k]]
