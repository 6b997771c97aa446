"""Inverse-distance-weighted convex interpolation over nearest neighbors.

Weights use the kernel 1/d^2 normalized to a partition of unity, so any
interpolated quantity stays inside the componentwise convex hull of its
neighbors. A query closer than sqrt(COINCIDENCE_SQ) to a neighbor is treated
as coinciding with it and receives that neighbor's value exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .param_space import DiscreteParamSpace, ParamPoint, SampleSet, knn_indices

# squared-distance threshold below which query and neighbor are identified
COINCIDENCE_SQ = 1e-14


@dataclass(frozen=True)
class ShepardWeights:
    neighbor_indices: tuple[int, ...]
    weights: np.ndarray

    def __post_init__(self):
        if len(self.neighbor_indices) != len(self.weights):
            raise ValueError("index/weight length mismatch")


def shepard_weights(
    query: ParamPoint, neighbors: list[ParamPoint] | np.ndarray
) -> ShepardWeights:
    """Partition-of-unity inverse-square-distance weights for `query`.

    Neighbors must be pairwise distinct (squared distance >= COINCIDENCE_SQ);
    positions are reported as 0..k-1 in the input order.
    """
    query = np.asarray(query, dtype=float)
    pts = np.asarray(neighbors, dtype=float)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ValueError("neighbors must be a non-empty list of points")
    diff = pts - query[None, :]
    d2 = np.sum(diff * diff, axis=1)

    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            if float(np.sum((pts[i] - pts[j]) ** 2)) < COINCIDENCE_SQ:
                raise ValueError(f"duplicate neighbors at positions {i} and {j}")

    k = len(pts)
    weights = np.zeros(k)
    hits = np.flatnonzero(d2 < COINCIDENCE_SQ)
    if hits.size:
        weights[hits[0]] = 1.0
    else:
        phi = 1.0 / d2
        # normalizer accumulated exactly, in ascending-distance order
        order = np.argsort(d2, kind="stable")
        total = math.fsum(phi[order])
        weights = phi / total
    return ShepardWeights(tuple(range(k)), weights)


def interpolate_coeffs(
    query: ParamPoint,
    space: DiscreteParamSpace,
    sampled: SampleSet,
    coeffs: list[np.ndarray],
    k: int,
    scale: np.ndarray | None = None,
) -> np.ndarray:
    """Convex combination of the k nearest samples' coefficient matrices.

    `coeffs` is index-aligned with `sampled`. Returns a fresh matrix; when
    the query coincides with a sample, an exact copy of that sample's matrix.
    """
    if len(coeffs) != len(sampled):
        raise ValueError("one coefficient matrix per sampled point required")
    shapes = {c.shape for c in coeffs}
    if len(shapes) > 1:
        raise ValueError(f"coefficient matrices disagree in shape: {shapes}")
    nearest = knn_indices(space, query, sampled, k, scale=scale)
    position = {g: p for p, g in enumerate(sampled)}
    pts = space.points[nearest]
    if scale is not None:
        s = np.asarray(scale)
        w = shepard_weights(np.asarray(query) * s, pts * s)
    else:
        w = shepard_weights(query, pts)
    unit = np.flatnonzero(w.weights == 1.0)
    if unit.size == 1:
        return coeffs[position[nearest[unit[0]]]].copy()
    out = np.zeros_like(coeffs[0])
    for grid_idx, weight in zip(nearest, w.weights):
        out += weight * coeffs[position[grid_idx]]
    return out
