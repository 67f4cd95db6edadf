"""Surfel containers.

Surfels are kept in struct-of-arrays form (positions, normals, colors)
throughout the pipeline; the per-element :class:`Surfel` view exists for
tests and spot inspection. Array positions and normals are quantized to
float32 on construction so that in-memory arrays round-trip bit-exactly
through the .bsrf file format.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Surfel:
    """One oriented point sample: world position, unit normal, RGBA color."""

    position: np.ndarray
    normal: np.ndarray
    color: np.ndarray


class InitialSurfelSet:
    """Unordered surfel candidates extracted from the corner views."""

    def __init__(self, positions, normals, colors, coverage, resolution):
        self.positions = np.ascontiguousarray(positions, dtype=np.float64).reshape(-1, 3)
        self.normals = np.ascontiguousarray(normals, dtype=np.float64).reshape(-1, 3)
        self.colors = np.ascontiguousarray(colors, dtype=np.uint8).reshape(-1, 4)
        if not (len(self.positions) == len(self.normals) == len(self.colors)):
            raise ValueError("surfel attribute arrays disagree in length")
        if not 0.0 <= coverage <= 1.0:
            raise ValueError("coverage must lie in [0, 1]")
        self.coverage = float(coverage)
        self.resolution = int(resolution)

    def __len__(self):
        return len(self.positions)


class SurfelArray:
    """Ordered surfel list whose every prefix approximates the source subtree.

    The order is the greedy insertion order produced by the progressive
    sampler; ``coverage`` is the relative-covered-area estimator carried
    over from extraction.
    """

    def __init__(self, positions, normals, colors, coverage, source_resolution,
                 source_indices=None, discarded=0, source_path=None):
        # storage precision equals the file precision (float32 + RGBA8)
        self.positions = np.ascontiguousarray(
            np.asarray(positions, dtype=np.float32), dtype=np.float64).reshape(-1, 3)
        self.normals = np.ascontiguousarray(
            np.asarray(normals, dtype=np.float32), dtype=np.float64).reshape(-1, 3)
        self.colors = np.ascontiguousarray(colors, dtype=np.uint8).reshape(-1, 4)
        if not (len(self.positions) == len(self.normals) == len(self.colors)):
            raise ValueError("surfel attribute arrays disagree in length")
        if not 0.0 <= coverage <= 1.0:
            raise ValueError("coverage must lie in [0, 1]")
        self.coverage = float(coverage)
        self.source_resolution = int(source_resolution)
        self.source_indices = source_indices
        self.discarded = int(discarded)
        self.source_path = source_path

    def __len__(self):
        return len(self.positions)

    def __getitem__(self, i):
        return Surfel(self.positions[i], self.normals[i], self.colors[i])

    def prefix(self, k):
        """First-k view as a new array (used by streaming/truncation tests)."""
        k = min(int(k), len(self))
        return SurfelArray(self.positions[:k], self.normals[:k], self.colors[:k],
                           self.coverage, self.source_resolution)
