"""Small vector/matrix/box helpers used throughout the package.

Vectors are plain float64 numpy arrays of shape (3,); 4x4 matrices are
float64 arrays in column-vector convention (point transform is
``M[:3, :3] @ p + M[:3, 3]``).
"""

from dataclasses import dataclass

import numpy as np

# Corner order used everywhere a box is expanded into its 8 corners:
# bit 0 selects max-x, bit 1 max-y, bit 2 max-z.
_CORNER_BITS = np.array(
    [[(i >> 0) & 1, (i >> 1) & 1, (i >> 2) & 1] for i in range(8)], dtype=np.float64
)


def vec3(x, y, z):
    return np.array([x, y, z], dtype=np.float64)


def normalize(v):
    v = np.asarray(v, dtype=np.float64)
    n = float(np.linalg.norm(v))
    if n == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return v / n


@dataclass
class Aabb:
    """Axis-aligned box; ``min > max`` on any axis marks the empty box."""

    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        self.min = np.asarray(self.min, dtype=np.float64)
        self.max = np.asarray(self.max, dtype=np.float64)

    @staticmethod
    def empty():
        return Aabb(np.full(3, np.inf), np.full(3, -np.inf))

    @staticmethod
    def from_points(points):
        points = np.asarray(points, dtype=np.float64)
        if points.size == 0:
            return Aabb.empty()
        return Aabb(points.min(axis=0), points.max(axis=0))

    @property
    def is_empty(self):
        return bool(np.any(self.min > self.max))

    @property
    def center(self):
        return (self.min + self.max) * 0.5

    @property
    def extents(self):
        return self.max - self.min

    def corners(self):
        """8 corners in the fixed bit order (x fastest)."""
        return self.min + _CORNER_BITS * (self.max - self.min)

    def union(self, other):
        if self.is_empty:
            return Aabb(other.min.copy(), other.max.copy())
        if other.is_empty:
            return Aabb(self.min.copy(), self.max.copy())
        return Aabb(np.minimum(self.min, other.min), np.maximum(self.max, other.max))

    def contains_box(self, other):
        return bool(np.all(other.min >= self.min) and np.all(other.max <= self.max))

    def contains_point(self, p):
        return bool(np.all(p >= self.min) and np.all(p <= self.max))


def identity4():
    return np.eye(4, dtype=np.float64)


def translation(v):
    m = identity4()
    m[:3, 3] = v
    return m


def scaling(s):
    m = identity4()
    s = np.asarray(s, dtype=np.float64)
    if s.ndim == 0:
        s = np.full(3, float(s))
    m[0, 0], m[1, 1], m[2, 2] = s
    return m


def rotation_x(angle):
    c, s = np.cos(angle), np.sin(angle)
    m = identity4()
    m[1, 1], m[1, 2], m[2, 1], m[2, 2] = c, -s, s, c
    return m


def rotation_y(angle):
    c, s = np.cos(angle), np.sin(angle)
    m = identity4()
    m[0, 0], m[0, 2], m[2, 0], m[2, 2] = c, s, -s, c
    return m


def rotation_z(angle):
    c, s = np.cos(angle), np.sin(angle)
    m = identity4()
    m[0, 0], m[0, 1], m[1, 0], m[1, 1] = c, -s, s, c
    return m


def transform_points(mat, points):
    """Apply an affine 4x4 to an (N, 3) array of points."""
    points = np.asarray(points, dtype=np.float64)
    return points @ mat[:3, :3].T + mat[:3, 3]


def transform_vectors(mat, vectors):
    """Apply only the linear part (for directions, not positions)."""
    return np.asarray(vectors, dtype=np.float64) @ mat[:3, :3].T


def transform_aabb(mat, box):
    """Conservative transformed box: transform the 8 corners, re-wrap."""
    if box.is_empty:
        return Aabb.empty()
    return Aabb.from_points(transform_points(mat, box.corners()))


def orthonormal_frame(forward):
    """Complete ``forward`` into a right-handed (right, up) pair.

    The reference axis is the world axis least aligned with ``forward``
    (lowest index on ties), which makes the frame deterministic.
    """
    forward = normalize(forward)
    ref_idx = int(np.argmin(np.abs(forward)))
    ref = np.zeros(3)
    ref[ref_idx] = 1.0
    right = normalize(np.cross(forward, ref))
    up = np.cross(right, forward)
    return right, up
