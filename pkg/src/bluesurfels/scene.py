"""Scene-graph data model: meshes, nodes, instancing, bounds, complexity,
and loose-octree construction for unstructured object soups.

Scene graphs are immutable after construction by convention; all caches
assume that. ``SceneNode.children`` may contain shared nodes (instances)
and ``mesh`` objects may be shared between nodes; complexity counts every
reference path separately while preprocessing work is done once per
shared object.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptySceneError, SceneError
from .geometry import Aabb, identity4, transform_aabb

OCTREE_MAX_DEPTH = 21


@dataclass
class Material:
    """Per-mesh color material; channels must stay in range."""

    ambient: np.ndarray = field(default_factory=lambda: np.array([0.2, 0.2, 0.2]))
    diffuse: np.ndarray = field(default_factory=lambda: np.array([0.8, 0.8, 0.8]))
    specular: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 0.0]))
    base_color: np.ndarray = field(
        default_factory=lambda: np.array([255, 255, 255, 255], dtype=np.uint8)
    )

    def __post_init__(self):
        for name in ("ambient", "diffuse", "specular"):
            v = np.asarray(getattr(self, name), dtype=np.float64)
            if v.shape != (3,) or np.any(v < 0.0) or np.any(v > 1.0):
                raise ValueError(f"material.{name} must be RGB in [0,1]")
            setattr(self, name, v)
        self.base_color = np.asarray(self.base_color, dtype=np.uint8)
        if self.base_color.shape != (4,):
            raise ValueError("material.base_color must be RGBA8")


def compute_vertex_normals(positions, triangles):
    """Area-weighted vertex normals (cross products carry the area weight)."""
    normals = np.zeros_like(positions)
    a = positions[triangles[:, 0]]
    b = positions[triangles[:, 1]]
    c = positions[triangles[:, 2]]
    face = np.cross(b - a, c - a)
    for k in range(3):
        np.add.at(normals, triangles[:, k], face)
    length = np.linalg.norm(normals, axis=1)
    degenerate = length < 1e-30
    normals[degenerate] = (0.0, 0.0, 1.0)
    length[degenerate] = 1.0
    return normals / length[:, None]


class Mesh:
    """Indexed triangle mesh with per-vertex position, normal, and color.

    Missing normals are filled with area-weighted face normals; normals
    are renormalized on ingestion (unit length within 1e-4 afterwards).
    """

    def __init__(self, positions, triangles, normals=None, colors=None,
                 material=None, source_path=None):
        self.positions = np.ascontiguousarray(positions, dtype=np.float64)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int32)
        if self.positions.ndim != 2 or self.positions.shape[1] != 3:
            raise SceneError("mesh positions must be (V, 3)")
        if self.triangles.size and (
            self.triangles.min() < 0 or self.triangles.max() >= len(self.positions)
        ):
            raise SceneError("mesh triangle indices out of range")
        self.triangles = self.triangles.reshape(-1, 3)
        self.material = material if material is not None else Material()
        if normals is None:
            normals = compute_vertex_normals(self.positions, self.triangles)
        else:
            normals = np.ascontiguousarray(normals, dtype=np.float64)
            length = np.linalg.norm(normals, axis=1)
            bad = np.abs(length - 1.0) > 1e-4
            if np.any(bad):
                safe = np.where(length > 1e-30, length, 1.0)
                normals = normals / safe[:, None]
                normals[length <= 1e-30] = (0.0, 0.0, 1.0)
        self.normals = normals
        if colors is None:
            colors = np.tile(self.material.base_color, (len(self.positions), 1))
        self.colors = np.ascontiguousarray(colors, dtype=np.uint8)
        self.source_path = source_path
        self._bounds = Aabb.from_points(self.positions) if len(self.positions) else Aabb.empty()

    @property
    def triangle_count(self):
        return len(self.triangles)

    @property
    def bounds(self):
        return self._bounds


class SceneNode:
    """Hierarchical scene-graph node.

    ``local_transform`` places the node's content in its parent's frame.
    Attached surfel arrays are expressed in the node's inner frame (the
    frame its own mesh and children live in), so shared prototype nodes
    can reuse one array under any number of referencing paths.
    """

    def __init__(self, local_transform=None, mesh=None, children=None,
                 surfels=None, name=""):
        self.local_transform = (
            np.asarray(local_transform, dtype=np.float64)
            if local_transform is not None else identity4()
        )
        if self.local_transform.shape != (4, 4):
            raise SceneError("local_transform must be a 4x4 matrix")
        self.mesh = mesh
        self.children = list(children) if children else []
        self.surfels = surfels
        self.name = name
        self._inner_bounds = None
        self._complexity = None

    def invalidate_caches(self):
        self._inner_bounds = None
        self._complexity = None
        for child in self.children:
            child.invalidate_caches()

    def inner_bounds(self):
        """Bounds of the subtree in this node's own frame (cached)."""
        if self._inner_bounds is None:
            box = self.mesh.bounds if self.mesh is not None else Aabb.empty()
            for child in self.children:
                box = box.union(transform_aabb(child.local_transform, child.inner_bounds()))
            self._inner_bounds = box
        return self._inner_bounds


def aggregate_complexity(node):
    """Triangle count of the subtree; shared subtrees count once per path."""
    if node._complexity is None:
        total = node.mesh.triangle_count if node.mesh is not None else 0
        total += sum(aggregate_complexity(child) for child in node.children)
        node._complexity = total
    return node._complexity


def world_bounds(node, parent_transform=None):
    """Box containing every transformed vertex of the subtree.

    Conservative for nested rotations (axis-aligned rewrap per level);
    exact for a single transformed mesh. Empty subtree yields the empty
    box sentinel.
    """
    if parent_transform is None:
        parent_transform = identity4()
    return transform_aabb(parent_transform @ node.local_transform, node.inner_bounds())


def iter_mesh_instances(node, transform=None):
    """Yield (mesh, world_transform) for every mesh occurrence in the subtree."""
    if transform is None:
        transform = identity4()
    transform = transform @ node.local_transform
    if node.mesh is not None:
        yield node.mesh, transform
    for child in node.children:
        yield from iter_mesh_instances(child, transform)


@dataclass
class BuildConfig:
    """Preprocessing parameters for scene structuring and surfel budgets."""

    complexity_threshold: int = 10000
    octree_leaf_capacity: int = 8
    octree_looseness: float = 2.0

    def __post_init__(self):
        if self.complexity_threshold <= 0:
            raise ValueError("complexity_threshold must be > 0")
        if self.octree_leaf_capacity < 1:
            raise ValueError("octree_leaf_capacity must be >= 1")
        if self.octree_looseness < 1.0:
            raise ValueError("octree_looseness must be >= 1")


def _build_cell(center, half, entries, depth, cfg):
    node = SceneNode(name=f"cell:d{depth}")
    if len(entries) <= cfg.octree_leaf_capacity or depth >= OCTREE_MAX_DEPTH:
        node.children = [obj for obj, _ in entries]
        return node
    buckets = [[] for _ in range(8)]
    pinned = []
    child_half = half * 0.5
    loose_half = child_half * cfg.octree_looseness
    for obj, box in entries:
        oc = box.center
        octant = int(oc[0] >= center[0]) | (int(oc[1] >= center[1]) << 1) | (
            int(oc[2] >= center[2]) << 2)
        offset = np.array([(octant >> 0) & 1, (octant >> 1) & 1, (octant >> 2) & 1],
                          dtype=np.float64) - 0.5
        child_center = center + offset * half
        loose = Aabb(child_center - loose_half, child_center + loose_half)
        if loose.contains_box(box):
            buckets[octant].append((obj, box, child_center))
        else:
            pinned.append(obj)
    if all(not b for b in buckets):
        # nothing fits a child's loosened extent; stop subdividing
        node.children = pinned
        return node
    for octant, bucket in enumerate(buckets):
        if not bucket:
            continue
        child_center = bucket[0][2]
        child = _build_cell(child_center, half * 0.5,
                            [(o, b) for o, b, _ in bucket], depth + 1, cfg)
        node.children.append(child)
    node.children.extend(pinned)
    return node


def build_loose_octree(objects, cfg=None):
    """Structure a flat list of (mesh, transform) objects into a loose octree.

    Each object descends toward the smallest loose cell (cell extent x
    looseness) that fully contains its world bounds; a cell only
    subdivides while it holds more objects than ``octree_leaf_capacity``,
    and the capacity becomes advisory at the depth limit.
    """
    if cfg is None:
        cfg = BuildConfig()
    if not objects:
        raise EmptySceneError("cannot build an octree from zero objects")
    entries = []
    total = Aabb.empty()
    for mesh, transform in objects:
        obj = SceneNode(local_transform=transform, mesh=mesh)
        box = world_bounds(obj)
        if box.is_empty:
            raise SceneError("octree input object has empty bounds")
        entries.append((obj, box))
        total = total.union(box)
    half = float(np.max(total.extents)) * 0.5
    if half == 0.0:
        root = SceneNode(name="cell:d0")
        root.children = [obj for obj, _ in entries]
        return root
    return _build_cell(total.center, half, entries, 0, cfg)
