"""Initial surfel extraction: rasterize a subtree from the eight corners
of its bounding box under orthographic projection and collect every
occupied pixel as one surfel candidate.

The raster for each view covers exactly the projected bounding box of
the subtree: the larger projected side spans the resolution parameter,
the smaller side proportionally fewer pixels. The coverage estimator is
the total occupied pixel count divided by the total projected-box pixel
count of the eight views.
"""

from dataclasses import dataclass

import numpy as np

from .errors import EmptySceneError, GenerationError
from .geometry import Aabb, identity4, normalize, orthonormal_frame
from .raster import Framebuffer, TriangleSet, interpolate_triangle_pixels, rasterize_triangles
from .scene import iter_mesh_instances
from .surfels import InitialSurfelSet

VIEW_COUNT = 8


@dataclass
class GenConfig:
    resolution: int = 512

    def __post_init__(self):
        if self.resolution < 16:
            raise ValueError("resolution must be >= 16")


@dataclass
class OrthoCamera:
    """Orthographic corner view; the window covers the projected box."""

    eye: np.ndarray
    forward: np.ndarray
    right: np.ndarray
    up: np.ndarray
    u_min: float
    v_max: float
    pixel_size: float
    width: int
    height: int
    near: float
    far: float

    def project(self, points):
        """World points -> (sx, sy, depth); depth measured along forward."""
        d = points - self.eye
        u = d @ self.right
        v = d @ self.up
        z = d @ self.forward
        sx = (u - self.u_min) / self.pixel_size
        sy = (self.v_max - v) / self.pixel_size
        return sx, sy, z


class GBuffer:
    """Per-view attribute raster: depth, position, normal, color planes."""

    def __init__(self, width, height, far):
        self.width = int(width)
        self.height = int(height)
        self.far = float(far)
        self.depth = np.full((self.height, self.width), np.float32(far), dtype=np.float32)
        self.occupied = np.zeros((self.height, self.width), dtype=bool)
        self.position = np.zeros((self.height, self.width, 3), dtype=np.float64)
        self.normal = np.zeros((self.height, self.width, 3), dtype=np.float64)
        self.color = np.zeros((self.height, self.width, 4), dtype=np.uint8)

    @property
    def occupied_count(self):
        return int(self.occupied.sum())


def _round_half_up(x):
    return int(np.floor(x + 0.5))


def corner_cameras(bounds, resolution):
    """One orthographic camera per bounding-box corner, looking at the center.

    Zero-extent axes are inflated by 1e-6 x the maximum extent so flat
    geometry still yields eight distinct views.
    """
    if bounds.is_empty:
        raise EmptySceneError("cannot place corner cameras on empty bounds")
    extents = bounds.extents
    max_extent = float(np.max(extents))
    if max_extent <= 0.0:
        raise EmptySceneError("cannot place corner cameras on zero-size bounds")
    pad = np.where(extents <= 0.0, 1e-6 * max_extent, 0.0)
    box = Aabb(bounds.min - pad, bounds.max + pad)
    center = box.center
    cameras = []
    for corner in box.corners():
        forward = normalize(center - corner)
        right, up = orthonormal_frame(forward)
        d = box.corners() - corner
        u = d @ right
        v = d @ up
        z = d @ forward
        du = float(u.max() - u.min())
        dv = float(v.max() - v.min())
        larger = max(du, dv)
        pixel_size = larger / resolution
        width = resolution if du >= dv else max(1, _round_half_up(du / pixel_size))
        height = resolution if dv > du else max(1, _round_half_up(dv / pixel_size))
        far = float(z.max()) * (1.0 + 1e-6) + 1e-12
        cameras.append(OrthoCamera(
            eye=corner, forward=forward, right=right, up=up,
            u_min=float(u.min()), v_max=float(v.max()),
            pixel_size=pixel_size, width=width, height=height,
            near=0.0, far=far,
        ))
    return cameras


def _normal_matrix(linear):
    try:
        return np.linalg.inv(linear).T
    except np.linalg.LinAlgError:
        return linear


def triangle_set_for_view(subtree, camera, root_transform=None):
    """Project every triangle instance of the subtree into camera screen space."""
    sets = []
    transform = identity4() if root_transform is None else root_transform
    if subtree.mesh is not None:
        instances = [(subtree.mesh, transform)]
    else:
        instances = []
    for child in subtree.children:
        instances.extend(iter_mesh_instances(child, transform))
    for mesh, world in instances:
        if mesh.triangle_count == 0:
            continue
        pos = mesh.positions @ world[:3, :3].T + world[:3, 3]
        nrm = mesh.normals @ _normal_matrix(world[:3, :3]).T
        sx, sy, z = camera.project(pos)
        tri = mesh.triangles
        screen = np.stack([np.stack([sx[tri[:, k]], sy[tri[:, k]]], axis=1)
                           for k in range(3)], axis=1)
        depth = np.stack([z[tri[:, k]] for k in range(3)], axis=1)
        positions = pos[tri]
        normals = nrm[tri]
        colors = mesh.colors[tri]
        sets.append(TriangleSet(screen, depth, positions, normals, colors))
    return TriangleSet.concatenate(sets)


def rasterize_view(subtree, camera):
    """Depth-tested orthographic rasterization of the subtree into a GBuffer.

    Triangles are drawn double-sided; ties on depth go to the
    first-drawn triangle, edges follow the top-left rule, so the result
    is deterministic.
    """
    gbuf = GBuffer(camera.width, camera.height, camera.far)
    tris = triangle_set_for_view(subtree, camera)
    if len(tris) == 0:
        return gbuf
    fb = Framebuffer(camera.width, camera.height)
    # orthographic depth 0 at the eye corner is valid; shift not needed
    rasterize_triangles(fb, tris, id_base=0, perspective=False)
    mask, ids = fb.winner_ids()
    if not mask.any():
        return gbuf
    py, px = np.nonzero(mask)
    tri_idx = ids[py, px].astype(np.int64)
    pos, nrm, col, z = interpolate_triangle_pixels(tris, tri_idx, px.astype(np.float64),
                                                   py.astype(np.float64), perspective=False)
    gbuf.occupied[py, px] = True
    gbuf.depth[py, px] = z.astype(np.float32)
    gbuf.position[py, px] = pos
    gbuf.normal[py, px] = nrm
    gbuf.color[py, px] = np.clip(np.floor(col + 0.5), 0, 255).astype(np.uint8)
    return gbuf


def extract_initial_surfels(subtree, cfg=None, bounds=None):
    """Union of the occupied pixels of the eight corner views.

    No cross-view deduplication is applied; the progressive sampler's
    distance filtering subsumes it. Raises when the subtree has no
    triangles or rasterizes to zero occupied pixels.
    """
    if cfg is None:
        cfg = GenConfig()
    if bounds is None:
        bounds = subtree.inner_bounds()
    total_triangles = sum(mesh.triangle_count
                          for mesh, _ in _inner_instances(subtree))
    if total_triangles == 0:
        raise GenerationError("subtree has no triangles")
    cameras = corner_cameras(bounds, cfg.resolution)
    positions, normals, colors = [], [], []
    occupied = 0
    box_pixels = 0
    for camera in cameras:
        gbuf = rasterize_view(subtree, camera)
        box_pixels += gbuf.width * gbuf.height
        occupied += gbuf.occupied_count
        if gbuf.occupied_count:
            sel = gbuf.occupied
            positions.append(gbuf.position[sel])
            normals.append(gbuf.normal[sel])
            colors.append(gbuf.color[sel])
    if occupied == 0:
        raise GenerationError("subtree rasterized to zero occupied pixels")
    coverage = min(1.0, occupied / box_pixels)
    return InitialSurfelSet(np.concatenate(positions), np.concatenate(normals),
                            np.concatenate(colors), coverage, cfg.resolution)


def _inner_instances(subtree):
    if subtree.mesh is not None:
        yield subtree.mesh, identity4()
    for child in subtree.children:
        yield from iter_mesh_instances(child)


def gbuffer_images(gbuf, bounds=None):
    """Debug images of the four attribute planes (color, normal, position,
    depth), alpha-masked by occupancy."""
    from .io_formats import Image
    h, w = gbuf.depth.shape
    alpha = np.where(gbuf.occupied, 255, 0).astype(np.uint8)
    out = {}
    color = gbuf.color.copy()
    color[:, :, 3] = alpha
    out["color"] = Image(w, h, color)
    npix = np.zeros((h, w, 4), dtype=np.uint8)
    npix[:, :, :3] = np.clip((gbuf.normal * 0.5 + 0.5) * 255.0 + 0.5, 0, 255).astype(np.uint8)
    npix[:, :, 3] = alpha
    out["normal"] = Image(w, h, npix)
    ppix = np.zeros((h, w, 4), dtype=np.uint8)
    pos = gbuf.position
    lo = pos[gbuf.occupied].min(axis=0) if gbuf.occupied.any() else np.zeros(3)
    hi = pos[gbuf.occupied].max(axis=0) if gbuf.occupied.any() else np.ones(3)
    span = np.where(hi - lo > 0, hi - lo, 1.0)
    ppix[:, :, :3] = np.clip((pos - lo) / span * 255.0 + 0.5, 0, 255).astype(np.uint8)
    ppix[:, :, 3] = alpha
    out["position"] = Image(w, h, ppix)
    dpix = np.zeros((h, w, 4), dtype=np.uint8)
    depth = gbuf.depth.astype(np.float64)
    if gbuf.occupied.any():
        dlo = depth[gbuf.occupied].min()
        dhi = depth[gbuf.occupied].max()
        dspan = dhi - dlo if dhi > dlo else 1.0
        gray = np.clip((1.0 - (depth - dlo) / dspan) * 255.0 + 0.5, 0, 255).astype(np.uint8)
    else:
        gray = np.zeros((h, w), dtype=np.uint8)
    dpix[:, :, 0] = dpix[:, :, 1] = dpix[:, :, 2] = gray
    dpix[:, :, 3] = alpha
    out["depth"] = Image(w, h, dpix)
    return out
