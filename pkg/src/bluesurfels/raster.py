"""Vectorized deterministic rasterizer core shared by surfel generation
and the software renderer.

Visibility is resolved through a packed int64 buffer holding
``float32(depth) bits << 32 | primitive id``; ``np.minimum.at`` then
implements a z-buffer whose depth ties resolve to the lowest primitive
id, i.e. the first-drawn primitive, independent of evaluation order.
Coverage uses pixel-center sampling with a top-left tie rule, so two
triangles sharing an edge partition the boundary pixels exactly.

Depths must be non-negative (eye-forward distance); only the winning
primitive's attributes are computed, in a second resolve pass.
"""

from dataclasses import dataclass, field

import numpy as np

EMPTY = np.int64(np.iinfo(np.int64).max)
# chunk cap for candidate-pixel buffers during scatter
_MAX_CANDIDATES = 4_000_000


class Framebuffer:
    """Packed visibility buffer for one view."""

    def __init__(self, width, height):
        self.width = int(width)
        self.height = int(height)
        self.packed = np.full(self.width * self.height, EMPTY, dtype=np.int64)

    def winner_ids(self):
        """(occupied mask, primitive id grid); ids are valid where occupied."""
        grid = self.packed.reshape(self.height, self.width)
        mask = grid != EMPTY
        ids = (grid & np.int64(0xFFFFFFFF)).astype(np.uint32)
        return mask, ids

    def depth_grid(self, far_value):
        """float32 depth image, ``far_value`` where unoccupied."""
        grid = self.packed.reshape(self.height, self.width)
        mask = grid != EMPTY
        bits = (grid >> np.int64(32)).astype(np.uint32)
        depth = bits.view(np.float32).copy()
        depth[~mask] = np.float32(far_value)
        return depth, mask


def _pack(depth, ids):
    bits = np.asarray(depth, dtype=np.float32).view(np.uint32).astype(np.int64)
    return (bits << np.int64(32)) | ids.astype(np.int64)


@dataclass
class TriangleSet:
    """Screen-space triangle batch with the attributes needed at resolve.

    ``screen``: (T, 3, 2) pixel coordinates (x right, y down), ``depth``:
    (T, 3) positive eye depths, plus per-corner position/normal/color.
    """

    screen: np.ndarray
    depth: np.ndarray
    position: np.ndarray
    normal: np.ndarray
    color: np.ndarray

    def __len__(self):
        return len(self.screen)

    @staticmethod
    def concatenate(sets):
        sets = [s for s in sets if len(s)]
        if not sets:
            return TriangleSet(np.zeros((0, 3, 2)), np.zeros((0, 3)),
                               np.zeros((0, 3, 3)), np.zeros((0, 3, 3)),
                               np.zeros((0, 3, 4), dtype=np.uint8))
        return TriangleSet(*(np.concatenate([getattr(s, f) for s in sets])
                             for f in ("screen", "depth", "position", "normal", "color")))


def _edge_coefficients(screen):
    """Per-triangle edge functions w_i(p) = A_i x + B_i y + C_i.

    Triangles are reoriented to positive signed area (double-sided
    rasterization); returns (A, B, C, tl, area2, keep) where w_i is the
    function of the edge opposite corner i and tl marks top-left edges.
    """
    a, b, c = screen[:, 0], screen[:, 1], screen[:, 2]
    area2 = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - \
            (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    flip = area2 < 0
    screen = screen.copy()
    screen[flip, 1], screen[flip, 2] = screen[flip, 2].copy(), screen[flip, 1].copy()
    area2 = np.abs(area2)
    keep = area2 > 0
    v0 = np.stack([screen[:, 1], screen[:, 2], screen[:, 0]], axis=1)  # edge starts
    v1 = np.stack([screen[:, 2], screen[:, 0], screen[:, 1]], axis=1)  # edge ends
    e = v1 - v0
    A = -e[:, :, 1]
    B = e[:, :, 0]
    C = e[:, :, 1] * v0[:, :, 0] - e[:, :, 0] * v0[:, :, 1]
    tl = (e[:, :, 1] < 0) | ((e[:, :, 1] == 0) & (e[:, :, 0] > 0))
    return A, B, C, tl, area2, keep, flip


def _triangle_depth(w, area2, depth, perspective):
    lam = w / np.asarray(area2)[..., None]
    if perspective:
        inv = (lam / depth).sum(axis=-1)
        return 1.0 / inv
    return (lam * depth).sum(axis=-1)


def rasterize_triangles(fb, tris, id_base=0, perspective=True):
    """Scatter a TriangleSet into the packed buffer.

    Primitive ids are ``id_base + triangle index``; evaluation is chunked
    and bucketed by bounding-box size, which changes nothing observable.
    """
    n = len(tris)
    if n == 0:
        return
    A, B, C, tl, area2, keep, flip = _edge_coefficients(tris.screen)
    screen = tris.screen
    xs = screen[:, :, 0]
    ys = screen[:, :, 1]
    # pixel i has center i + 0.5; candidates are centers within the bbox
    x0 = np.maximum(np.ceil(xs.min(axis=1) - 0.5).astype(np.int64), 0)
    x1 = np.minimum(np.floor(xs.max(axis=1) - 0.5).astype(np.int64), fb.width - 1)
    y0 = np.maximum(np.ceil(ys.min(axis=1) - 0.5).astype(np.int64), 0)
    y1 = np.minimum(np.floor(ys.max(axis=1) - 0.5).astype(np.int64), fb.height - 1)
    keep &= (x1 >= x0) & (y1 >= y0) & np.all(tris.depth > 0.0, axis=1)
    if not np.any(keep):
        return
    idx_all = np.flatnonzero(keep)
    bw = x1[idx_all] - x0[idx_all] + 1
    bh = y1[idx_all] - y0[idx_all] + 1
    size_class = np.maximum(bw, bh)
    # depth corners swapped alongside the orientation fix
    depth = tris.depth.copy()
    depth[flip, 1], depth[flip, 2] = depth[flip, 2].copy(), depth[flip, 1].copy()

    for lo, hi in ((1, 2), (3, 4), (5, 8), (9, 16), (17, 32), (33, 64)):
        sel = idx_all[(size_class >= lo) & (size_class <= hi)]
        _scatter_class(fb, sel, hi, x0, y0, x1, y1, A, B, C, tl, area2, depth,
                       id_base, perspective)
    big = idx_all[size_class > 64]
    for t in big:
        _scatter_single(fb, int(t), x0, y0, x1, y1, A, B, C, tl, area2, depth,
                        id_base, perspective)


def _scatter_class(fb, sel, grid, x0, y0, x1, y1, A, B, C, tl, area2, depth,
                   id_base, perspective):
    if len(sel) == 0:
        return
    per = grid * grid
    chunk = max(1, _MAX_CANDIDATES // per)
    offs = np.arange(grid, dtype=np.int64)
    gx, gy = np.meshgrid(offs, offs, indexing="xy")
    gx = gx.ravel()
    gy = gy.ravel()
    for s in range(0, len(sel), chunk):
        t = sel[s:s + chunk]
        px = x0[t, None] + gx[None, :]
        py = y0[t, None] + gy[None, :]
        cx = px + 0.5
        cy = py + 0.5
        w = A[t, None, :] * cx[:, :, None] + B[t, None, :] * cy[:, :, None] + C[t, None, :]
        inside = np.all((w > 0) | ((w == 0) & tl[t, None, :]), axis=2)
        inside &= (px <= x1[t, None]) & (py <= y1[t, None])
        if not inside.any():
            continue
        ti, pi = np.nonzero(inside)
        z = _triangle_depth(w[ti, pi], area2[t[ti]], depth[t[ti]], perspective)
        lin = py[ti, pi] * fb.width + px[ti, pi]
        ids = (id_base + t[ti]).astype(np.uint32)
        np.minimum.at(fb.packed, lin, _pack(z, ids))


def _scatter_single(fb, t, x0, y0, x1, y1, A, B, C, tl, area2, depth,
                    id_base, perspective):
    px, py = np.meshgrid(np.arange(x0[t], x1[t] + 1, dtype=np.int64),
                         np.arange(y0[t], y1[t] + 1, dtype=np.int64), indexing="xy")
    px = px.ravel()
    py = py.ravel()
    cx = px + 0.5
    cy = py + 0.5
    w = A[t] * cx[:, None] + B[t] * cy[:, None] + C[t]
    inside = np.all((w > 0) | ((w == 0) & tl[t]), axis=1)
    if not inside.any():
        return
    z = _triangle_depth(w[inside], area2[t], depth[t], perspective)
    lin = py[inside] * fb.width + px[inside]
    ids = np.full(len(lin), id_base + t, dtype=np.uint32)
    np.minimum.at(fb.packed, lin, _pack(z, ids))


def interpolate_triangle_pixels(tris, tri_idx, px, py, perspective):
    """Attributes of given triangles at given pixels (both 1-d arrays).

    Returns (position, normal, color float, depth); callers guarantee the
    pixels were produced by those triangles, so weights are clipped only
    for boundary rounding.
    """
    A, B, C, tl, area2, keep, flip = _edge_coefficients(tris.screen)
    depth = tris.depth.copy()
    pos = tris.position.copy()
    norm = tris.normal.copy()
    col = tris.color.astype(np.float64)
    for arr in (depth, pos, norm, col):
        arr[flip, 1], arr[flip, 2] = arr[flip, 2].copy(), arr[flip, 1].copy()
    cx = px + 0.5
    cy = py + 0.5
    w = A[tri_idx] * cx[:, None] + B[tri_idx] * cy[:, None] + C[tri_idx]
    lam = np.clip(w / area2[tri_idx, None], 0.0, None)
    lam_sum = lam.sum(axis=1, keepdims=True)
    lam_sum[lam_sum == 0.0] = 1.0
    lam /= lam_sum
    if perspective:
        iz = (lam / depth[tri_idx]).sum(axis=1)
        z = 1.0 / iz
        weights = lam / depth[tri_idx] * z[:, None]
    else:
        z = (lam * depth[tri_idx]).sum(axis=1)
        weights = lam
    out_pos = (weights[:, :, None] * pos[tri_idx]).sum(axis=1)
    out_norm = (weights[:, :, None] * norm[tri_idx]).sum(axis=1)
    length = np.linalg.norm(out_norm, axis=1)
    bad = length < 1e-30
    out_norm[bad] = (0.0, 0.0, 1.0)
    length[bad] = 1.0
    out_norm /= length[:, None]
    out_col = (weights[:, :, None] * col[tri_idx]).sum(axis=1)
    return out_pos, out_norm, out_col, z


def rasterize_points(fb, sx, sy, depth, sizes, id_base=0):
    """Scatter screen-aligned square splats.

    The integer side is ``floor(size + 0.5)`` clamped to >= 1; the square
    is centered on the pixel containing the projected point (even sides
    extend right/down). Depth is the surfel's own eye depth.
    """
    n = len(sx)
    if n == 0:
        return
    valid = depth > 0.0
    si = np.maximum(np.floor(sizes + 0.5).astype(np.int64), 1)
    pxc = np.floor(sx).astype(np.int64)
    pyc = np.floor(sy).astype(np.int64)
    ids_all = np.arange(n, dtype=np.int64)
    for s in np.unique(si[valid]):
        sel = ids_all[valid & (si == s)]
        if len(sel) == 0:
            continue
        half = (int(s) - 1) // 2
        offs = np.arange(int(s), dtype=np.int64) - half
        gx, gy = np.meshgrid(offs, offs, indexing="xy")
        gx = gx.ravel()
        gy = gy.ravel()
        chunk = max(1, _MAX_CANDIDATES // (int(s) * int(s)))
        for c in range(0, len(sel), chunk):
            p = sel[c:c + chunk]
            px = pxc[p, None] + gx[None, :]
            py = pyc[p, None] + gy[None, :]
            ok = (px >= 0) & (px < fb.width) & (py >= 0) & (py < fb.height)
            if not ok.any():
                continue
            pi, oi = np.nonzero(ok)
            lin = py[pi, oi] * fb.width + px[pi, oi]
            ids = (id_base + p[pi]).astype(np.uint32)
            np.minimum.at(fb.packed, lin, _pack(depth[p[pi]], ids))


def clip_triangles_near(vertices_eye, attrs, near):
    """Clip eye-space triangles against the plane z = near.

    ``vertices_eye``: (T, 3, 3); ``attrs``: list of (T, 3, k) arrays
    interpolated linearly along cut edges. Returns (vertices, attrs) with
    straddling triangles replaced by their clipped fans; fully-behind
    triangles are dropped.
    """
    z = vertices_eye[:, :, 2]
    front = z >= near
    nfront = front.sum(axis=1)
    keep = nfront == 3
    out_v = [vertices_eye[keep]]
    out_a = [[a[keep].astype(np.float64) for a in attrs]]
    straddle = np.flatnonzero((nfront > 0) & (nfront < 3))
    for t in straddle:
        new_v, new_a = [], []
        for i in range(3):
            j = (i + 1) % 3
            vi, vj = vertices_eye[t, i], vertices_eye[t, j]
            zi, zj = vi[2], vj[2]
            ai = [a[t, i].astype(np.float64) for a in attrs]
            aj = [a[t, j].astype(np.float64) for a in attrs]
            if zi >= near:
                new_v.append(vi)
                new_a.append(ai)
            if (zi >= near) != (zj >= near):
                s = (near - zi) / (zj - zi)
                new_v.append(vi + s * (vj - vi))
                new_a.append([x + s * (y - x) for x, y in zip(ai, aj)])
        for k in range(1, len(new_v) - 1):
            out_v.append(np.stack([new_v[0], new_v[k], new_v[k + 1]])[None])
            out_a.append([np.stack([new_a[0][m], new_a[k][m], new_a[k + 1][m]])[None]
                          for m in range(len(attrs))])
    vertices = np.concatenate(out_v)
    merged = [np.concatenate([oa[m] for oa in out_a]) for m in range(len(attrs))]
    return vertices, merged
