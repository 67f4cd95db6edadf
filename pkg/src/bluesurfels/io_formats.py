"""Deterministic persistence: surfel files, OBJ meshes, PNG images, and
scene manifests.

Surfel file layout (.bsrf), little-endian throughout:

    header (20 bytes): magic "BSRF" | version u32 | surfelCount u32
                       | coverage f32 | resolutionParameter u32
    record (28 bytes): position 3xf32 | normal 3xf32 | color RGBA8

Files truncated anywhere behind the header load as the longest
whole-record prefix, which makes any byte prefix of a stream a valid
approximation of the full array.
"""

import json
import os
import struct

import numpy as np
from PIL import Image as _PILImage

from .errors import ImageError, ObjParseError, SceneError, SurfelFormatError
from .scene import Material, Mesh, SceneNode
from .surfels import SurfelArray

SURFEL_MAGIC = b"BSRF"
SURFEL_VERSION = 1
_HEADER = struct.Struct("<4sIIfI")
_RECORD_DTYPE = np.dtype([
    ("position", "<f4", (3,)),
    ("normal", "<f4", (3,)),
    ("color", "u1", (4,)),
])


class Image:
    """RGBA8 raster with positive dimensions; pixel grid is (h, w, 4)."""

    def __init__(self, width, height, pixels=None):
        if width <= 0 or height <= 0:
            raise ImageError(f"image dimensions must be positive, got {width}x{height}")
        self.width = int(width)
        self.height = int(height)
        if pixels is None:
            pixels = np.zeros((self.height, self.width, 4), dtype=np.uint8)
        self.pixels = np.ascontiguousarray(pixels, dtype=np.uint8)
        if self.pixels.shape != (self.height, self.width, 4):
            raise ImageError("pixel grid does not match image dimensions")

    @staticmethod
    def from_pixels(pixels):
        pixels = np.asarray(pixels)
        return Image(pixels.shape[1], pixels.shape[0], pixels)


def save_image(image, destination):
    """Lossless PNG write with fixed encoder settings (byte-deterministic)."""
    pil = _PILImage.fromarray(image.pixels, mode="RGBA")
    try:
        pil.save(destination, format="PNG", optimize=False, compress_level=6)
    except OSError as exc:
        raise ImageError(f"cannot write image to {destination}: {exc}") from exc


def load_image(source):
    try:
        with _PILImage.open(source) as pil:
            pixels = np.asarray(pil.convert("RGBA"), dtype=np.uint8)
    except FileNotFoundError:
        raise
    except OSError as exc:
        raise ImageError(f"cannot read image from {source}: {exc}") from exc
    return Image.from_pixels(pixels)


def save_surfels(array, destination):
    """Write a surfel array; returns the byte count written."""
    records = np.empty(len(array), dtype=_RECORD_DTYPE)
    records["position"] = array.positions.astype(np.float32)
    records["normal"] = array.normals.astype(np.float32)
    records["color"] = array.colors
    header = _HEADER.pack(SURFEL_MAGIC, SURFEL_VERSION, len(array),
                          array.coverage, array.source_resolution)
    payload = header + records.tobytes()
    if hasattr(destination, "write"):
        destination.write(payload)
    else:
        try:
            with open(destination, "wb") as fh:
                fh.write(payload)
        except OSError as exc:
            raise SurfelFormatError(f"cannot write {destination}: {exc}") from exc
    return len(payload)


def load_surfels(source, max_prefix=None):
    """Read up to ``max_prefix`` surfels; truncated files yield the longest
    whole-record prefix without error."""
    if hasattr(source, "read"):
        data = source.read()
        path = getattr(source, "name", "<stream>")
    else:
        path = source
        try:
            with open(source, "rb") as fh:
                data = fh.read()
        except OSError as exc:
            raise SurfelFormatError(f"cannot read {source}: {exc}") from exc
    if len(data) < _HEADER.size:
        raise SurfelFormatError(f"{path}: truncated inside the 20-byte header")
    magic, version, count, coverage, resolution = _HEADER.unpack_from(data)
    if magic != SURFEL_MAGIC:
        raise SurfelFormatError(f"{path}: bad magic {magic!r}")
    if version != SURFEL_VERSION:
        raise SurfelFormatError(f"{path}: unsupported version {version}")
    available = (len(data) - _HEADER.size) // _RECORD_DTYPE.itemsize
    n = min(count, available)
    if max_prefix is not None:
        n = min(n, max(0, int(max_prefix)))
    records = np.frombuffer(data, dtype=_RECORD_DTYPE, count=n, offset=_HEADER.size)
    return SurfelArray(records["position"], records["normal"], records["color"],
                       min(1.0, max(0.0, float(coverage))), resolution,
                       source_path=path if isinstance(path, (str, os.PathLike)) else None)


def _parse_obj_index(token, count, line_number):
    try:
        idx = int(token)
    except ValueError:
        raise ObjParseError(f"bad index {token!r}", line_number) from None
    if idx < 0:
        idx = count + idx  # OBJ negative indices are relative to the end
    else:
        idx -= 1
    if idx < 0 or idx >= count:
        raise ObjParseError(f"index {token} out of range", line_number)
    return idx


def load_obj(source, material=None):
    """Load the v/vn/f subset of Wavefront OBJ; faces are fan-triangulated.

    Corners pairing the same position with different normals are split
    into distinct vertices. Meshes without vn records get area-weighted
    vertex normals.
    """
    if hasattr(source, "read"):
        text = source.read()
        path = getattr(source, "name", None)
    else:
        path = source
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()
    positions, normals, corners = [], [], {}
    out_pos, out_norm, tris = [], [], []

    def corner(v_idx, n_idx):
        key = (v_idx, n_idx)
        if key not in corners:
            corners[key] = len(out_pos)
            out_pos.append(positions[v_idx])
            out_norm.append(normals[n_idx] if n_idx is not None else None)
        return corners[key]

    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        tag = parts[0]
        if tag == "v":
            if len(parts) < 4:
                raise ObjParseError("v record needs 3 coordinates", line_number)
            try:
                positions.append([float(x) for x in parts[1:4]])
            except ValueError:
                raise ObjParseError("bad vertex coordinate", line_number) from None
        elif tag == "vn":
            if len(parts) < 4:
                raise ObjParseError("vn record needs 3 components", line_number)
            try:
                normals.append([float(x) for x in parts[1:4]])
            except ValueError:
                raise ObjParseError("bad normal component", line_number) from None
        elif tag == "f":
            if len(parts) < 4:
                raise ObjParseError("face needs at least 3 vertices", line_number)
            face = []
            for token in parts[1:]:
                fields = token.split("/")
                v_idx = _parse_obj_index(fields[0], len(positions), line_number)
                n_idx = None
                if len(fields) >= 3 and fields[2]:
                    n_idx = _parse_obj_index(fields[2], len(normals), line_number)
                face.append(corner(v_idx, n_idx))
            for k in range(1, len(face) - 1):
                tris.append((face[0], face[k], face[k + 1]))
        # other record types (vt, o, g, s, usemtl, mtllib) are ignored
    if not out_pos:
        raise ObjParseError("no vertices in file", 0)
    out_pos = np.asarray(out_pos, dtype=np.float64)
    have_normals = all(n is not None for n in out_norm)
    norm = np.asarray(out_norm, dtype=np.float64) if have_normals else None
    return Mesh(out_pos, np.asarray(tris, dtype=np.int32).reshape(-1, 3),
                normals=norm, material=material, source_path=path)


def save_obj(mesh, destination):
    """Minimal OBJ writer (v, vn, f) for procedurally generated meshes."""
    with open(destination, "w", encoding="utf-8") as fh:
        for p in mesh.positions:
            fh.write(f"v {p[0]:.9g} {p[1]:.9g} {p[2]:.9g}\n")
        for n in mesh.normals:
            fh.write(f"vn {n[0]:.9g} {n[1]:.9g} {n[2]:.9g}\n")
        for t in mesh.triangles:
            fh.write("f {0}//{0} {1}//{1} {2}//{2}\n".format(t[0] + 1, t[1] + 1, t[2] + 1))
    mesh.source_path = os.fspath(destination)


def load_scene(manifest_path):
    """Build a scene graph from a JSON manifest.

    Nodes referencing the same mesh or surfel file share one in-memory
    object, which preserves prototype-once preprocessing across a
    save/load round trip.
    """
    manifest_path = os.fspath(manifest_path)
    base = os.path.dirname(os.path.abspath(manifest_path))
    with open(manifest_path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict) or "nodes" not in doc:
        raise SceneError(f"{manifest_path}: manifest must be an object with a 'nodes' list")
    mesh_cache, surfel_cache, nodes = {}, {}, {}
    order = []
    for entry in doc["nodes"]:
        node_id = entry["id"]
        if node_id in nodes:
            raise SceneError(f"{manifest_path}: duplicate node id {node_id!r}")
        transform = np.asarray(entry.get("transform",
                                         [1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1]),
                               dtype=np.float64)
        if transform.size != 16:
            raise SceneError(f"{manifest_path}: node {node_id!r} transform needs 16 values")
        mat = transform.reshape(4, 4, order="F")  # column-major on disk
        node = SceneNode(local_transform=mat, name=str(node_id))
        mesh_path = entry.get("mesh")
        if mesh_path:
            full = os.path.normpath(os.path.join(base, mesh_path))
            if full not in mesh_cache:
                mesh_cache[full] = load_obj(full)
            node.mesh = mesh_cache[full]
        surfel_path = entry.get("surfels")
        if surfel_path:
            full = os.path.normpath(os.path.join(base, surfel_path))
            if full not in surfel_cache:
                surfel_cache[full] = load_surfels(full)
            node.surfels = surfel_cache[full]
        nodes[node_id] = (node, entry.get("parent"))
        order.append(node_id)
    roots = []
    for node_id in order:
        node, parent_id = nodes[node_id]
        if parent_id is None:
            roots.append(node)
        elif parent_id not in nodes:
            raise SceneError(f"{manifest_path}: node {node_id!r} has unknown parent {parent_id!r}")
        else:
            nodes[parent_id][0].children.append(node)
    if len(roots) != 1:
        raise SceneError(f"{manifest_path}: expected exactly one root node, found {len(roots)}")
    return roots[0]


def save_scene(root, manifest_path):
    """Write the manifest for a scene whose meshes/surfels are file-backed.

    Shared nodes are emitted once per reference path (the manifest schema
    is a strict tree); sharing is restored on load through the mesh and
    surfel path caches.
    """
    manifest_path = os.fspath(manifest_path)
    base = os.path.dirname(os.path.abspath(manifest_path))
    entries = []
    counter = [0]

    def visit(node, parent_id):
        node_id = f"n{counter[0]}"
        counter[0] += 1
        entry = {
            "id": node_id,
            "parent": parent_id,
            "transform": [float(x) for x in node.local_transform.flatten(order="F")],
        }
        if node.mesh is not None:
            if not node.mesh.source_path:
                raise SceneError(f"node {node.name or node_id}: mesh has no source file; "
                                 "save it with save_obj first")
            entry["mesh"] = os.path.relpath(node.mesh.source_path, base)
        if node.surfels is not None:
            if not node.surfels.source_path:
                raise SceneError(f"node {node.name or node_id}: surfel array has no source "
                                 "file; save it with save_surfels first")
            entry["surfels"] = os.path.relpath(node.surfels.source_path, base)
        entries.append(entry)
        for child in node.children:
            visit(child, node_id)

    visit(root, None)
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump({"nodes": entries}, fh, indent=2)
        fh.write("\n")
