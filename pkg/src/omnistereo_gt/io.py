"""File formats: correspondences, point clouds, rasters, reports.

Raster file layout (``.osr``)::

    OSRASTER <width> <height> <channel> <unit>\\n
    <width * height little-endian float32, row-major; NaN = no label>

``channel`` is ``depth`` or ``disparity``; ``unit`` is ``m`` or ``deg``.

Binary point clouds (``.bin``) start with the 8-byte magic ``OSGPCD01``
and a little-endian uint64 point count, followed by ``count * 3`` float32
values (x, y, z in meters). Anything else is read as text, one ``x y z``
per line.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from contextlib import contextmanager
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ParseError
from .rasters import DEPTH, UNITS, DepthMap

RASTER_MAGIC = "OSRASTER"
CLOUD_MAGIC = b"OSGPCD01"


@contextmanager
def atomic_write(path, mode="wb"):
    """Write to a temporary file next to ``path`` and rename it into place on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, mode) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def _number_rows(path, expected_cols):
    rows = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != expected_cols:
            raise ParseError(f"expected {expected_cols} numbers, found {len(parts)}", path, lineno)
        try:
            vals = [float(p) for p in parts]
        except ValueError:
            raise ParseError(f"not a number in {raw.strip()!r}", path, lineno) from None
        if not all(np.isfinite(vals)):
            raise ParseError("non-finite value", path, lineno)
        rows.append(vals)
    return np.array(rows, dtype=float).reshape(-1, expected_cols)


def read_correspondences(path):
    """Read ``lx ly lz px py`` lines; returns ``(lidar (n, 3), image (n, 2))``."""
    data = _number_rows(path, 5)
    return data[:, :3], data[:, 3:]


def write_correspondences(path, lidar_points, image_points):
    lines = ["# lx ly lz px py  (LiDAR frame meters, image pixels)"]
    for p, q in zip(np.asarray(lidar_points), np.asarray(image_points)):
        lines.append(" ".join(repr(float(v)) for v in (*p, *q)))
    with atomic_write(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_point_cloud(path) -> np.ndarray:
    """Read a binary or text point cloud into an ``(n, 3)`` float array."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(len(CLOUD_MAGIC))
        if head == CLOUD_MAGIC:
            raw = fh.read(8)
            if len(raw) != 8:
                raise ParseError("truncated point-cloud header", path)
            (count,) = struct.unpack("<Q", raw)
            data = np.frombuffer(fh.read(), dtype="<f4")
            if data.size != 3 * count:
                raise ParseError(f"header announces {count} points, payload holds {data.size / 3:g}", path)
            return data.reshape(count, 3).astype(np.float64)
    return _number_rows(path, 3)


def write_point_cloud(path, xyz, binary: bool | None = None):
    """Write points; binary unless the suffix is ``.txt``/``.xyz`` or ``binary=False``."""
    path = Path(path)
    xyz = np.asarray(xyz, dtype=float).reshape(-1, 3)
    if binary is None:
        binary = path.suffix.lower() not in (".txt", ".xyz")
    with atomic_write(path, "wb") as fh:
        if binary:
            fh.write(CLOUD_MAGIC + struct.pack("<Q", len(xyz)))
            fh.write(xyz.astype("<f4").tobytes())
        else:
            fh.write("".join(f"{x!r} {y!r} {z!r}\n" for x, y, z in xyz.tolist()).encode())


def write_raster(path, depth: DepthMap):
    header = f"{RASTER_MAGIC} {depth.width} {depth.height} {depth.kind} {depth.unit}\n".encode("ascii")
    with atomic_write(path, "wb") as fh:
        fh.write(header)
        fh.write(depth.to_nan().astype("<f4").tobytes())


def read_raster(path) -> DepthMap:
    path = Path(path)
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii", errors="replace").split()
        if len(header) != 5 or header[0] != RASTER_MAGIC:
            raise ParseError("not a raster file (bad header)", path, 1)
        try:
            width, height = int(header[1]), int(header[2])
        except ValueError:
            raise ParseError("bad raster size", path, 1) from None
        kind, unit = header[3], header[4]
        if UNITS.get(kind) != unit:
            raise ParseError(f"unknown channel/unit {kind}/{unit}", path, 1)
        data = np.frombuffer(fh.read(), dtype="<f4")
    if data.size != width * height:
        raise ParseError(f"expected {width * height} values, found {data.size}", path)
    return DepthMap.from_nan(data.reshape(height, width).astype(np.float64), kind)


def encode_png16(depth: DepthMap, scale: float = 256.0) -> np.ndarray:
    """``round(value * scale)`` as uint16 with 0 for missing pixels."""
    q = np.round(depth.values * scale)
    if np.any(q[depth.valid] > 65535) or np.any(q[depth.valid] < 1):
        raise ValueError("values do not fit the 16-bit PNG encoding at this scale")
    return np.where(depth.valid, q, 0).astype(np.uint16)


def write_png16(path, depth: DepthMap, scale: float = 256.0, encoded: np.ndarray | None = None):
    """16-bit PNG with ``round(value * scale)``; 0 marks missing pixels."""
    img = encode_png16(depth, scale) if encoded is None else encoded
    with atomic_write(path, "wb") as fh:
        Image.fromarray(img).save(fh, format="PNG")


def read_png16(path, scale: float = 256.0, kind: str = DEPTH) -> DepthMap:
    img = np.asarray(Image.open(path)).astype(np.float64)
    valid = img > 0
    return DepthMap(np.where(valid, img / scale, 0.0), valid, kind)


def write_json(path, data):
    with atomic_write(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, allow_nan=False, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"{type(obj).__name__} is not JSON serializable")


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, path, exc.lineno) from None


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def read_scene_tag(path) -> str | None:
    """Scene tag from the map's sidecar ``<file>.json`` if present."""
    side = sidecar_path(path)
    if not side.exists():
        return None
    return read_json(side).get("scene")
