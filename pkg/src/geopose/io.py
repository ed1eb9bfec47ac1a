"""On-disk formats: GPR rasters, PNG previews, pose sidecars and run manifests.

GPR v1 layout (all little-endian)::

    b"GPR1" | u32 width | u32 height | u32 channels | f32 data[height][width][channels]

NaN marks invalid pixels.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from pathlib import Path

import numpy as np

from . import __version__
from .errors import InvalidArgumentError
from .raster import Raster

MAGIC = b"GPR1"
_HEADER = struct.Struct("<4sIII")
CONVENTION = "ground-to-surface"
FRAME = "y-down"


def encode_gpr(raster: Raster) -> bytes:
    rows, cols = raster.shape
    body = np.ascontiguousarray(raster.data, dtype="<f4").tobytes()
    return _HEADER.pack(MAGIC, cols, rows, raster.channels) + body


def decode_gpr(buf: bytes) -> Raster:
    if len(buf) < _HEADER.size:
        raise InvalidArgumentError("GPR data is shorter than its header")
    magic, cols, rows, ch = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise InvalidArgumentError(f"bad GPR magic {magic!r}")
    if ch < 1:
        raise InvalidArgumentError("GPR channel count must be >= 1")
    expected = _HEADER.size + 4 * cols * rows * ch
    if len(buf) != expected:
        raise InvalidArgumentError(f"GPR payload size {len(buf)} does not match header ({expected})")
    data = np.frombuffer(buf, dtype="<f4", offset=_HEADER.size).reshape(rows, cols, ch)
    return Raster(data.astype(np.float32))


def write_gpr(path, raster: Raster) -> None:
    Path(path).write_bytes(encode_gpr(raster))


def read_gpr(path) -> Raster:
    return decode_gpr(Path(path).read_bytes())


def write_png(path, raster: Raster, channel: int | None = None, mask: np.ndarray | None = None) -> None:
    """8-bit min-max normalised preview; invalid pixels are black.

    Pixels set in ``mask`` are painted blue (the occlusion colour).
    """
    from PIL import Image

    data = raster.data.astype(np.float64)
    if channel is not None:
        data = data[:, :, channel : channel + 1]
    if data.shape[2] not in (1, 3):
        data = data[:, :, :1]
    valid = ~np.isnan(data[:, :, 0])
    out = np.zeros(data.shape, dtype=np.uint8)
    if valid.any():
        lo = float(np.nanmin(data))
        hi = float(np.nanmax(data))
        span = hi - lo if hi > lo else 1.0
        scaled = np.clip((data - lo) / span * 255.0 + 0.5, 0, 255)
        out[valid] = scaled[valid].astype(np.uint8)
    rgb = np.repeat(out, 3, axis=2) if out.shape[2] == 1 else out
    if mask is not None:
        rgb[np.asarray(mask, bool)] = (0, 0, 255)
    Image.fromarray(rgb).save(path)


def write_pose(path, scale: float, angle: float) -> None:
    doc = {"scale": float(scale), "angle_rad": float(angle), "convention": CONVENTION, "frame": FRAME}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_pose(path) -> tuple[float, float]:
    doc = json.loads(Path(path).read_text())
    for key in ("scale", "angle_rad", "convention", "frame"):
        if key not in doc:
            raise InvalidArgumentError(f"pose sidecar {path} lacks {key!r}")
    if doc["convention"] != CONVENTION:
        raise InvalidArgumentError(f"pose sidecar convention must be {CONVENTION!r}, got {doc['convention']!r}")
    if doc["frame"] != FRAME:
        raise InvalidArgumentError(f"pose sidecar frame must be {FRAME!r}, got {doc['frame']!r}")
    s, a = doc["scale"], doc["angle_rad"]
    if not all(isinstance(v, (int, float)) and math.isfinite(v) for v in (s, a)) or s < 0:
        raise InvalidArgumentError("pose sidecar needs finite scale >= 0 and a finite angle")
    return float(s), float(a)


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(target, command: str, inputs: dict, params: dict, seed: int | None = None) -> Path:
    """Record what produced some outputs. Thread count is deliberately not part of it.

    ``target`` is an output directory (manifest goes to ``manifest.json``
    inside it) or an output file (manifest goes next to it).
    """
    doc = {
        "command": command,
        "inputs": {name: {"path": str(p), "sha256": file_digest(p)} for name, p in sorted(inputs.items())},
        "seed": seed,
        "parameters": params,
        "tool_version": __version__,
    }
    target = Path(target)
    path = target / "manifest.json" if target.is_dir() else target.with_name(target.name + ".manifest.json")
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path
