"""Binary containers for tensors (``PTEN``) and panoptic masks (``PMSK``).

Both are little-endian with no padding.

Tensor layout::

    b"PTEN" | version u8 = 1 | dtype u8 = 1 (float32) | ndim u8 | dims u32 * ndim | float32 payload

Mask layout::

    b"PMSK" | version u8 = 1 | height u32 | width u32 | (class u16, instance u16) * height * width
"""

import struct
from pathlib import Path
from typing import Union

import numpy as np

from rgbd_panoptic.postprocess import PanopticMask

TENSOR_MAGIC = b"PTEN"
MASK_MAGIC = b"PMSK"
VERSION = 1
DTYPE_F32 = 1

PathLike = Union[str, Path]


class FormatError(ValueError):
    """Malformed container; ``offset`` is the byte position where parsing failed."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


def encode_tensor(t: np.ndarray) -> bytes:
    t = np.asarray(t)
    if t.ndim < 1 or t.ndim > 255:
        raise ValueError(f"tensor rank must be in [1, 255], got {t.ndim}")
    if any(d < 1 or d > 0xFFFFFFFF for d in t.shape):
        raise ValueError(f"tensor dims must be positive 32-bit values, got {t.shape}")
    header = TENSOR_MAGIC + struct.pack("<BBB", VERSION, DTYPE_F32, t.ndim)
    header += struct.pack(f"<{t.ndim}I", *t.shape)
    return header + np.ascontiguousarray(t, dtype="<f4").tobytes()


def decode_tensor(buf: bytes) -> np.ndarray:
    """Parse a tensor container; values are promoted to float64."""
    if len(buf) < 7:
        raise FormatError(f"truncated header: {len(buf)} bytes", len(buf))
    if buf[:4] != TENSOR_MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r}, expected {TENSOR_MAGIC!r}", 0)
    version, dtype, ndim = struct.unpack_from("<BBB", buf, 4)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    if dtype != DTYPE_F32:
        raise FormatError(f"unsupported dtype code {dtype}", 5)
    if ndim == 0:
        raise FormatError("tensor rank 0 is not supported", 6)
    dims_end = 7 + 4 * ndim
    if len(buf) < dims_end:
        raise FormatError(f"truncated dims: need {dims_end} bytes, have {len(buf)}", len(buf))
    dims = struct.unpack_from(f"<{ndim}I", buf, 7)
    if 0 in dims:
        raise FormatError(f"zero-sized dimension in {dims}", 7 + 4 * dims.index(0))
    expected = 4 * int(np.prod(dims, dtype=object))
    actual = len(buf) - dims_end
    if actual != expected:
        raise FormatError(f"payload size mismatch: expected {expected} bytes for dims {dims}, got {actual}", dims_end)
    data = np.frombuffer(buf, dtype="<f4", offset=dims_end).reshape(dims)
    if not np.all(np.isfinite(data)):
        bad = int(np.flatnonzero(~np.isfinite(data.ravel()))[0])
        raise FormatError("non-finite value in payload", dims_end + 4 * bad)
    return data.astype(np.float64)


def encode_mask(mask: PanopticMask) -> bytes:
    h, w = mask.shape
    if max(mask.class_map.max(initial=0), mask.instance_map.max(initial=0)) > 0xFFFF:
        raise ValueError("class and instance ids must fit in 16 bits")
    records = np.empty((h, w, 2), dtype="<u2")
    records[..., 0] = mask.class_map
    records[..., 1] = mask.instance_map
    return MASK_MAGIC + struct.pack("<BII", VERSION, h, w) + records.tobytes()


def decode_mask(buf: bytes) -> PanopticMask:
    if len(buf) < 13:
        raise FormatError(f"truncated header: {len(buf)} bytes", len(buf))
    if buf[:4] != MASK_MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r}, expected {MASK_MAGIC!r}", 0)
    version, h, w = struct.unpack_from("<BII", buf, 4)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    if h == 0 or w == 0:
        raise FormatError(f"empty mask {h}x{w}", 5)
    expected = 4 * h * w
    actual = len(buf) - 13
    if actual != expected:
        raise FormatError(f"payload size mismatch: expected {expected} bytes for {h}x{w}, got {actual}", 13)
    records = np.frombuffer(buf, dtype="<u2", offset=13).reshape(h, w, 2)
    return PanopticMask(records[..., 0].astype(np.int64), records[..., 1].astype(np.int64))


def write_tensor(path: PathLike, t: np.ndarray) -> None:
    Path(path).write_bytes(encode_tensor(t))


def read_tensor(path: PathLike) -> np.ndarray:
    return decode_tensor(Path(path).read_bytes())


def write_mask(path: PathLike, mask: PanopticMask) -> None:
    Path(path).write_bytes(encode_mask(mask))


def read_mask(path: PathLike) -> PanopticMask:
    return decode_mask(Path(path).read_bytes())
