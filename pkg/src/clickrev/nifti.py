"""Minimal NIfTI-1 volume I/O.

Reads and writes single-file ``.nii`` / ``.nii.gz`` volumes with the common
scalar dtypes, honoring pixdim spacing and scl_slope/scl_inter rescaling.
Arrays are returned as (slices, rows, cols) = (z, y, x).  Orientation codes
(qform/sform) are ignored; volumes are used in stored voxel order.
"""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np


class UnsupportedFormat(ValueError):
    """Not a NIfTI-1 file this reader can handle."""


class CorruptHeader(ValueError):
    """The NIfTI-1 header is malformed or truncated."""


_HEADER_BYTES = 348
_MAGIC_OFFSET = 344
_DTYPES = {
    2: np.uint8,
    4: np.int16,
    8: np.int32,
    16: np.float32,
    64: np.float64,
    256: np.int8,
    512: np.uint16,
    768: np.uint32,
}
_DTYPE_CODES = {np.dtype(v): k for k, v in _DTYPES.items()}


def _open_maybe_gzip(path: Path):
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def read_nifti(path) -> tuple[np.ndarray, tuple[float, float, float]]:
    """Load a volume.

    Returns (voxels, spacing) where voxels has shape (slices, rows, cols) and
    spacing is (row_mm, col_mm, slice_mm).
    """
    path = Path(path)
    if not path.name.endswith((".nii", ".nii.gz")):
        raise UnsupportedFormat(f"expected a .nii or .nii.gz file, got {path.name}")
    with _open_maybe_gzip(path) as fh:
        header = fh.read(_HEADER_BYTES)
        if len(header) < _HEADER_BYTES:
            raise CorruptHeader(f"{path}: header truncated at {len(header)} bytes")
        endian = "<"
        (sizeof_hdr,) = struct.unpack("<i", header[:4])
        if sizeof_hdr != _HEADER_BYTES:
            (sizeof_hdr,) = struct.unpack(">i", header[:4])
            if sizeof_hdr != _HEADER_BYTES:
                raise CorruptHeader(f"{path}: sizeof_hdr != 348 in either byte order")
            endian = ">"
        magic = header[_MAGIC_OFFSET : _MAGIC_OFFSET + 4]
        if magic not in (b"n+1\x00", b"ni1\x00"):
            raise CorruptHeader(f"{path}: bad magic {magic!r}")
        if magic == b"ni1\x00":
            raise UnsupportedFormat(f"{path}: two-file NIfTI (.hdr/.img) is not supported")
        dim = struct.unpack(endian + "8h", header[40:56])
        ndim = dim[0]
        if not 2 <= ndim <= 4:
            raise UnsupportedFormat(f"{path}: {ndim}-dimensional volumes are not supported")
        if ndim == 4 and dim[4] != 1:
            raise UnsupportedFormat(f"{path}: 4D volumes with {dim[4]} frames are not supported")
        nx, ny = dim[1], dim[2]
        nz = dim[3] if ndim >= 3 else 1
        if nx < 1 or ny < 1 or nz < 1:
            raise CorruptHeader(f"{path}: nonpositive dimensions {dim[1:4]}")
        (datatype,) = struct.unpack(endian + "h", header[70:72])
        if datatype not in _DTYPES:
            raise UnsupportedFormat(f"{path}: datatype code {datatype} not supported")
        dtype = np.dtype(_DTYPES[datatype]).newbyteorder(endian)
        pixdim = struct.unpack(endian + "8f", header[76:108])
        (vox_offset,) = struct.unpack(endian + "f", header[108:112])
        scl_slope, scl_inter = struct.unpack(endian + "2f", header[112:120])
        offset = int(vox_offset) if vox_offset else _HEADER_BYTES + 4
        skip = offset - _HEADER_BYTES
        if skip < 0:
            raise CorruptHeader(f"{path}: vox_offset {vox_offset} precedes the header end")
        fh.read(skip)
        count = nx * ny * nz
        raw = fh.read(count * dtype.itemsize)
        if len(raw) < count * dtype.itemsize:
            raise CorruptHeader(f"{path}: data truncated, expected {count} voxels")
    voxels = np.frombuffer(raw, dtype=dtype).reshape(nz, ny, nx)
    if scl_slope not in (0.0, 1.0) or scl_inter != 0.0:
        slope = scl_slope if scl_slope != 0.0 else 1.0
        voxels = voxels.astype(np.float64) * slope + scl_inter
    spacing = (float(pixdim[2]), float(pixdim[1]), float(pixdim[3]))
    if any(s <= 0 for s in spacing):
        raise CorruptHeader(f"{path}: nonpositive pixdim {pixdim[1:4]}")
    return voxels, spacing


def write_nifti(path, voxels: np.ndarray, spacing: tuple[float, float, float]) -> Path:
    """Write a (slices, rows, cols) array with (row_mm, col_mm, slice_mm) spacing."""
    path = Path(path)
    arr = np.ascontiguousarray(voxels)
    if arr.ndim != 3:
        raise ValueError(f"expected a 3D array, got shape {arr.shape}")
    if arr.dtype not in _DTYPE_CODES:
        raise UnsupportedFormat(f"dtype {arr.dtype} has no NIfTI-1 code here")
    nz, ny, nx = arr.shape
    row_mm, col_mm, slice_mm = spacing
    header = bytearray(_HEADER_BYTES)
    struct.pack_into("<i", header, 0, _HEADER_BYTES)
    struct.pack_into("<8h", header, 40, 3, nx, ny, nz, 1, 1, 1, 1)
    struct.pack_into("<h", header, 70, _DTYPE_CODES[arr.dtype])
    struct.pack_into("<h", header, 72, arr.dtype.itemsize * 8)
    struct.pack_into("<8f", header, 76, 1.0, col_mm, row_mm, slice_mm, 0.0, 0.0, 0.0, 0.0)
    struct.pack_into("<f", header, 108, float(_HEADER_BYTES + 4))
    struct.pack_into("<2f", header, 112, 1.0, 0.0)
    header[_MAGIC_OFFSET : _MAGIC_OFFSET + 4] = b"n+1\x00"
    payload = bytes(header) + b"\x00\x00\x00\x00" + arr.tobytes()
    opener = gzip.open if path.name.endswith(".gz") else open
    with opener(path, "wb") as fh:
        fh.write(payload)
    return path
