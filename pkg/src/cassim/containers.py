"""Binary containers for cubes, acquisitions, mapping tables, and masks.

One fixed little-endian format serves all array artifacts so every CLI
stage can exchange files without sidecar metadata:

    magic   4 bytes  b"HSC1"
    version u16      currently 1
    kind    u16      1 cube, 2 acquisition, 3 mapping, 4 mask
    rows    u32
    cols    u32
    bands   u32
    pitch   f64      sample pitch in micrometres
    table   f64 x bands   wavelength of each band in nm (0.0 when n/a)
    payload f32, row-major

Payload shapes by kind: cube ``rows x cols x bands``; acquisition
``rows x cols`` (bands = 1); mapping ``rows x cols x bands x 2`` with the
trailing axis holding (x, y) detector coordinates in fractional pixels and
NaN marking entries whose chief ray did not survive; mask ``rows x cols``
of {0, 1}.  Masks can also travel as binary PGM (P5) graymaps where 255
means open.
"""

from __future__ import annotations

import struct

import numpy as np

__all__ = [
    "KIND_CUBE",
    "KIND_ACQUISITION",
    "KIND_MAPPING",
    "KIND_MASK",
    "ContainerError",
    "write_container",
    "read_container",
    "write_pgm_mask",
    "read_pgm_mask",
]

MAGIC = b"HSC1"
VERSION = 1

KIND_CUBE = 1
KIND_ACQUISITION = 2
KIND_MAPPING = 3
KIND_MASK = 4

_HEADER = struct.Struct("<4sHHIIId")

_PAYLOAD_NDIM = {KIND_CUBE: 3, KIND_ACQUISITION: 2, KIND_MAPPING: 4,
                 KIND_MASK: 2}


class ContainerError(ValueError):
    """Malformed or inconsistent container data."""


def _expected_shape(kind: int, rows: int, cols: int, bands: int) -> tuple:
    if kind == KIND_CUBE:
        return (rows, cols, bands)
    if kind == KIND_ACQUISITION or kind == KIND_MASK:
        return (rows, cols)
    if kind == KIND_MAPPING:
        return (rows, cols, bands, 2)
    raise ContainerError(f"unknown container kind {kind}")


def write_container(path, kind: int, data, wavelengths_nm=None,
                    pitch_um: float = 0.0) -> None:
    """Write ``data`` to ``path`` in the HSC1 container format."""
    data = np.asarray(data, dtype=np.float32)
    ndim = _PAYLOAD_NDIM.get(kind)
    if ndim is None:
        raise ContainerError(f"unknown container kind {kind}")
    if data.ndim != ndim:
        raise ContainerError(
            f"kind {kind} expects a {ndim}-D payload, got shape {data.shape}")
    rows, cols = data.shape[:2]
    bands = data.shape[2] if data.ndim >= 3 else 1
    if wavelengths_nm is None:
        wavelengths_nm = np.zeros(bands)
    wavelengths_nm = np.asarray(wavelengths_nm, dtype=np.float64)
    if wavelengths_nm.shape != (bands,):
        raise ContainerError(
            f"wavelength table has {wavelengths_nm.size} entries for "
            f"{bands} bands")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, kind, rows, cols, bands,
                              float(pitch_um)))
        fh.write(wavelengths_nm.astype("<f8").tobytes())
        fh.write(np.ascontiguousarray(data, dtype="<f4").tobytes())


def read_container(path, expect_kind: int | None = None):
    """Read an HSC1 container.

    Returns ``(kind, data, wavelengths_nm, pitch_um)`` where ``data`` is a
    float32 array in the payload shape for its kind.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ContainerError(f"{path}: truncated header")
    magic, version, kind, rows, cols, bands = _HEADER.unpack_from(raw)[:6]
    pitch = _HEADER.unpack_from(raw)[6]
    if magic != MAGIC:
        raise ContainerError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise ContainerError(f"{path}: unsupported version {version}")
    if expect_kind is not None and kind != expect_kind:
        raise ContainerError(
            f"{path}: container kind {kind}, expected {expect_kind}")
    shape = _expected_shape(kind, rows, cols, bands)
    offset = _HEADER.size
    if len(raw) < offset + bands * 8:
        raise ContainerError(f"{path}: truncated wavelength table")
    table = np.frombuffer(raw, dtype="<f8", count=bands, offset=offset)
    offset += bands * 8
    count = int(np.prod(shape))
    if len(raw) < offset + count * 4:
        raise ContainerError(f"{path}: truncated payload")
    payload = np.frombuffer(raw, dtype="<f4", count=count, offset=offset)
    return kind, payload.reshape(shape).copy(), table.copy(), float(pitch)


def write_pgm_mask(path, mask) -> None:
    """Write a binary mask as an 8-bit PGM (P5); open pixels are 255."""
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ContainerError(f"mask must be 2-D, got shape {mask.shape}")
    img = np.where(mask > 0, 255, 0).astype(np.uint8)
    rows, cols = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def read_pgm_mask(path):
    """Read a binary PGM mask back to a {0, 1} float32 array."""
    with open(path, "rb") as fh:
        raw = fh.read()
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        fields.append(raw[start:pos])
    if fields[0] != b"P5":
        raise ContainerError(f"{path}: not a binary PGM (P5) file")
    cols, rows, maxval = (int(f) for f in fields[1:4])
    if maxval > 255:
        raise ContainerError(f"{path}: 16-bit PGM not supported")
    pos += 1
    if len(raw) < pos + rows * cols:
        raise ContainerError(f"{path}: truncated pixel data")
    img = np.frombuffer(raw, dtype=np.uint8, count=rows * cols, offset=pos)
    return (img.reshape(rows, cols) >= 128).astype(np.float32)
