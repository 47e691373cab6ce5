"""OPB1: a bit-exact binary container for operator bundles.

Layout (all integers little-endian):

    magic   4 bytes  "OPB1"
    version u32      1
    n_dof   u32
    count   u32      number of sections
    then per section:
        tag     8 bytes ASCII, space padded
        length  u64 payload byte count
        payload

Matrices are row-major complex128 stored as interleaved little-endian
float64 (re, im). Masks are one u8 (0/1) per DOF. META is three float64
(frequency, wavenumber, radius). Unknown tags are skipped with a warning
so newer writers stay readable.
"""

from __future__ import annotations

import struct
import warnings
from pathlib import Path
from typing import Union

import numpy as np

from .errors import FormatError
from .model import BundleMeta, OperatorBundle

__all__ = ["read_bundle", "write_bundle", "dumps", "loads", "fnv1a64", "bundle_hash"]

MAGIC = b"OPB1"
VERSION = 1

_MATRIX_TAGS = {"Zmat": "Z", "R0mt": "R0", "Xmat": "X", "Wmat": "W", "Rrho": "R_rho"}
_ROWS_TAGS = {"Fmat": "F", "Vexc": "V", "TMPR": "tm_projector"}
_MASK_TAGS = {"FIXM": "fixed_mask", "CTRL": "controllable_mask", "CHIP": "chip_mask"}

# Canonical write order; rewriting a read bundle reproduces the bytes.
_TAG_ORDER = ["Zmat", "R0mt", "Xmat", "Wmat", "Rrho", "Fmat", "Vexc",
              "FIXM", "CTRL", "CHIP", "TMPR", "META"]


def _matrix_bytes(M: np.ndarray) -> bytes:
    return np.ascontiguousarray(M, dtype="<c16").tobytes()


def _mask_bytes(m: np.ndarray) -> bytes:
    return np.ascontiguousarray(m, dtype=np.uint8).tobytes()


def dumps(bundle: OperatorBundle) -> bytes:
    """Serialize a validated bundle to OPB1 bytes."""
    bundle.validate()
    n = bundle.n_dof
    sections: list[tuple[str, bytes]] = []
    for tag, attr in _MATRIX_TAGS.items():
        M = getattr(bundle, attr)
        if M is not None:
            sections.append((tag, _matrix_bytes(M)))
    for tag, attr in _ROWS_TAGS.items():
        M = getattr(bundle, attr)
        if M is not None:
            sections.append((tag, _matrix_bytes(M)))
    sections.append(("FIXM", _mask_bytes(bundle.fixed_mask)))
    sections.append(("CTRL", _mask_bytes(bundle.controllable_mask)))
    if bundle.chip_mask is not None:
        sections.append(("CHIP", _mask_bytes(bundle.chip_mask)))
    meta = bundle.meta
    sections.append(("META", struct.pack("<3d", meta.frequency_hz,
                                         meta.wavenumber, meta.radius)))
    sections.sort(key=lambda s: _TAG_ORDER.index(s[0]))

    out = bytearray()
    out += MAGIC
    out += struct.pack("<III", VERSION, n, len(sections))
    for tag, payload in sections:
        out += tag.encode("ascii").ljust(8)
        out += struct.pack("<Q", len(payload))
        out += payload
    return bytes(out)


def loads(data: bytes) -> OperatorBundle:
    """Parse OPB1 bytes into a fully validated bundle."""
    if len(data) < 16:
        raise IOError("truncated OPB1 header")
    if data[:4] != MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    version, n, count = struct.unpack_from("<III", data, 4)
    if version != VERSION:
        raise FormatError(f"unsupported OPB1 version {version}")

    fields: dict = {}
    meta = BundleMeta()
    offset = 16
    for _ in range(count):
        if offset + 16 > len(data):
            raise IOError("truncated OPB1 section header")
        tag = data[offset:offset + 8].decode("ascii", errors="replace").strip()
        (length,) = struct.unpack_from("<Q", data, offset + 8)
        offset += 16
        if offset + length > len(data):
            raise IOError(f"truncated OPB1 payload for section {tag!r}")
        payload = data[offset:offset + length]
        offset += length

        if tag in _MATRIX_TAGS:
            if length != 16 * n * n:
                raise FormatError(f"section {tag!r} has {length} bytes, "
                                  f"expected {16 * n * n}")
            M = np.frombuffer(payload, dtype="<c16").reshape(n, n)
            fields[_MATRIX_TAGS[tag]] = M.astype(np.complex128)
        elif tag in _ROWS_TAGS:
            if n == 0 or length % (16 * n) != 0:
                raise FormatError(f"section {tag!r} size {length} is not a "
                                  f"multiple of one {n}-DOF complex row")
            rows = length // (16 * n)
            M = np.frombuffer(payload, dtype="<c16").reshape(rows, n)
            fields[_ROWS_TAGS[tag]] = M.astype(np.complex128)
        elif tag in _MASK_TAGS:
            if length != n:
                raise FormatError(f"section {tag!r} has {length} bytes, expected {n}")
            fields[_MASK_TAGS[tag]] = np.frombuffer(payload, dtype=np.uint8) != 0
        elif tag == "META":
            if length != 24:
                raise FormatError(f"META section has {length} bytes, expected 24")
            f_hz, k, a = struct.unpack("<3d", payload)
            meta = BundleMeta(frequency_hz=f_hz, wavenumber=k, radius=a)
        else:
            warnings.warn(f"OPB1: skipping unknown section {tag!r}", stacklevel=2)

    for required in ("Z", "R0", "X"):
        if required not in fields:
            raise FormatError(f"required section for {required} missing")
    bundle = OperatorBundle(n_dof=n, meta=meta, **fields)
    bundle.validate()
    return bundle


def write_bundle(bundle: OperatorBundle, path: Union[str, Path]) -> None:
    Path(path).write_bytes(dumps(bundle))


def read_bundle(path: Union[str, Path]) -> OperatorBundle:
    return loads(Path(path).read_bytes())


_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_FNV_MASK = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a over a byte string."""
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _FNV_MASK
    return h


def bundle_hash(bundle: OperatorBundle) -> str:
    """16-hex-digit FNV-1a of the serialized bundle; stamps every artifact."""
    return f"{fnv1a64(dumps(bundle)):016x}"
