"""Binary container shared by checkpoints, error matrices and libraries.

Layout: 8-byte little-endian header length N, N bytes of UTF-8 JSON header,
then the float64 little-endian blocks named in ``header["blocks"]`` in order,
each stored row-major.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np


class FormatError(ValueError):
    pass


class MalformedHeaderError(FormatError):
    pass


class VersionMismatchError(FormatError):
    pass


class TruncatedFileError(FormatError):
    pass


class MissingFingerprintError(FormatError):
    pass


def encode(header: dict, blocks: dict[str, np.ndarray]) -> bytes:
    header = dict(header)
    header["blocks"] = [[name, list(np.shape(arr))] for name, arr in blocks.items()]
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    body = b"".join(np.ascontiguousarray(arr, dtype="<f8").tobytes() for arr in blocks.values())
    return struct.pack("<Q", len(head)) + head + body


def decode(raw: bytes, fmt: str, version: int) -> tuple[dict, dict[str, np.ndarray]]:
    if len(raw) < 8:
        raise TruncatedFileError("file shorter than the header-length prefix")
    (n,) = struct.unpack("<Q", raw[:8])
    if 8 + n > len(raw):
        raise TruncatedFileError(f"header claims {n} bytes but file has {len(raw) - 8}")
    try:
        header = json.loads(raw[8 : 8 + n].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedHeaderError(f"malformed header: {exc}") from None
    if not isinstance(header, dict) or header.get("format") != fmt or "blocks" not in header:
        raise MalformedHeaderError(f"malformed header: expected format {fmt!r}")
    if header.get("version") != version:
        raise VersionMismatchError(f"version mismatch: file has {header.get('version')!r}, expected {version}")
    blocks = {}
    offset = 8 + n
    for name, shape in header["blocks"]:
        size = int(np.prod(shape)) * 8
        if offset + size > len(raw):
            raise TruncatedFileError(f"block {name!r} truncated")
        blocks[name] = np.frombuffer(raw, dtype="<f8", count=size // 8, offset=offset).reshape(shape).astype(np.float64)
        offset += size
    if offset != len(raw):
        raise MalformedHeaderError(f"{len(raw) - offset} trailing bytes after last block")
    return header, blocks


def write(path, header: dict, blocks: dict[str, np.ndarray]) -> int:
    data = encode(header, blocks)
    Path(path).write_bytes(data)
    return len(data)


def read(path, fmt: str, version: int) -> tuple[dict, dict[str, np.ndarray]]:
    return decode(Path(path).read_bytes(), fmt, version)
