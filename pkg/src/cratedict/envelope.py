"""On-disk container shared by every persistable structure.

Layout: magic ``CR8D``, a format version byte, a length-prefixed JSON
header (carrying the structure kind plus everything needed to re-derive
its geometry), then a length-prefixed list of opaque bit-image blobs whose
order is fixed by each structure.
"""

from __future__ import annotations

import json
import struct

from .errors import ConfigError

MAGIC = b"CR8D"
VERSION = 1


def pack_envelope(kind: str, header: dict, blobs: list[bytes]) -> bytes:
    head = dict(header)
    head["kind"] = kind
    raw_head = json.dumps(head, sort_keys=True).encode()
    parts = [MAGIC, bytes([VERSION]), struct.pack(">I", len(raw_head)), raw_head,
             struct.pack(">I", len(blobs))]
    for blob in blobs:
        parts.append(struct.pack(">I", len(blob)))
        parts.append(blob)
    return b"".join(parts)


def unpack_envelope(raw: bytes) -> tuple[str, dict, list[bytes]]:
    if len(raw) < 9 or raw[:4] != MAGIC:
        raise ConfigError("not a crate container (bad magic)")
    if raw[4] != VERSION:
        raise ConfigError(f"unsupported container version {raw[4]}")
    pos = 5

    def take(length: int) -> bytes:
        nonlocal pos
        if pos + length > len(raw):
            raise ConfigError("container truncated")
        piece = raw[pos:pos + length]
        pos += length
        return piece

    (head_len,) = struct.unpack(">I", take(4))
    try:
        header = json.loads(take(head_len).decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"unreadable container header: {exc}") from exc
    (count,) = struct.unpack(">I", take(4))
    blobs = []
    for _ in range(count):
        (blob_len,) = struct.unpack(">I", take(4))
        blobs.append(take(blob_len))
    if pos != len(raw):
        raise ConfigError("trailing bytes after container payload")
    kind = header.pop("kind", None)
    if kind is None:
        raise ConfigError("container header lacks a kind")
    return kind, header, blobs
