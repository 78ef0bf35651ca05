"""Single-file checkpoint archive.

Byte layout (all integers little-endian):

    magic   8 bytes   b"LGCKPT\\x00\\x01" (includes format version 1)
    u32     manifest length in bytes
    bytes   manifest: UTF-8 "key = value" lines, sorted by key
    u32     number of array entries
    per entry (sorted by name):
        u16     name length, then UTF-8 name
        u8      ndim, then ndim * u32 dims
        f32[]   row-major little-endian data

Entries cover network parameters (e.g. "g/downs.0.weight") and Adam state
("optim/g/m/...", "optim/g/v/..."; step counters live in the manifest).
Save -> load -> save is byte-identical.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict

import numpy as np

MAGIC = b"LGCKPT\x00\x01"
FORMAT_VERSION = 1


class CheckpointError(IOError):
    """Raised when a checkpoint file is corrupt or incompatible."""


@dataclass
class Checkpoint:
    """Parsed checkpoint: manifest plus named float32 arrays."""

    manifest: Dict[str, str] = field(default_factory=dict)
    arrays: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def epoch(self) -> int:
        return int(self.manifest["epoch"])

    @property
    def trainer(self) -> str:
        return self.manifest["trainer"]


def _encode_manifest(manifest: Dict[str, str]) -> bytes:
    lines = []
    for key in sorted(manifest):
        value = str(manifest[key])
        if "\n" in key or "\n" in value or " = " in key:
            raise ValueError(f"manifest entry {key!r} contains reserved characters")
        lines.append(f"{key} = {value}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def _decode_manifest(raw: bytes) -> Dict[str, str]:
    manifest = {}
    for line in raw.decode("utf-8").splitlines():
        if not line.strip():
            continue
        key, sep, value = line.partition(" = ")
        if not sep:
            raise CheckpointError(f"malformed manifest line {line!r}")
        manifest[key] = value
    return manifest


def save_checkpoint(path, manifest: Dict[str, str], arrays: Dict[str, np.ndarray]) -> Path:
    path = Path(path)
    manifest = dict(manifest)
    manifest.setdefault("format_version", str(FORMAT_VERSION))
    blob = bytearray()
    blob += MAGIC
    encoded = _encode_manifest(manifest)
    blob += struct.pack("<I", len(encoded))
    blob += encoded
    blob += struct.pack("<I", len(arrays))
    for name in sorted(arrays):
        arr = np.asarray(arrays[name], dtype="<f4", order="C")
        encoded_name = name.encode("utf-8")
        blob += struct.pack("<H", len(encoded_name))
        blob += encoded_name
        blob += struct.pack("<B", arr.ndim)
        blob += struct.pack(f"<{arr.ndim}I", *arr.shape)
        blob += arr.tobytes()
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(bytes(blob))
    tmp.replace(path)
    return path


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:len(MAGIC) - 1] != MAGIC[:-1]:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    if raw[:len(MAGIC)] != MAGIC:
        raise CheckpointError(
            f"{path}: unsupported checkpoint format version {raw[len(MAGIC) - 1]}")
    offset = len(MAGIC)

    def take(n: int, what: str) -> bytes:
        nonlocal offset
        if offset + n > len(raw):
            raise CheckpointError(f"{path}: truncated while reading {what}")
        chunk = raw[offset:offset + n]
        offset += n
        return chunk

    (manifest_len,) = struct.unpack("<I", take(4, "manifest length"))
    manifest = _decode_manifest(take(manifest_len, "manifest"))
    if int(manifest.get("format_version", "0")) != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: manifest format_version {manifest.get('format_version')} "
            f"!= supported {FORMAT_VERSION}")
    (n_entries,) = struct.unpack("<I", take(4, "entry count"))
    arrays: Dict[str, np.ndarray] = {}
    name = "<header>"
    for _ in range(n_entries):
        (name_len,) = struct.unpack("<H", take(2, "entry name length"))
        name = take(name_len, "entry name").decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1, f"entry {name!r} ndim"))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim, f"entry {name!r} shape"))
        count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        data = take(4 * count, f"entry {name!r} data")
        arrays[name] = np.frombuffer(data, dtype="<f4").reshape(shape).copy()
    if offset != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - offset} trailing bytes after entry {name!r}")
    return Checkpoint(manifest=manifest, arrays=arrays)
