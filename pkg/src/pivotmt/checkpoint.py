"""Checkpoint serialization: a text manifest plus a float32 blob.

The manifest is UTF-8 ``key: value`` lines. Metadata keys come first in a
fixed order, then one ``tensor:`` line per parameter in declaration order
carrying name, shape, byte offset and byte length into the blob. The blob
is the tensors' little-endian 32-bit floats, concatenated. Both files are
a pure function of the model state, so save -> load -> save reproduces
identical bytes.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import FormatError

SCHEMA_VERSION = "1"


def manifest_path(prefix) -> Path:
    return Path(str(prefix) + ".manifest")


def blob_path(prefix) -> Path:
    return Path(str(prefix) + ".blob")


def save_checkpoint(prefix, meta: list[tuple[str, str]], tensors: list[tuple[str, np.ndarray]]) -> None:
    """Write `<prefix>.manifest` and `<prefix>.blob`.

    `meta` is an ordered list of (key, value) string pairs; keys must not
    be "tensor", which is reserved for the tensor table.
    """
    lines = []
    blob = bytearray()
    for key, value in meta:
        if key == "tensor":
            raise FormatError("meta key 'tensor' is reserved")
        lines.append(f"{key}: {value}")
    for name, array in tensors:
        data = np.ascontiguousarray(array, dtype="<f4").tobytes()
        shape = "x".join(str(d) for d in array.shape)
        lines.append(f"tensor: {name} {shape} {len(blob)} {len(data)}")
        blob.extend(data)
    manifest_path(prefix).write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    blob_path(prefix).write_bytes(bytes(blob))


def load_checkpoint(prefix) -> tuple[list[tuple[str, str]], dict[str, np.ndarray]]:
    """Read a checkpoint back; returns (ordered meta pairs, name -> float32 array)."""
    mpath, bpath = manifest_path(prefix), blob_path(prefix)
    if not mpath.exists() or not bpath.exists():
        raise FormatError(f"checkpoint {prefix}: missing manifest or blob file")
    blob = bpath.read_bytes()
    meta: list[tuple[str, str]] = []
    tensors: dict[str, np.ndarray] = {}
    expected_offset = 0
    for lineno, line in enumerate(mpath.read_text(encoding="utf-8").splitlines(), 1):
        key, sep, value = line.partition(": ")
        if not sep:
            raise FormatError(f"{mpath}:{lineno}: expected 'key: value'")
        if key != "tensor":
            meta.append((key, value))
            continue
        fields = value.split(" ")
        if len(fields) != 4:
            raise FormatError(f"{mpath}:{lineno}: malformed tensor record")
        name, shape_text, offset_text, length_text = fields
        shape = tuple(int(d) for d in shape_text.split("x"))
        offset, length = int(offset_text), int(length_text)
        if offset != expected_offset:
            raise FormatError(f"{mpath}:{lineno}: tensor {name} offset {offset} not contiguous")
        if length != int(np.prod(shape)) * 4:
            raise FormatError(f"{mpath}:{lineno}: tensor {name} length disagrees with shape")
        if offset + length > len(blob):
            raise FormatError(f"{mpath}:{lineno}: tensor {name} runs past the blob")
        tensors[name] = np.frombuffer(blob, dtype="<f4", count=length // 4, offset=offset).reshape(shape)
        expected_offset = offset + length
    if expected_offset != len(blob):
        raise FormatError(f"{prefix}: blob has {len(blob) - expected_offset} trailing bytes")
    return meta, tensors


def meta_dict(meta: list[tuple[str, str]]) -> dict[str, str]:
    return dict(meta)
