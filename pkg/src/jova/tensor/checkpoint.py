"""Checkpoint files.

Layout::

    JOVA-CKPT v1
    meta <key>=<value>                      (zero or more)
    tensor name=<n> dtype=<f4 shape=a,b offset=<bytes> nbytes=<bytes>
    ...
    end
    <raw little-endian float32 arrays, concatenated in manifest order>

Keys and values are percent-encoded so any text survives.
"""
from __future__ import annotations

from pathlib import Path
from urllib.parse import quote, unquote

import numpy as np

from jova.errors import FormatError

CHECKPOINT_MAGIC = "JOVA-CKPT v1"


def encode_manifest(magic: str, meta: dict, arrays: list[tuple[str, np.ndarray]]):
    """Build (header bytes, payload bytes) for a magic-tagged array container."""
    lines = [magic]
    for key, value in meta.items():
        lines.append(f"meta {quote(str(key), safe='')}={quote(str(value), safe='')}")
    chunks = []
    offset = 0
    for name, arr in arrays:
        arr = np.ascontiguousarray(arr)
        dtype = arr.dtype.newbyteorder("<")
        raw = arr.astype(dtype, copy=False).tobytes()
        shape = ",".join(str(s) for s in arr.shape)
        lines.append(f"tensor name={quote(name, safe='')} dtype={dtype.str} "
                     f"shape={shape} offset={offset} nbytes={len(raw)}")
        chunks.append(raw)
        offset += len(raw)
    lines.append("end")
    return ("\n".join(lines) + "\n").encode("utf-8"), b"".join(chunks)


def decode_manifest(blob: bytes, magic: str):
    """Inverse of :func:`encode_manifest`: returns (meta, [(name, array)])."""
    first = blob.find(b"\n")
    if first < 0 or blob[:first].decode("utf-8", "replace") != magic:
        raise FormatError(f"missing header {magic!r}")
    end_marker = blob.find(b"\nend\n")
    if end_marker < 0:
        raise FormatError("manifest is not terminated by 'end'")
    header = blob[first + 1:end_marker].decode("utf-8")
    payload = memoryview(blob)[end_marker + 5:]
    meta: dict[str, str] = {}
    arrays = []
    for line in header.split("\n") if header else []:
        kind, _, rest = line.partition(" ")
        if kind == "meta":
            key, sep, value = rest.partition("=")
            if not sep:
                raise FormatError(f"bad meta line {line!r}")
            meta[unquote(key)] = unquote(value)
        elif kind == "tensor":
            fields = dict(item.split("=", 1) for item in rest.split(" "))
            try:
                name = unquote(fields["name"])
                dtype = np.dtype(fields["dtype"])
                shape = tuple(int(s) for s in fields["shape"].split(",") if s)
                offset, nbytes = int(fields["offset"]), int(fields["nbytes"])
            except (KeyError, ValueError, TypeError) as exc:
                raise FormatError(f"bad tensor line {line!r}") from exc
            if offset + nbytes > len(payload):
                raise FormatError(f"tensor {name!r} runs past end of file")
            arr = np.frombuffer(payload[offset:offset + nbytes], dtype=dtype)
            if arr.size != int(np.prod(shape)):
                raise FormatError(f"tensor {name!r}: size does not match shape {shape}")
            arrays.append((name, arr.reshape(shape).astype(dtype.newbyteorder("="))))
        else:
            raise FormatError(f"unexpected manifest line {line!r}")
    return meta, arrays


def save_checkpoint(path, params: dict[str, np.ndarray], meta: dict | None = None) -> None:
    arrays = [(name, np.asarray(value, dtype=np.float32)) for name, value in params.items()]
    header, payload = encode_manifest(CHECKPOINT_MAGIC, meta or {}, arrays)
    Path(path).write_bytes(header + payload)


def load_checkpoint(path):
    """Return ``(params, meta)``; params map name to float32 arrays in file order."""
    meta, arrays = decode_manifest(Path(path).read_bytes(), CHECKPOINT_MAGIC)
    for name, arr in arrays:
        if arr.dtype != np.float32:
            raise FormatError(f"checkpoint tensor {name!r} is {arr.dtype}, expected float32")
    return dict(arrays), meta
