"""Binary feature-container format shared by every on-disk artifact.

Layout::

    b"MMTKFEAT"                      8-byte magic
    <uint64 little-endian>           byte length of the JSON header
    <JSON header>                    {"arrays": [...], "meta": {...}}
    <payloads>                       raw little-endian float32/float64, row-major,
                                     densely packed in header order

Each header entry is ``{"name", "dtype", "shape"}`` where ``dtype`` is ``"<f4"``
or ``"<f8"``.  Integer arrays are written as float64 (exact below 2**53) and
flagged with ``"integer": true`` so they come back as int64.
"""
import json
import struct

import numpy as np

from .errors import FormatError

MAGIC = b"MMTKFEAT"
_FLOAT_DTYPES = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8")}


def _encode(name, arr):
    arr = np.asarray(arr)
    entry = {"name": name, "shape": list(arr.shape)}
    if arr.dtype.kind in "iub":
        if arr.size and np.abs(arr.astype(np.int64)).max() >= 2**53:
            raise FormatError(f"integer array {name!r} exceeds float64 exact range")
        entry["dtype"] = "<f8"
        entry["integer"] = True
        payload = arr.astype("<f8")
    elif arr.dtype == np.float32:
        entry["dtype"] = "<f4"
        payload = arr.astype("<f4")
    elif arr.dtype == np.float64:
        entry["dtype"] = "<f8"
        payload = arr.astype("<f8")
    else:
        raise FormatError(f"unsupported dtype {arr.dtype} for array {name!r}")
    return entry, np.ascontiguousarray(payload).tobytes()


def save_container(path, arrays, meta=None):
    """Write named arrays (and optional JSON-serializable ``meta``) to ``path``."""
    entries, blobs = [], []
    for name, arr in arrays.items():
        entry, blob = _encode(name, arr)
        entries.append(entry)
        blobs.append(blob)
    header = json.dumps({"arrays": entries, "meta": meta or {}}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_container(path):
    """Read a container written by :func:`save_container`.

    Returns
    -------
    arrays : dict[str, np.ndarray]
    meta : dict
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != MAGIC:
        raise FormatError(f"{path}: bad magic, not a feature container")
    if len(data) < 16:
        raise FormatError(f"{path}: truncated header")
    (hlen,) = struct.unpack("<Q", data[8:16])
    try:
        header = json.loads(data[16:16 + hlen].decode())
        entries = header["arrays"]
    except (ValueError, KeyError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: malformed header ({exc})") from None
    offset = 16 + hlen
    arrays = {}
    for entry in entries:
        try:
            dtype = _FLOAT_DTYPES[entry["dtype"]]
            shape = tuple(int(s) for s in entry["shape"])
            name = entry["name"]
        except KeyError as exc:
            raise FormatError(f"{path}: bad array entry {entry!r} ({exc})") from None
        count = int(np.prod(shape, dtype=np.int64))
        nbytes = count * dtype.itemsize
        if offset + nbytes > len(data):
            raise FormatError(f"{path}: payload for {name!r} is truncated")
        arr = np.frombuffer(data, dtype=dtype, count=count, offset=offset).reshape(shape)
        arr = arr.astype(np.int64) if entry.get("integer") else arr.astype(dtype.newbyteorder("="))
        arrays[name] = arr
        offset += nbytes
    if offset != len(data):
        raise FormatError(f"{path}: {len(data) - offset} trailing bytes")
    return arrays, header.get("meta", {})
