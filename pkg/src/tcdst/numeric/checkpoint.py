"""TCDST1 checkpoint container.

Layout: the magic ``b"TCDST1\\n"``, an 8-byte little-endian header length,
a UTF-8 JSON header, then the raw little-endian array bytes in header order.
The header holds free-form metadata plus, per array, its name, dtype, shape
and byte offset. Writing is deterministic: identical inputs give identical
bytes.
"""

import json
import struct

import numpy as np

from ..errors import CheckpointError

MAGIC = b"TCDST1\n"
VERSION = 1


def dumps(arrays, meta):
    entries = []
    blobs = []
    offset = 0
    for name, arr in arrays.items():
        a = np.ascontiguousarray(arr)
        a = a.astype(a.dtype.newbyteorder("<"), copy=False)
        raw = a.tobytes()
        entries.append({"name": name, "dtype": a.dtype.str, "shape": list(a.shape), "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps({"version": VERSION, "meta": meta, "arrays": entries}, sort_keys=True, separators=(",", ":")).encode()
    return MAGIC + struct.pack("<Q", len(header)) + header + b"".join(blobs)


def loads(buf):
    if not buf.startswith(MAGIC):
        raise CheckpointError("not a TCDST1 checkpoint (bad magic)")
    pos = len(MAGIC)
    try:
        (hlen,) = struct.unpack_from("<Q", buf, pos)
        header = json.loads(buf[pos + 8:pos + 8 + hlen].decode())
    except (struct.error, ValueError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from exc
    if header.get("version") != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {header.get('version')}")
    base = pos + 8 + hlen
    arrays = {}
    for e in header["arrays"]:
        start = base + e["offset"]
        chunk = buf[start:start + e["nbytes"]]
        if len(chunk) != e["nbytes"]:
            raise CheckpointError(f"truncated array {e['name']}")
        arrays[e["name"]] = np.frombuffer(chunk, dtype=np.dtype(e["dtype"])).reshape(e["shape"]).copy()
    return arrays, header["meta"]


def save(path, arrays, meta):
    with open(path, "wb") as fh:
        fh.write(dumps(arrays, meta))


def load(path):
    with open(path, "rb") as fh:
        return loads(fh.read())
