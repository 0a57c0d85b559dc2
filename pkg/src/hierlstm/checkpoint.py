"""Versioned binary container for named float64 arrays.

Layout::

    HIERLSTM-CKPT <version>\\n
    <one-line JSON header: kind, meta, arrays=[[name, shape], ...]>\\n
    <raw little-endian float64 payload, arrays concatenated in header order>

The JSON header is written with sorted keys and no whitespace, so identical
contents always serialize to identical bytes.
"""

import json

import numpy as np

MAGIC = b"HIERLSTM-CKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps(kind, meta, arrays):
    """Serialize ``arrays`` (an ordered mapping name -> ndarray) to bytes."""
    entries = []
    payload = []
    for name, arr in arrays.items():
        arr = np.asarray(arr, dtype=np.float64)
        entries.append([name, list(arr.shape)])
        payload.append(arr.astype("<f8").tobytes(order="C"))
    header = {"kind": kind, "meta": meta, "arrays": entries}
    head = json.dumps(header, sort_keys=True, separators=(",", ":"))
    return b"%s %d\n%s\n" % (MAGIC, VERSION, head.encode()) + b"".join(payload)


def loads(blob, kind=None):
    """Inverse of :func:`dumps`; returns ``(meta, arrays)``."""
    first, sep, rest = blob.partition(b"\n")
    parts = first.split()
    if not sep or len(parts) != 2 or parts[0] != MAGIC:
        raise CheckpointError("not a hierlstm checkpoint (bad magic line)")
    if int(parts[1]) != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {parts[1].decode()}")
    head, sep, payload = rest.partition(b"\n")
    if not sep:
        raise CheckpointError("truncated checkpoint header")
    header = json.loads(head)
    if kind is not None and header["kind"] != kind:
        raise CheckpointError(f"expected a {kind!r} checkpoint, found {header['kind']!r}")
    arrays = {}
    offset = 0
    for name, shape in header["arrays"]:
        n = int(np.prod(shape, dtype=np.int64))
        nbytes = 8 * n
        chunk = payload[offset:offset + nbytes]
        if len(chunk) != nbytes:
            raise CheckpointError(f"payload truncated while reading {name!r}")
        arrays[name] = np.frombuffer(chunk, dtype="<f8").astype(np.float64).reshape(shape)
        offset += nbytes
    if offset != len(payload):
        raise CheckpointError(f"{len(payload) - offset} trailing bytes after payload")
    return header["meta"], arrays


def save(path, kind, meta, arrays):
    with open(path, "wb") as fh:
        fh.write(dumps(kind, meta, arrays))


def load(path, kind=None):
    with open(path, "rb") as fh:
        return loads(fh.read(), kind=kind)
