"""Deterministic binary container used for tensor bundles and model bundles.

Layout: 8-byte magic, little-endian u64 header length, UTF-8 JSON header,
then the raw little-endian array payload. The header records a sha256 over
the header body and the payload so a file validates itself on load. No
timestamps are written, so identical content gives identical bytes.
"""

import hashlib
import json
import struct

import numpy as np

from .errors import InvalidInputError

MAGIC = b"CRPRNT01"
_ALLOWED = {"float32", "float64", "int64", "int32", "uint8"}


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def digest(obj):
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


def _layout(arrays):
    meta, chunks, offset = {}, [], 0
    for name in sorted(arrays):
        arr = np.asarray(arrays[name])
        if arr.dtype.name not in _ALLOWED:
            raise TypeError(f"array {name!r}: unsupported dtype {arr.dtype}")
        buf = np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<")).tobytes()
        meta[name] = {"dtype": arr.dtype.name, "shape": list(arr.shape),
                      "offset": offset, "nbytes": len(buf)}
        chunks.append(buf)
        offset += len(buf)
    return meta, b"".join(chunks)


def dumps(kind, header, arrays):
    meta, payload = _layout(arrays)
    body = {"kind": kind, "format_version": 1, "header": header, "arrays": meta}
    h = hashlib.sha256(canonical_json(body).encode())
    h.update(payload)
    body["sha256"] = h.hexdigest()
    head = canonical_json(body).encode()
    return MAGIC + struct.pack("<Q", len(head)) + head + payload


def save(path, kind, header, arrays):
    data = dumps(kind, header, arrays)
    with open(path, "wb") as fh:
        fh.write(data)
    return hashlib.sha256(data).hexdigest()


def loads(data, kind=None):
    if data[:8] != MAGIC:
        raise InvalidInputError("not a crashprint file (bad magic)")
    (n,) = struct.unpack("<Q", data[8:16])
    body = json.loads(data[16:16 + n])
    payload = data[16 + n:]
    stored = body.pop("sha256", None)
    h = hashlib.sha256(canonical_json(body).encode())
    h.update(payload)
    if stored != h.hexdigest():
        raise InvalidInputError("file checksum mismatch; bundle is corrupt or edited")
    if kind is not None and body["kind"] != kind:
        raise InvalidInputError(f"expected a {kind} file, got {body['kind']}")
    arrays = {}
    for name, m in body["arrays"].items():
        raw = payload[m["offset"]:m["offset"] + m["nbytes"]]
        arrays[name] = np.frombuffer(raw, dtype=np.dtype(m["dtype"]).newbyteorder("<")) \
            .reshape(m["shape"]).astype(m["dtype"])
    return body["header"], arrays


def load(path, kind=None):
    with open(path, "rb") as fh:
        return loads(fh.read(), kind)
