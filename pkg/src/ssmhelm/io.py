"""File formats: JSON model envelope and the columnar binary feature store.

Model envelope::

    {"format": "ssmhelm", "version": 1, "kind": ..., "checksum": sha256-hex,
     "payload": {...}}

Matrices inside payloads are ``{"shape": [...], "data": base64}`` where
``data`` is the row-major little-endian float64 buffer. The checksum covers the
payload serialised with sorted keys and no whitespace.

Columnar store layout (all integers little-endian)::

    magic   4 bytes  b"SSMC"
    version u16
    rows    u64
    cols    u64
    nlen    u32      length of the UTF-8 JSON list of column names
    names   nlen bytes
    data    cols * rows float64, one column after another
    sha256  32 bytes over everything above
"""

import base64
import hashlib
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import ChecksumError, VersionMismatch

ENVELOPE_VERSION = 1
STORE_MAGIC = b"SSMC"
STORE_VERSION = 1
_HEADER = struct.Struct("<4sHQQI")


def atomic_write(path, data):
    """Write bytes or text to ``path`` via a temp file and ``os.replace``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": ""})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode_array(a):
    a = np.ascontiguousarray(np.asarray(a, dtype="<f8"))
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def decode_array(obj):
    buf = base64.b64decode(obj["data"])
    return np.frombuffer(buf, dtype="<f8").reshape(obj["shape"]).astype(float)


def _canonical(payload):
    return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")


def dumps_envelope(kind, payload):
    env = {
        "format": "ssmhelm",
        "version": ENVELOPE_VERSION,
        "kind": kind,
        "checksum": hashlib.sha256(_canonical(payload)).hexdigest(),
        "payload": payload,
    }
    return json.dumps(env, sort_keys=True, indent=1)


def loads_envelope(text, kind=None):
    env = json.loads(text)
    if env.get("format") != "ssmhelm":
        raise VersionMismatch("not an ssmhelm model file")
    if env.get("version") != ENVELOPE_VERSION:
        raise VersionMismatch(f"model file version {env.get('version')}, expected {ENVELOPE_VERSION}")
    if kind is not None and env.get("kind") != kind:
        raise VersionMismatch(f"model file holds {env.get('kind')!r}, expected {kind!r}")
    payload = env["payload"]
    if hashlib.sha256(_canonical(payload)).hexdigest() != env.get("checksum"):
        raise ChecksumError("model payload checksum mismatch")
    return env["kind"], payload


def write_store(path, columns):
    """Write a dict of equal-length 1-D arrays as a columnar float64 store."""
    names = list(columns)
    arrays = [np.asarray(columns[n], dtype="<f8") for n in names]
    rows = len(arrays[0]) if arrays else 0
    if any(a.shape != (rows,) for a in arrays):
        raise ValueError("store columns must be 1-D and equally long")
    name_bytes = json.dumps(names).encode("utf-8")
    body = _HEADER.pack(STORE_MAGIC, STORE_VERSION, rows, len(names), len(name_bytes))
    body += name_bytes + b"".join(a.tobytes() for a in arrays)
    atomic_write(path, body + hashlib.sha256(body).digest())


def read_store(path):
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size + 32:
        raise ChecksumError(f"{path}: truncated store")
    body, digest = blob[:-32], blob[-32:]
    magic, version, rows, cols, nlen = _HEADER.unpack_from(body)
    if magic != STORE_MAGIC:
        raise ChecksumError(f"{path}: bad magic bytes")
    if version != STORE_VERSION:
        raise VersionMismatch(f"{path}: store version {version}, expected {STORE_VERSION}")
    if hashlib.sha256(body).digest() != digest:
        raise ChecksumError(f"{path}: checksum mismatch")
    off = _HEADER.size
    names = json.loads(body[off:off + nlen].decode("utf-8"))
    off += nlen
    data = np.frombuffer(body, dtype="<f8", count=rows * cols, offset=off).reshape(cols, rows)
    return {n: data[i].astype(float) for i, n in enumerate(names)}
