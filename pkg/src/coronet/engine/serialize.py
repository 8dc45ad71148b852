"""Binary tensor record files (magic ``CRNT``).

Layout: ``b"CRNT"``, u16 version, then records until EOF, each being
u16 name length, UTF-8 name, u8 rank, rank x u32 dims, f64 payload.
All integers and floats little-endian.
"""
import os
import struct
import tempfile

import numpy as np

from ..errors import ParseError

MAGIC = b"CRNT"
VERSION = 1


def dumps_tensors(tensors):
    parts = [MAGIC, struct.pack("<H", VERSION)]
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype="<f8")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(parts)


def loads_tensors(buf):
    if buf[:4] != MAGIC:
        raise ParseError("not a CRNT tensor file (bad magic)")
    (version,) = struct.unpack_from("<H", buf, 4)
    if version != VERSION:
        raise ParseError(f"unsupported CRNT version {version}")
    pos = 6
    out = {}
    try:
        while pos < len(buf):
            (nlen,) = struct.unpack_from("<H", buf, pos)
            pos += 2
            name = buf[pos:pos + nlen].decode("utf-8")
            pos += nlen
            (rank,) = struct.unpack_from("<B", buf, pos)
            pos += 1
            dims = struct.unpack_from(f"<{rank}I", buf, pos)
            pos += 4 * rank
            count = int(np.prod(dims, dtype=np.int64))
            if pos + 8 * count > len(buf):
                raise ParseError(f"record {name!r} truncated")
            arr = np.frombuffer(buf, dtype="<f8", count=count, offset=pos)
            out[name] = arr.reshape(dims).astype(np.float64)
            pos += 8 * count
    except struct.error as exc:
        raise ParseError(f"truncated CRNT file: {exc}") from None
    return out


def atomic_write_bytes(path, data):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))


def save_tensors(path, tensors):
    atomic_write_bytes(path, dumps_tensors(tensors))


def load_tensors(path):
    with open(path, "rb") as fh:
        return loads_tensors(fh.read())
