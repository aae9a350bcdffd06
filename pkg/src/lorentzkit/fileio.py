"""Binary tensor container, label sidecars, checkpoints and key=value configs.

Tensor container (all integers little-endian)::

    b"ILNN" | version u16 | rank u16 | dims u64 * rank | float64 data

Checkpoint::

    b"ILNNCKPT" | version u16 | section count u32 | sections...
    section = name length u16 | name utf-8 | kind u8 | payload
    kind 0: one tensor container; kind 1: text, length u64 | utf-8 bytes
"""

from __future__ import annotations

import io
import struct

import numpy as np

from .errors import ConfigurationError

MAGIC = b"ILNN"
VERSION = 1
CKPT_MAGIC = b"ILNNCKPT"


def encode_tensor(array) -> bytes:
    a = np.asarray(array, dtype="<f8")
    head = MAGIC + struct.pack("<HH", VERSION, a.ndim) + struct.pack(f"<{a.ndim}Q", *a.shape)
    return head + a.tobytes()


def _read_exact(stream, n, what):
    buf = stream.read(n)
    if len(buf) != n:
        raise ConfigurationError(f"truncated {what}")
    return buf


def decode_tensor(stream) -> np.ndarray:
    if _read_exact(stream, 4, "tensor header") != MAGIC:
        raise ConfigurationError("bad tensor magic (expected ILNN)")
    version, rank = struct.unpack("<HH", _read_exact(stream, 4, "tensor header"))
    if version != VERSION:
        raise ConfigurationError(f"unsupported tensor format version {version}")
    dims = struct.unpack(f"<{rank}Q", _read_exact(stream, 8 * rank, "tensor dims"))
    count = int(np.prod(dims)) if rank else 1
    data = np.frombuffer(_read_exact(stream, 8 * count, "tensor data"), dtype="<f8")
    return data.astype(np.float64).reshape(dims)


def write_tensor(path, array):
    with open(path, "wb") as fh:
        fh.write(encode_tensor(array))


def read_tensor(path):
    with open(path, "rb") as fh:
        return decode_tensor(fh)


def write_labels(path, labels):
    np.ascontiguousarray(labels, dtype="<u4").tofile(path)


def read_labels(path):
    return np.fromfile(path, dtype="<u4").astype(np.int64)


def write_checkpoint(path, tensors: dict, texts: dict):
    out = io.BytesIO()
    out.write(CKPT_MAGIC + struct.pack("<HI", VERSION, len(tensors) + len(texts)))
    for name, text in texts.items():
        raw_name = name.encode()
        body = text.encode()
        out.write(struct.pack("<H", len(raw_name)) + raw_name + b"\x01")
        out.write(struct.pack("<Q", len(body)) + body)
    for name, arr in tensors.items():
        raw_name = name.encode()
        out.write(struct.pack("<H", len(raw_name)) + raw_name + b"\x00")
        out.write(encode_tensor(arr))
    with open(path, "wb") as fh:
        fh.write(out.getvalue())


def read_checkpoint(path):
    tensors, texts = {}, {}
    with open(path, "rb") as fh:
        if fh.read(len(CKPT_MAGIC)) != CKPT_MAGIC:
            raise ConfigurationError(f"{path}: not a checkpoint")
        version, count = struct.unpack("<HI", _read_exact(fh, 6, "checkpoint header"))
        if version != VERSION:
            raise ConfigurationError(f"unsupported checkpoint version {version}")
        for _ in range(count):
            (n,) = struct.unpack("<H", _read_exact(fh, 2, "section name"))
            name = _read_exact(fh, n, "section name").decode()
            kind = _read_exact(fh, 1, "section kind")
            if kind == b"\x01":
                (length,) = struct.unpack("<Q", _read_exact(fh, 8, "text length"))
                texts[name] = _read_exact(fh, length, "text").decode()
            elif kind == b"\x00":
                tensors[name] = decode_tensor(fh)
            else:
                raise ConfigurationError(f"unknown section kind {kind!r}")
    return tensors, texts


def parse_key_values(text, source="config"):
    """Parse ``key=value`` lines; blank lines and ``#`` comments are skipped."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{source}:{lineno}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigurationError(f"{source}:{lineno}: empty key")
        out[key] = value
    return out
