"""Binary checkpoint persistence.

Layout (all integers little-endian)::

    b"DFCK"                      magic
    u32  version                 currently 1
    u32  n, n bytes              model kind, UTF-8
    u32  parameter count
    per parameter:
        u32  n, n bytes          parameter name, UTF-8
        u32  rank
        u32  dims[rank]
        f64  values[prod(dims)]  C order
    u32  n, n bytes              metadata, UTF-8 JSON with sorted keys

The metadata block always holds ``widths``, ``dilations`` and
``input_length`` (enough to rebuild the graph) plus training fields such as
``epoch``, ``best_val_ssd`` and ``seed``.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile

import numpy as np

from ..errors import CompatibilityError, FormatError
from .graph import build_model, normalize_kind

MAGIC = b"DFCK"
VERSION = 1


def _pack_str(s):
    b = s.encode("utf-8")
    return struct.pack("<I", len(b)) + b


def checkpoint_bytes(model, metadata=None):
    meta = dict(model.metadata)
    meta.update(metadata or {})
    meta["widths"] = list(model.widths)
    meta["dilations"] = list(model.dilations)
    meta["input_length"] = model.input_length
    params = model.parameters()
    chunks = [MAGIC, struct.pack("<I", VERSION), _pack_str(model.kind), struct.pack("<I", len(params))]
    for name, t in params.items():
        arr = np.ascontiguousarray(t.data, dtype="<f8")
        chunks.append(_pack_str(name))
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.tobytes())
    chunks.append(_pack_str(json.dumps(meta, sort_keys=True, separators=(",", ":"))))
    return b"".join(chunks)


def checkpoint_save(model, path, metadata=None):
    """Write ``model`` to ``path`` atomically (temp file + rename)."""
    data = checkpoint_bytes(model, metadata)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".ckpt-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.buf):
            raise FormatError("checkpoint truncated")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]

    def string(self):
        raw = self.take(self.u32())
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError("checkpoint contains invalid UTF-8") from exc


def checkpoint_from_bytes(buf, expected_kind=None, force=False):
    r = _Reader(buf)
    if r.take(4) != MAGIC:
        raise FormatError("not a checkpoint file (bad magic)")
    version = r.u32()
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    kind = r.string()
    count = r.u32()
    arrays = {}
    for _ in range(count):
        name = r.string()
        rank = r.u32()
        dims = struct.unpack(f"<{rank}I", r.take(4 * rank))
        n = int(np.prod(dims)) if rank else 1
        arrays[name] = np.frombuffer(r.take(8 * n), dtype="<f8").reshape(dims).astype(np.float64)
    try:
        meta = json.loads(r.string())
    except json.JSONDecodeError as exc:
        raise FormatError("corrupt checkpoint metadata") from exc
    if r.pos != len(buf):
        raise FormatError("trailing bytes after checkpoint metadata")

    if expected_kind is not None and normalize_kind(expected_kind) != kind and not force:
        raise CompatibilityError(f"checkpoint holds a {kind!r} model, expected {normalize_kind(expected_kind)!r}")
    try:
        model = build_model(kind, widths=meta["widths"], input_length=meta["input_length"])
    except KeyError as exc:
        raise FormatError(f"checkpoint metadata lacks {exc}") from exc
    params = model.parameters()
    if set(params) != set(arrays):
        raise CompatibilityError("checkpoint parameter names do not match the model graph")
    for name, t in params.items():
        if t.data.shape != arrays[name].shape:
            raise CompatibilityError(f"shape mismatch for {name}: {arrays[name].shape} vs {t.data.shape}")
        t.data = arrays[name].copy()
    model.metadata = {k: v for k, v in meta.items() if k not in ("widths", "dilations", "input_length")}
    return model


def checkpoint_load(path, expected_kind=None, force=False):
    with open(path, "rb") as fh:
        buf = fh.read()
    return checkpoint_from_bytes(buf, expected_kind=expected_kind, force=force)
