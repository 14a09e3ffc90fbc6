"""Bit-exact named-tensor checkpoint format (NNCP).

Layout, all little-endian:

    magic "NNCP" | u32 version | u32 tensor count
    per tensor: u16 name length | UTF-8 name | u8 rank | u32 dim per axis
                | u8 dtype (0 = float32) | row-major float32 payload

A file is parsed completely before any tensor is applied to a model, so a
failed load leaves the model unmodified.  Non-strict loading copies only
tensors whose name and shape both match, which is how a checkpoint with a
different classifier head transfers onto a new class count.
"""

import struct

import numpy as np

from .errors import FormatError, LoadError

MAGIC = b"NNCP"
VERSION = 1
DTYPE_F32 = 0


def save_tensors(tensors, path):
    """Write a name -> float32 array mapping in NNCP format."""
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(struct.pack("<I", len(tensors)))
        for name, value in tensors.items():
            encoded = name.encode("utf-8")
            arr = np.ascontiguousarray(value, dtype="<f4")
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<B", arr.ndim))
            for dim in arr.shape:
                f.write(struct.pack("<I", dim))
            f.write(struct.pack("<B", DTYPE_F32))
            f.write(arr.tobytes(order="C"))


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise FormatError("checkpoint truncated")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))[0]


def load_tensors(path):
    """Parse an NNCP file into a name -> float32 array mapping."""
    with open(path, "rb") as f:
        reader = _Reader(f.read())
    if reader.take(4) != MAGIC:
        raise FormatError("bad checkpoint magic; not an NNCP file")
    version = reader.unpack("<I")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    count = reader.unpack("<I")
    tensors = {}
    for _ in range(count):
        name_len = reader.unpack("<H")
        try:
            name = reader.take(name_len).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError("tensor name is not valid UTF-8") from exc
        rank = reader.unpack("<B")
        shape = tuple(reader.unpack("<I") for _ in range(rank))
        dtype = reader.unpack("<B")
        if dtype != DTYPE_F32:
            raise FormatError(f"unsupported tensor dtype byte {dtype}")
        n_elem = int(np.prod(shape, dtype=np.int64)) if rank else 1
        payload = reader.take(4 * n_elem)
        tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
    if reader.pos != len(reader.data):
        raise FormatError("trailing bytes after last tensor")
    return tensors


def save_weights(model, path):
    """Checkpoint a model's params and running statistics."""
    save_tensors(model.state_dict(), path)


def load_weights(model, path, strict=True):
    """Restore a checkpoint into a model.

    strict=True requires an exact name/shape match and reports every offender;
    strict=False copies the matching subset and leaves the rest (typically a
    resized classifier head) at its current initialization.
    """
    tensors = load_tensors(path)
    state = model.state_dict()

    if strict:
        problems = []
        for name, value in state.items():
            if name not in tensors:
                problems.append(f"missing from file: {name}")
            elif tensors[name].shape != value.shape:
                problems.append(
                    f"shape mismatch: {name} file {tensors[name].shape} "
                    f"vs model {value.shape}")
        for name in tensors:
            if name not in state:
                problems.append(f"unexpected in file: {name}")
        if problems:
            raise LoadError("strict load failed: " + "; ".join(sorted(problems)))

    for lname, layer in model.named_layers():
        for store in (layer.params, layer.running):
            for key in store:
                full = f"{lname}.{key}"
                if full in tensors and tensors[full].shape == store[key].shape:
                    store[key] = tensors[full].astype(store[key].dtype)
