"""Versioned binary parameter container.

Layout: magic ``EGOC``, u32 version, u32 digest length + config digest
(hex of the config text), u32 tensor count, then per tensor: u32 name
length, utf-8 name, u32 rank, u64 dims, float64 little-endian values.
"""

import struct

import numpy as np

MAGIC = b"EGOC"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, params, config_digest):
    """Write named parameter tensors together with the config digest."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        digest = config_digest.encode()
        fh.write(struct.pack("<I", len(digest)))
        fh.write(digest)
        fh.write(struct.pack("<I", len(params)))
        for name in sorted(params):
            data = params[name]
            arr = np.asarray(data.data if hasattr(data, "data") else data, dtype=np.float64)
            enc = name.encode()
            fh.write(struct.pack("<I", len(enc)))
            fh.write(enc)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.astype("<f8").tobytes())


def load_checkpoint(path, expected_digest=None):
    """Read a container back into a name -> float64 array mapping.

    Raises :class:`CheckpointError` on bad magic, unknown version, or a
    config digest that does not match ``expected_digest``.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    off = 0

    def take(n):
        nonlocal off
        if off + n > len(raw):
            raise CheckpointError(f"{path}: truncated checkpoint")
        chunk = raw[off:off + n]
        off += n
        return chunk

    if take(4) != MAGIC:
        raise CheckpointError(f"{path}: not a parameter checkpoint (bad magic)")
    version, = struct.unpack("<I", take(4))
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    dlen, = struct.unpack("<I", take(4))
    digest = take(dlen).decode()
    if expected_digest is not None and digest != expected_digest:
        raise CheckpointError(f"{path}: config digest mismatch "
                              f"(checkpoint {digest[:12]}..., expected {expected_digest[:12]}...)")
    count, = struct.unpack("<I", take(4))
    params = {}
    for _ in range(count):
        nlen, = struct.unpack("<I", take(4))
        name = take(nlen).decode()
        rank, = struct.unpack("<I", take(4))
        dims = struct.unpack(f"<{rank}Q", take(8 * rank))
        n = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(take(8 * n), dtype="<f8").reshape(dims).copy()
        params[name] = arr
    if off != len(raw):
        raise CheckpointError(f"{path}: trailing bytes after tensor data")
    return params, digest
