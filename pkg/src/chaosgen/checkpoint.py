"""CGEN binary checkpoints.

Layout (all integers and floats little-endian)::

    b"CGEN"  u32 version  u32 architecture code
    u32 n_dims  u64 x n_dims          layer sizes
    f64 g  f64 dt  f64 tau  f64 T
    u64 epoch  u64 master seed
    u32 n_tensors, then per tensor:
        u16 name length, ASCII name, u32 ndim, u64 x ndim shape, f64 data (row-major)
    32-byte SHA-256 of everything above

Saving is a pure function of the checkpoint contents, so load -> save
reproduces the input bytes.
"""
from __future__ import annotations

import hashlib
import os
import struct
from dataclasses import dataclass

import numpy as np

from .dynamics import ARCHITECTURES, SimConfig
from .errors import ChecksumError, FormatError

MAGIC = b"CGEN"
VERSION = 1
ARCH_CODES = {"unrestricted": 0, "restricted": 1, "deep": 2}
DIM_NAMES = {
    "unrestricted": ("n_v",),
    "restricted": ("n_v", "n_h"),
    "deep": ("n_v", "n_h1", "n_h2"),
}


@dataclass
class Checkpoint:
    params: object
    sim: SimConfig
    epoch: int
    seed: int

    @property
    def architecture(self):
        return self.params.architecture

    @property
    def dims(self):
        return {name: getattr(self.params, name) for name in DIM_NAMES[self.architecture]}


def to_bytes(ckpt: Checkpoint) -> bytes:
    p = ckpt.params
    dims = [getattr(p, n) for n in DIM_NAMES[p.architecture]]
    out = [MAGIC, struct.pack("<II", VERSION, ARCH_CODES[p.architecture])]
    out.append(struct.pack(f"<I{len(dims)}Q", len(dims), *dims))
    out.append(struct.pack("<4d", p.g, ckpt.sim.dt, ckpt.sim.tau, ckpt.sim.t_target))
    out.append(struct.pack("<QQ", ckpt.epoch, ckpt.seed))
    tensors = p.tensors()
    out.append(struct.pack("<I", len(tensors)))
    for name, arr in tensors.items():
        raw = name.encode("ascii")
        out.append(struct.pack(f"<H{len(raw)}sI", len(raw), raw, arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        out.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    body = b"".join(out)
    return body + hashlib.sha256(body).digest()


class _Reader:
    def __init__(self, data):
        self.data, self.pos = data, 0

    def take(self, fmt):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise FormatError("truncated checkpoint", offset=self.pos)
        vals = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return vals

    def raw(self, n):
        if self.pos + n > len(self.data):
            raise FormatError("truncated checkpoint", offset=self.pos)
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk


def from_bytes(data: bytes) -> Checkpoint:
    if len(data) < 4 + 32 or data[:4] != MAGIC:
        raise FormatError("not a CGEN checkpoint", offset=0)
    body, digest = data[:-32], data[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise ChecksumError("checkpoint checksum mismatch", offset=len(body))
    r = _Reader(body)
    r.pos = 4
    version, code = r.take("<II")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", offset=4)
    arch = {v: k for k, v in ARCH_CODES.items()}.get(code)
    if arch is None:
        raise FormatError(f"unknown architecture code {code}", offset=8)
    (n_dims,) = r.take("<I")
    dims = r.take(f"<{n_dims}Q")
    if len(dims) != len(DIM_NAMES[arch]):
        raise FormatError(f"{arch} checkpoint must list {len(DIM_NAMES[arch])} dimensions", offset=r.pos)
    g, dt, tau, t_target = r.take("<4d")
    epoch, seed = r.take("<QQ")
    (n_tensors,) = r.take("<I")
    tensors = {}
    for _ in range(n_tensors):
        (name_len,) = r.take("<H")
        name = r.raw(name_len).decode("ascii")
        (ndim,) = r.take("<I")
        shape = r.take(f"<{ndim}Q")
        count = int(np.prod(shape)) if ndim else 1
        tensors[name] = np.frombuffer(r.raw(8 * count), dtype="<f8").reshape(shape).astype(np.float64)
    if r.pos != len(body):
        raise FormatError("trailing bytes after last tensor", offset=r.pos)
    cls = ARCHITECTURES[arch]
    expected = set(cls.fixed_names + cls.trainable_names)
    if set(tensors) != expected:
        raise FormatError(f"{arch} checkpoint tensors {sorted(tensors)} != {sorted(expected)}", offset=r.pos)
    params = cls(**dict(zip(DIM_NAMES[arch], map(int, dims))), g=g, **tensors)
    return Checkpoint(params, SimConfig(dt, tau, t_target), int(epoch), int(seed))


def save(path, ckpt: Checkpoint):
    """Write atomically (temp file then rename)."""
    data = to_bytes(ckpt)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(data)
    os.replace(tmp, path)


def load(path) -> Checkpoint:
    with open(path, "rb") as f:
        return from_bytes(f.read())
