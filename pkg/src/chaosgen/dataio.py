"""Datasets: IDX parsing, pixel transform, minibatches, synthetic sets, PGM export."""
from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import rng as rngmod
from .errors import FormatError, InvalidArgument

IDX_UBYTE = 0x08
IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass
class Dataset:
    samples: np.ndarray
    image_shape: Optional[tuple] = None
    source: str = ""
    labels: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=np.float64))
        if self.samples.size and (np.any(self.samples < -1) or np.any(self.samples > 1)):
            raise InvalidArgument("dataset entries must lie in [-1, 1]")
        if self.image_shape is not None:
            self.image_shape = tuple(int(s) for s in self.image_shape)
            if math.prod(self.image_shape) != self.n_v:
                raise InvalidArgument(f"image shape {self.image_shape} does not match n_v={self.n_v}")

    @property
    def n_samples(self):
        return self.samples.shape[0]

    @property
    def n_v(self):
        return self.samples.shape[1]

    def head(self, n):
        labels = None if self.labels is None else self.labels[:n]
        return Dataset(self.samples[:n], self.image_shape, self.source, labels)


def forward_transform(pixels):
    """Map grey levels in [0, 255] to [-1, 1]."""
    x = np.asarray(pixels, dtype=np.float64)
    if np.any(x < 0) or np.any(x > 255):
        raise InvalidArgument("pixel values must lie in [0, 255]")
    return 2.0 * x / 255.0 - 1.0


def inverse_transform(values, as_image=True):
    """Map [-1, 1] back to grey levels; with ``as_image`` round and clip to uint8."""
    y = 255.0 * (np.asarray(values, dtype=np.float64) + 1.0) / 2.0
    if not as_image:
        return y
    return np.clip(np.rint(y), 0, 255).astype(np.uint8)


def read_idx(path):
    """Parse an unsigned-byte IDX file into a uint8 array of the declared shape."""
    with open(path, "rb") as f:
        header = f.read(4)
        if len(header) < 4:
            raise FormatError("truncated IDX magic", offset=len(header))
        zero, dtype, ndim = struct.unpack(">HBB", header)
        if zero != 0:
            raise FormatError(f"bad IDX magic 0x{int.from_bytes(header, 'big'):08x}", offset=0)
        if dtype != IDX_UBYTE:
            raise FormatError(f"unsupported IDX element type 0x{dtype:02x}", offset=2)
        if ndim == 0:
            raise FormatError("IDX file declares zero dimensions", offset=3)
        raw = f.read(4 * ndim)
        if len(raw) < 4 * ndim:
            raise FormatError("truncated IDX dimension list", offset=4 + len(raw))
        dims = struct.unpack(f">{ndim}I", raw)
        total = math.prod(dims)
        size = os.fstat(f.fileno()).st_size
        offset = 4 + 4 * ndim
        if total > size - offset:
            raise FormatError(
                f"IDX declares {total} bytes of data but only {max(size - offset, 0)} are present",
                offset=size)
        data = f.read(total)
    magic = int.from_bytes(header, "big")
    return magic, np.frombuffer(data, dtype=np.uint8).reshape(dims)


def write_idx(path, array):
    """Write a uint8 array as an IDX file (used for fixtures and rendered digits)."""
    a = np.ascontiguousarray(array, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">HBB", 0, IDX_UBYTE, a.ndim))
        f.write(struct.pack(f">{a.ndim}I", *a.shape))
        f.write(a.tobytes())


def load_idx(images_path, labels_path=None, limit=None):
    magic, images = read_idx(images_path)
    if magic != IDX_IMAGES_MAGIC:
        raise FormatError(f"expected image magic 0x{IDX_IMAGES_MAGIC:08x}, got 0x{magic:08x}", offset=0)
    if limit is not None:
        images = images[:limit]
    labels = None
    if labels_path is not None:
        lmagic, labels = read_idx(labels_path)
        if lmagic != IDX_LABELS_MAGIC:
            raise FormatError(f"expected label magic 0x{IDX_LABELS_MAGIC:08x}, got 0x{lmagic:08x}", offset=0)
        labels = labels[: images.shape[0]]
    n = images.shape[0]
    shape = images.shape[1:]
    return Dataset(forward_transform(images.reshape(n, -1)), shape, str(images_path), labels)


def idx_header(path):
    """``(magic, dims)`` without reading the payload; used for config validation."""
    with open(path, "rb") as f:
        header = f.read(4)
        if len(header) < 4:
            raise FormatError("truncated IDX magic", offset=len(header))
        ndim = header[3]
        raw = f.read(4 * ndim)
        if len(raw) < 4 * ndim:
            raise FormatError("truncated IDX dimension list", offset=4 + len(raw))
    return int.from_bytes(header, "big"), struct.unpack(f">{ndim}I", raw)


def minibatch(dataset, m, seed, epoch_index):
    """``m`` distinct rows chosen uniformly, fixed by ``(seed, epoch_index)``."""
    if not 1 <= m <= dataset.n_samples:
        raise InvalidArgument(f"minibatch size {m} must be in [1, {dataset.n_samples}]")
    gen = rngmod.stream(seed, rngmod.BATCH, epoch_index)
    idx = gen.choice(dataset.n_samples, size=m, replace=False)
    return dataset.samples[idx]


# --- synthetic data -------------------------------------------------------

def _grid_side(n_v):
    side = math.isqrt(n_v)
    if side * side != n_v:
        raise InvalidArgument(f"n_v={n_v} is not a perfect square")
    return side


def two_clusters(n_s, n_v, seed, noise=0.1, amplitude=0.8):
    gen = rngmod.stream(seed, rngmod.DATA, 0)
    center = amplitude * gen.choice([-1.0, 1.0], size=n_v)
    signs = np.where(np.arange(n_s) % 2 == 0, 1.0, -1.0)
    signs = gen.permutation(signs)
    x = signs[:, None] * center[None, :]
    if noise > 0:
        x = x + noise * gen.standard_normal((n_s, n_v))
    return Dataset(np.clip(x, -1, 1), None, f"synthetic:two-clusters:seed={seed}")


def bars_and_stripes(n_s, n_v, seed):
    side = _grid_side(n_v)
    gen = rngmod.stream(seed, rngmod.DATA, 1)
    out = np.empty((n_s, side, side))
    for s in range(n_s):
        lines = gen.choice([-1.0, 1.0], size=side)
        if gen.random() < 0.5:
            out[s] = lines[:, None]  # horizontal bars: constant along each row
        else:
            out[s] = lines[None, :]
    return Dataset(out.reshape(n_s, n_v), (side, side), f"synthetic:bars-and-stripes:seed={seed}")


def _arc(cx, cy, rx, ry, a0, a1, n=12):
    t = np.radians(np.linspace(a0, a1, n))
    return np.stack([cx + rx * np.cos(t), cy + ry * np.sin(t)], axis=1)


def _line(*pts):
    return np.array(pts, dtype=np.float64)


# Stroke templates in a unit box, x to the right and y downwards.
DIGIT_STROKES = {
    0: [_arc(0.5, 0.5, 0.28, 0.4, 0, 360, 24)],
    1: [_line((0.35, 0.25), (0.55, 0.1), (0.55, 0.9))],
    2: [np.vstack([_arc(0.5, 0.32, 0.26, 0.22, 200, 380), _line((0.72, 0.45), (0.22, 0.9), (0.8, 0.9))])],
    3: [_arc(0.48, 0.3, 0.25, 0.2, 210, 450), _arc(0.48, 0.7, 0.27, 0.2, 270, 510)],
    4: [_line((0.62, 0.9), (0.62, 0.1), (0.2, 0.65), (0.82, 0.65))],
    5: [np.vstack([_line((0.75, 0.1), (0.32, 0.1), (0.28, 0.47)), _arc(0.48, 0.66, 0.27, 0.24, 230, 500)])],
    6: [np.vstack([_line((0.7, 0.1)), _arc(0.72, 0.62, 0.45, 0.52, 235, 180, 8)]), _arc(0.5, 0.68, 0.24, 0.22, 0, 360, 20)],
    7: [_line((0.2, 0.1), (0.8, 0.1), (0.42, 0.9))],
    8: [_arc(0.5, 0.3, 0.22, 0.2, 0, 360, 20), _arc(0.5, 0.71, 0.26, 0.21, 0, 360, 20)],
    9: [_arc(0.5, 0.32, 0.24, 0.22, 0, 360, 20), _line((0.74, 0.32), (0.62, 0.9))],
}


def _segment_distance(px, segs):
    """Distance from each pixel centre (P, 2) to the nearest segment (S, 2, 2)."""
    a, b = segs[:, 0], segs[:, 1]
    ab = b - a
    ap = px[:, None, :] - a[None, :, :]
    denom = np.maximum(np.sum(ab * ab, axis=1), 1e-12)
    t = np.clip(np.sum(ap * ab[None], axis=2) / denom[None], 0, 1)
    closest = a[None] + t[..., None] * ab[None]
    return np.sqrt(np.min(np.sum((px[:, None, :] - closest) ** 2, axis=2), axis=1))


def render_digits(n, seed, size=28):
    """Procedurally drawn handwritten-style digits as uint8 images plus labels.

    Each glyph gets a random scale, rotation, slant, offset and stroke width,
    and is anti-aliased by distance to the stroke skeleton.
    """
    gen = rngmod.stream(seed, rngmod.DATA, 2)
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    px = np.stack([xx.ravel(), yy.ravel()], axis=1)
    images = np.empty((n, size, size), dtype=np.uint8)
    labels = gen.integers(0, 10, size=n).astype(np.uint8)
    for s in range(n):
        scale = size * gen.uniform(0.6, 0.75)
        rot = np.radians(gen.uniform(-12, 12))
        slant = gen.uniform(-0.25, 0.25)
        shift = size / 2 + gen.uniform(-1.5, 1.5, size=2)
        width = gen.uniform(1.0, 1.8)
        lin = np.array([[math.cos(rot), -math.sin(rot)], [math.sin(rot), math.cos(rot)]]) @ np.array([[1, slant], [0, 1]])
        segs = []
        for poly in DIGIT_STROKES[int(labels[s])]:
            pts = ((poly - 0.5) * scale) @ lin.T + shift
            pts = pts + gen.normal(0, 0.35, size=pts.shape)
            segs.append(np.stack([pts[:-1], pts[1:]], axis=1))
        dist = _segment_distance(px, np.concatenate(segs))
        ink = np.clip(width + 0.5 - dist, 0, 1)
        images[s] = np.rint(255 * ink).reshape(size, size).astype(np.uint8)
    return images, labels


def area_downscale(images, out_side):
    """Block-average square images to ``out_side`` x ``out_side`` by exact area overlap."""
    images = np.asarray(images, dtype=np.float64)
    side = images.shape[-1]
    edges = np.arange(out_side + 1) * side / out_side
    R = np.zeros((out_side, side))
    for i in range(out_side):
        lo, hi = edges[i], edges[i + 1]
        for j in range(int(math.floor(lo)), min(int(math.ceil(hi)), side)):
            R[i, j] = min(hi, j + 1) - max(lo, j)
    R /= side / out_side
    return R @ images @ R.T


def downscaled_digits(n_s, n_v, seed, images_path=None):
    """28x28 grey digits block-averaged to sqrt(n_v) x sqrt(n_v).

    Reads the first ``n_s`` images of ``images_path`` (an IDX file) when given,
    otherwise renders them with :func:`render_digits`.
    """
    side = _grid_side(n_v)
    if images_path is not None:
        magic, images = read_idx(images_path)
        if magic != IDX_IMAGES_MAGIC:
            raise FormatError(f"expected image magic 0x{IDX_IMAGES_MAGIC:08x}, got 0x{magic:08x}", offset=0)
        if images.shape[0] < n_s:
            raise InvalidArgument(f"{images_path} holds {images.shape[0]} images, {n_s} requested")
        images, labels = images[:n_s], None
        source = f"downscaled:{images_path}"
    else:
        images, labels = render_digits(n_s, seed)
        source = f"synthetic:downscaled-digits:seed={seed}"
    small = np.clip(area_downscale(images, side), 0, 255)
    return Dataset(forward_transform(small.reshape(n_s, n_v)), (side, side), source, labels)


SYNTHETIC_KINDS = ("two-clusters", "bars-and-stripes", "downscaled-digits")


def synthetic_dataset(kind, n_s, n_v, seed, **options):
    if n_s < 1 or n_v < 1:
        raise InvalidArgument("n_s and n_v must be positive")
    if kind == "two-clusters":
        return two_clusters(n_s, n_v, seed, **options)
    if kind == "bars-and-stripes":
        return bars_and_stripes(n_s, n_v, seed)
    if kind == "downscaled-digits":
        return downscaled_digits(n_s, n_v, seed, **options)
    raise InvalidArgument(f"unknown synthetic kind {kind!r}; expected one of {SYNTHETIC_KINDS}")


# --- image export -----------------------------------------------------------

def write_pgm(path, pixels):
    """Binary greyscale PGM (P5, maxval 255)."""
    pixels = np.asarray(pixels, dtype=np.uint8)
    rows, cols = pixels.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
        f.write(np.ascontiguousarray(pixels).tobytes())


def read_pgm(path):
    with open(path, "rb") as f:
        data = f.read()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if tokens[0] != b"P5" or int(tokens[3]) != 255:
        raise FormatError("not an 8-bit P5 PGM", offset=0)
    cols, rows = int(tokens[1]), int(tokens[2])
    pos += 1
    body = data[pos:pos + rows * cols]
    if len(body) < rows * cols:
        raise FormatError("truncated PGM payload", offset=len(data))
    return np.frombuffer(body, dtype=np.uint8).reshape(rows, cols)


def tile(images, grid_cols):
    """Arrange ``(n, r, c)`` images row-major into one grid; empty cells are black."""
    n, r, c = images.shape
    grid_rows = -(-n // grid_cols)
    out = np.zeros((grid_rows * r, grid_cols * c), dtype=images.dtype)
    for k in range(n):
        i, j = divmod(k, grid_cols)
        out[i * r:(i + 1) * r, j * c:(j + 1) * c] = images[k]
    return out


def export_image_grid(samples, image_shape, grid_cols, path):
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if image_shape is None or math.prod(image_shape) != samples.shape[1]:
        raise InvalidArgument(f"samples of width {samples.shape[1]} cannot be shown as {image_shape}")
    pix = inverse_transform(samples).reshape((samples.shape[0],) + tuple(image_shape))
    grid = tile(pix, grid_cols)
    write_pgm(path, grid)
    return grid


def export_receptive_fields(params, neuron_indices, path, image_shape=None, grid_cols=None):
    """Write ``W[:, a] + A[:, a]`` for each hidden unit ``a`` as a PGM grid.

    Values are divided by g and mapped linearly from their joint [min, max]
    to [0, 255]; the bounds go to ``<path>.scale.txt``.
    """
    from .dynamics import RestrictedParams
    from .errors import UnsupportedArchitecture

    if not isinstance(params, RestrictedParams):
        raise UnsupportedArchitecture("receptive fields are defined for the restricted architecture")
    idx = np.asarray(neuron_indices, dtype=int)
    if idx.size == 0 or idx.min() < 0 or idx.max() >= params.n_h:
        raise InvalidArgument(f"hidden indices must lie in [0, {params.n_h})")
    if image_shape is None:
        side = _grid_side(params.n_v)
        image_shape = (side, side)
    fields = (params.W[:, idx] + params.A[:, idx]).T
    if params.g > 0:
        fields = fields / params.g
    lo, hi = float(fields.min()), float(fields.max())
    span = hi - lo if hi > lo else 1.0
    pix = np.clip(np.rint(255 * (fields - lo) / span), 0, 255).astype(np.uint8)
    grid_cols = grid_cols or math.ceil(math.sqrt(idx.size))
    grid = tile(pix.reshape((idx.size,) + tuple(image_shape)), grid_cols)
    write_pgm(path, grid)
    with open(str(path) + ".scale.txt", "w") as f:
        f.write(f"min={lo!r} max={hi!r} g={params.g!r}\n")
    return grid


# --- raw matrix dumps -------------------------------------------------------

MATRIX_MAGIC = b"CGENMAT\x00"


def write_matrix(path, matrix):
    """16-byte header (8-byte magic, u32 rows, u32 cols) then little-endian float64."""
    m = np.atleast_2d(np.asarray(matrix, dtype="<f8"))
    with open(path, "wb") as f:
        f.write(MATRIX_MAGIC + struct.pack("<II", *m.shape))
        f.write(np.ascontiguousarray(m).tobytes())


def read_matrix(path):
    with open(path, "rb") as f:
        head = f.read(16)
        if len(head) < 16 or head[:8] != MATRIX_MAGIC:
            raise FormatError("not a raw matrix dump", offset=0)
        rows, cols = struct.unpack("<II", head[8:])
        body = f.read(rows * cols * 8)
    if len(body) < rows * cols * 8:
        raise FormatError("truncated matrix payload", offset=16 + len(body))
    return np.frombuffer(body, dtype="<f8").reshape(rows, cols).astype(np.float64)
