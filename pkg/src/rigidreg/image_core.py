"""Sampled images on a regular lattice and the kernels used to interpolate them.

Sample ``i`` of an image sits at world position ``origin + period * i``.
Arrays are indexed with axis order (x, y[, z]) and stored row-major, so the
last axis varies fastest in memory.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage


class KernelKind(enum.Enum):
    SINC = "sinc"
    BOX = "box"
    TRIANGULAR = "triangular"


@dataclass(frozen=True)
class Kernel:
    """Separable interpolation kernel.

    ``alpha`` is the power of sinc appearing in the kernel's Fourier
    transform (1 for box, 2 for triangular). ``support_radius`` is in pixel
    units; for sinc it is the truncation radius used by direct evaluation.
    """

    kind: KernelKind
    alpha: int = 0
    support_radius: float = math.inf

    @staticmethod
    def sinc(truncation: float = 16.0) -> "Kernel":
        return Kernel(KernelKind.SINC, 0, float(truncation))

    @staticmethod
    def box() -> "Kernel":
        return Kernel(KernelKind.BOX, 1, 0.5)

    @staticmethod
    def triangular() -> "Kernel":
        return Kernel(KernelKind.TRIANGULAR, 2, 1.0)

    @staticmethod
    def from_alpha(alpha: int) -> "Kernel":
        if alpha == 1:
            return Kernel.box()
        if alpha == 2:
            return Kernel.triangular()
        raise ValueError(f"no bounded-support kernel with alpha={alpha}")


def kernel_1d(kernel: Kernel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if kernel.kind is KernelKind.BOX:
        return (np.abs(x) <= 0.5).astype(float)
    if kernel.kind is KernelKind.TRIANGULAR:
        return np.clip(1.0 - np.abs(x), 0.0, None)
    return np.sinc(x)


def kernel_eval(kernel: Kernel, offset: Sequence[float] | np.ndarray, dims: int) -> float | np.ndarray:
    """Separable kernel value at ``offset`` (last axis holds the coordinates)."""
    off = np.asarray(offset, dtype=float)
    if off.shape[-1] != dims:
        raise ValueError(f"offset has {off.shape[-1]} coordinates, expected {dims}")
    if kernel.kind is KernelKind.BOX:
        # the box is defined through the l-infinity norm, not per-axis products
        val = (np.max(np.abs(off), axis=-1) <= 0.5).astype(float)
    else:
        val = np.prod(kernel_1d(kernel, off), axis=-1)
    return float(val) if np.ndim(val) == 0 else val


@dataclass(frozen=True, eq=False)
class DiscreteImage:
    samples: np.ndarray
    period: float = 1.0
    origin: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        s = np.array(self.samples, dtype=float)
        if s.ndim not in (2, 3):
            raise ValueError("images must be 2D or 3D")
        if min(s.shape) < 1:
            raise ValueError("every extent must be at least 1")
        if not self.period > 0:
            raise ValueError("period must be positive")
        o = np.zeros(s.ndim) if self.origin is None else np.array(self.origin, dtype=float)
        if o.shape != (s.ndim,):
            raise ValueError("origin must have one entry per axis")
        s.setflags(write=False)
        o.setflags(write=False)
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "period", float(self.period))

    @property
    def dims(self) -> int:
        return self.samples.ndim

    @property
    def extents(self) -> tuple[int, ...]:
        return self.samples.shape

    def center(self) -> np.ndarray:
        """World position of the middle of the sample grid."""
        return self.origin + self.period * (np.array(self.extents) - 1) / 2.0

    def world_coords(self) -> np.ndarray:
        """Array of shape extents + (dims,) with the world position of each sample."""
        axes = [self.origin[k] + self.period * np.arange(n) for k, n in enumerate(self.extents)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def with_samples(self, samples: np.ndarray) -> "DiscreteImage":
        return DiscreteImage(samples, self.period, self.origin)

    def scaled(self, c: float) -> "DiscreteImage":
        return self.with_samples(c * self.samples)


def sample_value(image: DiscreteImage, idx: np.ndarray) -> np.ndarray:
    """Samples at integer lattice indices (..., dims); zero outside the grid."""
    idx = np.asarray(idx, dtype=np.int64)
    inside = np.ones(idx.shape[:-1], dtype=bool)
    for k, n in enumerate(image.extents):
        inside &= (idx[..., k] >= 0) & (idx[..., k] < n)
    clipped = np.where(inside[..., None], idx, 0)
    vals = image.samples[tuple(clipped[..., k] for k in range(image.dims))]
    return np.where(inside, vals, 0.0)


def interpolate_lattice(image: DiscreteImage, kernel: Kernel, q: np.ndarray) -> np.ndarray:
    """Interpolated value at lattice coordinates ``q`` (..., dims)."""
    q = np.asarray(q, dtype=float)
    d = image.dims
    if q.shape[-1] != d:
        raise ValueError("point dimension does not match image")
    flat = q.reshape(-1, d)
    if kernel.kind is KernelKind.SINC:
        return _sinc_interp(image, flat, kernel.support_radius).reshape(q.shape[:-1])
    if kernel.kind is KernelKind.TRIANGULAR:
        # multilinear weights with zeros beyond the grid, done in compiled code
        return ndimage.map_coordinates(image.samples, flat.T, order=1, mode="grid-constant",
                                       cval=0.0, prefilter=False).reshape(q.shape[:-1])
    # candidate sites: floor(q) + {0,1}^d covers both kernels, including box ties
    base = np.floor(flat).astype(np.int64)
    if kernel.kind is KernelKind.BOX:
        base = np.floor(flat - 0.5).astype(np.int64)
    out = np.zeros(len(flat))
    for corner in np.ndindex(*([2] * d)):
        site = base + np.array(corner)
        w = kernel_eval(kernel, flat - site, d)
        out += w * sample_value(image, site)
    return out.reshape(q.shape[:-1])


def _sinc_interp(image: DiscreteImage, q: np.ndarray, radius: float) -> np.ndarray:
    d = image.dims
    out = np.empty(len(q))
    for start in range(0, len(q), 4096):
        block = q[start:start + 4096]
        weights = []
        for k, n in enumerate(image.extents):
            diff = block[:, k:k + 1] - np.arange(n)[None, :]
            w = np.sinc(diff)
            if math.isfinite(radius):
                w = np.where(np.abs(diff) <= radius, w, 0.0)
            weights.append(w)
        if d == 2:
            out[start:start + 4096] = np.einsum("pi,ij,pj->p", weights[0], image.samples, weights[1])
        else:
            out[start:start + 4096] = np.einsum("pi,ijk,pj,pk->p", weights[0], image.samples,
                                                weights[1], weights[2])
    return out


def interpolate(image: DiscreteImage, kernel: Kernel, point: Sequence[float] | np.ndarray) -> float | np.ndarray:
    """Continuous image value at world ``point`` (or an array of points)."""
    p = np.asarray(point, dtype=float)
    if p.shape[-1] != image.dims:
        raise ValueError("point dimension does not match image")
    q = (p - image.origin) / image.period
    val = interpolate_lattice(image, kernel, q)
    return float(val) if np.ndim(val) == 0 else val


def l2_norm(image: DiscreteImage) -> float:
    return math.sqrt(image.period ** image.dims * float(np.sum(image.samples ** 2)))


def zero_pad(image: DiscreteImage, margin: int | Sequence[int]) -> DiscreteImage:
    """Pad with ``margin`` zeros on both sides of every axis, keeping world positions."""
    m = np.broadcast_to(np.asarray(margin, dtype=int), (image.dims,))
    if np.any(m < 0):
        raise ValueError("margins must be non-negative")
    samples = np.pad(image.samples, [(int(k), int(k)) for k in m])
    return DiscreteImage(samples, image.period, image.origin - image.period * m)


def pad_to(image: DiscreteImage, shape: Sequence[int]) -> tuple[DiscreteImage, np.ndarray]:
    """Embed ``image`` near the middle of a larger zero grid; returns the index offset too."""
    shape = np.asarray(shape, dtype=int)
    ext = np.asarray(image.extents)
    if np.any(shape < ext):
        raise ValueError("target shape is smaller than the image")
    front = (shape - ext) // 2
    samples = np.pad(image.samples, [(int(a), int(s - e - a)) for a, s, e in zip(front, shape, ext)])
    return DiscreteImage(samples, image.period, image.origin - image.period * front), front
