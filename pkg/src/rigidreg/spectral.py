"""DFT spectra of sampled images, ideal radial filters and band energies.

A :class:`Spectrum` holds samples of the continuous Fourier transform of the
sinc-interpolated image, ``F(z) = int f(x) exp(-2 pi i z.x) dx``, taken on the
grid of a zero-padded DFT. Phases are stored relative to a reference point
``ref`` (the middle of the padded grid) which keeps the coefficients slowly
varying; ``true_coeffs`` restores the world-origin phase.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .image_core import DiscreteImage, pad_to


@dataclass(frozen=True, eq=False)
class Spectrum:
    coeffs: np.ndarray
    period: float
    ref: np.ndarray
    # index offset and extents of the source image inside the padded grid
    source_offset: np.ndarray = field(default=None)  # type: ignore[assignment]
    source_extents: tuple = ()

    @property
    def dims(self) -> int:
        return self.coeffs.ndim

    @property
    def extents(self) -> tuple[int, ...]:
        return self.coeffs.shape

    @property
    def freq_step(self) -> np.ndarray:
        return 1.0 / (np.array(self.extents) * self.period)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.freq_step))

    @property
    def nyquist(self) -> float:
        return 0.5 / self.period

    def axis_freqs(self) -> list[np.ndarray]:
        return [np.fft.fftfreq(n, self.period) for n in self.extents]

    def zgrid(self) -> np.ndarray:
        """Frequency of every bin, shape extents + (dims,)."""
        return np.stack(np.meshgrid(*self.axis_freqs(), indexing="ij"), axis=-1)

    def radius(self) -> np.ndarray:
        r2 = np.zeros(self.extents)
        for k, f in enumerate(self.axis_freqs()):
            shape = [1] * self.dims
            shape[k] = -1
            r2 = r2 + f.reshape(shape) ** 2
        return np.sqrt(r2)

    def power(self) -> np.ndarray:
        return np.abs(self.coeffs) ** 2

    def true_coeffs(self) -> np.ndarray:
        phase = np.tensordot(self.zgrid(), self.ref, axes=([-1], [0]))
        return self.coeffs * np.exp(-2j * np.pi * phase)

    def with_coeffs(self, coeffs: np.ndarray) -> "Spectrum":
        return Spectrum(coeffs, self.period, self.ref, self.source_offset, self.source_extents)

    def scaled(self, c: float) -> "Spectrum":
        return self.with_coeffs(c * self.coeffs)


class RegionKind(enum.Enum):
    BALL = "ball"
    ANNULUS = "annulus"
    LINF_BALL = "linf_ball"
    DIFFERENCE = "difference"


@dataclass(frozen=True)
class FreqRegion:
    """Region of frequency space; radii in cycles per world unit."""

    kind: RegionKind
    r_lo: float = 0.0
    r_hi: float = math.inf
    parts: tuple = ()

    def __post_init__(self):
        if self.r_lo < 0 or self.r_hi < 0:
            raise ValueError("radii must be non-negative")
        if self.kind is RegionKind.ANNULUS and self.r_lo > self.r_hi:
            raise ValueError("annulus needs r_lo <= r_hi")

    @staticmethod
    def ball(radius: float) -> "FreqRegion":
        return FreqRegion(RegionKind.BALL, 0.0, radius)

    @staticmethod
    def annulus(r_lo: float, r_hi: float) -> "FreqRegion":
        return FreqRegion(RegionKind.ANNULUS, r_lo, r_hi)

    @staticmethod
    def linf_ball(radius: float) -> "FreqRegion":
        return FreqRegion(RegionKind.LINF_BALL, 0.0, radius)

    @staticmethod
    def everything() -> "FreqRegion":
        return FreqRegion(RegionKind.LINF_BALL, 0.0, math.inf)

    def minus(self, other: "FreqRegion") -> "FreqRegion":
        return FreqRegion(RegionKind.DIFFERENCE, parts=(self, other))

    def mask(self, z: np.ndarray) -> np.ndarray:
        """Membership of frequencies ``z`` (..., dims)."""
        if self.kind is RegionKind.BALL:
            return np.linalg.norm(z, axis=-1) <= self.r_hi
        if self.kind is RegionKind.ANNULUS:
            r = np.linalg.norm(z, axis=-1)
            return (r >= self.r_lo) & (r < self.r_hi)
        if self.kind is RegionKind.LINF_BALL:
            return np.max(np.abs(z), axis=-1) <= self.r_hi
        a, b = self.parts
        return a.mask(z) & ~b.mask(z)


def complement_of_ball(radius: float) -> FreqRegion:
    return FreqRegion.everything().minus(FreqRegion.ball(radius))


def forward_dft(image: DiscreteImage, pad_factor: int = 2, shape: Sequence[int] | None = None) -> Spectrum:
    """Spectrum of ``image`` zero-padded to ``pad_factor`` times its extents."""
    if pad_factor < 1:
        raise ValueError("pad_factor must be >= 1")
    if shape is None:
        shape = [n * pad_factor for n in image.extents]
    padded, front = pad_to(image, shape)
    T = image.period
    coeffs = T ** image.dims * np.fft.fftn(np.fft.ifftshift(padded.samples))
    ref = padded.origin + T * (np.array(shape) // 2)
    return Spectrum(coeffs, T, ref, front, tuple(image.extents))


def mirror_index(a: np.ndarray) -> np.ndarray:
    """``a[-k]`` for every DFT index ``k`` (periodic)."""
    out = a
    for ax in range(a.ndim):
        out = np.roll(np.flip(out, axis=ax), 1, axis=ax)
    return out


def is_conjugate_symmetric(spec: Spectrum, rtol: float = 1e-9) -> bool:
    c = spec.coeffs
    scale = max(float(np.max(np.abs(c))) if c.size else 0.0, 1e-300)
    return float(np.max(np.abs(mirror_index(c) - np.conj(c)))) <= rtol * scale


def inverse_dft(spec: Spectrum, crop: bool = True) -> DiscreteImage:
    if not is_conjugate_symmetric(spec):
        raise ValueError("spectrum is not conjugate-symmetric; it does not describe a real image")
    T = spec.period
    full = np.real(np.fft.fftshift(np.fft.ifftn(spec.coeffs))) / T ** spec.dims
    origin = spec.ref - T * (np.array(spec.extents) // 2)
    img = DiscreteImage(full, T, origin)
    if not crop or spec.source_offset is None:
        return img
    sl = tuple(slice(int(a), int(a) + int(n)) for a, n in zip(spec.source_offset, spec.source_extents))
    return DiscreteImage(full[sl], T, origin + T * np.asarray(spec.source_offset))


def radial_lowpass(spec: Spectrum, cutoff: float) -> Spectrum:
    """Keep bins inside the closed ball of radius ``cutoff``."""
    if cutoff < 0:
        raise ValueError("cutoff must be non-negative")
    return spec.with_coeffs(np.where(spec.radius() <= cutoff, spec.coeffs, 0.0))


def highpass_complement(spec: Spectrum, cutoff: float) -> Spectrum:
    return spec.with_coeffs(np.where(spec.radius() <= cutoff, 0.0, spec.coeffs))


def lowpass_cutoff(m: int, period: float) -> float:
    return 1.0 / (2.0 * m * period)


def decimate(image: DiscreteImage, m: int, pad_factor: int = 2, keep_padding: bool = True,
             margin: int = 0) -> DiscreteImage:
    """Ideal radial low-pass at 1/(2mT) followed by sampling every m-th pixel.

    Sampling starts at the first pixel of the input. With ``keep_padding`` the
    low-resolution grid spans the whole zero-padded DFT period, so the ringing
    of the ideal filter outside the original extent is retained and the
    low-resolution spectrum matches the filtered one bin for bin. Otherwise
    the grid covers the original extent plus ``margin`` coarse samples per side.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if m == 1:
        return image
    shape = [int(math.ceil(n * pad_factor / m)) * m for n in image.extents]
    spec = forward_dft(image, shape=shape)
    low = radial_lowpass(spec, lowpass_cutoff(m, image.period))
    full = inverse_dft(low, crop=False)
    front = np.asarray(spec.source_offset)
    if keep_padding:
        start = front % m
        stop = np.array(shape)
    else:
        start = np.maximum(front - m * margin, front % m)
        stop = np.minimum(front + np.array(image.extents) + m * margin, shape)
    sl = tuple(slice(int(a), int(b), m) for a, b in zip(start, stop))
    return DiscreteImage(full.samples[sl], m * image.period, full.origin + image.period * start)


def upsample(image: DiscreteImage, p: int, pad_factor: int = 2) -> DiscreteImage:
    """Band-limited upsampling by ``p`` through zero insertion in the DFT.

    The padded length is made odd so there is no unpaired Nyquist bin; the
    original samples then reappear exactly and the norm is preserved.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    if p == 1:
        return image
    shape = []
    for n in image.extents:
        k = n * pad_factor
        shape.append(k + 1 if k % 2 == 0 else k)
    padded, _ = pad_to(image, shape)
    X = np.fft.fftshift(np.fft.fftn(padded.samples))
    big = [p * n for n in shape]
    Y = np.zeros(big, dtype=complex)
    sl = tuple(slice(M // 2 - (n - 1) // 2, M // 2 - (n - 1) // 2 + n) for M, n in zip(big, shape))
    Y[sl] = X
    y = np.real(np.fft.ifftn(np.fft.ifftshift(Y))) * p ** image.dims
    return DiscreteImage(y, image.period / p, padded.origin)


def band_energy(spec: Spectrum, region: FreqRegion) -> float:
    return float(np.sum(spec.power()[region.mask(spec.zgrid())])) * spec.cell_volume


def distinct_radii(spec: Spectrum, decimals: int = 12) -> np.ndarray:
    return np.unique(np.round(spec.radius().ravel(), decimals))


def radial_band_edges(n_bands: int, max_radius: float, r_min: float = 0.0,
                      radii: np.ndarray | None = None, per_radius_limit: int = 64) -> np.ndarray:
    """Monotone band radii ``r_0 < ... < r_P`` covering ``[r_min, max_radius]``.

    When ``radii`` (the distinct bin radii) are given and there are at most
    ``per_radius_limit`` of them in the range, each band holds a single radius.
    Otherwise the range is cut into ``n_bands`` equal-width annuli.
    """
    if n_bands < 1:
        raise ValueError("n_bands must be >= 1")
    if radii is not None:
        r = np.asarray(radii)
        r = r[(r > r_min) & (r <= max_radius)]
        if 1 < len(r) <= per_radius_limit:
            mids = 0.5 * (r[1:] + r[:-1])
            return np.concatenate([[r_min], mids, [max_radius]])
    return np.linspace(r_min, max_radius, n_bands + 1)


def band_index(radius: np.ndarray, edges: np.ndarray, closed: str = "left") -> np.ndarray:
    """Band of each radius, -1 outside ``[edges[0], edges[-1]]``.

    ``closed='left'`` uses ``r_i <= r < r_{i+1}`` (last band closed on top);
    ``closed='right'`` uses ``r_i < r <= r_{i+1}`` (first band open at r_0).
    """
    edges = np.asarray(edges)
    nb = len(edges) - 1
    if closed == "left":
        idx = np.searchsorted(edges, radius, side="right") - 1
        idx = np.where(radius == edges[-1], nb - 1, idx)
        inside = (radius >= edges[0]) & (radius <= edges[-1])
    else:
        idx = np.searchsorted(edges, radius, side="left") - 1
        inside = (radius > edges[0]) & (radius <= edges[-1])
    return np.where(inside, np.clip(idx, 0, nb - 1), -1)


def band_sums(values: np.ndarray, idx: np.ndarray, n_bands: int) -> np.ndarray:
    """Sum ``values`` per band (bins with index -1 are dropped)."""
    keep = idx >= 0
    return np.bincount(idx[keep].ravel(), weights=values[keep].ravel(), minlength=n_bands)
