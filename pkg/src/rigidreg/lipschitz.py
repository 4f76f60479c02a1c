"""Frequency-domain Lipschitz constants of the correlation target.

All constants are sums over radial bands ``r_i <= |z| < r_{i+1}`` of
Cauchy-Schwarz products of band energies. Coordinates are taken relative to
the rotation centre, so a motion ``x -> c + R(x - c + t)`` has the same
constants wherever the image sits in world space.

A constant for decimation factor ``m`` is obtained by dropping every bin
outside the ball of radius 1/(2mT); since all integrands are nonnegative the
constants can only shrink with ``m``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .image_core import DiscreteImage, pad_to
from .spectral import Spectrum, band_index, band_sums, forward_dft, lowpass_cutoff


@dataclass(frozen=True, eq=False)
class JacobianSpectrum:
    """Derivative of ``G~(z) = int g(x) exp(-2 pi i z.(x - center)) dx`` with respect to z.

    ``components[k]`` holds dG~/dz_k on the DFT grid; ``norm`` is the largest
    singular value of the real 2 x d matrix [Re J; Im J] at every bin.
    """

    components: np.ndarray
    norm: np.ndarray
    period: float
    center: np.ndarray

    @property
    def dims(self) -> int:
        return self.components.shape[0]

    @property
    def extents(self) -> tuple[int, ...]:
        return self.components.shape[1:]

    def zgrid(self) -> np.ndarray:
        axes = [np.fft.fftfreq(n, self.period) for n in self.extents]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def _centered_dft(samples: np.ndarray, T: float, ref_minus_center: np.ndarray, z: np.ndarray) -> np.ndarray:
    coeffs = T ** samples.ndim * np.fft.fftn(np.fft.ifftshift(samples))
    return coeffs * np.exp(-2j * np.pi * (z @ ref_minus_center))


def jacobian_spectrum(g: DiscreteImage, pad_factor: int = 2, center=None) -> JacobianSpectrum:
    c = g.center() if center is None else np.asarray(center, dtype=float)
    shape = [n * pad_factor for n in g.extents]
    padded, _ = pad_to(g, shape)
    T = g.period
    ref = padded.origin + T * (np.array(shape) // 2)
    z = np.stack(np.meshgrid(*[np.fft.fftfreq(n, T) for n in shape], indexing="ij"), axis=-1)
    x = padded.world_coords() - c
    comps = np.stack([
        _centered_dft(-2j * np.pi * x[..., k] * padded.samples, T, ref - c, z)
        for k in range(g.dims)
    ])
    return JacobianSpectrum(comps, _spectral_norm_2xd(comps), T, c)


def _spectral_norm_2xd(comps: np.ndarray) -> np.ndarray:
    re, im = np.real(comps), np.imag(comps)
    aa = np.sum(re * re, axis=0)
    bb = np.sum(im * im, axis=0)
    ab = np.sum(re * im, axis=0)
    half = 0.5 * (aa + bb)
    return np.sqrt(half + np.sqrt(np.maximum(0.25 * (aa - bb) ** 2 + ab ** 2, 0.0)))


def default_band_edges(dims: int, period: float, n_bands: int = 32) -> np.ndarray:
    """Equal-width annuli up to the corner of the Nyquist box."""
    return np.linspace(0.0, math.sqrt(dims) / (2.0 * period), n_bands + 1)


def _spec_radius(z: np.ndarray) -> np.ndarray:
    return np.linalg.norm(z, axis=-1)


class BandIntegrals:
    """Per-band integrals shared by every constant.

    ``energy_f``/``energy_g``: band energies of F and G. ``jac_perp``:
    integral of ``|J_G(z) z_perp|^2`` (2D only). ``jac_norm``: integral of
    ``||J_G(z)||^2 ||z||^2``. ``cutoff`` drops bins outside a ball.
    """

    def __init__(self, F: Spectrum, G: Spectrum | None, J: JacobianSpectrum | None,
                 band_edges: np.ndarray, cutoff: float = math.inf):
        self.edges = np.asarray(band_edges, dtype=float)
        self.cutoff = cutoff
        nb = len(self.edges) - 1
        self.energy_f = self._bands(F.radius(), F.power(), F.cell_volume, nb)
        self.energy_g = self.energy_f if G is None else self._bands(G.radius(), G.power(), G.cell_volume, nb)
        self.jac_perp = np.zeros(nb)
        self.jac_norm = np.zeros(nb)
        if J is not None:
            z = J.zgrid()
            r = _spec_radius(z)
            dv = float(np.prod(1.0 / (np.array(J.extents) * J.period)))
            self.jac_norm = self._bands(r, J.norm ** 2 * r ** 2, dv, nb)
            if J.dims == 2:
                directional = -J.components[0] * z[..., 1] + J.components[1] * z[..., 0]
                self.jac_perp = self._bands(r, np.abs(directional) ** 2, dv, nb)

    def _bands(self, r, values, dv, nb):
        vals = np.where(r <= self.cutoff, values, 0.0)
        return band_sums(vals, band_index(r, self.edges, closed="left"), nb) * dv

    @property
    def upper_radii(self) -> np.ndarray:
        return self.edges[1:]


def lip_translation(F: Spectrum, G: Spectrum, band_edges, cutoff: float = math.inf) -> float:
    return translation_constant(BandIntegrals(F, G, None, band_edges, cutoff))


def translation_constant(b: BandIntegrals) -> float:
    return float(2 * math.pi * np.sum(b.upper_radii * np.sqrt(b.energy_f) * np.sqrt(b.energy_g)))


def lip_rotation_2d(F: Spectrum, J_G: JacobianSpectrum, band_edges, cutoff: float = math.inf) -> float:
    return rotation_constant_2d(BandIntegrals(F, None, J_G, band_edges, cutoff))


def rotation_constant_2d(b: BandIntegrals) -> float:
    return float(np.sum(np.sqrt(b.energy_f) * np.sqrt(b.jac_perp)))


def rotation_base_3d(b: BandIntegrals) -> float:
    return float(np.sum(np.sqrt(b.energy_f) * np.sqrt(b.jac_norm)))


def _ranges(box) -> Mapping[str, tuple[float, float]]:
    return box.ranges() if hasattr(box, "ranges") else box


def max_abs_sin_half(lo: float, hi: float) -> float:
    """max of |sin(theta/2)| over [lo, hi] (theta within [-2 pi, 2 pi])."""
    if lo <= math.pi <= hi or lo <= -math.pi <= hi:
        return 1.0
    return max(abs(math.sin(lo / 2)), abs(math.sin(hi / 2)))


def max_abs_cos(lo: float, hi: float) -> float:
    """max of |cos(psi)| over [lo, hi]."""
    k = math.ceil(lo / math.pi)
    if k * math.pi <= hi:
        return 1.0
    return max(abs(math.cos(lo)), abs(math.cos(hi)))


def lip_rotation_3d(F: Spectrum, J_G: JacobianSpectrum, band_edges, box, cutoff: float = math.inf) -> dict:
    base = rotation_base_3d(BandIntegrals(F, None, J_G, band_edges, cutoff))
    return rotation_constants_3d(base, box)


def rotation_constants_3d(base: float, box) -> dict:
    r = _ranges(box)
    s = max_abs_sin_half(*r["theta"])
    c = max_abs_cos(*r["psi"])
    return {"theta": base, "psi": 2 * s * base, "phi": 2 * s * c * base}


def lip_symmetry(F: Spectrum, J_F: JacobianSpectrum, band_edges, box, dims: int,
                 cutoff: float = math.inf) -> dict:
    return symmetry_constants(BandIntegrals(F, None, J_F, band_edges, cutoff), box, dims)


def symmetry_constants(b: BandIntegrals, box, dims: int) -> dict:
    r = _ranges(box)
    a_lo, a_hi = r["offset"]
    a_max = max(abs(a_lo), abs(a_hi))
    radial = float(np.sum(b.upper_radii * b.energy_f))
    out = {"offset": 4 * math.pi * radial}
    if dims == 2:
        out["phi"] = 4 * math.pi * a_max * radial + 2 * float(np.sum(np.sqrt(b.energy_f * b.jac_perp)))
        return out
    spin = 2 * float(np.sum(np.sqrt(b.energy_f * b.jac_norm)))
    c = max_abs_cos(*r["psi"])
    out["phi"] = c * (4 * math.pi * a_max * radial + spin)
    out["psi"] = 4 * math.pi * a_max * radial + spin
    return out


@dataclass(frozen=True)
class LipschitzSet:
    """Box-independent pieces of the constants at one resolution level."""

    level: int
    m: int
    dims: int
    translation: float
    rotation: float          # 2D: d/dtheta constant; 3D: base sum before angular factors
    band_edges: np.ndarray

    def __post_init__(self):
        for v in (self.translation, self.rotation):
            if not (math.isfinite(v) and v >= 0):
                raise ValueError("Lipschitz constants must be finite and non-negative")


def level_cutoff(m: int, period: float) -> float:
    return math.inf if m == 1 else lowpass_cutoff(m, period)


def registration_set(F: Spectrum, G: Spectrum, J_G: JacobianSpectrum, band_edges, level: int, m: int) -> LipschitzSet:
    b = BandIntegrals(F, G, J_G, band_edges, level_cutoff(m, F.period))
    rot = rotation_constant_2d(b) if F.dims == 2 else rotation_base_3d(b)
    return LipschitzSet(level, m, F.dims, translation_constant(b), rot, np.asarray(band_edges))


def spectra_for(f: DiscreteImage, g: DiscreteImage, pad_factor: int = 2, center=None):
    """Spectra and the Jacobian of ``g`` about ``center`` (default: f's centre)."""
    c = f.center() if center is None else center
    return forward_dft(f, pad_factor), forward_dft(g, pad_factor), jacobian_spectrum(g, pad_factor, c)
