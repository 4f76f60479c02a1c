"""Bounds on the change of the correlation target when images are decimated.

Every bound is a combination of weighted spectral energies evaluated as DFT
Riemann sums. ``Omega`` denotes the closed ball of radius 1/(2mT), ``C`` the
Nyquist cube of half-width 1/(2T), and ``Omega'`` the ball enclosing ``C``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import polygamma

from .spectral import Spectrum, band_index, band_sums, lowpass_cutoff


class Variant(enum.Enum):
    SINC_IDEAL = "sinc_ideal"
    BOUNDED_SUPPORT = "bounded_support"
    DISCRETIZED_ONE_SINC = "discretized_one_sinc"
    LOW_HIGH = "low_high"
    LOW_HIGH_DISCRETIZED = "low_high_discretized"
    UPSAMPLED = "upsampled"
    RADIAL_BANDED = "radial_banded"


@dataclass(frozen=True)
class InterResBound:
    m: int
    variant: Variant
    value: float
    alpha: int = 0
    p: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.value) and self.value >= 0):
            raise ValueError(f"bound must be finite and non-negative, got {self.value}")


def phi_alpha(z, alpha: int):
    """Periodized kernel power spectrum ``sum_i sinc(z + i)^(2 alpha)`` for |z| <= 1/2."""
    z = np.asarray(z, dtype=float)
    if np.any(np.abs(z) > 0.5 + 1e-12):
        raise ValueError("phi_alpha is defined for |z| <= 1/2")
    k = 2 * alpha - 1
    zz = np.clip(z, -0.5, 0.5)
    tail = (polygamma(k, 1.0 + zz) + polygamma(k, 1.0 - zz)) / math.factorial(k)
    out = np.sinc(zz) ** (2 * alpha) * (1.0 + zz ** (2 * alpha) * tail)
    return float(out) if out.ndim == 0 else out


@lru_cache(maxsize=8)
def _phi_table(alpha: int, n: int = 4096):
    grid = np.linspace(0.0, 0.5, n)
    return grid, phi_alpha(grid, alpha)


def phi_alpha_cached(z, alpha: int):
    """``phi_alpha`` by linear interpolation on a 4096-point table (it is even in z)."""
    grid, table = _phi_table(alpha)
    return np.interp(np.abs(np.asarray(z, dtype=float)), grid, table)


def phi_alpha_nd(z: np.ndarray, alpha: int, cached: bool = True) -> np.ndarray:
    fn = phi_alpha_cached if cached else phi_alpha
    return np.prod(fn(z, alpha), axis=-1)


def _sinc_pow(z: np.ndarray, alpha: int) -> np.ndarray:
    return np.prod(np.sinc(z), axis=-1) ** alpha


@dataclass(frozen=True)
class EnergyTerms:
    omega_fp: float       # E_Omega(F')
    omega_dfp: float      # E_Omega(F' - F'^l)
    omegabar_fp: float    # E_Omegabar(F')
    omegabar_flp: float   # E_Omegabar(F'^l)


class SpectrumGeometry:
    """Per-bin quantities of a spectrum that every bound reuses."""

    def __init__(self, spec: Spectrum):
        self.spec = spec
        self.z = spec.zgrid()
        self.r = np.linalg.norm(self.z, axis=-1)
        self.power = spec.power()
        self.dv = spec.cell_volume
        self.T = spec.period

    def omega(self, m: int) -> np.ndarray:
        return self.r <= lowpass_cutoff(m, self.T)

    def energy(self, mask: np.ndarray, weight: np.ndarray | float = 1.0) -> float:
        return float(np.sum(np.where(mask, weight * self.power, 0.0))) * self.dv


def _geom(x) -> SpectrumGeometry:
    return x if isinstance(x, SpectrumGeometry) else SpectrumGeometry(x)


def energy_terms(F, m: int, alpha: int) -> EnergyTerms:
    s = _geom(F)
    T = s.T
    om = s.omega(m)
    s1 = _sinc_pow(T * s.z, alpha)
    sm = _sinc_pow(m * T * s.z, alpha)
    phi_t = phi_alpha_nd(T * s.z, alpha)
    everywhere = np.ones_like(om)
    e_fp = s.energy(om, s1 ** 2)
    e_dfp = s.energy(om, (s1 - sm) ** 2)
    e_bar = s.energy(~om, s1 ** 2) + s.energy(everywhere, np.maximum(phi_t - s1 ** 2, 0.0))
    zl = np.where(om[..., None], m * T * s.z, 0.0)
    phi_m = phi_alpha_nd(zl, alpha)
    e_bar_l = s.energy(om, np.maximum(phi_m - sm ** 2, 0.0))
    return EnergyTerms(e_fp, e_dfp, e_bar, e_bar_l)


def high_energy(F, m: int) -> float:
    """Energy of F outside the closed ball of radius 1/(2mT)."""
    s = _geom(F)
    return s.energy(~s.omega(m))


def bound_sinc(F, G, m: int) -> InterResBound:
    val = math.sqrt(high_energy(F, m)) * math.sqrt(high_energy(G, m))
    return InterResBound(m, Variant.SINC_IDEAL, val)


def bound_bounded_support(F, G, m: int, alpha: int) -> InterResBound:
    a = energy_terms(F, m, alpha)
    b = energy_terms(G, m, alpha)
    val = (math.sqrt(a.omega_fp * b.omega_dfp)
           + math.sqrt(b.omega_fp * a.omega_dfp)
           + math.sqrt(a.omega_dfp * b.omega_dfp)
           + math.sqrt(a.omegabar_fp * b.omegabar_fp)
           + math.sqrt(a.omegabar_flp * b.omegabar_flp))
    return InterResBound(m, Variant.BOUNDED_SUPPORT, val, alpha)


def bound_lowhigh(F, G, m: int, alpha: int) -> InterResBound:
    """Only f is decimated; g keeps its resolution."""
    a = energy_terms(F, m, alpha)
    b = energy_terms(G, m, alpha)
    val = (math.sqrt(b.omega_fp * a.omega_dfp)
           + math.sqrt(a.omegabar_fp * b.omegabar_fp)
           + math.sqrt(a.omegabar_flp * b.omegabar_fp))
    return InterResBound(m, Variant.LOW_HIGH, val, alpha)


def interpolated_energy_outside(G, m: int, alpha: int) -> float:
    """E over Omega' minus Omega of the interpolated spectrum G', spectral replicas included."""
    s = _geom(G)
    T = s.T
    d = s.z.shape[-1]
    outer = math.sqrt(d) / (2 * T)
    inner = lowpass_cutoff(m, T)
    total = 0.0
    for shift in np.ndindex(*([3] * d)):
        zs = s.z + (np.array(shift) - 1) / T
        r = np.linalg.norm(zs, axis=-1)
        mask = (r > inner) & (r <= outer)
        if mask.any():
            total += s.energy(mask, _sinc_pow(T * zs, alpha) ** 2)
    return total


def bound_discretized_one_sinc(F, G, m: int, alpha: int) -> InterResBound:
    """For the discretized target, where f's own kernel does not matter."""
    sf, sg = _geom(F), _geom(G)
    T = sg.T
    om = sf.omega(m)
    e_f_in = sf.energy(om)
    e_f_out = sf.energy(~om)
    dg = (_sinc_pow(T * sg.z, alpha) - _sinc_pow(m * T * sg.z, alpha)) ** 2
    e_dg = sg.energy(sg.omega(m), dg)
    val = math.sqrt(e_f_in * e_dg) + math.sqrt(e_f_out * interpolated_energy_outside(sg, m, alpha))
    return InterResBound(m, Variant.DISCRETIZED_ONE_SINC, val, alpha)


def bound_lowhigh_discretized(F, G, m: int, alpha: int) -> InterResBound:
    sf = _geom(F)
    val = math.sqrt(sf.energy(~sf.omega(m)) * interpolated_energy_outside(G, m, alpha))
    return InterResBound(m, Variant.LOW_HIGH_DISCRETIZED, val, alpha)


def bound_upsampled(F, G, m: int, p: int, alpha: int) -> InterResBound:
    """Low-to-high discretized target with g upsampled by ``p`` before interpolation."""
    sf, sg = _geom(F), _geom(G)
    T = sg.T
    w = _sinc_pow(T * sg.z / p, alpha) ** 2
    e_g = sg.energy(~sg.omega(m), w)
    val = math.sqrt(sf.energy(~sf.omega(m)) * e_g)
    return InterResBound(m, Variant.UPSAMPLED, val, alpha, p)


def bound_radial_bands(F, G, m: int, band_edges) -> InterResBound:
    sf, sg = _geom(F), _geom(G)
    edges = np.asarray(band_edges, dtype=float)
    if not math.isclose(edges[0], lowpass_cutoff(m, sf.T), rel_tol=1e-12):
        raise ValueError("band edges must start at the low-pass cutoff")
    nb = len(edges) - 1
    ef = band_sums(sf.power, band_index(sf.r, edges, closed="right"), nb) * sf.dv
    eg = band_sums(sg.power, band_index(sg.r, edges, closed="right"), nb) * sg.dv
    val = float(np.sum(np.sqrt(ef) * np.sqrt(eg)))
    return InterResBound(m, Variant.RADIAL_BANDED, val)


def compute_bound(variant: Variant, F, G, m: int, alpha: int = 2, p: int = 2, band_edges=None) -> InterResBound:
    if variant is Variant.SINC_IDEAL:
        return bound_sinc(F, G, m)
    if variant is Variant.BOUNDED_SUPPORT:
        return bound_bounded_support(F, G, m, alpha)
    if variant is Variant.DISCRETIZED_ONE_SINC:
        return bound_discretized_one_sinc(F, G, m, alpha)
    if variant is Variant.LOW_HIGH:
        return bound_lowhigh(F, G, m, alpha)
    if variant is Variant.LOW_HIGH_DISCRETIZED:
        return bound_lowhigh_discretized(F, G, m, alpha)
    if variant is Variant.UPSAMPLED:
        return bound_upsampled(F, G, m, p, alpha)
    return bound_radial_bands(F, G, m, band_edges)
