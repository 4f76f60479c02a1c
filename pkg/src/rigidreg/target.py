"""Correlation between a fixed image and a rigidly transformed moving image.

The target is ``Q(R, t) = int f(x) g(R(x + t)) dx`` in world coordinates.
A :class:`RigidMotion` rotates about ``center``: it maps
``x -> center + R (x - center + t)``, which equals ``R (x + t_eq)`` with
``t_eq = R^T center - center + t``. All evaluators accept any object with a
``canonical()`` method returning ``(R, t_eq)``; ``R`` may be improper.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np
from scipy import ndimage

from . import geometry
from .image_core import DiscreteImage, Kernel, KernelKind, interpolate_lattice, sample_value
from .spectral import Spectrum, upsample


class Method(enum.Enum):
    EXACT_KERNEL = "exact_kernel"
    DISCRETIZED = "discretized"
    LOW_HIGH_DISCRETIZED = "low_high_discretized"
    FREQUENCY = "frequency"


@dataclass(frozen=True)
class TargetValue:
    value: float
    method: Method
    imag_residue: float = 0.0

    def __float__(self) -> float:
        return self.value


class Posed(Protocol):
    def canonical(self) -> tuple[np.ndarray, np.ndarray]: ...


def axis_from_angles(phi: float, psi: float) -> np.ndarray:
    return np.array([math.cos(phi) * math.cos(psi), math.sin(phi) * math.cos(psi), math.sin(psi)])


def rot2(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def axis_angle_matrix(axis: np.ndarray, theta: float) -> np.ndarray:
    w = np.asarray(axis, dtype=float)
    ww = np.outer(w, w)
    cross = np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])
    return math.cos(theta) * (np.eye(3) - ww) + math.sin(theta) * cross + ww


@dataclass(frozen=True, eq=False)
class RigidMotion:
    """Rotation (``theta`` in 2D, ``(phi, psi, theta)`` in 3D) plus translation."""

    dims: int
    angles: tuple
    translation: np.ndarray = field(default=None)  # type: ignore[assignment]
    center: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        want = 1 if self.dims == 2 else 3
        ang = tuple(float(a) for a in np.atleast_1d(self.angles))
        if self.dims not in (2, 3) or len(ang) != want:
            raise ValueError("2D motions take one angle, 3D motions take (phi, psi, theta)")
        t = np.zeros(self.dims) if self.translation is None else np.array(self.translation, dtype=float)
        c = np.zeros(self.dims) if self.center is None else np.array(self.center, dtype=float)
        object.__setattr__(self, "angles", ang)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "center", c)

    @staticmethod
    def planar(theta: float, t: Sequence[float] = (0.0, 0.0), center: Sequence[float] = (0.0, 0.0)) -> "RigidMotion":
        return RigidMotion(2, (theta,), np.asarray(t), np.asarray(center))

    @staticmethod
    def spatial(phi: float, psi: float, theta: float, t: Sequence[float] = (0.0, 0.0, 0.0),
                center: Sequence[float] = (0.0, 0.0, 0.0)) -> "RigidMotion":
        return RigidMotion(3, (phi, psi, theta), np.asarray(t), np.asarray(center))

    @staticmethod
    def from_user(dims: int, angles, t_user, center) -> "RigidMotion":
        """Build from "rotate about ``center`` then shift by ``t_user``"."""
        probe = RigidMotion(dims, angles, None, center)
        R = probe.matrix()
        return RigidMotion(dims, angles, R.T @ np.asarray(t_user, dtype=float), center)

    @property
    def theta(self) -> float:
        return self.angles[-1]

    def matrix(self) -> np.ndarray:
        return rotation_matrix(self)

    def user_translation(self) -> np.ndarray:
        """Shift applied after rotating about the center."""
        return self.matrix() @ self.translation

    def canonical(self) -> tuple[np.ndarray, np.ndarray]:
        R = self.matrix()
        return R, R.T @ self.center - self.center + self.translation

    def apply(self, x: np.ndarray) -> np.ndarray:
        R, t = self.canonical()
        return (np.asarray(x) + t) @ R.T

    def inverse_pose(self) -> "Pose":
        R, t = self.canonical()
        return Pose(R.T, -R @ t)


@dataclass(frozen=True, eq=False)
class Pose:
    """Raw canonical transform ``x -> R (x + t)``."""

    R: np.ndarray
    t: np.ndarray

    def canonical(self) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.R, dtype=float), np.asarray(self.t, dtype=float)


def rotation_matrix(motion: RigidMotion) -> np.ndarray:
    if motion.dims == 2:
        return rot2(motion.angles[0])
    phi, psi, theta = motion.angles
    return axis_angle_matrix(axis_from_angles(phi, psi), theta)


def w_box(rotation: np.ndarray, d: np.ndarray) -> float | np.ndarray:
    """Overlap of the unit box with the box mapped by ``x -> R x + d``.

    Equals ``int s(R x + d) s(x) dx`` for the nearest-neighbour kernel ``s``.
    """
    R = np.asarray(rotation, dtype=float)
    dd = np.asarray(d, dtype=float)
    single = dd.ndim == 1
    dd = np.atleast_2d(dd)
    if R.shape[0] == 2:
        out = geometry.box_overlap_2d(R, dd)
    else:
        out = geometry.box_overlap_3d(R, dd)
    return float(out[0]) if single else out


def _lattice_map(f: DiscreteImage, g: DiscreteImage, pose: Posed):
    """Affine map from f-lattice coordinates u to g-lattice coordinates v = A u + q0."""
    R, t = pose.canonical()
    A = R * (f.period / g.period)
    q0 = (R @ (f.origin + t) - g.origin) / g.period
    return A, q0


def _check_pair(f: DiscreteImage, g: DiscreteImage):
    if f.dims != g.dims:
        raise ValueError("images must have the same dimension")


@dataclass
class ExactConfig:
    gl_nodes: int = 8
    # Box neighbourhood radius in pixels; None derives it from the map norm
    box_radius: float | None = None


def correlation_exact(f: DiscreteImage, g: DiscreteImage, kernel: Kernel, motion: Posed,
                      config: ExactConfig | None = None) -> TargetValue:
    """Exact integral of ``f'(x) g'(R(x + t))`` for bounded-support kernels.

    The images may have different periods (needed for low-to-high targets).
    """
    _check_pair(f, g)
    config = config or ExactConfig()
    if kernel.kind is KernelKind.SINC:
        raise NotImplementedError("exact sinc correlation is unsupported; use correlation_frequency")
    A, q0 = _lattice_map(f, g, motion)
    if kernel.kind is KernelKind.BOX:
        val = _exact_box(f, g, A, q0, config)
    elif f.dims == 2:
        val = _exact_triangular_2d(f, g, A, q0, config.gl_nodes)
    else:
        val = _exact_triangular_3d(f, g, A, q0, config.gl_nodes)
    return TargetValue(val * f.period ** f.dims, Method.EXACT_KERNEL)


def _exact_box(f, g, A, q0, config) -> float:
    d = f.dims
    nz = np.argwhere(f.samples != 0)
    if len(nz) == 0:
        return 0.0
    fv = f.samples[tuple(nz.T)]
    q = nz @ A.T + q0
    if config.box_radius is None:
        rad = 0.5 * (1.0 + np.max(np.sum(np.abs(A), axis=1)))
    else:
        rad = config.box_radius
    k = int(math.ceil(rad))
    offsets = np.array(list(np.ndindex(*([2 * k + 2] * d)))) - k
    base = np.floor(q).astype(np.int64)
    js = base[:, None, :] + offsets[None, :, :]
    diff = q[:, None, :] - js
    keep = np.max(np.abs(diff), axis=-1) <= rad + 1e-12
    gv = sample_value(g, js)
    keep &= gv != 0
    rows, cols = np.nonzero(keep)
    if len(rows) == 0:
        return 0.0
    overlap = w_box(A, diff[rows, cols]) if d == 2 else geometry.box_overlap_3d(A, diff[rows, cols])
    return float(np.sum(fv[rows] * gv[rows, cols] * np.atleast_1d(overlap)))


def _exact_triangular_2d(f, g, A, q0, nodes) -> float:
    """Overlay f's bilinear cells with the mapped cells of g and integrate exactly."""
    nf = np.array(f.extents)
    # cells [a, a+1]^2 touching a nonzero sample
    nzmask = f.samples != 0
    if not nzmask.any():
        return 0.0
    touched = np.zeros(nf + 1, dtype=bool)
    for dx in (0, 1):
        for dy in (0, 1):
            touched[dx:dx + nf[0], dy:dy + nf[1]] |= nzmask
    cells = np.argwhere(touched) - 1
    corners = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
    img = (cells[:, None, :] + corners[None]) @ A.T + q0
    vmin = np.floor(img.min(axis=1)).astype(np.int64)
    vmax = np.ceil(img.max(axis=1)).astype(np.int64) - 1
    span = vmax - vmin + 1
    kx, ky = int(span[:, 0].max()), int(span[:, 1].max())
    offs = np.array([(i, j) for i in range(kx) for j in range(ky)])
    bcells = vmin[:, None, :] + offs[None]
    ok = np.all(offs[None] < span[:, None, :], axis=-1)
    ng = np.array(g.extents)
    ok &= np.all((bcells >= -1) & (bcells <= ng - 1), axis=-1)
    rows, cols = np.nonzero(ok)
    if len(rows) == 0:
        return 0.0
    acell = cells[rows].astype(float)
    bcell = bcells[rows, cols].astype(float)
    Ainv = np.linalg.inv(A)
    poly = ((bcell[:, None, :] + corners[None]) - q0) @ Ainv.T
    count = np.full(len(rows), 4)
    poly, count = geometry.clip_axis_box(poly, count, acell, acell + 1.0)
    tris, owner = geometry.fan_triangles(poly, count)
    if len(tris) == 0:
        return 0.0
    pts, w = geometry.triangle_points(tris, nodes)
    fu = interpolate_lattice(f, Kernel.triangular(), pts)
    gv = interpolate_lattice(g, Kernel.triangular(), pts @ A.T + q0)
    return float(np.sum(w * fu * gv))


def _exact_triangular_3d(f, g, A, q0, nodes) -> float:
    """Tensor Gauss-Legendre over each trilinear cell of f (kinks of g' are not resolved)."""
    from numpy.polynomial.legendre import leggauss

    nf = np.array(f.extents)
    nzmask = f.samples != 0
    if not nzmask.any():
        return 0.0
    touched = np.zeros(nf + 1, dtype=bool)
    for c in np.ndindex(2, 2, 2):
        touched[c[0]:c[0] + nf[0], c[1]:c[1] + nf[1], c[2]:c[2] + nf[2]] |= nzmask
    cells = np.argwhere(touched) - 1
    x, w = leggauss(nodes)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    grid = np.stack(np.meshgrid(x, x, x, indexing="ij"), axis=-1).reshape(-1, 3)
    wts = np.einsum("i,j,k->ijk", w, w, w).ravel()
    total = 0.0
    for start in range(0, len(cells), 256):
        block = cells[start:start + 256]
        pts = block[:, None, :] + grid[None]
        fu = interpolate_lattice(f, Kernel.triangular(), pts)
        gv = interpolate_lattice(g, Kernel.triangular(), pts @ A.T + q0)
        total += float(np.sum(wts[None] * fu * gv))
    return total


def _discretized_sum(f: DiscreteImage, g: DiscreteImage, kernel: Kernel, motion: Posed) -> float:
    A, q0 = _lattice_map(f, g, motion)
    nz = np.argwhere(f.samples != 0)
    if len(nz) == 0:
        return 0.0
    fv = f.samples[tuple(nz.T)]
    q = nz @ A.T + q0
    if kernel.kind is KernelKind.SINC:
        # nearest-bin read from a 2x band-limited upsampling of g
        gu = upsample(g, 2)
        qu = (q * g.period + g.origin - gu.origin) / gu.period
        gv = interpolate_lattice(gu, Kernel.box(), np.floor(qu + 0.5))
    else:
        gv = interpolate_lattice(g, kernel, q)
    return float(np.sum(fv * gv)) * f.period ** f.dims


def correlation_discretized(f: DiscreteImage, g: DiscreteImage, kernel: Kernel, motion: Posed) -> TargetValue:
    """``T^d sum_i f_i g'(R(x_i + t))``: the integral discretized on f's lattice."""
    _check_pair(f, g)
    return TargetValue(_discretized_sum(f, g, kernel, motion), Method.DISCRETIZED)


def correlation_lowhigh(f_low: DiscreteImage, g: DiscreteImage, kernel: Kernel, motion: Posed, m: int) -> TargetValue:
    """Discretized target with only ``f`` at the coarse period ``m * g.period``."""
    _check_pair(f_low, g)
    if not math.isclose(f_low.period, m * g.period, rel_tol=1e-12):
        raise ValueError(f"f_low.period={f_low.period} is not {m} x g.period={g.period}")
    return TargetValue(_discretized_sum(f_low, g, kernel, motion), Method.LOW_HIGH_DISCRETIZED)


class FrequencyEvaluator:
    """Evaluates ``int conj(F(z)) G(R z) exp(2 pi i t.z) dz`` for many motions.

    The integral is a trapezoid sum over F's bins on the closed Nyquist box
    (edge bins are split between both faces), so the sample set is symmetric
    and the imaginary part cancels. ``G(R z)`` is read from a cubic spline of
    the real and imaginary parts, zero outside G's Nyquist box.
    """

    def __init__(self, F: Spectrum, G: Spectrum):
        if F.dims != G.dims:
            raise ValueError("spectra must have the same dimension")
        if not math.isclose(F.period, G.period, rel_tol=1e-12):
            raise ValueError("spectra must come from images with the same period")
        self.F, self.G = F, G
        cf, zf, wf = _symmetric_grid(F)
        keep = (cf != 0) & (wf > 0)
        self.cf = cf[keep]
        self.z = zf[keep]
        self.w = wf[keep] * F.cell_volume
        cg, _, _ = _symmetric_grid(G)
        self.g_re = ndimage.spline_filter(np.real(cg), order=3, mode="mirror")
        self.g_im = ndimage.spline_filter(np.imag(cg), order=3, mode="mirror")
        self.g_half = np.array([(n - 1) / 2 if n % 2 else n / 2 for n in G.extents])
        self.g_step = G.freq_step
        self.g_extent = np.array(cg.shape) - 1

    def restricted(self, cutoff: float) -> "FrequencyEvaluator":
        """Same evaluator with F's bins limited to the closed ball of radius ``cutoff``.

        This is the target of the low-passed ``f`` against the unchanged ``g``.
        """
        out = object.__new__(FrequencyEvaluator)
        out.__dict__.update(self.__dict__)
        keep = np.linalg.norm(self.z, axis=-1) <= cutoff
        out.cf, out.z, out.w = self.cf[keep], self.z[keep], self.w[keep]
        return out

    def sample_g(self, zr: np.ndarray) -> np.ndarray:
        idx = zr / self.g_step + self.g_half
        inside = np.all((idx >= 0) & (idx <= self.g_extent), axis=-1)
        out = np.zeros(len(zr), dtype=complex)
        if inside.any():
            coords = idx[inside].T
            re = ndimage.map_coordinates(self.g_re, coords, order=3, mode="mirror", prefilter=False)
            im = ndimage.map_coordinates(self.g_im, coords, order=3, mode="mirror", prefilter=False)
            out[inside] = re + 1j * im
        return out

    def __call__(self, motion: Posed) -> TargetValue:
        R, t = motion.canonical()
        shift = t + self.F.ref - R.T @ self.G.ref
        gz = self.sample_g(self.z @ R.T)
        terms = self.w * np.conj(self.cf) * gz * np.exp(2j * np.pi * (self.z @ shift))
        total = np.sum(terms)
        scale = float(np.sum(np.abs(terms))) + 1e-300
        return TargetValue(float(total.real), Method.FREQUENCY, abs(float(total.imag)) / scale)


def _symmetric_grid(spec: Spectrum):
    """Coefficients, frequencies and trapezoid weights on the closed symmetric bin set."""
    idx_axes, w_axes, f_axes = [], [], []
    for n, step in zip(spec.extents, spec.freq_step):
        if n % 2:
            k = np.arange(-(n - 1) // 2, (n - 1) // 2 + 1)
            w = np.ones(len(k))
        else:
            k = np.arange(-n // 2, n // 2 + 1)
            w = np.ones(len(k))
            w[0] = w[-1] = 0.5
        idx_axes.append(np.mod(k, n))
        w_axes.append(w)
        f_axes.append(k * step)
    coeffs = spec.coeffs[np.ix_(*idx_axes)]
    z = np.stack(np.meshgrid(*f_axes, indexing="ij"), axis=-1)
    w = w_axes[0]
    for extra in w_axes[1:]:
        w = np.multiply.outer(w, extra)
    return coeffs, z, w


def correlation_frequency(F: Spectrum, G: Spectrum, motion: Posed) -> TargetValue:
    return FrequencyEvaluator(F, G)(motion)
