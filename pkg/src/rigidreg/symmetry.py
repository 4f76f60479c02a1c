"""Reflective symmetry: correlation of an image with its mirror image.

A mirror plane (a line in 2D) is given by a unit normal ``u`` and a signed
distance ``offset`` from a reference point ``center``. The mirror image is
``x -> c + (I - 2 u u^T)(x - c - 2 offset u)``, which has the same form as a
rigid motion with an improper rotation, so every target evaluator and
bound of the registration problem applies with ``g = f``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .image_core import DiscreteImage, Kernel
from .search import (ParamBox, ResolutionPyramid, SearchConfig, SearchResult, SymmetrySpace,
                     branch_and_bound, build_pyramid, reflection_pose, unit_normal)
from .spectral import Spectrum
from .target import (FrequencyEvaluator, Method, Pose, TargetValue, correlation_discretized,
                     correlation_exact)


@dataclass(frozen=True)
class ReflectionParams:
    """Normal angle(s) and plane offset; 2D uses ``phi`` only, 3D uses ``(phi, psi)``."""

    dims: int
    phi: float
    offset: float
    psi: float = 0.0

    def __post_init__(self):
        if self.dims not in (2, 3):
            raise ValueError("dims must be 2 or 3")
        if self.dims == 2 and self.psi != 0.0:
            raise ValueError("psi is only meaningful in 3D")

    def angles(self) -> tuple:
        return (self.phi,) if self.dims == 2 else (self.phi, self.psi)

    def normal(self) -> np.ndarray:
        return unit_normal(self.angles())

    def matrix(self) -> np.ndarray:
        u = self.normal()
        return np.eye(self.dims) - 2.0 * np.outer(u, u)

    def vector(self) -> np.ndarray:
        return np.array(self.angles() + (self.offset,))

    def canonical(self) -> "ReflectionParams":
        """Same plane with the normal in the search hemisphere."""
        if self.dims == 2:
            phi, off = self.phi % (2 * math.pi), self.offset
            # the loop also catches values that round up to pi after the subtraction
            while phi >= math.pi:
                phi, off = phi - math.pi, -off
            return ReflectionParams(2, max(phi, 0.0), off)
        u = self.normal()
        off = self.offset
        if u[2] < 0:
            u, off = -u, -off
        psi = math.asin(min(1.0, u[2]))
        phi = math.atan2(u[1], u[0])
        if phi >= math.pi:
            phi -= 2 * math.pi
        return ReflectionParams(3, phi, off, psi)

    @staticmethod
    def from_vector(dims: int, v) -> "ReflectionParams":
        v = [float(x) for x in v]
        if dims == 2:
            return ReflectionParams(2, v[0], v[1])
        return ReflectionParams(3, v[0], v[2], v[1])


def reflect_point(params: ReflectionParams, x, center=None) -> np.ndarray:
    """Mirror ``x`` (..., dims) across the plane ``u.(x - center) = offset``."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != params.dims:
        raise ValueError("point dimension does not match the plane")
    c = np.zeros(params.dims) if center is None else np.asarray(center, dtype=float)
    u = params.normal()
    y = x - c - 2.0 * params.offset * u
    return c + y - 2.0 * np.outer(y @ u, u).reshape(y.shape) if y.ndim > 1 else c + y - 2.0 * (y @ u) * u


def pose_for(params: ReflectionParams, center) -> Pose:
    return reflection_pose(params.angles(), params.offset, center)


def spectrum_center(spec: Spectrum) -> np.ndarray:
    """World position of the middle of the image a spectrum was computed from."""
    T = spec.period
    origin = spec.ref - T * (np.array(spec.extents) // 2)
    if spec.source_offset is None:
        return origin + T * (np.array(spec.extents) - 1) / 2.0
    return origin + T * (np.asarray(spec.source_offset) + (np.array(spec.source_extents) - 1) / 2.0)


def symmetry_target(f, params: ReflectionParams, method: Method = Method.FREQUENCY,
                    kernel: Kernel | None = None, center=None, pad_factor: int = 4) -> TargetValue:
    """``int f(x) f(mirror(x)) dx`` with the mirror taken about ``center`` (default: image middle)."""
    if isinstance(f, Spectrum):
        if method is not Method.FREQUENCY:
            raise ValueError("a spectrum input only supports the frequency method")
        c = spectrum_center(f) if center is None else center
        return FrequencyEvaluator(f, f)(pose_for(params, c))
    if f.dims != params.dims:
        raise ValueError("image and plane dimensions differ")
    c = f.center() if center is None else center
    pose = pose_for(params, c)
    if method is Method.FREQUENCY:
        from .spectral import forward_dft
        F = forward_dft(f, pad_factor)
        return FrequencyEvaluator(F, F)(pose)
    kernel = kernel or Kernel.triangular()
    if method is Method.EXACT_KERNEL:
        return correlation_exact(f, f, kernel, pose)
    return correlation_discretized(f, f, kernel, pose)


@dataclass
class SymmetryConfig:
    search: SearchConfig = field(default_factory=SearchConfig)
    offset_range: tuple | None = None     # default: half the image diagonal either side


@dataclass
class SymmetryResult:
    params: ReflectionParams
    q_star: float
    q_up: float
    search: SearchResult
    pyramid: ResolutionPyramid


def symmetry_box(f: DiscreteImage, offset_range=None) -> ParamBox:
    if offset_range is None:
        half = 0.5 * f.period * math.sqrt(sum((n - 1) ** 2 for n in f.extents))
        offset_range = (-half, half)
    if f.dims == 2:
        return ParamBox(("phi", "offset"), [0.0, offset_range[0]], [math.pi, offset_range[1]])
    return ParamBox(("phi", "psi", "offset"), [-math.pi, 0.0, offset_range[0]],
                    [math.pi, math.pi / 2, offset_range[1]])


def detect_symmetry(f: DiscreteImage, config: SymmetryConfig | None = None, progress=None) -> SymmetryResult:
    config = config or SymmetryConfig()
    space = SymmetrySpace(f.dims, f.center())
    pyramid = build_pyramid(f, f, config.search, space)
    res = branch_and_bound(pyramid, symmetry_box(f, config.offset_range), config.search, progress)
    params = ReflectionParams.from_vector(f.dims, res.params)
    return SymmetryResult(params, res.q_star, res.q_up, res, pyramid)
