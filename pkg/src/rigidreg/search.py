"""Multiresolution grid search and Lipschitz branch and bound over rigid motions.

A :class:`ResolutionPyramid` bundles, for each decimation level, a cheap
approximate target ``Q^l``, the inter-resolution bound ``B_res^l`` on
``|Q - Q^l|`` and the band integrals from which Lipschitz constants of
``Q^l`` over any parameter box follow. The parameter space itself is a
:class:`SearchSpace`: it turns parameter vectors into poses and per-level
constants into per-parameter bounds for a box.
"""
from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import bounds as bnd
from .image_core import DiscreteImage, Kernel, l2_norm
from .lipschitz import (BandIntegrals, LipschitzSet, default_band_edges, jacobian_spectrum,
                        level_cutoff, max_abs_cos, max_abs_sin_half, registration_set,
                        symmetry_constants)
from .spectral import decimate, forward_dft, upsample
from .target import FrequencyEvaluator, Pose, Posed, RigidMotion, correlation_lowhigh


class BudgetExceeded(RuntimeError):
    pass


# --------------------------------------------------------------------------- boxes

@dataclass(frozen=True, eq=False)
class ParamBox:
    names: tuple
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.shape != (len(self.names),) or hi.shape != lo.shape:
            raise ValueError("one interval per parameter is required")
        if np.any(hi < lo):
            raise ValueError("interval upper ends must not be below lower ends")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @staticmethod
    def from_ranges(ranges: dict) -> "ParamBox":
        names = tuple(ranges)
        return ParamBox(names, np.array([ranges[n][0] for n in names]), np.array([ranges[n][1] for n in names]))

    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def half_widths(self) -> np.ndarray:
        return 0.5 * (self.hi - self.lo)

    def ranges(self) -> dict:
        return {n: (float(a), float(b)) for n, a, b in zip(self.names, self.lo, self.hi)}

    def contains(self, params, tol: float = 0.0) -> bool:
        p = np.asarray(params)
        return bool(np.all(p >= self.lo - tol) and np.all(p <= self.hi + tol))

    def bisect(self, axes: Sequence[int]) -> list["ParamBox"]:
        """Children obtained by halving every axis in ``axes``; they tile the box."""
        mid = self.center()
        children = []
        for choice in itertools.product((0, 1), repeat=len(axes)):
            lo, hi = self.lo.copy(), self.hi.copy()
            for ax, side in zip(axes, choice):
                if side == 0:
                    hi[ax] = mid[ax]
                else:
                    lo[ax] = mid[ax]
            children.append(ParamBox(self.names, lo, hi))
        return children


def split_box(box: ParamBox, contributions: np.ndarray, margin: float) -> list[ParamBox]:
    """Bisect the parameters with the largest Lipschitz contributions.

    Parameters are taken in descending order of contribution and split until
    the contributions of the parameters left unsplit sum to less than
    ``margin``. At least one parameter of positive width is always split.
    """
    contributions = np.asarray(contributions, dtype=float)
    widths = box.hi - box.lo
    order = [int(k) for k in np.argsort(-contributions, kind="stable") if widths[k] > 0]
    if not order:
        raise ValueError("cannot split a box of zero width")
    axes = []
    for k in order:
        axes.append(k)
        rest = sum(contributions[j] for j in order if j not in axes)
        if rest < margin:
            break
    return box.bisect(sorted(axes))


# --------------------------------------------------------------------------- spaces

class SearchSpace:
    """Parameterisation of the searched transforms."""

    names: tuple = ()
    dims: int = 2

    def pose(self, params) -> Posed:
        raise NotImplementedError

    def contributions(self, bands: BandIntegrals, lip: LipschitzSet, box: ParamBox):
        """Per-parameter bounds (used for splitting) and the total Lipschitz bound."""
        raise NotImplementedError


class RigidSpace2D(SearchSpace):
    """``x -> c + R(theta) (x - c + t)``; with ``fixed_translation`` only theta is searched."""

    dims = 2

    def __init__(self, center, fixed_translation=None):
        self.center = np.asarray(center, dtype=float)
        self.fixed = None if fixed_translation is None else np.asarray(fixed_translation, dtype=float)
        self.names = ("theta",) if self.fixed is not None else ("theta", "tx", "ty")

    def pose(self, params) -> RigidMotion:
        p = np.asarray(params, dtype=float)
        t = self.fixed if self.fixed is not None else p[1:3]
        return RigidMotion.planar(p[0], t, self.center)

    def contributions(self, bands, lip, box):
        h = box.half_widths()
        per = np.empty(len(h))
        per[0] = lip.rotation * h[0]
        total = per[0]
        if self.fixed is None:
            per[1:] = lip.translation * h[1:]
            total += lip.translation * float(np.linalg.norm(h[1:]))
        return per, float(total)


class RigidSpace3D(SearchSpace):
    """Axis-angle rotation about ``center``, with or without a translation search."""

    dims = 3

    def __init__(self, center, fixed_translation=None):
        self.center = np.asarray(center, dtype=float)
        self.fixed = None if fixed_translation is None else np.asarray(fixed_translation, dtype=float)
        rot = ("phi", "psi", "theta")
        self.names = rot if self.fixed is not None else rot + ("tx", "ty", "tz")

    def pose(self, params) -> RigidMotion:
        p = np.asarray(params, dtype=float)
        t = self.fixed if self.fixed is not None else p[3:6]
        return RigidMotion.spatial(p[0], p[1], p[2], t, self.center)

    def contributions(self, bands, lip, box):
        h = box.half_widths()
        r = box.ranges()
        s = max_abs_sin_half(*r["theta"])
        c = max_abs_cos(*r["psi"])
        base = lip.rotation
        per = np.empty(len(h))
        per[0] = 2 * s * c * base * h[0]
        per[1] = 2 * s * base * h[1]
        per[2] = base * h[2]
        total = float(per[:3].sum())
        if self.fixed is None:
            per[3:] = lip.translation * h[3:]
            total += lip.translation * float(np.linalg.norm(h[3:]))
        return per, total


def unit_normal(angles) -> np.ndarray:
    a = np.atleast_1d(np.asarray(angles, dtype=float))
    if len(a) == 1:
        return np.array([math.cos(a[0]), math.sin(a[0])])
    phi, psi = a
    return np.array([math.cos(phi) * math.cos(psi), math.sin(phi) * math.cos(psi), math.sin(psi)])


def reflection_pose(normal_angles, offset: float, center) -> Pose:
    """Mirror across the plane ``u.(x - center) = offset`` in canonical ``R (x + t)`` form."""
    u = unit_normal(normal_angles)
    c = np.asarray(center, dtype=float)
    R = np.eye(len(u)) - 2.0 * np.outer(u, u)
    return Pose(R, R @ c - c - 2.0 * offset * u)


class SymmetrySpace(SearchSpace):
    """Mirror planes: 2D ``(phi, offset)``, 3D ``(phi, psi, offset)``."""

    def __init__(self, dims: int, center):
        self.dims = dims
        self.center = np.asarray(center, dtype=float)
        self.names = ("phi", "offset") if dims == 2 else ("phi", "psi", "offset")

    def pose(self, params) -> Pose:
        p = np.asarray(params, dtype=float)
        return reflection_pose(p[:-1], p[-1], self.center)

    def contributions(self, bands, lip, box):
        consts = symmetry_constants(bands, box, self.dims)
        h = box.half_widths()
        per = np.array([consts[n] * hk for n, hk in zip(self.names, h)])
        return per, float(per.sum())


# --------------------------------------------------------------------------- pyramid

@dataclass
class SearchConfig:
    epsilon: float | None = None          # absolute; None means epsilon_fraction * |f| |g|
    epsilon_fraction: float = 0.01
    energy_fraction: float = 0.05         # coarsest level keeps |f^h| |g^h| below this share
    min_coarse_extent: int = 8
    max_level: int | None = None          # 0 forces a single-resolution run
    target: str = "lowhigh"               # "lowhigh" (discretized, upsampled g) or "frequency"
    alpha: int = 2
    upsample: int = 2
    pad_factor: int = 2
    frequency_pad_factor: int = 4
    low_res_margin: int = 2
    safety_factor: float = 1.02
    calibration_probes: int = 64          # poses used to measure discretization slack (0 disables)
    slack_factor: float = 2.0
    seed: int = 0
    n_bands: int = 32
    node_budget: int = 10_000_000
    finish: str = "epsilon"               # or "small": stop once all boxes are below min_widths
    min_widths: tuple | None = None
    initial: tuple | None = None          # optional starting parameters

    def __post_init__(self):
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.epsilon_fraction > 0:
            raise ValueError("epsilon_fraction must be positive")
        if self.target not in ("lowhigh", "frequency"):
            raise ValueError(f"unknown target mode {self.target!r}")
        if self.finish not in ("epsilon", "small"):
            raise ValueError(f"unknown finish condition {self.finish!r}")


class CountingTarget:
    def __init__(self, fn: Callable[[Posed], float]):
        self.fn = fn
        self.calls = 0

    def __call__(self, pose: Posed) -> float:
        self.calls += 1
        return self.fn(pose)


@dataclass
class Level:
    index: int
    m: int
    bound: float              # analytic inter-resolution bound (after the safety factor)
    target: CountingTarget
    bands: BandIntegrals
    lip: LipschitzSet
    image: DiscreteImage | None = None
    slack: float = 0.0        # measured excess of |Q - Q^l| over ``bound``
    slack_factor: float = 0.0

    @property
    def b_res(self) -> float:
        return self.bound + self.slack_factor * self.slack


@dataclass
class ResolutionPyramid:
    levels: list
    space: SearchSpace
    norm_product: float
    config: SearchConfig

    @property
    def l_max(self) -> int:
        return len(self.levels) - 1

    @property
    def b_res(self) -> np.ndarray:
        return np.array([lv.b_res for lv in self.levels])

    def full(self, pose: Posed) -> float:
        return self.levels[0].target(pose)

    def epsilon(self) -> float:
        c = self.config
        return c.epsilon if c.epsilon is not None else c.epsilon_fraction * self.norm_product

    def full_evaluations(self) -> int:
        return self.levels[0].target.calls

    def reset_counters(self):
        for lv in self.levels:
            lv.target.calls = 0

    def calibrate(self, poses: Sequence[Posed]):
        """Measure how far ``|Q - Q^l|`` exceeds the analytic bound on ``poses``.

        Discretized targets are not covered by the bounds exactly; the excess
        (times ``slack_factor``) is added to B_res as an empirical guard.
        Evaluation counters are left untouched.
        """
        if self.config.target != "lowhigh" or self.l_max == 0 or not poses:
            return
        calls = [lv.target.calls for lv in self.levels]
        q0 = np.array([self.levels[0].target(p) for p in poses])
        for lv in self.levels[1:]:
            ql = np.array([lv.target(p) for p in poses])
            lv.slack = max(0.0, float(np.max(np.abs(ql - q0))) - lv.bound)
            lv.slack_factor = self.config.slack_factor
        for a, b in zip(self.levels, self.levels[1:]):
            b.slack = max(b.slack, a.slack)
        for lv, c in zip(self.levels, calls):
            lv.target.calls = c


def max_decimation_level(F, G, extents, norm_product: float, config: SearchConfig) -> int:
    level = 0
    while True:
        m = 2 ** (level + 1)
        if min(extents) / m < config.min_coarse_extent:
            break
        if bnd.bound_sinc(F, G, m).value >= config.energy_fraction * norm_product:
            break
        level += 1
    if config.max_level is not None:
        level = min(level, config.max_level)
    return level


def build_pyramid(f: DiscreteImage, g: DiscreteImage, config: SearchConfig | None = None,
                  space: SearchSpace | None = None) -> ResolutionPyramid:
    config = config or SearchConfig()
    if f.dims != g.dims:
        raise ValueError("images must have the same dimension")
    if not math.isclose(f.period, g.period, rel_tol=1e-12):
        raise ValueError("images must share the sampling period")
    nf, ng = l2_norm(f), l2_norm(g)
    if nf == 0 or ng == 0:
        raise ValueError("cannot register an all-zero image")
    if space is None:
        space = RigidSpace2D(f.center()) if f.dims == 2 else RigidSpace3D(f.center(), np.zeros(3))
    center = getattr(space, "center", f.center())
    pad = config.pad_factor
    F = forward_dft(f, pad)
    G = forward_dft(g, pad)
    J = jacobian_spectrum(g, pad, center)
    edges = default_band_edges(f.dims, f.period, config.n_bands)
    norm_product = nf * ng
    l_max = max_decimation_level(F, G, f.extents, norm_product, config)

    if config.target == "lowhigh":
        gu = upsample(g, config.upsample, pad)
        kernel = Kernel.from_alpha(config.alpha)
    else:
        evaluator = FrequencyEvaluator(forward_dft(f, config.frequency_pad_factor),
                                       forward_dft(g, config.frequency_pad_factor))
    levels = []
    for l in range(l_max + 1):
        m = 2 ** l
        if config.target == "lowhigh":
            f_l = f if m == 1 else decimate(f, m, pad, keep_padding=False, margin=config.low_res_margin)
            ratio = m * config.upsample

            def fn(pose, f_l=f_l, ratio=ratio):
                return correlation_lowhigh(f_l, gu, kernel, pose, ratio).value
            b = 0.0 if m == 1 else config.safety_factor * bnd.bound_upsampled(F, G, m, config.upsample, config.alpha).value
        else:
            f_l = None
            ev = evaluator if m == 1 else evaluator.restricted(level_cutoff(m, f.period))

            def fn(pose, ev=ev):
                return ev(pose).value
            b = 0.0 if m == 1 else bnd.bound_sinc(F, G, m).value
        bands = BandIntegrals(F, G, J, edges, level_cutoff(m, f.period))
        lip = registration_set(F, G, J, edges, l, m) if not isinstance(space, SymmetrySpace) else \
            LipschitzSet(l, m, f.dims, 0.0, 0.0, edges)
        levels.append(Level(l, m, b, CountingTarget(fn), bands, lip, f_l))
    # B_res must not decrease with the level
    for a, b2 in zip(levels, levels[1:]):
        b2.bound = max(b2.bound, a.bound)
    return ResolutionPyramid(levels, space, norm_product, config)


# --------------------------------------------------------------------------- algorithm 1

@dataclass
class LevelStats:
    level: int
    m: int
    evaluated: int
    ruled_out: int
    ruled_out_fraction: float


@dataclass
class GridResult:
    index: int
    pose: Posed
    q_star: float
    stats: list
    full_evaluations: int


def grid_search_multires(pyramid: ResolutionPyramid, grid: Sequence[Posed],
                         config: SearchConfig | None = None, initial: Posed | None = None) -> GridResult:
    """Coarse-to-fine maximisation over a fixed list of poses with bound-based pruning."""
    if len(grid) == 0:
        raise ValueError("grid must not be empty")
    n_probe = min(len(grid), pyramid.config.calibration_probes)
    if n_probe:
        pyramid.calibrate([grid[int(i)] for i in np.linspace(0, len(grid) - 1, n_probe)])
    q_star = -math.inf if initial is None else pyramid.full(initial)
    best = -1
    alive = np.arange(len(grid))
    stats = []
    for lv in reversed(pyramid.levels):
        q = np.array([lv.target(grid[i]) for i in alive])
        k = int(np.argmax(q))
        q_full = q[k] if lv.index == 0 else pyramid.full(grid[alive[k]])
        if best < 0 or q_full > q_star:
            q_star, best = q_full, int(alive[k])
        # the pose holding q_star stays even if a coarse value undershoots the bound
        keep = (q >= q_star - lv.b_res) | (alive == best)
        ruled = int(np.count_nonzero(~keep))
        stats.append(LevelStats(lv.index, lv.m, len(alive), ruled, ruled / len(grid)))
        alive = alive[keep]
        if lv.index == 0:
            # survivors all reach q_star; the first of them is the grid argmax
            q_alive = q[keep]
            best = int(alive[int(np.argmax(q_alive))])
            q_star = float(np.max(q_alive))
    return GridResult(best, grid[best], float(q_star), stats, pyramid.full_evaluations())


# --------------------------------------------------------------------------- algorithm 2

@dataclass
class BoxRecord:
    """Bounds computed for one box: the ledger used by the reject/split decision."""

    box: ParamBox
    b_lip: np.ndarray
    b_total: np.ndarray
    l_min: int
    contributions: np.ndarray


def evaluate_box_bounds(box: ParamBox, pyramid: ResolutionPyramid) -> BoxRecord:
    per_level, totals = [], []
    for lv in pyramid.levels:
        per, tot = pyramid.space.contributions(lv.bands, lv.lip, box)
        per_level.append(per)
        totals.append(tot)
    b_lip = np.array(totals)
    b_total = pyramid.b_res + b_lip
    l_min = int(np.argmin(b_total))
    return BoxRecord(box, b_lip, b_total, l_min, per_level[l_min])


def total_bound(box: ParamBox, pyramid: ResolutionPyramid, level: int) -> float:
    return float(evaluate_box_bounds(box, pyramid).b_total[level])


@dataclass
class SearchResult:
    params: np.ndarray
    pose: Posed
    q_star: float
    q_up: float
    complete: bool
    boxes_processed: int
    rejected_per_level: list
    evaluations_per_level: list
    full_evaluations: int
    iterations: int
    history: list = field(default_factory=list)
    q_search: float = math.nan   # Q* as tracked by the search (may be a low-resolution proxy)


_DELIMITER = object()


def branch_and_bound(pyramid: ResolutionPyramid, box0: ParamBox, config: SearchConfig | None = None,
                     progress: Callable[[dict], None] | None = None) -> SearchResult:
    """Breadth-first multiresolution Lipschitz branch and bound.

    Each queue level ends with a delimiter; at every delimiter the best
    low-resolution candidate is re-evaluated at full resolution. The search
    stops when the largest upper bound among queued boxes is within epsilon
    of the best value found.
    """
    config = config or pyramid.config
    eps = pyramid.epsilon()
    space = pyramid.space
    levels = pyramid.levels
    n_levels = len(levels)
    if config.calibration_probes:
        rng = np.random.default_rng(config.seed)
        probes = rng.uniform(box0.lo, box0.hi, size=(config.calibration_probes, len(box0.names)))
        pyramid.calibrate([space.pose(p) for p in probes])
    b_res = pyramid.b_res
    calls_before = [lv.target.calls for lv in levels]

    q_star, best = -math.inf, box0.center()
    full_cache: dict = {}
    if config.initial is not None:
        best = np.asarray(config.initial, dtype=float)
        q_star = pyramid.full(space.pose(best))
        full_cache[tuple(best)] = q_star
    ql_star, ql_params = -math.inf, None
    checked_params = None

    queue: deque = deque([(box0, math.inf), _DELIMITER])
    rejected = [0] * n_levels
    processed = 0
    iterations = 0
    history = []
    complete = True
    q_up = math.inf
    min_widths = None if config.min_widths is None else np.asarray(config.min_widths, dtype=float)

    while queue:
        item = queue.popleft()
        if item is _DELIMITER:
            iterations += 1
            if ql_params is not None and (checked_params is None or not np.array_equal(ql_params, checked_params)):
                q = pyramid.full(space.pose(ql_params))
                full_cache[tuple(ql_params)] = q
                checked_params = ql_params
                if q > q_star:
                    q_star, best = q, ql_params
            pending = [ub for it, ub in ((x if x is not _DELIMITER else (None, None)) for x in queue) if it is not None]
            q_up = max(pending) if pending else q_star
            info = {"iteration": iterations, "boxes_processed": processed, "queued": len(pending),
                    "rejected_per_level": list(rejected), "q_star": q_star, "q_up": q_up}
            history.append(info)
            if progress is not None:
                progress(info)
            if not pending or q_up - q_star < eps:
                break
            if config.finish == "small" and min_widths is not None and all(
                    np.all(x[0].hi - x[0].lo <= min_widths) for x in queue if x is not _DELIMITER):
                break
            queue.append(_DELIMITER)
            continue

        box, _parent_ub = item
        if processed >= config.node_budget:
            complete = False
            queue.appendleft(item)
            pending = [x[1] for x in queue if x is not _DELIMITER]
            q_up = max(pending) if pending else q_star
            break
        processed += 1
        rec = evaluate_box_bounds(box, pyramid)
        center = box.center()
        pose = space.pose(center)
        upper = math.inf
        q_lmin = None
        rejected_here = False
        for l in range(n_levels - 1, rec.l_min - 1, -1):
            q = levels[l].target(pose)
            ub = q + rec.b_total[l]
            upper = min(upper, ub)
            if l == rec.l_min:
                q_lmin = q
            if ub <= q_star:
                rejected[l] += 1
                rejected_here = True
                break
        if rejected_here:
            continue
        cand = q_lmin - b_res[rec.l_min]
        if cand > ql_star:
            ql_star, ql_params = cand, center
        if ql_star > q_star:
            q_star, best = ql_star, ql_params
        if np.any(box.hi > box.lo):
            for child in split_box(box, rec.contributions, q_star - b_res[rec.l_min]):
                queue.append((child, upper))

    # Q* may hold a low-resolution lower-bound proxy; report the true value at the result
    best = np.asarray(best, dtype=float)
    q_proxy = q_star
    if full_cache.get(tuple(best)) is None:
        full_cache[tuple(best)] = pyramid.full(space.pose(best))
    q_star = full_cache[tuple(best)]
    evals = [lv.target.calls - c0 for lv, c0 in zip(levels, calls_before)]
    return SearchResult(best, space.pose(best), float(q_star), float(q_up), complete,
                        processed, rejected, evals, evals[0], iterations, history, float(q_proxy))


def rotation_grid_2d(n: int, center, translation=(0.0, 0.0)) -> list:
    """``n`` equally spaced rotations over [-pi, pi) about ``center``."""
    return [RigidMotion.planar(-math.pi + 2 * math.pi * k / n, translation, center) for k in range(n)]
