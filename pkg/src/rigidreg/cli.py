"""Command-line driver: image I/O, flat config files and JSON/CSV reports.

Exit codes: 0 success, 2 unreadable or malformed input, 3 invalid
arguments or mismatched images, 4 search stopped by the node budget.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from . import bounds as bnd
from .image_core import DiscreteImage, Kernel, interpolate, l2_norm
from .search import (ParamBox, RigidSpace2D, RigidSpace3D, SearchConfig, SearchResult,
                     branch_and_bound, build_pyramid)
from .spectral import decimate, forward_dft, upsample
from .symmetry import SymmetryConfig, detect_symmetry
from .target import (ExactConfig, FrequencyEvaluator, RigidMotion, correlation_discretized,
                     correlation_exact, correlation_lowhigh)

SCHEMA = "rigidreg-report/1"
EXIT_OK, EXIT_IO, EXIT_INVALID, EXIT_INCOMPLETE = 0, 2, 3, 4


class ImageFormatError(ValueError):
    """Malformed header or truncated payload."""


class ValidationError(ValueError):
    pass


# --------------------------------------------------------------------------- image I/O

def _header_tokens(data: bytes, count: int) -> tuple[list[str], int]:
    """Whitespace separated header fields (``#`` comments allowed) and the payload offset."""
    tokens, pos, n = [], 0, len(data)
    while len(tokens) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageFormatError("header ends early")
        tokens.append(data[start:pos].decode("ascii", errors="replace"))
    if pos >= n:
        raise ImageFormatError("missing payload")
    return tokens, pos + 1      # exactly one whitespace byte separates header and raster


def _netpbm_ints(tokens: list[str]) -> list[int]:
    try:
        vals = [int(t) for t in tokens[1:]]
    except ValueError as exc:
        raise ImageFormatError(f"non-integer header field: {exc}") from None
    if min(vals) <= 0 or vals[-1] > 65535:
        raise ImageFormatError("width, height and maxval must be positive (maxval <= 65535)")
    return vals


def _netpbm_raster(data: bytes, offset: int, count: int, maxval: int) -> np.ndarray:
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = count * dtype.itemsize
    if len(data) - offset < need:
        raise ImageFormatError("truncated raster")
    return np.frombuffer(data, dtype=dtype, count=count, offset=offset).astype(float) / maxval


def read_pgm(path) -> DiscreteImage:
    data = Path(path).read_bytes()
    if data[:2] != b"P5":
        raise ImageFormatError("not a binary PGM (P5) file")
    tokens, off = _header_tokens(data, 4)
    w, h, maxval = _netpbm_ints(tokens)
    raster = _netpbm_raster(data, off, w * h, maxval).reshape(h, w)
    return DiscreteImage(raster.T)       # rows are y, so transpose to (x, y)


def read_ppm(path) -> DiscreteImage:
    """Binary PPM (P6) converted to luminance."""
    data = Path(path).read_bytes()
    if data[:2] != b"P6":
        raise ImageFormatError("not a binary PPM (P6) file")
    tokens, off = _header_tokens(data, 4)
    w, h, maxval = _netpbm_ints(tokens)
    rgb = _netpbm_raster(data, off, 3 * w * h, maxval).reshape(h, w, 3)
    lum = rgb @ np.array([0.299, 0.587, 0.114])
    return DiscreteImage(lum.T)


def write_pgm(path, image: DiscreteImage, maxval: int = 255):
    if image.dims != 2:
        raise ValidationError("PGM holds 2D images only")
    if not 0 < maxval <= 65535:
        raise ValidationError("maxval must be in 1..65535")
    v = np.rint(np.clip(image.samples, 0.0, 1.0) * maxval).T
    dtype = ">u2" if maxval > 255 else "u1"
    h, w = v.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n{maxval}\n".encode() + v.astype(dtype).tobytes())


_RAW_TYPES = {"u8": (np.dtype("<u1"), 255.0), "u16": (np.dtype("<u2"), 65535.0), "f32": (np.dtype("<f4"), 1.0)}


def read_rawvol(path) -> DiscreteImage:
    """``RAWVOL nx ny nz dtype T`` line, then little-endian samples with x fastest.

    Integer types are scaled to [0, 1]; f32 samples are kept as stored.
    """
    data = Path(path).read_bytes()
    nl = data.find(b"\n")
    if nl < 0:
        raise ImageFormatError("RAWVOL header has no newline")
    parts = data[:nl].decode("ascii", errors="replace").split()
    if len(parts) != 6 or parts[0] != "RAWVOL":
        raise ImageFormatError("expected 'RAWVOL nx ny nz dtype T'")
    try:
        nx, ny, nz = (int(p) for p in parts[1:4])
        period = float(parts[5])
    except ValueError:
        raise ImageFormatError("bad RAWVOL extents or period") from None
    if parts[4] not in _RAW_TYPES:
        raise ImageFormatError(f"unknown RAWVOL dtype {parts[4]!r}")
    if min(nx, ny, nz) <= 0 or not (math.isfinite(period) and period > 0):
        raise ImageFormatError("RAWVOL extents and period must be positive")
    dtype, scale = _RAW_TYPES[parts[4]]
    count = nx * ny * nz
    if len(data) - nl - 1 < count * dtype.itemsize:
        raise ImageFormatError("truncated RAWVOL payload")
    vals = np.frombuffer(data, dtype=dtype, count=count, offset=nl + 1).astype(float) / scale
    return DiscreteImage(vals.reshape(nz, ny, nx).transpose(2, 1, 0), period)


def write_rawvol(path, image: DiscreteImage, dtype: str = "f32"):
    if image.dims != 3:
        raise ValidationError("RAWVOL holds 3D volumes only")
    if dtype not in _RAW_TYPES:
        raise ValidationError(f"unknown RAWVOL dtype {dtype!r}")
    np_type, scale = _RAW_TYPES[dtype]
    v = image.samples.transpose(2, 1, 0)
    if scale != 1.0:
        v = np.rint(np.clip(v, 0.0, 1.0) * scale)
    nx, ny, nz = image.extents
    head = f"RAWVOL {nx} {ny} {nz} {dtype} {image.period!r}\n".encode()
    Path(path).write_bytes(head + np.ascontiguousarray(v).astype(np_type).tobytes())


def invert(image: DiscreteImage) -> DiscreteImage:
    return image.with_samples(1.0 - image.samples)


def read_image(path, invert_values: bool = False) -> DiscreteImage:
    path = Path(path)
    try:
        magic = path.open("rb").read(6)
    except OSError as exc:
        raise ImageFormatError(str(exc)) from None
    if magic.startswith(b"P5"):
        img = read_pgm(path)
    elif magic.startswith(b"P6"):
        img = read_ppm(path)
    elif magic.startswith(b"RAWVOL"):
        img = read_rawvol(path)
    else:
        raise ImageFormatError(f"{path}: unrecognised format (expected PGM, PPM or RAWVOL)")
    return invert(img) if invert_values else img


def write_image(path, image: DiscreteImage):
    if image.dims == 2:
        write_pgm(path, image, 65535)
    else:
        write_rawvol(path, image)


# --------------------------------------------------------------------------- config

@dataclass
class RunOptions:
    """Every setting a command can take; flags and config-file keys share these names."""

    epsilon: float | None = None
    epsilon_fraction: float = 0.01
    target: str = "lowhigh"
    alpha: int = 2
    upsample: int = 2
    max_level: int | None = None
    energy_fraction: float = 0.05
    node_budget: int = 10_000_000
    safety_factor: float = 1.02
    calibration_probes: int = 64
    seed: int = 0
    n_bands: int = 32
    invert: bool = False
    theta_min: float = -180.0     # degrees
    theta_max: float = 180.0
    t_max: float | None = None    # world units; default a quarter of the smallest extent
    full_6dof: bool = False
    offset_range: float | None = None
    variant: str = "lowhigh"
    m_list: str = "2,4"
    sweep: str = "-180:180:73"
    translation: str = "0,0"
    fmt: str = "csv"

    def search_config(self, **overrides) -> SearchConfig:
        kw = dict(epsilon=self.epsilon, epsilon_fraction=self.epsilon_fraction, target=self.target,
                  alpha=self.alpha, upsample=self.upsample, max_level=self.max_level,
                  energy_fraction=self.energy_fraction, node_budget=self.node_budget,
                  safety_factor=self.safety_factor, calibration_probes=self.calibration_probes,
                  seed=self.seed, n_bands=self.n_bands)
        kw.update(overrides)
        return SearchConfig(**kw)


_OPTION_TYPES = {f.name: f.type for f in fields(RunOptions)}


def _coerce(key: str, raw: str):
    kind = str(_OPTION_TYPES[key])
    if raw.lower() in ("none", "") and "None" in kind:
        return None
    if kind.startswith("bool"):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValidationError(f"{key}: expected a boolean, got {raw!r}")
    try:
        if kind.startswith("int"):
            return int(raw)
        if kind.startswith("float"):
            return float(raw)
    except ValueError:
        raise ValidationError(f"{key}: cannot parse {raw!r}") from None
    return raw


def read_config(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment. A JSON report is also accepted."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ImageFormatError(str(exc)) from None
    if text.lstrip().startswith("{"):
        try:
            echo = json.loads(text)["config"]
        except (ValueError, KeyError, TypeError):
            raise ValidationError("JSON config must be a report with a 'config' object") from None
        return {k: v for k, v in echo.items() if k in _OPTION_TYPES}
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _OPTION_TYPES:
            raise ValidationError(f"{path}:{n}: unknown key {key!r}")
        out[key] = _coerce(key, value)
    return out


def resolve_options(args: argparse.Namespace) -> RunOptions:
    """Defaults, then the config file, then flags given on the command line."""
    opts = RunOptions()
    if getattr(args, "config", None):
        for k, v in read_config(args.config).items():
            setattr(opts, k, v)
    for k in _OPTION_TYPES:
        v = getattr(args, k, None)
        if v is not None:
            setattr(opts, k, v)
    if opts.target not in ("lowhigh", "frequency"):
        raise ValidationError("target must be 'lowhigh' or 'frequency'")
    return opts


# --------------------------------------------------------------------------- reports

def file_digest(path) -> str:
    return "sha256:" + hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _num(x):
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.ndarray):
        return [_num(v) for v in x.tolist()]
    if isinstance(x, (list, tuple)):
        return [_num(v) for v in x]
    if isinstance(x, dict):
        return {k: _num(v) for k, v in x.items()}
    return x


def level_summary(pyramid, result: SearchResult) -> list:
    out = []
    for lv in pyramid.levels:
        out.append({"level": lv.index, "m": lv.m, "bound": lv.bound, "slack": lv.slack,
                    "b_res": lv.b_res, "evaluations": result.evaluations_per_level[lv.index],
                    "rejected": result.rejected_per_level[lv.index]})
    return out


def make_report(command: str, inputs: dict, opts: RunOptions, result: dict, timing: dict) -> dict:
    """Keys are inserted in a fixed order, so serialisation is deterministic."""
    return {"schema": SCHEMA, "version": __version__, "command": command,
            "inputs": inputs, "config": _num(asdict(opts)), "result": _num(result),
            "timing": _num(timing)}


REPORT_KEYS = ("schema", "version", "command", "inputs", "config", "result", "timing")


def validate_report(report: dict):
    """Raise ValidationError unless ``report`` follows the report schema."""
    if not isinstance(report, dict) or tuple(report) != REPORT_KEYS:
        raise ValidationError(f"report keys must be {REPORT_KEYS}")
    if report["schema"] != SCHEMA:
        raise ValidationError("unknown schema")
    res = report["result"]
    for key in ("q_star", "q_up", "epsilon", "complete"):
        if key not in res:
            raise ValidationError(f"result lacks {key!r}")
    if not isinstance(res["complete"], bool):
        raise ValidationError("result.complete must be a boolean")
    unknown = set(report["config"]) - set(_OPTION_TYPES)
    if unknown:
        raise ValidationError(f"unknown config keys {sorted(unknown)}")


def dump_report(report: dict, out: str | None):
    text = json.dumps(report, indent=2) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _search_result(res: SearchResult, pyramid, eps: float) -> dict:
    return {"params": dict(zip(pyramid.space.names, res.params.tolist())),
            "q_star": res.q_star, "q_up": res.q_up, "epsilon": eps, "complete": res.complete,
            "boxes_processed": res.boxes_processed, "iterations": res.iterations,
            "full_evaluations": res.full_evaluations, "levels": level_summary(pyramid, res)}


# --------------------------------------------------------------------------- commands

def _pair(args, opts):
    f = read_image(args.f, opts.invert)
    g = read_image(args.g, opts.invert)
    if f.dims != g.dims:
        raise ValidationError(f"dimension mismatch: {f.dims}D vs {g.dims}D")
    if not math.isclose(f.period, g.period, rel_tol=1e-12):
        raise ValidationError("images must share the sampling period")
    return f, g


def _default_t_max(f: DiscreteImage, opts: RunOptions) -> float:
    return opts.t_max if opts.t_max is not None else 0.25 * f.period * min(f.extents)


def resample(g: DiscreteImage, motion, like: DiscreteImage) -> DiscreteImage:
    """``g`` pulled back onto the sample grid of ``like``: out(x) = g(motion(x))."""
    pts = like.world_coords().reshape(-1, like.dims)
    vals = interpolate(g, Kernel.triangular(), motion.apply(pts))
    return like.with_samples(np.asarray(vals).reshape(like.extents))


def register_2d(f, g, opts: RunOptions, progress=None):
    c = f.center()
    tm = _default_t_max(f, opts)
    box = ParamBox(("theta", "tx", "ty"), [math.radians(opts.theta_min), -tm, -tm],
                   [math.radians(opts.theta_max), tm, tm])
    cfg = opts.search_config()
    t0 = time.perf_counter()
    pyr = build_pyramid(f, g, cfg, RigidSpace2D(c))
    t1 = time.perf_counter()
    res = branch_and_bound(pyr, box, cfg, progress)
    t2 = time.perf_counter()
    motion = pyr.space.pose(res.params)
    out = _search_result(res, pyr, pyr.epsilon())
    out["motion"] = {"theta_deg": math.degrees(res.params[0]), "center": c,
                     "translation": motion.user_translation()}
    return res, pyr, motion, out, {"pyramid_s": t1 - t0, "search_s": t2 - t1}


def centre_of_mass(image: DiscreteImage) -> np.ndarray:
    w = np.clip(image.samples, 0.0, None)
    total = w.sum()
    if total <= 0:
        return image.center()
    return np.tensordot(w, image.world_coords(), axes=(tuple(range(image.dims)), tuple(range(image.dims)))) / total


def register_3d(f, g, opts: RunOptions, progress=None):
    cfg = opts.search_config()
    t0 = time.perf_counter()
    if opts.full_6dof:
        c = f.center()
        tm = _default_t_max(f, opts)
        space = RigidSpace3D(c)
        box = ParamBox(space.names, [-math.pi, 0.0, -math.pi, -tm, -tm, -tm],
                       [math.pi, math.pi / 2, math.pi, tm, tm, tm])
        shift = np.zeros(3)
        g_search = g
    else:
        # move g so both centres of mass coincide, then search rotations about it
        c = centre_of_mass(f)
        shift = centre_of_mass(g) - c
        g_search = DiscreteImage(g.samples, g.period, g.origin - shift)
        space = RigidSpace3D(c, np.zeros(3))
        box = ParamBox(space.names, [-math.pi, 0.0, -math.pi], [math.pi, math.pi / 2, math.pi])
    pyr = build_pyramid(f, g_search, cfg, space)
    t1 = time.perf_counter()
    res = branch_and_bound(pyr, box, cfg, progress)
    t2 = time.perf_counter()
    p = res.params
    if opts.full_6dof:
        motion = space.pose(p)
    else:
        base = space.pose(p)
        motion = RigidMotion.spatial(p[0], p[1], p[2], base.matrix().T @ shift, c)
    out = _search_result(res, pyr, pyr.epsilon())
    out["motion"] = {"angles": list(motion.angles), "center": c, "translation": motion.user_translation(),
                     "com_shift": shift}
    return res, pyr, motion, out, {"pyramid_s": t1 - t0, "search_s": t2 - t1}


def _progress(enabled: bool):
    if not enabled:
        return None

    def report(info):
        print(f"iter {info['iteration']}: boxes {info['boxes_processed']} queued {info['queued']} "
              f"Q* {info['q_star']:.6g} Q_up {info['q_up']:.6g}", file=sys.stderr)
    return report


def cmd_register2d(args) -> int:
    opts = resolve_options(args)
    f, g = _pair(args, opts)
    if f.dims != 2:
        raise ValidationError("register2d needs 2D images")
    res, _pyr, motion, out, timing = register_2d(f, g, opts, _progress(args.verbose))
    if args.output_image:
        write_image(args.output_image, resample(g, motion, f))
    dump_report(make_report("register2d", {"f": file_digest(args.f), "g": file_digest(args.g)},
                            opts, out, timing), args.out)
    return EXIT_OK if res.complete else EXIT_INCOMPLETE


def cmd_register3d(args) -> int:
    opts = resolve_options(args)
    f, g = _pair(args, opts)
    if f.dims != 3:
        raise ValidationError("register3d needs 3D volumes")
    res, _pyr, motion, out, timing = register_3d(f, g, opts, _progress(args.verbose))
    if args.output_image:
        write_image(args.output_image, resample(g, motion, f))
    dump_report(make_report("register3d", {"f": file_digest(args.f), "g": file_digest(args.g)},
                            opts, out, timing), args.out)
    return EXIT_OK if res.complete else EXIT_INCOMPLETE


def cmd_symmetry(args) -> int:
    opts = resolve_options(args)
    f = read_image(args.f, opts.invert)
    rng = None if opts.offset_range is None else (-opts.offset_range, opts.offset_range)
    t0 = time.perf_counter()
    r = detect_symmetry(f, SymmetryConfig(opts.search_config(), rng), _progress(args.verbose))
    out = _search_result(r.search, r.pyramid, r.pyramid.epsilon())
    out["plane"] = {"phi_deg": math.degrees(r.params.phi), "psi_deg": math.degrees(r.params.psi),
                    "offset": r.params.offset, "normal": r.params.normal(), "center": f.center()}
    dump_report(make_report("symmetry", {"f": file_digest(args.f)}, opts, out,
                            {"total_s": time.perf_counter() - t0}), args.out)
    return EXIT_OK if r.search.complete else EXIT_INCOMPLETE


# ---- bounds report

VARIANTS = ("sinc", "bounded-support", "lowhigh", "discretized-one-sinc", "upsampled")
EXACT_VARIANTS = ("sinc", "bounded-support", "lowhigh")


def _parse_sweep(spec: str) -> np.ndarray:
    try:
        lo, hi, n = spec.split(":")
        return np.linspace(float(lo), float(hi), int(n))
    except ValueError:
        raise ValidationError("sweep must be 'lo:hi:count' in degrees") from None


def _parse_list(spec: str, kind=float) -> list:
    try:
        return [kind(s) for s in spec.split(",") if s.strip()]
    except ValueError:
        raise ValidationError(f"cannot parse list {spec!r}") from None


def bounds_rows(f: DiscreteImage, g: DiscreteImage, variant: str, ms, thetas_deg, translation,
                alpha: int = 2, p: int = 2) -> list[dict]:
    """Rotation sweep of the high- and low-resolution targets with the envelope ``Q_low +- bound``."""
    if variant not in VARIANTS:
        raise ValidationError(f"variant must be one of {VARIANTS}")
    F, G = forward_dft(f, 2), forward_dft(g, 2)
    c = f.center()
    motions = [RigidMotion.planar(math.radians(th), translation, c) if f.dims == 2 else
               RigidMotion.spatial(0.0, math.pi / 2, math.radians(th), translation, c) for th in thetas_deg]
    kernel = Kernel.from_alpha(alpha)
    exact = ExactConfig()
    high = {}
    if variant == "sinc":
        ev = FrequencyEvaluator(forward_dft(f, 4), forward_dft(g, 4))
        qh = [ev(mo).value for mo in motions]
    elif variant in ("bounded-support", "lowhigh"):
        qh = [correlation_exact(f, g, kernel, mo, exact).value for mo in motions]
    elif variant == "discretized-one-sinc":
        qh = [correlation_discretized(f, g, kernel, mo).value for mo in motions]
    else:
        gu = upsample(g, p)
        qh = [correlation_discretized(f, gu, kernel, mo).value for mo in motions]
    rows = []
    for m in ms:
        if m == 1:
            bound, ql = 0.0, qh
        else:
            fl, gl = decimate(f, m), decimate(g, m)
            if variant == "sinc":
                bound = bnd.bound_sinc(F, G, m).value
                evl = FrequencyEvaluator(forward_dft(fl, 4), forward_dft(gl, 4))
                ql = [evl(mo).value for mo in motions]
            elif variant == "bounded-support":
                bound = bnd.bound_bounded_support(F, G, m, alpha).value
                ql = [correlation_exact(fl, gl, kernel, mo, exact).value for mo in motions]
            elif variant == "lowhigh":
                bound = bnd.bound_lowhigh(F, G, m, alpha).value
                ql = [correlation_exact(fl, g, kernel, mo, exact).value for mo in motions]
            elif variant == "discretized-one-sinc":
                bound = bnd.bound_discretized_one_sinc(F, G, m, alpha).value
                ql = [correlation_discretized(fl, gl, kernel, mo).value for mo in motions]
            else:
                bound = bnd.bound_upsampled(F, G, m, p, alpha).value
                ql = [correlation_lowhigh(fl, gu, kernel, mo, m * p).value for mo in motions]
        high[m] = bound
        for th, a, b in zip(thetas_deg, qh, ql):
            rows.append({"variant": variant, "m": int(m), "theta_deg": float(th), "q_high": float(a),
                         "q_low": float(b), "lower": float(b - bound), "upper": float(b + bound),
                         "bound": float(bound)})
    return rows


ROW_KEYS = ("variant", "m", "theta_deg", "q_high", "q_low", "lower", "upper", "bound")


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=ROW_KEYS, lineterminator="\r\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def cmd_bounds_report(args) -> int:
    opts = resolve_options(args)
    f, g = _pair(args, opts)
    ms = _parse_list(opts.m_list, int)
    if not ms or min(ms) < 1:
        raise ValidationError("m-list entries must be positive integers")
    t = _parse_list(opts.translation)
    if len(t) != f.dims:
        raise ValidationError(f"translation needs {f.dims} components")
    rows = bounds_rows(f, g, opts.variant, ms, _parse_sweep(opts.sweep), t, opts.alpha, opts.upsample)
    if opts.fmt == "csv":
        text = rows_to_csv(rows)
    elif opts.fmt == "json":
        text = json.dumps(make_report("bounds-report", {"f": file_digest(args.f), "g": file_digest(args.g)},
                                      opts, {"rows": rows}, {}), indent=2) + "\n"
    else:
        raise ValidationError("fmt must be csv or json")
    if args.out:
        Path(args.out).write_text(text, newline="")
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---- benchmark

def run_bench(f, g, opts: RunOptions) -> dict:
    """Same search with the full pyramid and with a single resolution."""
    runs = {}
    for name, ml in (("multi", opts.max_level), ("single", 0)):
        o = RunOptions(**{**asdict(opts), "max_level": ml})
        t0 = time.perf_counter()
        res, pyr, motion, out, _ = (register_2d if f.dims == 2 else register_3d)(f, g, o)
        out["seconds"] = time.perf_counter() - t0
        runs[name] = (res, out)
    (rm, om), (rs, os_) = runs["multi"], runs["single"]
    eps = om["epsilon"]
    return {"q_star": rm.q_star, "q_up": rm.q_up, "epsilon": eps,
            "complete": bool(rm.complete and rs.complete),
            "multi": om, "single": os_,
            "speedup": os_["seconds"] / max(om["seconds"], 1e-12),
            "full_evaluation_ratio": rs.full_evaluations / max(rm.full_evaluations, 1),
            "q_star_difference": rm.q_star - rs.q_star,
            "param_difference": (rm.params - rs.params).tolist()}


def cmd_bench(args) -> int:
    opts = resolve_options(args)
    f, g = _pair(args, opts)
    t0 = time.perf_counter()
    out = run_bench(f, g, opts)
    dump_report(make_report("bench", {"f": file_digest(args.f), "g": file_digest(args.g)}, opts, out,
                            {"total_s": time.perf_counter() - t0}), args.out)
    return EXIT_OK if out["complete"] else EXIT_INCOMPLETE


# --------------------------------------------------------------------------- parser

def _add_search_flags(p: argparse.ArgumentParser):
    # defaults are None so a config file value is only overridden by an explicit flag
    p.add_argument("--config", help="key = value file (or a previous JSON report)")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.add_argument("--invert", action="store_const", const=True, help="use 1 - v intensities")
    p.add_argument("--epsilon", type=float, help="absolute convergence threshold")
    p.add_argument("--epsilon-fraction", type=float, help="threshold as a fraction of |f||g| (default 0.01)")
    p.add_argument("--target", choices=("lowhigh", "frequency"))
    p.add_argument("--alpha", type=int, choices=(1, 2), help="1 box, 2 bilinear/trilinear")
    p.add_argument("--upsample", type=int)
    p.add_argument("--max-level", type=int, help="coarsest level; 0 runs single resolution")
    p.add_argument("--energy-fraction", type=float)
    p.add_argument("--node-budget", type=int)
    p.add_argument("--safety-factor", type=float)
    p.add_argument("--calibration-probes", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--n-bands", type=int)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rigidreg", description="Globally optimal rigid registration.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("register2d", help="rotation and translation search for two 2D images")
    p.add_argument("f")
    p.add_argument("g")
    _add_search_flags(p)
    p.add_argument("--theta-min", type=float, help="degrees")
    p.add_argument("--theta-max", type=float, help="degrees")
    p.add_argument("--t-max", type=float, help="translation half-range in world units")
    p.add_argument("--output-image", help="write g resampled onto f's grid")
    p.set_defaults(func=cmd_register2d)

    p = sub.add_parser("register3d", help="rotation search for two volumes after centre-of-mass alignment")
    p.add_argument("f")
    p.add_argument("g")
    _add_search_flags(p)
    p.add_argument("--full-6dof", action="store_const", const=True, help="also search translations (slow)")
    p.add_argument("--t-max", type=float)
    p.add_argument("--output-image")
    p.set_defaults(func=cmd_register3d)

    p = sub.add_parser("symmetry", help="best mirror axis (2D) or plane (3D)")
    p.add_argument("f")
    _add_search_flags(p)
    p.add_argument("--offset-range", type=float, help="half-range of the plane offset in world units")
    p.set_defaults(func=cmd_symmetry)

    p = sub.add_parser("bounds-report", help="rotation sweep of targets and bound envelopes")
    p.add_argument("f")
    p.add_argument("g")
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--invert", action="store_const", const=True)
    p.add_argument("--variant", choices=VARIANTS)
    p.add_argument("--m-list", help="comma separated decimation factors, e.g. 1,2,4")
    p.add_argument("--sweep", help="lo:hi:count in degrees")
    p.add_argument("--translation", help="comma separated, world units")
    p.add_argument("--alpha", type=int, choices=(1, 2))
    p.add_argument("--upsample", type=int)
    p.add_argument("--fmt", choices=("csv", "json"))
    p.set_defaults(func=cmd_bounds_report)

    p = sub.add_parser("bench", help="compare multiresolution and single-resolution searches")
    p.add_argument("f")
    p.add_argument("g")
    _add_search_flags(p)
    p.add_argument("--theta-min", type=float)
    p.add_argument("--theta-max", type=float)
    p.add_argument("--t-max", type=float)
    p.add_argument("--full-6dof", action="store_const", const=True)
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ImageFormatError, OSError) as exc:
        print(f"rigidreg: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"rigidreg: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
