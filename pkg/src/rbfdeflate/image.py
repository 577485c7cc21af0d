"""Raster images as interpolation problems: loading, center selection,
per-channel solves, evaluation over the pixel grid and PSNR."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .assembly import SaddleSystem, assemble, build_grid
from .coarse import build_coarse
from .core import InterpolationProblem, RadialBasis, SolutionVector
from .solvers import SolveReport, SolverConfig, deflated_gcr_solve, direct_solve, gcr_solve

_MODES = {"L": 1, "RGB": 3}
_SUFFIXES = {".pgm": "PPM", ".ppm": "PPM", ".pnm": "PPM", ".png": "PNG"}
_EVAL_CHUNK = 1 << 16


class ImageFormatError(OSError):
    pass


@dataclass(frozen=True, eq=False)
class RasterImage:
    """Intensities in [0, 1], stored as ``(height, width, channels)``."""

    samples: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim == 2:
            s = s[:, :, None]
        if s.ndim != 3 or s.shape[2] not in (1, 3) or 0 in s.shape:
            raise ValueError(f"expected (height, width, 1|3) samples, got {s.shape}")
        s = np.ascontiguousarray(s)
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def height(self) -> int:
        return self.samples.shape[0]

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    @property
    def channels(self) -> int:
        return self.samples.shape[2]

    def plane(self, channel: int) -> np.ndarray:
        return self.samples[:, :, channel]


def quantize(values) -> np.ndarray:
    """Clamp to [0, 1] and round ``255 v`` half away from zero to uint8."""
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    return np.floor(255.0 * v + 0.5).astype(np.uint8)


def load_image(path) -> RasterImage:
    """Read an 8-bit PGM/PPM (binary) or PNG file."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            if im.format not in ("PPM", "PNG"):
                raise ImageFormatError(f"{path}: unsupported format {im.format}")
            if im.mode not in _MODES:
                raise ImageFormatError(f"{path}: unsupported pixel mode {im.mode}")
            data = np.asarray(im, dtype=np.uint8)
    except FileNotFoundError:
        raise
    except (UnidentifiedImageError, SyntaxError, ValueError) as exc:
        raise ImageFormatError(f"{path}: cannot decode image ({exc})") from exc
    return RasterImage(data.astype(np.float64) / 255.0)


def save_image(img: RasterImage, path) -> None:
    path = Path(path)
    fmt = _SUFFIXES.get(path.suffix.lower())
    if fmt is None:
        raise ImageFormatError(f"{path}: unsupported output suffix")
    data = quantize(img.samples)
    if path.suffix.lower() == ".pgm" and img.channels != 1:
        raise ImageFormatError(f"{path}: PGM output needs a single-channel image")
    if path.suffix.lower() == ".ppm" and img.channels != 3:
        raise ImageFormatError(f"{path}: PPM output needs an RGB image")
    pil = Image.fromarray(data[:, :, 0] if img.channels == 1 else data,
                          mode="L" if img.channels == 1 else "RGB")
    pil.save(path, format=fmt)


def synthetic_image(size: int, channels: int = 1) -> RasterImage:
    """Deterministic test card: a smooth ramp, a disc and a sine texture.

    Samples are snapped to the 8-bit grid, so the card behaves exactly like
    the same picture read back from a PGM/PPM file.
    """
    y, x = np.mgrid[0:size, 0:size]
    u = (x + 0.5) / size
    v = (y + 0.5) / size
    ramp = 0.25 + 0.4 * u * v
    disc = 0.35 * (((u - 0.6) ** 2 + (v - 0.4) ** 2) < 0.06)
    texture = 0.15 * np.sin(6 * np.pi * u) * np.cos(4 * np.pi * v)
    base = np.clip(ramp + disc + texture, 0.0, 1.0)
    if channels == 1:
        return RasterImage(quantize(base) / 255.0)
    shifted = [base * s + o for s, o in ((1.0, 0.0), (0.8, 0.1), (0.6, 0.3))]
    return RasterImage(quantize(np.stack(shifted, axis=2)) / 255.0)


def open_input(spec: str) -> RasterImage:
    """Load a file, or build a synthetic card for ``synthetic:SIZE[:rgb]``."""
    m = re.fullmatch(r"synthetic:(\d+)(:rgb)?", spec)
    if m:
        return synthetic_image(int(m.group(1)), 3 if m.group(2) else 1)
    return load_image(spec)


@dataclass(frozen=True)
class CenterSelection:
    """Which pixels become RBF centers: ``all``, every ``stride``-th row and
    column, or a seeded random ``fraction``."""

    strategy: str = "all"
    stride: int = 1
    fraction: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.strategy not in ("all", "stride", "random"):
            raise ValueError(f"unknown center strategy {self.strategy!r}")
        if self.strategy == "stride" and self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.strategy == "random" and not 0.0 < self.fraction <= 1.0:
            raise ValueError("fraction must lie in (0, 1]")

    @classmethod
    def all(cls):
        return cls("all")

    @classmethod
    def every(cls, k: int):
        return cls("stride", stride=int(k))

    @classmethod
    def random(cls, fraction: float, seed: int = 0):
        return cls("random", fraction=float(fraction), seed=int(seed))

    def describe(self) -> str:
        if self.strategy == "stride":
            return f"stride{self.stride}"
        if self.strategy == "random":
            return f"random{self.fraction:g}s{self.seed}"
        return "all"

    def pixel_indices(self, width: int, height: int) -> np.ndarray:
        """Selected flat (row-major) pixel indices, ascending."""
        npix = width * height
        if self.strategy == "all":
            return np.arange(npix)
        if self.strategy == "stride":
            rows = np.arange(0, height, self.stride)
            cols = np.arange(0, width, self.stride)
            return (rows[:, None] * width + cols[None, :]).ravel()
        count = math.floor(self.fraction * npix)
        rng = np.random.default_rng(self.seed)
        return np.sort(rng.choice(npix, size=count, replace=False))


def pixel_centers(width: int, height: int, flat=None) -> np.ndarray:
    """Normalized ``((col + 1/2) / width, (row + 1/2) / height)`` coordinates."""
    flat = np.arange(width * height) if flat is None else np.asarray(flat)
    rows, cols = np.divmod(flat, width)
    return np.column_stack([(cols + 0.5) / width, (rows + 0.5) / height])


def extract_problem(img: RasterImage, channel: int, sel: CenterSelection,
                    basis: RadialBasis) -> InterpolationProblem:
    if not 0 <= channel < img.channels:
        raise ValueError(f"channel {channel} out of range for {img.channels}-channel image")
    flat = sel.pixel_indices(img.width, img.height)
    if flat.shape[0] < 3:
        raise ValueError(f"selection gives {flat.shape[0]} centers; at least 3 are needed")
    values = img.plane(channel).ravel()[flat]
    return InterpolationProblem(pixel_centers(img.width, img.height, flat), values, basis)


def evaluate_at(problem: InterpolationProblem, chi: SolutionVector, points,
                grid=None, backend: str | None = None) -> np.ndarray:
    """Unclamped interpolant ``p(x) + sum_i lam_i phi(|x - xi_i|)``."""
    points = np.ascontiguousarray(points, dtype=np.float64)
    if chi.lam.shape != (problem.n_sites,) or chi.c.shape != (problem.n_poly,):
        raise ValueError("solution vector does not match the problem size")
    grid = grid or build_grid(problem.sites, problem.basis.support_radius)
    out = np.empty(points.shape[0])
    for lo in range(0, points.shape[0], _EVAL_CHUNK):
        chunk = points[lo:lo + _EVAL_CHUNK]
        out[lo:lo + _EVAL_CHUNK] = (chi.c[0] + chunk @ chi.c[1:]
                                    + grid.weighted_sum(chunk, chi.lam, backend))
    return out


def evaluate_interpolant(problem: InterpolationProblem, chi: SolutionVector,
                         width: int, height: int, grid=None,
                         backend: str | None = None) -> np.ndarray:
    """Interpolant at every pixel center, clamped to [0, 1], shape (height, width)."""
    vals = evaluate_at(problem, chi, pixel_centers(width, height), grid, backend)
    return np.clip(vals, 0.0, 1.0).reshape(height, width)


def psnr(reference, test) -> float:
    """Peak signal-to-noise ratio in dB for [0, 1] intensities; ``inf`` if equal."""
    a = reference.samples if isinstance(reference, RasterImage) else np.asarray(reference, float)
    b = test.samples if isinstance(test, RasterImage) else np.asarray(test, float)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


@dataclass
class Reconstruction:
    image: RasterImage
    problems: list[InterpolationProblem]
    solutions: list[SolutionVector]
    reports: list[SolveReport | None] = field(default_factory=list)


def solve_system(system: SaddleSystem, solver: str = "deflated", coarse_kind="chebyshev",
                 m: int = 0, cfg: SolverConfig | None = None,
                 orthonormalize: bool = True, sites=None, moment_free: bool = True):
    """Solve one assembled system; returns ``(chi_array, report_or_None)``."""
    if solver == "direct":
        return direct_solve(system), None
    if solver == "gcr":
        return gcr_solve(system.apply, system.rhs, cfg=cfg)
    if solver == "deflated":
        if sites is None:
            sites = system.poly_block[:, 1:]
        space = build_coarse(coarse_kind, m, sites, system.n_poly, orthonormalize,
                             moment_free)
        return deflated_gcr_solve(system.apply, system.rhs, space.Q, cfg)
    raise ValueError(f"unknown solver {solver!r}")


def reconstruct(img: RasterImage, sel: CenterSelection, basis: RadialBasis,
                solver: str = "deflated", coarse_kind="chebyshev", m: int = 0,
                cfg: SolverConfig | None = None, orthonormalize: bool = True,
                backend: str | None = None, moment_free: bool = True) -> Reconstruction:
    """Solve one system per channel and evaluate each over the full grid.

    Channels share the assembled operator; only the right-hand side differs.
    """
    problems = [extract_problem(img, c, sel, basis) for c in range(img.channels)]
    system = assemble(problems[0], backend)
    planes, sols, reports = [], [], []
    for prob in problems:
        sys_c = system.with_values(prob.values)
        chi, report = solve_system(sys_c, solver, coarse_kind, m, cfg, orthonormalize,
                                   prob.sites, moment_free)
        sol = SolutionVector.from_array(chi, prob.n_sites)
        planes.append(evaluate_interpolant(prob, sol, img.width, img.height,
                                           system.grid, backend))
        sols.append(sol)
        reports.append(report)
    return Reconstruction(RasterImage(np.stack(planes, axis=2)), problems, sols, reports)
