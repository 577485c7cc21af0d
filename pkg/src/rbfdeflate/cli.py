"""Command-line front end: ``reconstruct`` one configuration or ``sweep`` the
basis family x coarse size grid and write CSV reports.

Exit codes: 0 success, 1 configuration error, 2 I/O error, 3 every sweep
cell failed.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .assembly import assemble
from .coarse import BASIS_NAMES
from .core import RadialBasis, SolutionVector
from .image import (
    CenterSelection,
    ImageFormatError,
    RasterImage,
    evaluate_interpolant,
    extract_problem,
    open_input,
    psnr,
    quantize,
    save_image,
    solve_system,
)
from .solvers import SolverConfig

logger = logging.getLogger("rbfdeflate")

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_ALL_FAILED = 0, 1, 2, 3

DEFAULT_RADIUS = 0.05
DEFAULT_STRIDE = 4
DEFAULT_SIZES = (0, 2, 4, 8, 16)
DEFAULT_TOLS = (1e-3, 1e-6)
DEFAULT_MAX_ITER = 2000


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    input: str
    out_dir: Path
    radius: float = DEFAULT_RADIUS
    centers: CenterSelection = field(default_factory=lambda: CenterSelection.every(DEFAULT_STRIDE))
    bases: tuple[str, ...] = BASIS_NAMES
    coarse_sizes: tuple[int, ...] = DEFAULT_SIZES
    tols: tuple[float, ...] = DEFAULT_TOLS
    max_iter: int = DEFAULT_MAX_ITER
    seed: int = 0
    orthonormalize: bool = True
    moment_free: bool = True
    solver: str = "deflated"
    jobs: int = 1

    def solver_config(self) -> SolverConfig:
        return SolverConfig(self.tols, self.max_iter)


def tol_label(t: float) -> str:
    return f"iters_{t:.0e}"


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.10g}"
    return str(x)


def csv_header(cfg: RunConfig, extra=()) -> list[str]:
    return ["schema", "family", "m", "channel", "n_sites", "radius", "centers",
            "orthonormalize", "moment_free", "initial_residual_ratio",
            *[tol_label(t) for t in cfg.tols],
            "iterations", "true_residual_ratio", "converged", "status", "error", *extra]


@dataclass
class Cell:
    family: str
    m: int
    channel: int
    n_sites: int = 0
    report: object = None
    chi: np.ndarray | None = None
    error: str = ""
    seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.error

    def row(self, cfg: RunConfig) -> list[str]:
        rep = self.report
        base = [SCHEMA_VERSION, self.family, self.m, self.channel, self.n_sites,
                cfg.radius, cfg.centers.describe(), int(cfg.orthonormalize),
                int(cfg.moment_free)]
        if rep is None:
            return [_fmt(v) for v in base] + [""] * (4 + len(cfg.tols)) + [
                "failed" if self.error else "ok", self.error]
        iters = [rep.iterations_per_tol[t] for t in cfg.tols]
        vals = base + [rep.initial_residual_ratio, *iters, rep.iterations,
                       rep.true_residual_ratio, int(rep.converged),
                       "ok" if rep.converged else "not_converged", ""]
        return [_fmt(v) for v in vals]


def _solve_cell(system, problem, cfg: RunConfig, family: str, m: int, channel: int) -> Cell:
    cell = Cell(family, m, channel, problem.n_sites)
    t0 = time.perf_counter()
    try:
        chi, report = solve_system(system, cfg.solver, family, m, cfg.solver_config(),
                                   cfg.orthonormalize, problem.sites, cfg.moment_free)
        cell.chi, cell.report = chi, report
    except Exception as exc:  # a failed cell is reported, never fatal
        cell.error = f"{type(exc).__name__}: {exc}"
        logger.warning("cell %s m=%d channel %d failed: %s", family, m, channel, exc)
    cell.seconds = time.perf_counter() - t0
    return cell


def _reconstruct_image(img: RasterImage, problems, system, chis) -> RasterImage:
    planes = [
        evaluate_interpolant(p, SolutionVector.from_array(chi, p.n_sites),
                             img.width, img.height, system.grid)
        for p, chi in zip(problems, chis)
    ]
    return RasterImage(np.stack(planes, axis=2))


def _suffix(img: RasterImage) -> str:
    return ".pgm" if img.channels == 1 else ".ppm"


def _setup(cfg: RunConfig):
    img = open_input(cfg.input)
    basis = RadialBasis(cfg.radius)
    problems = [extract_problem(img, c, cfg.centers, basis) for c in range(img.channels)]
    system = assemble(problems[0])
    systems = [system.with_values(p.values) for p in problems]
    return img, problems, systems


def run_sweep(cfg: RunConfig) -> int:
    """Run every (family, m, channel) cell; ``m = 0`` is solved once per
    channel and its row repeated under each family."""
    img, problems, systems = _setup(cfg)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)

    jobs = []
    for ch in range(img.channels):
        jobs.append(("", 0, ch))
        for fam in cfg.bases:
            jobs.extend((fam, m, ch) for m in cfg.coarse_sizes if m > 0)

    def work(job):
        fam, m, ch = job
        return _solve_cell(systems[ch], problems[ch], cfg, fam or cfg.bases[0], m, ch)

    with ThreadPoolExecutor(max_workers=max(1, cfg.jobs)) as pool:
        done = dict(zip(jobs, pool.map(work, jobs)))

    cells = []
    for ch in range(img.channels):
        for fam in cfg.bases:
            for m in cfg.coarse_sizes:
                src = done[("", 0, ch)] if m == 0 else done[(fam, m, ch)]
                cell = Cell(fam, m, ch, src.n_sites, src.report, src.chi, src.error, src.seconds)
                cells.append(cell)

    with open(cfg.out_dir / "sweep.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(csv_header(cfg))
        writer.writerows(c.row(cfg) for c in cells)
    with open(cfg.out_dir / "sweep_timings.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["family", "m", "channel", "wall_time_s"])
        writer.writerows([c.family, c.m, c.channel, f"{c.seconds:.6f}"] for c in cells)

    # reconstructions: the shared baseline and each family at its largest size
    suffix = _suffix(img)
    images = {"baseline": [done[("", 0, ch)] for ch in range(img.channels)]}
    m_top = max(cfg.coarse_sizes)
    if m_top > 0:
        for fam in cfg.bases:
            images[f"{fam}_m{m_top}"] = [done[(fam, m_top, ch)] for ch in range(img.channels)]
    for name, chans in images.items():
        if all(c.ok for c in chans):
            recon = _reconstruct_image(img, problems, systems[0], [c.chi for c in chans])
            save_image(recon, cfg.out_dir / f"{name}{suffix}")

    failed = sum(not c.ok for c in cells)
    print(f"sweep: {len(cells)} rows, {failed} failed -> {cfg.out_dir / 'sweep.csv'}")
    return EXIT_ALL_FAILED if cells and failed == len(cells) else EXIT_OK


def run_reconstruct(cfg: RunConfig) -> int:
    if len(cfg.bases) != 1 or len(cfg.coarse_sizes) != 1:
        raise ConfigError("reconstruct needs exactly one --basis and one coarse size")
    fam, m = cfg.bases[0], cfg.coarse_sizes[0]
    t0 = time.perf_counter()
    img, problems, systems = _setup(cfg)
    t_setup = time.perf_counter() - t0
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    cells = [_solve_cell(systems[ch], problems[ch], cfg, fam, m, ch)
             for ch in range(img.channels)]
    failed = [c for c in cells if not c.ok]

    extra = ("psnr_db",)
    quality = ""
    t1 = time.perf_counter()
    if not failed:
        recon = _reconstruct_image(img, problems, systems[0], [c.chi for c in cells])
        out = cfg.out_dir / f"reconstruction{_suffix(img)}"
        save_image(recon, out)
        written = RasterImage(quantize(recon.samples) / 255.0)
        value = psnr(img, written)
        quality = "inf" if np.isinf(value) else f"{value:.4f}"
    t_eval = time.perf_counter() - t1

    with open(cfg.out_dir / "reconstruct.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(csv_header(cfg, extra))
        writer.writerows(c.row(cfg) + [quality] for c in cells)

    iters = ",".join(
        "-" if c.report is None else
        "/".join(_fmt(c.report.iterations_per_tol[t]) for t in cfg.tols)
        for c in cells
    )
    t_solve = sum(c.seconds for c in cells)
    if failed:
        print(f"reconstruct: failed: {failed[0].error}")
        return EXIT_ALL_FAILED
    print(f"reconstruct: psnr={quality} dB iterations={iters} "
          f"setup={t_setup:.3f}s solve={t_solve:.3f}s eval={t_eval:.3f}s")
    return EXIT_OK


# --- argument handling ---------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> tuple[int, ...]:
    try:
        vals = tuple(int(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not vals or any(v < 0 for v in vals):
        raise argparse.ArgumentTypeError("coarse sizes must be non-negative")
    return vals


def _float_list(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("at least one tolerance is required")
    return vals


def _name_list(text: str) -> tuple[str, ...]:
    names = tuple(v.strip().lower() for v in str(text).split(",") if v.strip())
    bad = [n for n in names if n not in BASIS_NAMES]
    if bad or not names:
        raise argparse.ArgumentTypeError(
            f"unknown basis {bad or text!r}; choose from {', '.join(BASIS_NAMES)}")
    return names


def _add_common(p: argparse.ArgumentParser, sweep: bool):
    p.add_argument("--config", help="key=value file; command-line flags override it")
    p.add_argument("--input", help="PGM/PPM/PNG path, or synthetic:SIZE[:rgb]")
    p.add_argument("--out-dir", type=Path, help="directory for CSV reports and images")
    p.add_argument("--radius", type=float, default=DEFAULT_RADIUS,
                   help=f"support radius in normalized units (default {DEFAULT_RADIUS})")
    sel = p.add_mutually_exclusive_group()
    sel.add_argument("--stride", type=int, help=f"every k-th pixel (default {DEFAULT_STRIDE})")
    sel.add_argument("--random-frac", type=float, help="random fraction of pixels")
    p.add_argument("--seed", type=int, default=0, help="seed for --random-frac")
    p.add_argument("--basis", type=_name_list,
                   default=BASIS_NAMES if sweep else ("chebyshev",),
                   help="basis family (comma-separated list for sweep)")
    p.add_argument("--coarse-sizes", type=_int_list,
                   default=DEFAULT_SIZES if sweep else (16,),
                   help="comma-separated coarse sizes")
    p.add_argument("--tols", type=_float_list, default=DEFAULT_TOLS,
                   help="relative residual targets, strictly decreasing")
    p.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER)
    p.add_argument("--orthonormalize-coarse", action=argparse.BooleanOptionalAction,
                   default=True, help="QR-orthonormalize the coarse columns")
    p.add_argument("--moment-free-coarse", action=argparse.BooleanOptionalAction,
                   default=True,
                   help="remove the linear-polynomial part from coarse columns")
    p.add_argument("--solver", choices=("deflated", "gcr", "direct"), default="deflated")
    p.add_argument("--jobs", type=int, default=1, help="worker threads for sweep cells")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rbfdeflate", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _add_common(sub.add_parser("reconstruct", help="reconstruct one image"), sweep=False)
    _add_common(sub.add_parser("sweep", help="family x coarse size x tolerance grid"),
                sweep=True)
    return parser


def read_config_file(path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.lstrip("-")] = value
    return out


def _apply_config_file(argv) -> list[str]:
    """Prepend config-file entries as flags so explicit flags win."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return list(argv)
    try:
        entries = read_config_file(known.config)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    command, rest = argv[0], list(argv[1:])
    flags = []
    for key, value in entries.items():
        flag = "--" + key.replace("_", "-")
        if flag in ("--orthonormalize-coarse", "--moment-free-coarse"):
            on = value.lower() in ("1", "true", "yes", "on")
            flags.append(flag if on else "--no-" + flag[2:])
        elif flag == "--verbose":
            if value.lower() in ("1", "true", "yes", "on"):
                flags.append(flag)
        else:
            flags.extend([flag, value])
    # selection flags are mutually exclusive; an explicit one replaces the file's
    if any(a in rest for a in ("--stride", "--random-frac")):
        flags = _drop_flag(_drop_flag(flags, "--stride"), "--random-frac")
    return [command, *flags, *rest]


def _drop_flag(flags, name):
    out, skip = [], False
    for f in flags:
        if skip:
            skip = False
            continue
        if f == name:
            skip = True
            continue
        out.append(f)
    return out


def config_from_args(args) -> RunConfig:
    if not args.input:
        raise ConfigError("--input is required")
    if not args.out_dir:
        raise ConfigError("--out-dir is required")
    if not args.radius > 0:
        raise ConfigError("--radius must be positive")
    if args.random_frac is not None:
        if not 0 < args.random_frac <= 1:
            raise ConfigError("--random-frac must lie in (0, 1]")
        centers = CenterSelection.random(args.random_frac, args.seed)
    else:
        stride = DEFAULT_STRIDE if args.stride is None else args.stride
        if stride < 1:
            raise ConfigError("--stride must be >= 1")
        centers = CenterSelection.every(stride)
    cfg = RunConfig(
        input=args.input, out_dir=args.out_dir, radius=args.radius, centers=centers,
        bases=tuple(args.basis), coarse_sizes=tuple(args.coarse_sizes),
        tols=tuple(args.tols), max_iter=args.max_iter, seed=args.seed,
        orthonormalize=args.orthonormalize_coarse,
        moment_free=args.moment_free_coarse, solver=args.solver, jobs=args.jobs,
    )
    try:
        cfg.solver_config()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        if argv and argv[0] in ("reconstruct", "sweep"):
            argv = _apply_config_file(argv)
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = config_from_args(args)
        runner = run_sweep if args.command == "sweep" else run_reconstruct
        return runner(cfg)
    except ConfigError as exc:
        print(f"rbfdeflate: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ImageFormatError) as exc:
        print(f"rbfdeflate: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"rbfdeflate: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
