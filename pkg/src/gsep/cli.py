"""Command line: gen, separate, coherence and bench subcommands.

Exit codes: 0 success, 1 usage or input error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time

import numpy as np

from . import io
from .config import FORMATS, ConfigError, ExperimentConfig, load_config, to_mapping
from .diagnostics import CSV_COLUMNS, DiagnosticsError, rows_to_csv
from .frames import FrameError
from .grid import GridError, StripMask
from .phantoms import PhantomError
from .pipeline import ERROR_COLUMNS, build_frames, coherence_table, is_numerical, make_phantoms, run, write_image
from .solver import SeparationProblem, SolverOptions, solve

log = logging.getLogger("gsep")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="key = value experiment file")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--format", choices=FORMATS, help="image format")
    common.add_argument("-v", "--verbose", action="store_true")
    p = _Parser(prog="gsep", description="Multiscale separation and inpainting of points, lines and texture.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True
    sub.add_parser("gen", parents=[common], help="write phantom components and the observation")
    sp = sub.add_parser("separate", parents=[common], help="run the experiment")
    sp.add_argument("--input", metavar="DIR", help="use the raw components written by gen")
    sub.add_parser("coherence", parents=[common], help="certificate table only, CSV to stdout")
    bp = sub.add_parser("bench", parents=[common], help="time transforms and a short solve")
    bp.add_argument("--iters", type=int, default=20)
    return p


def _config(args):
    over = dict(seed=args.seed, out=args.out, format=args.format)
    if args.config:
        if not os.path.exists(args.config):
            raise UsageError(f"config file not found: {args.config}")
        return load_config(args.config, **over)
    if args.seed is None:
        raise UsageError("either --config or --seed is required")
    return ExperimentConfig(**{k: v for k, v in over.items() if v is not None})


def cmd_gen(cfg):
    comps, tex = make_phantoms(cfg)
    os.makedirs(cfg.out, exist_ok=True)
    for name, img in zip(cfg.components, comps):
        write_image(os.path.join(cfg.out, name), img, cfg.format)
        if cfg.format != "raw":
            io.write_raw(os.path.join(cfg.out, name + ".raw"), img)  # lossless copy for `separate --input`
    write_image(os.path.join(cfg.out, "sum"), sum(comps), cfg.format)
    io.atomic_write(os.path.join(cfg.out, "phantom.cfg"), io.format_kv(to_mapping(cfg)), mode="w")
    print(f"wrote {len(comps)} components to {cfg.out}")
    return 0


def cmd_separate(cfg, input_dir=None):
    comps = None
    if input_dir:
        comps = []
        for name in cfg.components:
            path = os.path.join(input_dir, name + ".raw")
            if not os.path.exists(path):
                raise UsageError(f"missing component file {path}")
            img = io.read_raw(path)
            if img.shape != (cfg.n, cfg.n):
                raise UsageError(f"{path} is {img.shape[0]}x{img.shape[1]}, config says n={cfg.n}")
            comps.append(img)
    rep = run(cfg, comps)
    sys.stdout.write(rows_to_csv(rep.error_rows(), ERROR_COLUMNS))
    return 0


def cmd_coherence(cfg):
    sys.stdout.write(rows_to_csv(coherence_table(cfg), CSV_COLUMNS))
    return 0


def cmd_bench(cfg, iters):
    rng = np.random.default_rng(cfg.seed)
    x = rng.standard_normal((cfg.n, cfg.n)) + 0j
    rows = []
    t = time.perf_counter()
    frames = build_frames(cfg)
    rows.append(dict(task="build", seconds=time.perf_counter() - t))
    for fr in frames:
        t = time.perf_counter()
        c = fr.analyze(x)
        rows.append(dict(task=f"analyze_{fr.kind}", seconds=time.perf_counter() - t))
        t = time.perf_counter()
        fr.synthesize(c)
        rows.append(dict(task=f"synthesize_{fr.kind}", seconds=time.perf_counter() - t))
    t = time.perf_counter()
    mask = None if cfg.strip0() == 0 else StripMask(cfg.n, cfg.strip0())
    solve(SeparationProblem(x, mask, frames, options=SolverOptions(max_iters=iters, tol=0.0)))
    rows.append(dict(task=f"solve_{iters}_iters", seconds=time.perf_counter() - t))
    sys.stdout.write(rows_to_csv(rows, ("task", "seconds")))
    return 0


def main(argv=None):
    try:
        args = _parser().parse_args(argv)
    except UsageError as exc:
        print(f"gsep: error: {exc}", file=sys.stderr)
        _parser().print_usage(sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _config(args)
        if args.command == "gen":
            return cmd_gen(cfg)
        if args.command == "separate":
            return cmd_separate(cfg, args.input)
        if args.command == "coherence":
            return cmd_coherence(cfg)
        return cmd_bench(cfg, args.iters)
    except (UsageError, ConfigError, io.FormatError, PhantomError, GridError, FrameError) as exc:
        print(f"gsep: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - map numerical failures to exit code 2
        if is_numerical(exc) or isinstance(exc, (DiagnosticsError, ArithmeticError)):
            print(f"gsep: numerical failure: {exc}", file=sys.stderr)
            return 2
        raise


if __name__ == "__main__":
    sys.exit(main())
