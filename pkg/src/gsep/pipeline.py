"""End-to-end experiment: phantoms, degradation, per-scale separation and
inpainting, reassembly, certificates and report files.

Scale index -1 denotes the low-pass band.  Its strip is h0; band j uses the
schedule h_j.  A zero h0 switches the mask off altogether.
"""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import io
from .config import COMPONENTS, to_mapping
from .diagnostics import (CSV_COLUMNS, certificate_rows, check_lambda_condition,
                          cluster_gabor, cluster_shearlet, cluster_wavelet, decay_suite, error_certificate,
                          kappa_sampled_lower_bound, kappa_upper_bound, relative_sparsity, rows_to_csv)
from .frames import build_gabor_frame, build_shearlet_frame, build_wavelet_frame
from .grid import FrequencyGrid, StripMask, l2
from .multiscale import decompose, reconstruct
from .phantoms import (LineSegment, PointCloud, default_points, degrade, gen_line, gen_points, gen_texture,
                       normalize_band_energies, random_texture, strip_schedule)
from .solver import SeparationProblem, SolverError, residual_report, solve_per_scale

log = logging.getLogger(__name__)

ERROR_COLUMNS = ("j", "h", "e_points", "e_line", "e_texture", "e_sum", "abs_sum", "iterations", "converged")
RUNTIME_COLUMNS = ("stage", "seconds")
COHERENCE_COLUMNS = ("j", "quantity", "mu")


class PipelineError(RuntimeError):
    """A stage failed; ``stage`` and ``scale`` say where."""

    def __init__(self, stage, scale, msg):
        super().__init__(f"{stage} failed at scale {scale}: {msg}")
        self.stage = stage
        self.scale = scale


@dataclass
class ScaleReport:
    j: int
    h: float
    errors: list  # relative error per component, None when the truth is zero
    error_sum: float
    abs_errors: list
    iterations: int
    converged: bool
    seconds: float
    certificate: object = None
    lambda_check: dict | None = None
    sound: bool | None = None  # observed error sum <= certificate bound (valid certificates only)


@dataclass
class Report:
    config: object
    names: tuple
    scales: list
    components: list  # reassembled recovered components
    truth: list
    observed: np.ndarray
    bands: dict = field(default_factory=dict)  # j -> recovered band images, one per component
    observed_bands: dict = field(default_factory=dict)  # j -> (observation, mask)
    coherence: dict = field(default_factory=dict)  # j -> {quantity: mu}
    runtime: dict = field(default_factory=dict)

    def scale(self, j):
        for s in self.scales:
            if s.j == j:
                return s
        raise KeyError(j)

    def error_rows(self):
        rows = []
        for s in self.scales:
            e = {name: s.errors[m] for m, name in enumerate(self.names)}
            rows.append(dict(j=s.j, h=s.h, e_points=e.get("points"), e_line=e.get("line"),
                             e_texture=e.get("texture"), e_sum=s.error_sum, abs_sum=float(sum(s.abs_errors)),
                             iterations=s.iterations, converged=s.converged))
        return rows

    def runtime_rows(self):
        rows = [dict(stage=k, seconds=v) for k, v in self.runtime.items()]
        return rows + [dict(stage=f"scale_{s.j}", seconds=s.seconds) for s in self.scales]

    def certificate_rows(self):
        rows = []
        for s in self.scales:
            if s.certificate is not None:
                rows.extend(certificate_rows(s.j, s.certificate, self.names))
        return rows

    def coherence_rows(self):
        return [dict(j=j, quantity=q, mu=v) for j in sorted(self.coherence) for q, v in self.coherence[j].items()]


def _mask(cfg, j):
    h0 = cfg.strip0()
    if h0 == 0:
        return None
    return StripMask(cfg.n, h0 if j < 0 else strip_schedule(h0, cfg.eps, j))


def make_phantoms(cfg):
    """Component images named as in ``cfg.components`` plus the texture spec."""
    g = FrequencyGrid(cfg.n)
    imgs = {}
    tex = random_texture(g, cfg.eps, cfg.tex_seed(), unit=cfg.texture_unit)
    if "points" in cfg.components:
        cloud = default_points(cfg.n) if cfg.points is None else PointCloud(tuple(cfg.points))
        imgs["points"] = gen_points(g, cloud, exponent=cfg.point_exponent)
    if "line" in cfg.components:
        imgs["line"] = gen_line(g, LineSegment(cfg.rho(), cfg.line_weight))
    if "texture" in cfg.components:
        imgs["texture"] = gen_texture(g, tex)
    return [imgs[c] for c in cfg.components], tex


def build_frames(cfg):
    g = FrequencyGrid(cfg.n)
    build = {"points": build_wavelet_frame, "line": build_shearlet_frame,
             "texture": lambda gg: build_gabor_frame(gg, unit=cfg.texture_unit)}
    return [build[c](g) for c in cfg.components]


def _clusters(cfg, frames, j, tex):
    out = []
    pts = (default_points(cfg.n) if cfg.points is None else PointCloud(tuple(cfg.points))).positions
    for name, fr in zip(cfg.components, frames):
        if name == "points":
            out.append(cluster_wavelet(fr, j, cfg.eps, pts))
        elif name == "line":
            out.append(cluster_shearlet(fr, j, cfg.eps))
        else:
            out.append(cluster_gabor(fr, j, cfg.eps, tex.bands))
    return out


def _band(stack, j):
    return stack.low if j < 0 else stack.band(j)


def run(cfg, components=None, write=True, coherence=None):
    """Run the experiment described by ``cfg``.

    ``components`` may supply the ground-truth images (in ``cfg.components``
    order) instead of generating them.  ``coherence`` (default: when all three
    components are present) adds the decay-suite table for scales >= 0.
    """
    t0 = time.perf_counter()
    names = tuple(cfg.components)
    tex = random_texture(FrequencyGrid(cfg.n), cfg.eps, cfg.tex_seed(), unit=cfg.texture_unit)
    if components is None:
        components, _ = make_phantoms(cfg)
    components = [np.asarray(c, dtype=complex) for c in components]
    if len(components) != len(names):
        raise PipelineError("phantoms", None, f"{len(names)} components configured, {len(components)} given")
    stacks = [decompose(c) for c in components]
    if cfg.normalize and len(stacks) > 1:
        stacks, _ = normalize_band_energies(stacks)
    truth = [reconstruct(s) for s in stacks]
    frames = build_frames(cfg)
    t_setup = time.perf_counter() - t0

    scales = cfg.scale_list()
    problems, info = {}, {}
    for j in scales:
        mask = _mask(cfg, j)
        bands = [_band(s, j) for s in stacks]
        total = sum(bands)
        if mask is None:
            y, eta, noise_l1 = total + 0, np.zeros_like(total), {}
        else:
            y, eta, noise_l1 = degrade(total, mask, cfg.noise, cfg.seed + j + 1, frames if cfg.noise else None)
        if mask is None and cfg.noise:
            rng = np.random.default_rng(cfg.seed + j + 1)
            eta = rng.standard_normal(total.shape) + 0j
            eta *= cfg.noise * l2(total) / max(l2(eta), 1e-300)
            y = total + eta
            noise_l1 = {fr.kind: fr.analyze(eta).l1() for fr in frames}
        mode = cfg.mode
        if mode == "constrained" and cfg.noise:
            mode = "noisy"
        problems[j] = SeparationProblem(y, mask, frames, mode, cfg.lam_for(j), cfg.reg, cfg.solver_options())
        info[j] = (mask, bands, max(noise_l1.values()) if noise_l1 else 0.0)

    t1 = time.perf_counter()
    results = solve_per_scale(problems, cfg.lam_for if cfg.mode == "unconstrained" else None, cfg.workers)
    t_solve = time.perf_counter() - t1

    reports = []
    failed = []
    recovered = {}
    for j in scales:
        r = results[j]
        mask, bands, noise = info[j]
        h = 0.0 if mask is None else float(mask.h)
        if isinstance(r, Exception):
            failed.append((j, r))
            continue
        recovered[j] = r.components
        errs, tot = residual_report(r.components, bands)
        abs_err = [l2(a - b) for a, b in zip(r.components, bands)]
        sr = ScaleReport(j, h, errs, tot, abs_err, r.iterations, r.converged, r.seconds)
        if j >= 0:
            tc = time.perf_counter()
            cl = _clusters(cfg, frames, j, tex)
            deltas = [relative_sparsity(fr.analyze(b), c) for fr, b, c in zip(frames, bands, cl)]
            kb = kappa_upper_bound(frames, cl, mask)
            klo = float("nan")
            if cfg.kappa_trials:
                klo = kappa_sampled_lower_bound(frames, cl, mask, cfg.kappa_trials, cfg.seed + j)
            sr.certificate = error_certificate(deltas, kb.mu, noise, mu_sep=kb.mu_sep, mu_inp=kb.mu_inp,
                                               kappa_lo=klo, table=kb.table)
            sr.lambda_check = check_lambda_condition(cl, cfg.lam_for(j))
            if sr.certificate.valid:
                sr.sound = float(sum(abs_err)) <= sr.certificate.bound * (1 + 1e-9)
            sr.seconds += time.perf_counter() - tc
        reports.append(sr)
    if failed:
        j, exc = failed[0]
        raise PipelineError("solve", j, exc)

    # reassembly: recovered bands where solved, zero elsewhere
    comps = []
    for m, st in enumerate(stacks):
        z = np.zeros((cfg.n, cfg.n), dtype=complex)
        low = recovered[-1][m] if -1 in recovered else z
        bands = [(j, recovered[j][m] if j in recovered else z) for j, _ in st.bands]
        comps.append(reconstruct(st.with_bands(bands, low=low)))

    z = np.zeros((cfg.n, cfg.n), dtype=complex)
    obs_low = problems[-1].observed if -1 in problems else z
    observed = reconstruct(stacks[0].with_bands(
        [(j, problems[j].observed if j in problems else z) for j, _ in stacks[0].bands], low=obs_low))
    coh = {}
    if coherence is None:
        coherence = tuple(names) == COMPONENTS
    if coherence:
        pts = (default_points(cfg.n) if cfg.points is None else PointCloud(tuple(cfg.points))).positions
        for j in scales:
            if j >= 0:
                coh[j] = decay_suite(frames, j, cfg.eps, pts, tex.bands, _mask(cfg, j))
    runtime = {"setup": t_setup, "solve": t_solve, "total": time.perf_counter() - t0}
    obs = {j: (problems[j].observed, problems[j].mask) for j in scales}
    rep = Report(cfg, names, reports, comps, truth, observed, recovered, obs, coh, runtime)
    if write:
        write_report(rep, cfg.out, cfg.format, results)
    return rep


def write_image(path_base, img, fmt):
    if fmt == "raw":
        io.write_raw(path_base + ".raw", img)
    elif fmt == "pgm":
        io.write_pgm(path_base + ".pgm", img)
    else:
        lines = "\n".join(",".join(f"{v:.10g}" for v in row) for row in np.real(img))
        io.atomic_write(path_base + ".csv", lines + "\n", mode="w")


def write_report(rep, out, fmt="raw", results=None):
    os.makedirs(out, exist_ok=True)
    io.atomic_write(os.path.join(out, "errors.csv"), rows_to_csv(rep.error_rows(), ERROR_COLUMNS), mode="w")
    io.atomic_write(os.path.join(out, "certificate.csv"), rows_to_csv(rep.certificate_rows(), CSV_COLUMNS),
                    mode="w")
    if rep.coherence:
        io.atomic_write(os.path.join(out, "coherence.csv"),
                        rows_to_csv(rep.coherence_rows(), COHERENCE_COLUMNS), mode="w")
    for name, img in zip(rep.names, rep.components):
        write_image(os.path.join(out, f"recovered_{name}"), img, fmt)
    write_image(os.path.join(out, "observed"), rep.observed, fmt)
    if results:
        for j, r in results.items():
            if isinstance(r, Exception):
                continue
            rows = [dict(iter=i, objective=o, residual=res, step=st) for i, o, res, st in r.trace_rows()]
            io.atomic_write(os.path.join(out, f"trace_{j}.csv"),
                            rows_to_csv(rows, ("iter", "objective", "residual", "step")), mode="w")
    # timings live apart from the deterministic tables
    io.atomic_write(os.path.join(out, "runtime.csv"), rows_to_csv(rep.runtime_rows(), RUNTIME_COLUMNS), mode="w")
    io.atomic_write(os.path.join(out, "report.cfg"), io.format_kv(to_mapping(rep.config)), mode="w")


def coherence_table(cfg):
    """Certificate inputs (mu table, deltas, bound) per scale without solving."""
    names = tuple(cfg.components)
    comps, tex = make_phantoms(cfg)
    stacks = [decompose(c) for c in comps]
    if cfg.normalize and len(stacks) > 1:
        stacks, _ = normalize_band_energies(stacks)
    frames = build_frames(cfg)
    rows = []
    for j in cfg.scale_list():
        if j < 0:
            continue
        mask = _mask(cfg, j)
        cl = _clusters(cfg, frames, j, tex)
        deltas = [relative_sparsity(fr.analyze(st.band(j)), c) for fr, st, c in zip(frames, stacks, cl)]
        kb = kappa_upper_bound(frames, cl, mask)
        klo = float("nan")
        if cfg.kappa_trials:
            klo = kappa_sampled_lower_bound(frames, cl, mask, cfg.kappa_trials, cfg.seed + j)
        cert = error_certificate(deltas, kb.mu, mu_sep=kb.mu_sep, mu_inp=kb.mu_inp, kappa_lo=klo, table=kb.table)
        rows.extend(certificate_rows(j, cert, names))
    return rows


def is_numerical(exc):
    """True for failures of the numerics (as opposed to bad input)."""
    if isinstance(exc, PipelineError):
        return exc.stage == "solve"
    return isinstance(exc, (SolverError, FloatingPointError))
