"""Experiment configuration read from flat ``key = value`` files.

Keys and their types (defaults in brackets):

    seed            int, required
    n               int grid size [256]
    eps             float cluster exponent [0.25]
    scales          "j0..j1", a comma list, or "all" (low-pass plus every band) [2..4]
    h0              float strip half-width before the schedule; 0 disables the mask [n/8]
    components      comma list from points, line, texture [points,line,texture]
    points          "x1:x2;x1:x2;..." or "default" [default]
    point_exponent  float [-0.5]
    line_rho        float half-length of the line in pixels [3n/8]
    line_weight     bump, hann or const [bump]
    texture_unit    int Gabor frequency unit [1]
    texture_seed    int [seed]
    normalize       bool, equalize component energies per band [true]
    noise           float relative noise level on the known part [0]
    mode            constrained, noisy or unconstrained [constrained]
    reg             l1 or l2sq (unconstrained mode) [l1]
    lam             "4^j" or a float [4^j]
    max_iters, tol, step_scale, restart_check   solver options
    kappa_trials    int random trials for the joint-concentration lower bound [0]
    workers         int thread pool size for per-scale solves [1]
    out             output directory [out]
    format          csv, raw or pgm for images [raw]
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

from . import io, windows
from .solver import MODES, SolverOptions

COMPONENTS = ("points", "line", "texture")
FORMATS = ("csv", "raw", "pgm")


class ConfigError(ValueError):
    pass


def _bool(v):
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


def _points(v):
    if str(v).strip() == "default":
        return None
    out = []
    for item in str(v).split(";"):
        item = item.strip()
        if not item:
            continue
        try:
            a, b = item.split(":")
            out.append((int(a), int(b)))
        except ValueError:
            raise ConfigError(f"bad point {item!r}; expected x1:x2") from None
    if not out:
        raise ConfigError("empty point list")
    return tuple(out)


def _scales(v):
    s = str(v).strip()
    if s == "all":
        return "all"
    if ".." in s:
        a, b = s.split("..")
        return tuple(range(int(a), int(b) + 1))
    return tuple(int(t) for t in s.split(",") if t.strip())


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    n: int = 256
    eps: float = 0.25
    scales: object = (2, 3, 4)
    h0: float | None = None
    components: tuple = COMPONENTS
    points: tuple | None = None
    point_exponent: float = -0.5
    line_rho: float | None = None
    line_weight: str = "bump"
    texture_unit: int = 1
    texture_seed: int | None = None
    normalize: bool = True
    noise: float = 0.0
    mode: str = "constrained"
    reg: str = "l1"
    lam: str = "4^j"
    max_iters: int = 2000
    tol: float = 1e-6
    step_scale: float = 0.9
    restart_check: int = 64
    kappa_trials: int = 0
    workers: int = 1
    out: str = "out"
    format: str = "raw"

    def __post_init__(self):
        self.validate()

    # -- derived values --------------------------------------------------
    @property
    def j_top(self):
        """Largest band index, the residual band above the last full corona."""
        return windows.max_scale(self.n) + 1

    def scale_list(self):
        """Solved scales; -1 stands for the low-pass band."""
        if self.scales == "all":
            return [-1] + list(range(self.j_top + 1))
        return list(self.scales)

    def strip0(self):
        return self.n / 8 if self.h0 is None else self.h0

    def rho(self):
        return 3 * self.n / 8 if self.line_rho is None else self.line_rho

    def tex_seed(self):
        return self.seed if self.texture_seed is None else self.texture_seed

    def lam_for(self, j):
        if self.lam.replace(" ", "") in ("4^j", "2^{2j}", "2^(2j)"):
            return 4.0 ** max(j, 0)
        return float(self.lam)

    def solver_options(self):
        return SolverOptions(max_iters=self.max_iters, tol=self.tol, step_scale=self.step_scale,
                             seed=self.seed, restart_check=self.restart_check)

    def validate(self):
        if self.seed is None or int(self.seed) < 0:
            raise ConfigError("seed is mandatory and must be a non-negative integer")
        if self.n < 8 or self.n & (self.n - 1):
            raise ConfigError(f"n must be a power of two >= 8, got {self.n}")
        if not 0 < self.eps < 1:
            raise ConfigError("eps must lie in (0, 1)")
        if self.scales != "all":
            if not self.scales:
                raise ConfigError("no scales selected")
            bad = [j for j in self.scales if not -1 <= j <= self.j_top]
            if bad:
                raise ConfigError(f"scales {bad} outside -1..{self.j_top} for n={self.n}")
        if self.strip0() < 0 or self.strip0() >= self.n / 2:
            raise ConfigError("h0 must lie in [0, n/2)")
        if not self.components or any(c not in COMPONENTS for c in self.components):
            raise ConfigError(f"components must be a non-empty subset of {COMPONENTS}")
        if len(set(self.components)) != len(self.components):
            raise ConfigError("duplicate component")
        if not 0 < self.rho() < self.n / 2:
            raise ConfigError("line_rho must lie in (0, n/2)")
        if self.points is not None:
            for p in self.points:
                if not all(0 <= v < self.n for v in p):
                    raise ConfigError(f"point {p} outside the grid")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.reg not in ("l1", "l2sq"):
            raise ConfigError("reg must be l1 or l2sq")
        if self.noise < 0:
            raise ConfigError("noise must be non-negative")
        if self.texture_unit < 1 or self.n % (2 * self.texture_unit):
            raise ConfigError("texture_unit must divide n / 2")
        if self.format not in FORMATS:
            raise ConfigError(f"format must be one of {FORMATS}")
        try:
            self.lam_for(1)
        except ValueError:
            raise ConfigError(f"bad lam {self.lam!r}") from None
        if self.max_iters < 1 or self.workers < 1 or self.kappa_trials < 0:
            raise ConfigError("max_iters and workers must be >= 1, kappa_trials >= 0")


_PARSERS = {
    "seed": int, "n": int, "eps": float, "scales": _scales, "h0": float,
    "components": lambda v: tuple(c.strip() for c in str(v).split(",") if c.strip()),
    "points": _points, "point_exponent": float, "line_rho": float, "line_weight": str,
    "texture_unit": int, "texture_seed": int, "normalize": _bool, "noise": float, "mode": str,
    "reg": str, "lam": str, "max_iters": int, "tol": float, "step_scale": float,
    "restart_check": int, "kappa_trials": int, "workers": int, "out": str, "format": str,
}


def from_mapping(items, **overrides):
    """Build a config from string values; ``overrides`` (already typed) win."""
    known = {f.name for f in fields(ExperimentConfig)}
    kw = {}
    for key, value in items.items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            kw[key] = _PARSERS[key](value)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key}: {value!r} ({exc})") from None
    kw.update({k: v for k, v in overrides.items() if v is not None})
    if "seed" not in kw:
        raise ConfigError("seed is mandatory")
    return ExperimentConfig(**kw)


def load_config(path, **overrides):
    try:
        items = io.read_kv(path)
    except io.FormatError as exc:
        raise ConfigError(str(exc)) from None
    return from_mapping(items, **overrides)


def to_mapping(cfg):
    """Inverse of from_mapping: string values that parse back to ``cfg``."""
    out = {}
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if v is None:
            continue
        if f.name == "scales":
            v = v if v == "all" else ",".join(str(j) for j in v)
        elif f.name == "components":
            v = ",".join(v)
        elif f.name == "points":
            v = ";".join(f"{a}:{b}" for a, b in v)
        elif isinstance(v, bool):
            v = "true" if v else "false"
        out[f.name] = str(v)
    return out


def with_overrides(cfg, **kw):
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
