"""Sectioned key-value run configuration.

Files use INI syntax.  Every key has a default except the ones that define
the model kind; unknown sections and keys are rejected so typos fail fast.
Builtin configurations ship with the package and are selected by name.
"""

from __future__ import annotations

import configparser
import math
import os
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from .fixedpoint import Init, IterationConfig, Scheme
from .grid import SpaceGrid, TimeGrid, build_linear_grid, build_log_grid, build_time_grid
from .mc import BIAS_CONST, SimConfig
from .model import ModelSpec
from .sweep import CLASSIFY_TOL, GAP_TOL

BUILTIN = ("paper_baseline", "paper_geometric", "lq_example")
OUT_ENV = "MFG_SOLVE_OUT"

_MODEL_KEYS = {f.name for f in fields(ModelSpec)} - {"validate"}
_KEYS = {
    "model": _MODEL_KEYS,
    "grid": {"x_min", "x_max", "n_x", "spacing"},
    "time": {"T", "dt"},
    "iteration": {"scheme", "init", "epsilon", "max_iter", "terminal_discounted",
                  "policy_sweeps", "fp_stop"},
    "sweep": {"xi_list", "xi_range", "gap_tol", "classify_tol", "thresholds"},
    "mc": {"n_paths", "seed", "substeps", "bias_const"},
    "output": {"dir", "fields", "mass"},
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GridConfig:
    x_min: float = math.exp(-15.0)
    x_max: float = math.exp(15.0)
    n_x: int = 501
    spacing: str = "log"

    def build(self) -> SpaceGrid:
        if self.spacing == "log":
            return build_log_grid(self.x_min, self.x_max, self.n_x)
        if self.spacing == "linear":
            return build_linear_grid(self.x_min, self.x_max, self.n_x)
        raise ConfigError(f"unknown grid spacing {self.spacing!r}")


@dataclass(frozen=True)
class SweepConfig:
    xi_values: Tuple[float, ...] = tuple(np.round(np.linspace(0.0, 6.0, 31), 12))
    gap_tol: float = GAP_TOL
    classify_tol: float = CLASSIFY_TOL
    thresholds: bool = True


@dataclass(frozen=True)
class RunConfig:
    """Everything a command needs; defaults reproduce the baseline experiment."""

    model: ModelSpec = field(default_factory=ModelSpec)
    grid: GridConfig = GridConfig()
    T: float = 1.0
    dt: float = 0.1
    iteration: IterationConfig = IterationConfig()
    sweep: SweepConfig = SweepConfig()
    mc: SimConfig = SimConfig()
    bias_const: float = BIAS_CONST
    out_dir: str = "mfg_out"
    write_fields: bool = True
    write_mass: bool = False
    source: str = "<defaults>"

    def space_grid(self) -> SpaceGrid:
        return self.grid.build()

    def time_grid(self) -> TimeGrid:
        return build_time_grid(self.T, self.dt)

    def with_overrides(self, xi=None, init=None, scheme=None, seed=None, out=None) -> "RunConfig":
        cfg = self
        if xi is not None:
            cfg = replace(cfg, model=cfg.model.with_(xi=float(xi)))
        it = cfg.iteration
        if init is not None:
            it = replace(it, init=Init.parse(init))
        if scheme is not None:
            it = replace(it, scheme=Scheme(scheme.upper()))
        if it is not cfg.iteration:
            cfg = replace(cfg, iteration=it)
        if seed is not None:
            cfg = replace(cfg, mc=replace(cfg.mc, seed=int(seed)))
        if out is not None:
            cfg = replace(cfg, out_dir=str(out))
        return cfg


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _floats(text: str):
    return [float(v) for v in text.replace(",", " ").split()]


def _xi_values(sec) -> Tuple[float, ...]:
    if "xi_list" in sec and "xi_range" in sec:
        raise ConfigError("[sweep] takes xi_list or xi_range, not both")
    if "xi_list" in sec:
        vals = _floats(sec["xi_list"])
    else:
        try:
            lo, hi, step = _floats(sec["xi_range"])
        except ValueError:
            raise ConfigError("xi_range needs 'start, stop, step'") from None
        if step <= 0 or hi < lo:
            raise ConfigError("xi_range needs step > 0 and stop >= start")
        n = int(math.floor((hi - lo) / step + 1e-9)) + 1
        vals = np.round(lo + step * np.arange(n), 12).tolist()
    if not vals:
        raise ConfigError("empty xi list")
    return tuple(vals)


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keys are case sensitive ("D", "T")
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    for name in cp.sections():
        if name not in _KEYS:
            raise ConfigError(f"{source}: unknown section [{name}]")
        unknown = set(cp[name]) - _KEYS[name]
        if unknown:
            raise ConfigError(f"{source}: unknown key(s) in [{name}]: {', '.join(sorted(unknown))}")

    def sec(name):
        return cp[name] if cp.has_section(name) else {}

    try:
        m = sec("model")
        kw = {k: (v if k in ("kind", "aggregator") else float(v)) for k, v in m.items()}
        model = ModelSpec(**kw)

        g = sec("grid")
        spacing = g.get("spacing", "log" if model.kind.isoelastic else "linear")
        gd = GridConfig()
        grid = GridConfig(
            x_min=float(g.get("x_min", gd.x_min)),
            x_max=float(g.get("x_max", gd.x_max)),
            n_x=int(g.get("n_x", gd.n_x)),
            spacing=spacing,
        )
        grid.build()

        t = sec("time")
        T, dt = float(t.get("T", 1.0)), float(t.get("dt", 0.1))
        build_time_grid(T, dt)

        i = sec("iteration")
        it = IterationConfig(
            epsilon=float(i.get("epsilon", 1e-6)),
            max_iter=int(i.get("max_iter", 500)),
            scheme=Scheme(i.get("scheme", "BANACH").upper()),
            init=Init.parse(i.get("init", "envelope_min")),
            terminal_discounted=_bool(i.get("terminal_discounted", "false")),
            policy_sweeps=int(i.get("policy_sweeps", IterationConfig.policy_sweeps)),
            fp_stop=i.get("fp_stop", "residual"),
        )

        s = sec("sweep")
        sd = SweepConfig()
        sweep = SweepConfig(
            xi_values=_xi_values(s) if ("xi_list" in s or "xi_range" in s) else sd.xi_values,
            gap_tol=float(s.get("gap_tol", sd.gap_tol)),
            classify_tol=float(s.get("classify_tol", sd.classify_tol)),
            thresholds=_bool(s.get("thresholds", "true")),
        )

        c = sec("mc")
        mc = SimConfig(
            n_paths=int(c.get("n_paths", 100_000)),
            seed=int(c.get("seed", 0)),
            substeps=int(c.get("substeps", 10)),
        )
        bias_const = float(c.get("bias_const", BIAS_CONST))

        o = sec("output")
        return RunConfig(
            model=model, grid=grid, T=T, dt=dt, iteration=it, sweep=sweep, mc=mc,
            bias_const=bias_const,
            out_dir=o.get("dir", "mfg_out"),
            write_fields=_bool(o.get("fields", "true")),
            write_mass=_bool(o.get("mass", "false")),
            source=source,
        )
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def builtin_text(name: str) -> str:
    return resources.files("mfg_solve.configs").joinpath(f"{name}.ini").read_text()


def load_config(ref: str) -> RunConfig:
    """Load a file path, or a builtin configuration by name."""
    path = Path(ref)
    if path.is_file():
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read {ref}: {exc}") from exc
        return parse_config(text, source=str(path))
    if ref in BUILTIN:
        return parse_config(builtin_text(ref), source=ref)
    raise ConfigError(f"no config file or builtin named {ref!r}")


def resolve_out_dir(cfg: RunConfig, flag: Optional[str] = None) -> Path:
    """``--out`` beats the environment variable, which beats the config file."""
    if flag:
        return Path(flag)
    env = os.environ.get(OUT_ENV)
    if env:
        return Path(env)
    return Path(cfg.out_dir)
