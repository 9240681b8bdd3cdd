"""Flat JSON run configuration and the named initial-condition families."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .core import GridSpec, ScalarField, field_from_fn, read_snapshot
from .kinetics import Params

IC_FAMILIES = ("constant", "cosine_bump", "vacuum_disk", "random_smooth", "snapshot")

PARAM_KEYS = ("mu", "a", "gamma", "theta", "alpha", "beta")
GRID_KEYS = ("nx", "ny", "lx", "ly")
REQUIRED = PARAM_KEYS + ("nx", "ny", "ic", "t_end")

DEFAULTS = {
    "lx": 1.0,
    "ly": 1.0,
    "ic_value": 0.5,
    "ic_amplitude": 0.0,
    "ic_radius": 0.2,
    "ic_width": 0.1,
    "ic_path": None,
    "seed": 0,
    "cfl": 0.5,
    "tol": 1e-10,
    "sample_every": 10,
    "snapshot_times": [],
    "steady_tol": 1e-10,
    "dt_max": None,
    "delta": 0.5,
}


class ConfigError(ValueError):
    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class SimConfig:
    params: Params
    grid: GridSpec
    ic: str
    t_end: float
    ic_value: float = 0.5
    ic_amplitude: float = 0.0
    ic_radius: float = 0.2
    ic_width: float = 0.1
    ic_path: str | None = None
    seed: int = 0
    cfl: float = 0.5
    tol: float = 1e-10
    sample_every: int = 10
    snapshot_times: tuple = field(default_factory=tuple)
    steady_tol: float = 1e-10
    dt_max: float | None = None
    delta: float = 0.5

    def __post_init__(self):
        if self.ic not in IC_FAMILIES:
            raise ConfigError("ic", f"unknown family {self.ic!r}; choose from {', '.join(IC_FAMILIES)}")
        if self.ic == "snapshot" and not self.ic_path:
            raise ConfigError("ic_path", "required when ic is 'snapshot'")
        _positive("t_end", self.t_end)
        if not 0 < self.cfl <= 1:
            raise ConfigError("cfl", f"must lie in (0, 1], got {self.cfl}")
        _positive("tol", self.tol)
        if int(self.sample_every) != self.sample_every or self.sample_every < 1:
            raise ConfigError("sample_every", f"must be a positive integer, got {self.sample_every}")
        if self.steady_tol < 0:
            raise ConfigError("steady_tol", "must be >= 0 (0 disables steady-state detection)")
        if self.dt_max is not None:
            _positive("dt_max", self.dt_max)
        if self.ic_value < 0:
            raise ConfigError("ic_value", "must be >= 0")
        _positive("delta", self.delta)
        times = tuple(float(t) for t in self.snapshot_times)
        if any(not 0 <= t <= self.t_end for t in times):
            raise ConfigError("snapshot_times", "entries must lie in [0, t_end]")
        object.__setattr__(self, "snapshot_times", tuple(sorted(times)))

    def to_dict(self) -> dict:
        d = dict(self.params.as_dict())
        d.update(nx=self.grid.nx, ny=self.grid.ny, lx=self.grid.lx, ly=self.grid.ly)
        for f in fields(self):
            if f.name in ("params", "grid"):
                continue
            v = getattr(self, f.name)
            d[f.name] = list(v) if isinstance(v, tuple) else v
        return d

    def with_updates(self, **kw) -> SimConfig:
        return replace(self, **kw)


def _positive(key, v):
    if not (isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v) and v > 0):
        raise ConfigError(key, f"must be a positive number, got {v!r}")


def config_from_dict(d: dict) -> SimConfig:
    if not isinstance(d, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    known = set(REQUIRED) | set(DEFAULTS)
    for key in d:
        if key not in known:
            raise ConfigError(key, "unknown key")
    for key in REQUIRED:
        if key not in d:
            raise ConfigError(key, "missing required key")
    vals = dict(DEFAULTS)
    vals.update(d)
    for key, v in vals.items():
        if isinstance(v, dict):
            raise ConfigError(key, "nested objects are not allowed")
    pk = {}
    for key in PARAM_KEYS:
        _positive(key, vals[key])
        pk[key] = float(vals[key])
    try:
        params = Params(**pk)
    except ValueError as exc:
        raise ConfigError("gamma", str(exc)) from None
    for key in ("nx", "ny"):
        v = vals[key]
        if isinstance(v, bool) or not isinstance(v, int) or v < 1:
            raise ConfigError(key, f"must be a positive integer, got {v!r}")
    for key in ("lx", "ly"):
        _positive(key, vals[key])
    grid = GridSpec(vals["nx"], vals["ny"], float(vals["lx"]), float(vals["ly"]))
    snaps = vals["snapshot_times"]
    if not isinstance(snaps, (list, tuple)):
        raise ConfigError("snapshot_times", "must be a list of times")
    kw = {k: vals[k] for k in DEFAULTS if k not in GRID_KEYS}
    kw["snapshot_times"] = tuple(snaps)
    for key in ("ic_value", "ic_amplitude", "ic_radius", "ic_width", "cfl", "tol", "steady_tol", "delta"):
        v = kw[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ConfigError(key, f"must be a finite number, got {v!r}")
        kw[key] = float(v)
    if not isinstance(vals["t_end"], (int, float)) or isinstance(vals["t_end"], bool):
        raise ConfigError("t_end", f"must be a number, got {vals['t_end']!r}")
    if not isinstance(kw["seed"], int) or isinstance(kw["seed"], bool):
        raise ConfigError("seed", "must be an integer")
    if not isinstance(vals["ic"], str):
        raise ConfigError("ic", "must be a string")
    return SimConfig(params=params, grid=grid, ic=vals["ic"], t_end=float(vals["t_end"]), **kw)


def parse_config(text: str) -> SimConfig:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<root>", f"invalid JSON: {exc}") from None
    return config_from_dict(d)


def serialize_config(cfg: SimConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True)


def smooth_step(s):
    """C-infinity step: 0 for s <= 0, 1 for s >= 1."""
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        f0 = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
        f1 = np.where(s < 1, np.exp(-1.0 / np.where(s < 1, 1.0 - s, 1.0)), 0.0)
    return f0 / (f0 + f1)


def initial_condition(cfg: SimConfig) -> ScalarField:
    g = cfg.grid
    if cfg.ic == "constant":
        return field_from_fn(g, lambda x, y: cfg.ic_value)
    if cfg.ic == "cosine_bump":
        if abs(cfg.ic_amplitude) > cfg.ic_value:
            raise ConfigError("ic_amplitude", "cosine bump would make the density negative")
        return field_from_fn(
            g,
            lambda x, y: cfg.ic_value
            + cfg.ic_amplitude * np.cos(np.pi * x / g.lx) * np.cos(np.pi * y / g.ly),
        )
    if cfg.ic == "vacuum_disk":
        cx, cy = 0.5 * g.lx, 0.5 * g.ly

        def disk(x, y):
            r = np.hypot(x - cx, y - cy)
            return cfg.ic_value * smooth_step((r - cfg.ic_radius) / cfg.ic_width)

        return field_from_fn(g, disk)
    if cfg.ic == "random_smooth":
        rng = np.random.default_rng(cfg.seed)
        x, y = g.mesh()
        acc = np.zeros(g.shape)
        for kx in range(4):
            for ky in range(4):
                if kx == ky == 0:
                    continue
                c = rng.normal() / (1 + kx * kx + ky * ky)
                acc += c * np.cos(kx * np.pi * x / g.lx) * np.cos(ky * np.pi * y / g.ly)
        peak = np.abs(acc).max()
        if peak > 0:
            acc /= peak
        return ScalarField(g, np.maximum(cfg.ic_value + cfg.ic_amplitude * acc, 0.0))
    fld, _ = read_snapshot(cfg.ic_path)
    if fld.grid != g:
        raise ConfigError("ic_path", f"snapshot grid {fld.grid} does not match config grid {g}")
    if fld.min() < 0:
        raise ConfigError("ic_path", "snapshot density has negative values")
    return fld
