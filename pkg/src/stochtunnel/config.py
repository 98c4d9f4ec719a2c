"""Flat ``section.key = value`` run configuration.

Blank lines and ``#`` comments are ignored.  Every key must be known; values
are parsed against the schema below and missing keys take their defaults,
except ``run.seed`` which has none.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

from .errors import ConfigError

MODES = ("coefficients", "evolve", "paths", "tunneling-time", "channel-time", "sweep",
         "fp-check")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _points(text: str) -> tuple[tuple[float, float], ...]:
    out = []
    for item in text.split(","):
        if item.strip():
            r, d = item.split(":")
            out.append((float(r), float(d)))
    return tuple(out)


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _fmt(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return ",".join(f"{_fmt(a)}:{_fmt(b)}" for a, b in value)
        return ",".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


# key -> (parser, default, constraint description or None)
SCHEMA: dict[str, tuple[Callable[[str], Any], Any]] = {
    "barrier.v0": (float, 2.5),
    "barrier.u0": (float, 0.0),
    "barrier.d": (float, 3.0),
    "barrier.m": (float, 1.0),
    "barrier.hbar": (float, 1.0),
    "packet.k0": (float, 1.0),
    "packet.sigma": (float, 0.01),
    "packet.x0": (float, -250.0),
    "quad.n_nodes": (int, 257),
    "quad.half_width": (float, 12.0),
    "quad.rule": (str, "gauss-legendre"),
    "run.seed": (int, None),
    "run.n_walkers": (int, 10000),
    "run.dt": (float, 0.0),
    "run.t_start": (float, 0.0),
    "run.t_end": (float, 350.0),
    "run.probe_times": (_floats, (150.0, 250.0, 350.0)),
    "run.n_paths": (int, 3),
    "run.path_pool": (int, 400),
    "run.record_every": (int, 10),
    "run.t_final": (float, 0.0),
    "run.window": (float, 0.0),
    "run.refine_tol": (float, 0.02),
    "run.max_substeps": (int, 64),
    "run.bins": (int, 64),
    "run.no_crossing_limit": (float, 0.1),
    "sweep.kind": (str, "optical"),
    "sweep.ratios": (_floats, (0.0, 0.5, 1.0, 2.0)),
    "sweep.points": (_points, ((0.6, 6.0), (0.9, 6.0), (1.3, 6.0), (2.0, 6.0))),
    "coeff.n_scan": (int, 400),
    "fp.cells": (int, 5120),
    "fp.x_min": (float, -60.0),
    "fp.x_max": (float, 42.4),
    "fp.probe_times": (_floats, (15.0, 25.0, 35.0)),
    "fp.refresh": (float, 0.01),
    "fp.bins": (int, 64),
    "plot.enabled": (_bool, False),
}

POSITIVE = ("barrier.m", "barrier.hbar", "packet.k0", "packet.sigma", "quad.half_width",
            "fp.refresh", "run.refine_tol")
NONNEGATIVE = ("barrier.v0", "barrier.u0", "barrier.d", "run.n_walkers", "run.dt",
               "run.window", "run.n_paths", "coeff.n_scan")


@dataclass
class RunConfig:
    mode: str
    values: dict[str, Any]

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    @property
    def seed(self) -> int:
        return int(self.values["run.seed"])

    def manifest(self) -> str:
        """Resolved configuration, one sorted key per line."""
        lines = [f"mode = {self.mode}"]
        lines += [f"{k} = {_fmt(self.values[k])}" for k in sorted(self.values)]
        return "\n".join(lines) + "\n"

    # builders ---------------------------------------------------------------

    def barrier(self):
        from .wavefield import BarrierSpec
        v = self.values
        return BarrierSpec(v["barrier.v0"], v["barrier.u0"], v["barrier.d"], v["barrier.m"],
                           v["barrier.hbar"])

    def packet(self):
        from .wavefield import PacketSpec
        v = self.values
        return PacketSpec(v["packet.k0"], v["packet.sigma"], v["packet.x0"])

    def quadrature(self):
        from .wavefield import QuadratureSpec
        v = self.values
        return QuadratureSpec.around(self.packet(), v["quad.half_width"], v["quad.n_nodes"],
                                     v["quad.rule"])

    def channel_spec(self):
        from .channels import ChannelSpec
        v = self.values
        return ChannelSpec(v["barrier.v0"], v["barrier.u0"], v["barrier.d"], self.packet(),
                           v["barrier.m"], v["barrier.hbar"])

    @property
    def E0(self) -> float:
        v = self.values
        return v["barrier.hbar"] ** 2 * v["packet.k0"] ** 2 / (2 * v["barrier.m"])


def parse_text(text: str, mode: str, overrides: dict[str, str] | None = None) -> RunConfig:
    if mode not in MODES:
        raise ConfigError("mode", f"unknown mode {mode!r}; expected one of {', '.join(MODES)}")
    raw: dict[str, str] = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}", "expected key = value")
        key, val = (p.strip() for p in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(key, "unknown key")
        raw[key] = val
    raw.update(overrides or {})
    values: dict[str, Any] = {}
    for key, (parse, default) in SCHEMA.items():
        if key in raw:
            try:
                values[key] = parse(raw[key])
            except (ValueError, TypeError) as exc:
                raise ConfigError(key, f"cannot parse {raw[key]!r}: {exc}") from None
        else:
            values[key] = default
    _validate(values)
    return RunConfig(mode, values)


def _validate(v: dict[str, Any]) -> None:
    if v["run.seed"] is None:
        raise ConfigError("run.seed", "a master seed is required")
    if not 0 <= v["run.seed"] < 2**64:
        raise ConfigError("run.seed", "must be an unsigned 64-bit integer")
    for key in POSITIVE:
        if not (v[key] > 0 and math.isfinite(v[key])):
            raise ConfigError(key, "must be positive")
    for key in NONNEGATIVE:
        if not v[key] >= 0:
            raise ConfigError(key, "must be nonnegative")
    if v["quad.rule"] not in ("gauss-legendre", "midpoint"):
        raise ConfigError("quad.rule", "must be gauss-legendre or midpoint")
    if v["quad.n_nodes"] < 64:
        raise ConfigError("quad.n_nodes", "must be >= 64")
    if v["sweep.kind"] not in ("optical", "channel"):
        raise ConfigError("sweep.kind", "must be optical or channel")
    if v["run.max_substeps"] < 1:
        raise ConfigError("run.max_substeps", "must be >= 1")
    if v["run.t_end"] <= v["run.t_start"]:
        raise ConfigError("run.t_end", "must exceed run.t_start")
    if v["fp.x_max"] <= v["fp.x_min"]:
        raise ConfigError("fp.x_max", "must exceed fp.x_min")
    if v["fp.cells"] % v["fp.bins"]:
        raise ConfigError("fp.bins", "must divide fp.cells")
    if v["barrier.u0"] > 0 and v["barrier.v0"] == 0 and v["sweep.kind"] == "channel":
        raise ConfigError("barrier.v0", "channel runs need a positive barrier")


def load(path: str | Path, mode: str, overrides: dict[str, str] | None = None) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from None
    return parse_text(text, mode, overrides)
