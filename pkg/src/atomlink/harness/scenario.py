"""Scenario files: INI-style ``key = value`` blocks under section headers.

A scenario has a ``[scenario]`` section with ``mode`` and ``seed`` and one
optional section per module holding its parameters, e.g.::

    [scenario]
    mode = scan
    seed = 7

    [scan]
    steps = 9
    extent = 2.0
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

MODES = ("scan", "fluorescence", "entanglement", "fit-bloch", "fit-fringe", "wgs", "plan")
STOCHASTIC = {"scan", "fluorescence", "entanglement", "fit-bloch", "fit-fringe", "wgs"}


class ScenarioError(ValueError):
    """Schema violation; ``path`` names the offending ``section.key``."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s: str) -> tuple[float, ...]:
    return tuple(float(x) for x in s.replace(",", " ").split())


@dataclass(frozen=True)
class Field:
    parse: Callable[[str], Any]
    default: Any
    check: Callable[[Any], bool] = lambda v: True
    hint: str = ""


pos = lambda v: v > 0  # noqa: E731
nonneg = lambda v: v >= 0  # noqa: E731
prob = lambda v: 0 <= v <= 1  # noqa: E731


SCHEMA: dict[str, dict[str, Field]] = {
    "scan": {
        "steps": Field(int, 9, pos, "positive integer"),
        "extent": Field(float, 2.0, nonneg, "non-negative um"),
        "trials": Field(int, 200, pos, "positive integer"),
        "exposure_ms": Field(float, 30.0, pos, "positive ms"),
        "fluorescence_rate": Field(float, 1000.0, nonneg, "non-negative Hz"),
        "background_rate": Field(float, 25.0, nonneg, "non-negative Hz"),
        "loading_probability": Field(float, 0.5, prob, "probability"),
        "optimum": Field(_floats, (0.0, 0.0, 0.0), lambda v: len(v) == 3, "three numbers"),
    },
    "sequence": {
        "n_sequences": Field(int, 3000, nonneg, "non-negative integer"),
        "trials_per_cycle": Field(int, 40, pos, "positive integer"),
        "loading_probability": Field(float, 0.5, prob, "probability"),
        "detection_slot": Field(float, 10.0, pos, "positive us"),
        "heating_loss_per_run": Field(float, 0.05, prob, "probability"),
        "pushout_error": Field(float, 0.02, prob, "probability"),
        "pushout_repeats": Field(int, 5, pos, "positive integer"),
        "block_size": Field(int, 1024, pos, "positive integer"),
    },
    "chain": {
        "p_init": Field(float, 0.9, prob, "probability"),
        "eta_ext": Field(float, 0.67, prob, "probability"),
        "eta_fiber": Field(float, 0.8, prob, "probability"),
        "eta_det": Field(float, 0.8, prob, "probability"),
        "eta_net": Field(_floats, None, lambda v: all(0 <= x <= 1 for x in v), "probabilities"),
        "background_rate": Field(_floats, None, lambda v: all(x >= 0 for x in v), "non-negative Hz"),
        "detection_window": Field(float, 100.0, pos, "positive ns"),
    },
    "entanglement": {
        "basis": Field(str, "circular", lambda v: v in ("circular", "linear"), "circular or linear"),
        "angles": Field(int, 16, lambda v: v >= 4, "at least 4"),
        "sequences_per_angle": Field(int, 20000, pos, "positive integer"),
        "imperfect": Field(_bool, False, hint="boolean"),
        "tilt": Field(float, 0.17, nonneg, "non-negative rad"),
        "channel": Field(int, 0, nonneg, "channel index"),
        "init_failure": Field(str, "no-photon", lambda v: v in ("no-photon", "depolarized"), "no-photon or depolarized"),
    },
    "fit-bloch": {
        "profile": Field(str, "", hint="path to a two-column (t_ns, counts) file; empty for synthetic data"),
        "counts": Field(float, 1e4, pos, "positive total counts"),
        "pulse_family": Field(str, "smoothed_square", lambda v: v in ("smoothed_square", "gaussian"), "pulse family"),
        "max_iter": Field(int, 500, pos, "positive integer"),
    },
    "fit-fringe": {
        "data": Field(str, "", hint="path to a CSV (angle, successes, trials); empty for synthetic data"),
        "A": Field(float, 0.41, nonneg, "amplitude"),
        "B": Field(float, 0.3, hint="phase"),
        "C": Field(float, 0.51, pos, "offset"),
        "angles": Field(int, 16, lambda v: v >= 4, "at least 4"),
        "trials": Field(int, 100, pos, "positive integer"),
        "angle_factor": Field(float, 2.0, pos, "positive"),
    },
    "wgs": {
        "n_sites": Field(int, 10, pos, "positive integer"),
        "spacing": Field(float, 7.5, pos, "positive um"),
        "grid": Field(int, 512, lambda v: v >= 2 and v & (v - 1) == 0, "power of two"),
        "iterations": Field(int, 50, pos, "positive integer"),
        "pitch": Field(float, 0.75, pos, "positive um per focal sample"),
    },
    "plan": {
        "distance": Field(float, 55.0, pos, "positive km"),
        "tau": Field(float, 20.0, pos, "positive us"),
        "shuttle_spacing": Field(float, 5.0, pos, "positive um"),
        "shuttle_speed": Field(float, 0.3, pos, "positive um/us"),
        "fov": Field(float, 1500.0, pos, "positive um"),
        "site_spacing": Field(float, 7.5, pos, "positive um"),
        "available_qubits": Field(int, 6000, pos, "positive integer"),
        "success_prob": Field(float, 0.004, lambda v: 0 < v <= 1, "probability"),
        "attempt_period": Field(float, 1.0, pos, "positive us"),
        "duration": Field(float, 2.0, pos, "positive ms"),
        "modes": Field(int, 100, pos, "positive integer"),
    },
}

MODE_SECTIONS = {
    "scan": ("scan",),
    "fluorescence": ("sequence", "chain"),
    "entanglement": ("sequence", "chain", "entanglement"),
    "fit-bloch": ("fit-bloch",),
    "fit-fringe": ("fit-fringe",),
    "wgs": ("wgs",),
    "plan": ("plan",),
}


@dataclass(frozen=True)
class Scenario:
    mode: str
    seed: int | None
    params: dict[str, dict[str, Any]] = field(default_factory=dict)

    def section(self, name: str) -> dict[str, Any]:
        return self.params[name]

    def canonical(self) -> dict:
        return {"mode": self.mode, "seed": self.seed, "params": self.params}

    def digest(self) -> str:
        text = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"), default=list)
        return hashlib.sha256(text.encode()).hexdigest()


def _parse_section(name: str, raw: dict[str, str]) -> dict[str, Any]:
    schema = SCHEMA[name]
    out = {k: f.default for k, f in schema.items()}
    for key, text in raw.items():
        if key not in schema:
            raise ScenarioError(f"{name}.{key}", "unknown parameter")
        f = schema[key]
        try:
            val = f.parse(text)
        except (TypeError, ValueError):
            raise ScenarioError(f"{name}.{key}", f"cannot parse {text!r} (expected {f.hint})") from None
        if not f.check(val):
            raise ScenarioError(f"{name}.{key}", f"value {text!r} out of range (expected {f.hint})")
        out[key] = val
    return out


def build_scenario(mode: str, seed: int | None = None, sections: dict[str, dict[str, str]] | None = None) -> Scenario:
    """Validate raw string parameters and fill defaults."""
    if mode not in MODES:
        raise ScenarioError("scenario.mode", f"unknown mode {mode!r}; choose from {', '.join(MODES)}")
    sections = sections or {}
    for name in sections:
        if name not in MODE_SECTIONS[mode]:
            raise ScenarioError(name, f"section not used by mode {mode!r}")
    params = {name: _parse_section(name, sections.get(name, {})) for name in MODE_SECTIONS[mode]}
    if mode in STOCHASTIC and seed is None:
        raise ScenarioError("scenario.seed", f"a seed is required for mode {mode!r}")
    return Scenario(mode, seed, params)


def parse_scenario_text(text: str, mode: str | None = None, seed: int | None = None) -> Scenario:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keep parameter case (A, B, C)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ScenarioError("<file>", str(exc).splitlines()[0]) from None
    head = dict(cp["scenario"]) if cp.has_section("scenario") else {}
    for key in head:
        if key not in ("mode", "seed"):
            raise ScenarioError(f"scenario.{key}", "unknown parameter")
    file_mode = head.get("mode")
    if mode and file_mode and file_mode != mode:
        raise ScenarioError("scenario.mode", f"file declares {file_mode!r} but {mode!r} was requested")
    mode = mode or file_mode
    if mode is None:
        raise ScenarioError("scenario.mode", "missing")
    if seed is None and "seed" in head:
        try:
            seed = int(head["seed"])
        except ValueError:
            raise ScenarioError("scenario.seed", f"not an integer: {head['seed']!r}") from None
    sections = {s: dict(cp[s]) for s in cp.sections() if s != "scenario"}
    return build_scenario(mode, seed, sections)


def load_scenario(path: str | Path, mode: str | None = None, seed: int | None = None) -> Scenario:
    return parse_scenario_text(Path(path).read_text(encoding="utf-8"), mode, seed)
