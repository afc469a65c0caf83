"""Run configuration files.

A config is a TOML document with the sections ``noise``, ``gates``, ``sim``,
``rb`` and ``sweep``. Dimensioned keys carry their unit as a suffix
(``_us``, ``_mhz``, ``_hz``, ``_ueV2``); a key whose stem is known but whose
suffix is not is reported as a unit mismatch. An empty file resolves to the
single-qubit X90 tomography scenario.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import tomli

from .dynamics import GateParams
from .noise import OneOverFSpec, QubitNoiseParams

__all__ = ["ConfigError", "RunConfig", "PIPELINES", "DEFAULTS", "parse_config", "parse_config_text"]

PIPELINES = ("noise-bench", "qpt", "benchmarks", "compress", "irb")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


DEFAULTS = {
    "pipeline": "qpt",
    "noise": {
        "a0_ueV2": 0.25,
        "f_ell_hz": 100.0,
        "f_c_hz": 1e7,
        "t2star_us": 3.0,
        "t2_us": 30.0,
        "gamma_r_mhz": 0.008,
        "gamma_e_mhz": 0.0,
    },
    "gates": {
        "gate": "X90",
        "t_g_1q_us": 0.1,
        "t_g_2q_us": 0.05,
        "j0_mhz": 10.0,
        "omega0_mhz": 5.0,
        "flip_flop_dw_mhz": 0.0,
    },
    "sim": {
        "dt_us": 5e-4,
        "t_tot_us": 1600.0,
        "n_realizations": 20,
        "window": 256,
        "seed": 0,
        "shots": 0,
        "n_mc": 1000,
    },
    "rb": {
        "lengths": [1, 5, 10, 20, 40, 60, 90, 130],
        "n_seq": 30,
        "h_ex": 0.086,
        "shots": 0,
        "residual": "layer",
        "correlation": "per_qubit",
        "n_draws": 2000,
        "model": "published",
    },
    "sweep": {
        "parameter": "",
        "values": [],
    },
}

# keys that may hold one value per qubit
_PER_QUBIT = {"t2star_us", "t2_us", "gamma_r_mhz"}
_UNIT_SUFFIXES = ("_us", "_ms", "_ns", "_s", "_mhz", "_khz", "_ghz", "_hz", "_ueV2", "_uev2", "_meV2", "_ueV", "_uev")
_CHOICES = {
    ("gates", "gate"): ("I", "X90", "Y90", "CZ"),
    ("rb", "residual"): ("layer", "gate"),
    ("rb", "correlation"): ("per_qubit", "per_gate"),
}


def _stem(key: str) -> str:
    for suf in sorted(_UNIT_SUFFIXES, key=len, reverse=True):
        if key.endswith(suf):
            return key[: -len(suf)]
    return key


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved configuration (plain nested dict plus typed views)."""

    pipeline: str
    data: dict = field(repr=False)

    def section(self, name: str) -> dict:
        return self.data[name]

    def per_qubit(self, key: str, n: int) -> list:
        v = self.data["noise"][key]
        vals = list(v) if isinstance(v, list) else [v] * n
        if len(vals) < n:
            raise ConfigError(f"noise.{key}: need {n} values, got {len(vals)}")
        return [float(x) for x in vals[:n]]

    @property
    def spec(self) -> OneOverFSpec:
        n = self.data["noise"]
        return OneOverFSpec(float(n["a0_ueV2"]), float(n["f_ell_hz"]), float(n["f_c_hz"]))

    @property
    def gate_params(self) -> GateParams:
        g = self.data["gates"]
        return GateParams(float(g["t_g_1q_us"]), float(g["t_g_2q_us"]), float(g["j0_mhz"]))

    def qubits(self, n: int) -> tuple:
        g = self.data["gates"]
        t2s = self.per_qubit("t2star_us", n)
        t2 = self.per_qubit("t2_us", n)
        gr = self.per_qubit("gamma_r_mhz", n)
        ge = float(self.data["noise"]["gamma_e_mhz"])
        return tuple(
            QubitNoiseParams(t2s[q], t2[q], gr[q], ge, float(g["omega0_mhz"]), float(g["j0_mhz"])) for q in range(n)
        )

    @property
    def seed(self) -> int:
        return int(self.data["sim"]["seed"])

    def with_value(self, dotted: str, value, keep_sweep: bool = False) -> "RunConfig":
        """Copy with one ``section.key`` replaced and validated again.

        The sweep is dropped unless ``keep_sweep`` is set, so that a swept
        value yields a single-point config.
        """
        sec, key = dotted.split(".")
        d = copy.deepcopy(self.data)
        d[sec][key] = value
        if not keep_sweep:
            d["sweep"] = {"parameter": "", "values": []}
        return _validate(d)

    def to_json(self) -> str:
        return json.dumps(self.data, indent=2, sort_keys=True)


def _merge(user: dict) -> dict:
    out = copy.deepcopy(DEFAULTS)
    for key, val in user.items():
        if key == "pipeline":
            out["pipeline"] = val
            continue
        if key not in DEFAULTS or not isinstance(DEFAULTS[key], dict):
            raise ConfigError(f"unknown section or key {key!r}")
        if not isinstance(val, dict):
            raise ConfigError(f"{key!r} must be a table")
        known = DEFAULTS[key]
        stems = {_stem(k): k for k in known}
        for k, v in val.items():
            if k not in known:
                s = _stem(k)
                if s != k and s in stems:
                    raise ConfigError(f"{key}.{k}: wrong unit suffix, expected {key}.{stems[s]}")
                raise ConfigError(f"unknown key {key}.{k}")
            out[key][k] = v
    return out


def _resolve_sweep_key(d: dict, name: str) -> str:
    if "." in name:
        sec, key = name.split(".", 1)
        if sec in DEFAULTS and isinstance(DEFAULTS[sec], dict) and key in DEFAULTS[sec] and sec != "sweep":
            return name
        raise ConfigError(f"sweep.parameter: unknown key {name!r}")
    hits = [f"{s}.{name}" for s, t in DEFAULTS.items() if isinstance(t, dict) and s != "sweep" and name in t]
    if len(hits) != 1:
        raise ConfigError(f"sweep.parameter: {name!r} is unknown or ambiguous")
    return hits[0]


def _validate(d: dict) -> RunConfig:
    if d["pipeline"] not in PIPELINES:
        raise ConfigError(f"pipeline: unknown pipeline {d['pipeline']!r}")
    for (sec, key), opts in _CHOICES.items():
        v = d[sec][key]
        if isinstance(v, str) and key == "gate":
            v = d[sec][key] = v.upper()
        if v not in opts:
            raise ConfigError(f"{sec}.{key}: must be one of {', '.join(opts)}")

    n = d["noise"]
    for k, v in n.items():
        vals = v if (isinstance(v, list) and k in _PER_QUBIT) else [v]
        if isinstance(v, list) and k not in _PER_QUBIT:
            raise ConfigError(f"noise.{k}: expected a number")
        if not vals or not all(_is_num(x) for x in vals):
            raise ConfigError(f"noise.{k}: expected a number")
        lo_ok = (lambda x: x >= 0) if k in ("gamma_r_mhz", "gamma_e_mhz", "a0_ueV2") else (lambda x: x > 0)
        if not all(lo_ok(x) for x in vals):
            raise ConfigError(f"noise.{k}: out of range")
    if not n["f_ell_hz"] < n["f_c_hz"]:
        raise ConfigError("noise.f_ell_hz: must be below noise.f_c_hz")
    t2s = n["t2star_us"] if isinstance(n["t2star_us"], list) else [n["t2star_us"]] * 2
    t2 = n["t2_us"] if isinstance(n["t2_us"], list) else [n["t2_us"]] * 2
    if any(b < a for a, b in zip(t2s, t2)):
        raise ConfigError("noise.t2_us: must be at least noise.t2star_us")

    g = d["gates"]
    for k in ("t_g_1q_us", "t_g_2q_us", "j0_mhz", "omega0_mhz"):
        if not _is_num(g[k]) or not g[k] > 0:
            raise ConfigError(f"gates.{k}: must be a positive number")
    if not _is_num(g["flip_flop_dw_mhz"]) or g["flip_flop_dw_mhz"] < 0:
        raise ConfigError("gates.flip_flop_dw_mhz: must be a non-negative number")

    s = d["sim"]
    if not _is_num(s["dt_us"]) or not 0 < s["dt_us"] <= 0.01:
        raise ConfigError("sim.dt_us: must lie in (0, 0.01]")
    if not _is_num(s["t_tot_us"]) or not s["t_tot_us"] > 0:
        raise ConfigError("sim.t_tot_us: must be positive")
    for k, lo in (("n_realizations", 1), ("window", 1), ("seed", 0), ("shots", 0), ("n_mc", 100)):
        if not isinstance(s[k], int) or isinstance(s[k], bool) or s[k] < lo:
            raise ConfigError(f"sim.{k}: must be an integer >= {lo}")
    if s["seed"] >= 2**64:
        raise ConfigError("sim.seed: must fit in 64 bits")
    t_g = g["t_g_2q_us"] if g["gate"] == "CZ" else g["t_g_1q_us"]
    if s["t_tot_us"] < s["window"] * t_g * (1 - 1e-9):
        raise ConfigError("sim.t_tot_us: shorter than one window of gates")

    r = d["rb"]
    L = r["lengths"]
    if not isinstance(L, list) or not L or not all(isinstance(x, int) and x >= 0 for x in L):
        raise ConfigError("rb.lengths: must be a list of non-negative integers")
    if any(b <= a for a, b in zip(L, L[1:])):
        raise ConfigError("rb.lengths: must be strictly ascending")
    for k, lo in (("n_seq", 1), ("shots", 0), ("n_draws", 10)):
        if not isinstance(r[k], int) or isinstance(r[k], bool) or r[k] < lo:
            raise ConfigError(f"rb.{k}: must be an integer >= {lo}")
    if not _is_num(r["h_ex"]) or not math.isfinite(r["h_ex"]):
        raise ConfigError("rb.h_ex: must be a number")
    if not isinstance(r["model"], str):
        raise ConfigError("rb.model: must be 'published' or a path to a model JSON")

    sw = d["sweep"]
    if sw["parameter"]:
        sw["parameter"] = _resolve_sweep_key(d, sw["parameter"])
        if not isinstance(sw["values"], list) or not sw["values"]:
            raise ConfigError("sweep.values: must be a non-empty list")
        sec, key = sw["parameter"].split(".")
        for v in sw["values"]:
            trial = copy.deepcopy(d)
            trial[sec][key] = v
            trial["sweep"] = {"parameter": "", "values": []}
            _validate(trial)
    elif sw["values"]:
        raise ConfigError("sweep.values: given without sweep.parameter")
    return RunConfig(d["pipeline"], d)


def parse_config_text(text: str, pipeline: str | None = None) -> RunConfig:
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"malformed TOML: {exc}") from None
    d = _merge(raw)
    if pipeline is not None:
        d["pipeline"] = pipeline
    return _validate(d)


def parse_config(path, pipeline: str | None = None) -> RunConfig:
    """Read, merge with defaults and validate a TOML config file.

    ``pipeline`` (from the command line) overrides the file's ``pipeline`` key.
    """
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {str(p)!r} does not exist")
    return parse_config_text(p.read_text(), pipeline)
