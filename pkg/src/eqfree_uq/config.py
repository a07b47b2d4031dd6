"""INI run configuration: defaults, typed parsing, resolved echo and hash.

Every run is described by a set of sections of ``key = value`` pairs. Missing
keys take the defaults below; unknown sections or keys are errors. The
resolved configuration (every field, defaulted or not) is written next to the
outputs, and re-running it reproduces the same CSV bytes.
"""
from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass

import numpy as np

from .bridge import EnsembleSpec
from .catalytic import BetaSpec, KineticParams
from .cpi import CpiConfig

__all__ = ["ConfigError", "RunConfig", "DEFAULTS", "load_config", "U64_MAX"]

U64_MAX = 2**64 - 1

# section -> key -> (type, default); types: int, float, str, "floats", "opt_float"
DEFAULTS: dict[str, dict[str, tuple[object, object]]] = {
    "run": {
        "master_seed": (int, 0),
        "workers": (int, 1),
        "engine": (str, "ssa"),
    },
    "kinetics": {
        "alpha": (float, 1.6),
        "beta": (float, 6.0),
        "gamma": (float, 0.04),
        "k_r": (float, 4.0),
        "n_tot": (int, 40_000),
    },
    "beta": {
        "form": (str, "affine"),
        "b0": (float, 6.0),
        "b1": (float, 0.25),
        "mean": (float, 10.0),
        "rho": (float, 0.05),
    },
    "ensemble": {
        "scheme": (str, "gl"),
        "n_xi": (int, 8),
        "replicas": (int, 100),
        "n_tot": (int, 10_000),
        "lifting": (str, "multinomial"),
    },
    "gpc": {
        "order": (int, 3),
        "coeffs0": ("floats", (0.25, 0.45, 0.30)),
    },
    "lifting": {
        "warn_at": (float, 0.05),
        "fail_at": (float, 0.2),
    },
    "ssa": {
        "theta0": ("floats", (0.25, 0.45, 0.30)),
        "replicas": (int, 100),
        "t_end": (float, 10.0),
        "dt_out": (float, 0.1),
    },
    "cpi": {
        "dt_c": (float, 0.01),
        "n_inner": (int, 40),
        "fit_window": (int, 5),
        "dt_cc": (float, 0.8),
        "t_end": (float, 10.0),
        "residual_ratio": (float, 0.1),
        "discard": (int, 0),
    },
    "reference": {
        "dt": (float, 1e-3),
    },
    "fixed_point": {
        "T": (float, 0.4),
        "guess": (str, "a_rich"),
        "tol": ("opt_float", None),
        "eps0": ("opt_float", None),
        "max_iter": (int, 30),
        "noise_seeds": (int, 8),
    },
    "continuation": {
        "beta_min": (float, 3.0),
        "beta_max": (float, 25.0),
        "ds0": (float, 0.1),
        "ds_min": (float, 1e-4),
        "ds_max": (float, 0.5),
        "max_points": (int, 400),
        "direction": (int, 1),
    },
}

CHOICES = {
    ("run", "engine"): ("ssa", "ode"),
    ("beta", "form"): ("affine", "relative"),
    ("ensemble", "scheme"): ("gl", "mc"),
    ("ensemble", "lifting"): ("multinomial", "round"),
    ("fixed_point", "guess"): ("a_rich", "saddle", "b_rich", "coeffs"),
}

# fields that may change without changing any output byte
HASH_EXCLUDED = {("run", "workers")}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


def _parse(kind, raw: str, where: str):
    raw = raw.strip()
    try:
        if kind is int:
            return int(raw, 0)
        if kind is float:
            value = float(raw)
            if not np.isfinite(value):
                raise ValueError("not finite")
            return value
        if kind == "floats":
            values = tuple(float(v) for v in raw.replace(",", " ").split())
            if not values or not all(np.isfinite(values)):
                raise ValueError("need a list of finite numbers")
            return values
        if kind == "opt_float":
            return None if raw.lower() in ("", "auto", "none") else float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse {raw!r} ({exc})") from None


def _format(kind, value) -> str:
    if value is None:
        return "auto"
    if kind is float:
        return repr(float(value))
    if kind == "floats":
        return " ".join(repr(float(v)) for v in value)
    if kind == "opt_float":
        return repr(float(value))
    return str(value)


@dataclass(frozen=True)
class RunConfig:
    values: dict

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    # --- resolved echo -------------------------------------------------
    def to_ini(self, include_excluded: bool = True) -> str:
        lines = []
        for section, fields in DEFAULTS.items():
            lines.append(f"[{section}]")
            for key, (kind, _) in fields.items():
                if not include_excluded and (section, key) in HASH_EXCLUDED:
                    continue
                lines.append(f"{key} = {_format(kind, self.values[section][key])}")
            lines.append("")
        return "\n".join(lines)

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.to_ini(include_excluded=False).encode()).hexdigest()[:16]

    @property
    def seed(self) -> int:
        return self.values["run"]["master_seed"]

    @property
    def workers(self) -> int:
        return self.values["run"]["workers"]

    # --- typed views ---------------------------------------------------
    def kinetics(self) -> KineticParams:
        return KineticParams(**self.values["kinetics"])

    def beta_spec(self) -> BetaSpec:
        return BetaSpec(**self.values["beta"])

    def ensemble(self) -> EnsembleSpec:
        return EnsembleSpec(**self.values["ensemble"])

    def cpi(self) -> CpiConfig:
        lift = self.values["lifting"]
        return CpiConfig(order=self.values["gpc"]["order"], clamp_warn=lift["warn_at"],
                         clamp_fail=lift["fail_at"], **self.values["cpi"])

    def coeffs0(self) -> np.ndarray:
        """Initial gPC coefficients; rows beyond those given are zero."""
        order = self.values["gpc"]["order"]
        flat = np.asarray(self.values["gpc"]["coeffs0"], dtype=float)
        rows = flat.reshape(-1, 3)
        out = np.zeros((order + 1, 3))
        out[: min(len(rows), order + 1)] = rows[: order + 1]
        return out


def _validate(v: dict) -> None:
    for (section, key), allowed in CHOICES.items():
        if v[section][key] not in allowed:
            raise ConfigError(f"{section}.{key}: expected one of {', '.join(allowed)}, got {v[section][key]!r}")
    seed = v["run"]["master_seed"]
    if not 0 <= seed <= U64_MAX:
        raise ConfigError("run.master_seed: must be an unsigned 64-bit integer")
    if v["run"]["workers"] < 1:
        raise ConfigError("run.workers: must be at least 1")
    if v["gpc"]["order"] < 0:
        raise ConfigError("gpc.order: must be non-negative")
    if len(v["gpc"]["coeffs0"]) % 3:
        raise ConfigError("gpc.coeffs0: length must be a multiple of 3 (one A, B, star triple per order)")
    theta0 = np.asarray(v["ssa"]["theta0"])
    if theta0.size != 3 or np.any(theta0 < 0) or abs(theta0.sum() - 1.0) > 1e-9:
        raise ConfigError("ssa.theta0: must be three non-negative coverages summing to 1")
    if v["ssa"]["replicas"] < 1:
        raise ConfigError("ssa.replicas: must be at least 1")
    if v["ssa"]["dt_out"] <= 0 or v["ssa"]["t_end"] < 0:
        raise ConfigError("ssa.dt_out/t_end: dt_out must be positive and t_end non-negative")
    if v["fixed_point"]["noise_seeds"] < 2:
        raise ConfigError("fixed_point.noise_seeds: must be at least 2")
    c = v["continuation"]
    if not c["beta_min"] < c["beta_max"]:
        raise ConfigError("continuation.beta_min: must be below beta_max")
    if not 0 < c["ds_min"] <= c["ds0"] <= c["ds_max"]:
        raise ConfigError("continuation.ds0: need 0 < ds_min <= ds0 <= ds_max")
    if c["direction"] not in (-1, 1):
        raise ConfigError("continuation.direction: must be 1 or -1")
    checks = [
        ("kinetics", lambda: KineticParams(**v["kinetics"])),
        ("beta", lambda: BetaSpec(**v["beta"])),
        ("ensemble", lambda: EnsembleSpec(**v["ensemble"])),
        ("cpi", lambda: RunConfig(v).cpi()),
    ]
    for section, build in checks:
        try:
            build()
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{section}: {exc}") from None


def load_config(text: str | None = None, seed: int | None = None, workers: int | None = None) -> RunConfig:
    """Parse INI ``text`` over the defaults; ``seed``/``workers`` override the file."""
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",), inline_comment_prefixes=(";",))
    parser.optionxform = str
    try:
        parser.read_string(text or "")
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from None
    values = {s: {k: d for k, (_, d) in fields.items()} for s, fields in DEFAULTS.items()}
    for section in parser.sections():
        if section not in DEFAULTS:
            raise ConfigError(f"{section}: unknown section")
        for key, raw in parser.items(section):
            if key not in DEFAULTS[section]:
                raise ConfigError(f"{section}.{key}: unknown key")
            kind = DEFAULTS[section][key][0]
            values[section][key] = _parse(kind, raw, f"{section}.{key}")
    if seed is not None:
        values["run"]["master_seed"] = int(seed)
    if workers is not None:
        values["run"]["workers"] = int(workers)
    _validate(values)
    return RunConfig(values)
