"""Sectioned INI run configuration, validated against a fixed schema."""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass

from .errors import ConfigError
from .latent import FAMILIES, FIXED_EFFECTS
from .mesh import MeshSpec
from .priors import HyperPriors, PcPriorSpec


def _bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _opt_float(s):
    return None if s.strip() == "" else float(s)


def _opt_int(s):
    return None if s.strip() == "" else int(s)


def _floats(s):
    return tuple(float(x) for x in s.replace(",", " ").split())


def _words(s):
    return tuple(x for x in s.replace(",", " ").split())


def _origin(s):
    s = s.strip()
    if not s:
        return None
    y, m = s.split("-")
    y, m = int(y), int(m)
    if not 1 <= m <= 12:
        raise ValueError("month must be 1-12")
    return (y, m)


def _specs(s):
    """One ``me1 me2 of1 of2 cutoff`` spec per line (commas allowed)."""
    out = []
    for line in s.strip().splitlines():
        if line.strip():
            v = _floats(line)
            if len(v) != 5:
                raise ValueError(f"mesh spec needs 5 numbers, got {line.strip()!r}")
            out.append(v)
    return tuple(out)


# section -> key -> (parser, default)
SCHEMA = {
    "data": {
        "prime": (str, "prime.csv"),
        "raw": (_words, ()),
        "delimiter": (str, ","),
        "origin": (_origin, None),
        "min_speed": (float, 0.0),
        "jitter_radius": (float, 0.05),
        "sample_size": (_opt_int, None),
    },
    "mesh": {
        "me1": (float, 0.55),
        "me2": (float, 0.55),
        "of1": (float, 0.15),
        "of2": (float, 0.15),
        "cutoff": (float, 0.55),
        "min_angle": (float, 21.0),
        "file": (str, "mesh.json"),
        "specs": (_specs, ()),
        "subsample": (int, 5000),
        "parallel": (_bool, False),
    },
    "model": {
        "family": (str, "weibull"),
        "fixed": (_words, FIXED_EFFECTS),
        "spline": (_bool, True),
        "f_month": (_bool, True),
        "c_month": (_bool, True),
        "spatial": (_bool, True),
        "fixed_prec": (float, 1e-4),
        "rw2_diag": (float, 1e-4),
    },
    "priors": {
        "alpha_theta": (float, 5.0),
        "prec_u": (float, 1.0),
        "prec_a": (float, 0.01),
        "rho_sd": (float, math.sqrt(0.5)),
        "range0": (float, 1.0),
        "range_p": (float, 0.5),
        "sigma0": (float, 1.0),
        "sigma_p": (float, 0.01),
        "obs_prec_u": (float, 1.0),
        "obs_prec_a": (float, 0.01),
    },
    "inference": {
        "strategy": (str, "ccd"),
        "tol": (float, 1e-8),
        "outer_tol": (float, 1e-5),
        "f0": (float, 1.1),
        "grid_step": (float, 0.75),
        "diff_logdens": (float, 6.0),
    },
    "project": {
        "step": (float, 0.1),
        "lon_min": (_opt_float, None),
        "lon_max": (_opt_float, None),
        "lat_min": (_opt_float, None),
        "lat_max": (_opt_float, None),
        "gnuplot": (_bool, True),
    },
    "simulate": {
        "n": (int, 2000),
        "alpha": (float, 1.5),
        "range": (float, 2.0),
        "sigma": (float, 0.3),
        "rho_f": (float, 0.5),
        "rho_c": (float, 0.5),
        "prec_f": (float, 25.0),
        "prec_c": (float, 25.0),
        "prec_rw2": (float, 25.0),
        "prec_obs": (float, 4.0),
        "beta": (_floats, (1.5, 0.1, -0.1)),
        "altitudes": (_floats, (10.0, 20.0, 40.0, 60.0, 62.0)),
        "start": (str, "2011-01-01"),
        "end": (str, "2021-01-01"),
    },
    "run": {
        "seed": (int, 1),
        "threads": (int, 1),
        "out_dir": (str, "."),
    },
}


@dataclass(frozen=True)
class RunConfig:
    """Validated settings, ``values[section][key]``, plus the raw text echo."""
    values: dict
    source: str = ""

    def __getitem__(self, section):
        return self.values[section]

    def mesh_spec(self) -> MeshSpec:
        m = self.values["mesh"]
        return MeshSpec(m["me1"], m["me2"], m["of1"], m["of2"], m["cutoff"],
                        min_angle=m["min_angle"])

    def mesh_specs(self):
        a = self.values["mesh"]["min_angle"]
        return [MeshSpec(*s, min_angle=a) for s in self.values["mesh"]["specs"]]

    def priors(self) -> HyperPriors:
        p = self.values["priors"]
        return HyperPriors(alpha=PcPriorSpec(p["alpha_theta"]), prec_u=p["prec_u"],
                           prec_a=p["prec_a"], rho_sd=p["rho_sd"], range0=p["range0"],
                           range_p=p["range_p"], sigma0=p["sigma0"], sigma_p=p["sigma_p"],
                           obs_prec_u=p["obs_prec_u"], obs_prec_a=p["obs_prec_a"])

    def model_kwargs(self):
        m = self.values["model"]
        return dict(family=m["family"], fixed=m["fixed"], use_spline=m["spline"],
                    use_f_month=m["f_month"], use_c_month=m["c_month"],
                    fixed_prec=m["fixed_prec"], rw2_diag=m["rw2_diag"],
                    priors=self.priors())

    def as_ini(self):
        """Effective configuration (defaults filled in) as INI text."""
        lines = []
        for sec, keys in SCHEMA.items():
            lines.append(f"[{sec}]")
            for k in keys:
                v = self.values[sec][k]
                if k == "origin" and v is not None:
                    v = f"{v[0]:04d}-{v[1]:02d}"
                lines.append(f"{k} = {_render(v)}")
            lines.append("")
        return "\n".join(lines)


def _render(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        if v and isinstance(v[0], tuple):
            return "".join("\n    " + " ".join(repr(x) for x in s) for s in v)
        return " ".join(repr(x) if isinstance(x, float) else str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _validate(values):
    m = values["model"]
    if m["family"] not in FAMILIES:
        raise ConfigError(f"[model] family must be one of {FAMILIES}")
    bad = [f for f in m["fixed"] if f not in FIXED_EFFECTS]
    if bad:
        raise ConfigError(f"[model] unknown fixed effects {bad}")
    if values["inference"]["strategy"] not in ("ccd", "grid"):
        raise ConfigError("[inference] strategy must be 'ccd' or 'grid'")
    if values["run"]["threads"] < 1:
        raise ConfigError("[run] threads must be at least 1")
    for k in ("me1", "me2", "of1", "of2", "cutoff"):
        if not values["mesh"][k] > 0:
            raise ConfigError(f"[mesh] {k} must be positive")
    if values["data"]["jitter_radius"] < 0:
        raise ConfigError("[data] jitter_radius must be non-negative")
    if not values["project"]["step"] > 0:
        raise ConfigError("[project] step must be positive")


def load_config(path=None, text=None) -> RunConfig:
    """Parse ``path`` (or ``text``); unknown sections or keys are errors."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    source = ""
    try:
        if path is not None:
            with open(path) as fh:
                source = fh.read()
        elif text is not None:
            source = text
        cp.read_string(source)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    values = {}
    for sec, keys in SCHEMA.items():
        values[sec] = {k: default for k, (_, default) in keys.items()}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown config section [{sec}]")
        for key, raw in cp.items(sec):
            if key not in SCHEMA[sec]:
                raise ConfigError(f"unknown config key [{sec}] {key}")
            parse = SCHEMA[sec][key][0]
            try:
                values[sec][key] = parse(raw)
            except ValueError as exc:
                raise ConfigError(f"[{sec}] {key}: {exc}") from exc
    _validate(values)
    return RunConfig(values, source)


def override(cfg: RunConfig, section, key, value) -> RunConfig:
    """Copy of ``cfg`` with one already-parsed value replaced."""
    if key not in SCHEMA.get(section, {}):
        raise ConfigError(f"unknown config key [{section}] {key}")
    values = {s: dict(v) for s, v in cfg.values.items()}
    values[section][key] = value
    _validate(values)
    return RunConfig(values, cfg.source)
