"""Run configuration: a sectioned key = value file with typed fields.

    [system]
    surface = TorusFlat            ; TorusFlat | TorusConformal | SphereRound
    magnetic = constant:1          ; field spec of the density b
    conformal = zero               ; TorusConformal only
    potential = zero

    [integrate]    q, p, t_end, tol
    [orbit]        k, N, m, sweeps, sweep_time, candidate_tol, seed_loop
    [scan]         k_min, k_max, n_grid, N, m, sweeps, sweep_time,
                   candidate_tol, slope_factor, verify
    [displace]     k, f, n_samples, T_disp
    [output]       dir, seed

Unknown sections or keys, malformed values and violated ranges are
reported with the offending field and its line number.
"""

import configparser
import re
from dataclasses import dataclass, field

from .errors import ConfigError
from .geometry import KINDS

PIPELINES = ("integrate", "find-orbit", "scan", "displace-check")


def _floats(text):
    parts = [p for p in re.split(r"[,\s]+", text.strip()) if p]
    return [float(p) for p in parts]


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _positive(x):
    return x > 0


def _even16(x):
    return x >= 16 and x % 2 == 0


SCHEMA = {
    "system": {
        "surface": (str, "TorusFlat", lambda s: s in KINDS, f"one of {KINDS}"),
        "magnetic": (str, "zero", None, ""),
        "conformal": (str, "zero", None, ""),
        "potential": (str, "zero", None, ""),
    },
    "integrate": {
        "q": (_floats, None, None, ""),
        "p": (_floats, None, None, ""),
        "t_end": (float, 10.0, lambda x: x == x, "a number"),
        "tol": (float, 1e-10, lambda x: 1e-13 <= x <= 1e-3, "in [1e-13, 1e-3]"),
    },
    "orbit": {
        "k": (float, 0.5, None, ""),
        "k_max": (float, None, None, ""),
        "N": (int, 256, _even16, "even and >= 16"),
        "m": (int, 64, lambda x: x >= 4, ">= 4"),
        "sweeps": (int, 40, lambda x: x >= 0, ">= 0"),
        "sweep_time": (float, 0.5, _positive, "positive"),
        "candidate_tol": (float, 5e-2, _positive, "positive"),
        "seed_loop": (str, "", None, ""),
    },
    "scan": {
        "k_min": (float, None, None, ""),
        "k_max": (float, None, None, ""),
        "n_grid": (int, 10, lambda x: x >= 2, ">= 2"),
        "N": (int, 256, _even16, "even and >= 16"),
        "m": (int, 64, lambda x: x >= 4, ">= 4"),
        "sweeps": (int, 40, lambda x: x >= 0, ">= 0"),
        "sweep_time": (float, 0.5, _positive, "positive"),
        "candidate_tol": (float, 5e-2, _positive, "positive"),
        "slope_factor": (float, 10.0, _positive, "positive"),
        "verify": (_bool, True, None, ""),
    },
    "displace": {
        "k": (float, None, None, ""),
        "f": (str, None, None, ""),
        "n_samples": (int, 10000, lambda x: x >= 1, ">= 1"),
        "T_disp": (float, None, lambda x: x >= 0, "nonnegative"),
    },
    "output": {
        "dir": (str, "magflow_out", None, ""),
        "seed": (int, 0, lambda x: 0 <= x < 2**64, "an unsigned 64-bit integer"),
    },
}

REQUIRED = {
    "integrate": [("integrate", "q"), ("integrate", "p")],
    "find-orbit": [],
    "scan": [("scan", "k_min"), ("scan", "k_max")],
    "displace-check": [("displace", "k"), ("displace", "f")],
}


@dataclass
class RunConfig:
    pipeline: str
    values: dict = field(default_factory=dict)
    lines: dict = field(default_factory=dict)
    path: str = ""

    def get(self, section, key):
        return self.values[section][key]

    def section(self, name):
        return dict(self.values[name])

    def line(self, section, key):
        return self.lines.get((section, key))


def _line_map(text):
    lines = {}
    section = None
    for n, raw in enumerate(text.splitlines(), start=1):
        s = raw.strip()
        if not s or s[0] in "#;":
            continue
        m = re.match(r"\[([^\]]+)\]", s)
        if m:
            section = m.group(1).strip()
            lines[(section, None)] = n
            continue
        m = re.match(r"([^=:]+)[=:]", s)
        if m and section is not None:
            lines[(section, m.group(1).strip())] = n
    return lines


def parse_config(text, pipeline, path="<string>"):
    if pipeline not in PIPELINES:
        raise ConfigError(f"unknown pipeline {pipeline!r}; expected one of {PIPELINES}")
    lines = _line_map(text)
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=path)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError(f"{path}: cannot parse: {exc.message if hasattr(exc, 'message') else exc}", line=line) from exc
    values = {}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"{path}: unknown section [{sec}]", line=lines.get((sec, None)), field=sec)
        for key in cp[sec]:
            if key not in SCHEMA[sec]:
                raise ConfigError(
                    f"{path}: unknown key {key!r} in [{sec}]; known: {sorted(SCHEMA[sec])}",
                    line=lines.get((sec, key)), field=f"{sec}.{key}",
                )
    for sec, fields in SCHEMA.items():
        values[sec] = {}
        for key, (conv, default, check, desc) in fields.items():
            where = f"{sec}.{key}"
            if cp.has_option(sec, key):
                raw = cp.get(sec, key)
                try:
                    val = conv(raw)
                except ValueError as exc:
                    raise ConfigError(f"{path}: bad value {raw!r}: {exc}", line=lines.get((sec, key)), field=where) from exc
                if check is not None and not check(val):
                    raise ConfigError(f"{path}: value {raw!r} must be {desc}", line=lines.get((sec, key)), field=where)
            else:
                val = default
            values[sec][key] = val
    for sec, key in REQUIRED[pipeline]:
        if values[sec][key] is None:
            raise ConfigError(f"{path}: pipeline {pipeline} needs {sec}.{key}", line=lines.get((sec, None)), field=f"{sec}.{key}")
    if pipeline == "scan" and not values["scan"]["k_min"] < values["scan"]["k_max"]:
        raise ConfigError(
            f"{path}: energy interval must satisfy k_min < k_max", line=lines.get(("scan", "k_max")), field="scan.k_max"
        )
    return RunConfig(pipeline, values, lines, path)


def load_config(path, pipeline):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, pipeline, path)
