"""Run manifests: flat ``key = value`` files with command-line overrides.

Numeric values may be written as simple arithmetic on numbers and ``pi``,
e.g. ``dt = 2*pi/1000``.
"""

from __future__ import annotations

import ast
import operator
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError, TransportError
from .geometry import generate_phyllotaxis, load_point_set
from .io import SNAPSHOT_FORMATS
from .solver import SolverConfig, step_count
from .testcases import CASES, get_case

OUTPUT_DIR_ENV = "SPHTRANSPORT_OUTPUT_DIR"

# deformational flow: dt per point count
DEFORMATIONAL_DT = {400: 1 / 100, 1600: 1 / 200, 6400: 1 / 400, 16641: 1 / 800}

_OPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv, ast.Pow: operator.pow}


def parse_number(text, key="value"):
    """Evaluate ``text`` as arithmetic over numbers and ``pi``."""

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return float(np.pi)
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        raise ValueError

    try:
        val = ev(ast.parse(str(text).strip(), mode="eval"))
    except (SyntaxError, ValueError, ZeroDivisionError, OverflowError):
        raise ConfigError(f"cannot parse {text!r} as a number", key) from None
    if not np.isfinite(val):
        raise ConfigError(f"{text!r} is not finite", key)
    return val


def _int(text, key):
    v = parse_number(text, key)
    if v != int(v):
        raise ConfigError(f"{text!r} is not an integer", key)
    return int(v)


def _str(text, key):
    return str(text).strip()


def _float_list(text, key):
    text = str(text).strip()
    return tuple(parse_number(t, key) for t in text.split(",") if t.strip()) if text else ()


def _optional(conv):
    def f(text, key):
        return None if str(text).strip().lower() in ("", "none", "default") else conv(text, key)

    return f


@dataclass(frozen=True)
class RunManifest:
    """Everything needed to run one experiment.

    ``n`` selects a generated phyllotaxis set unless ``points_file`` is
    given. ``dt = None`` picks the default for the test case:
    ``T / 1000`` for the steady flows and the per-N schedule for the
    deformational flow.
    """

    test: str = "vortex"
    method: str = "GMLS"
    n: int | None = 400
    points_file: str | None = None
    points_format: str | None = None
    m: int = 3
    delta_multiplier: float = 12.0
    c_multiplier: float = 20.0
    dt: float | None = None
    final_time: float | None = None
    rel_tol: float = 1e-10
    max_iter: int = 1000
    correlation_distance: str = "chordal"
    stencil_safety: float = 2.0
    basis: str = "local"
    bell_radius: float | None = None
    snapshot_times: tuple = ()
    snapshot_format: str = "csv"
    eval_set: str | None = None
    output_dir: str = "output"
    label: str | None = None

    def case(self):
        kw = {}
        if self.bell_radius is not None:
            if self.test == "vortex":
                raise ConfigError("the vortex case has no bell", "bell_radius")
            kw["bell_radius"] = self.bell_radius
        if self.final_time is not None:
            kw["T"] = self.final_time
        return get_case(self.test, **kw)

    def resolved_dt(self, n=None):
        if self.dt is not None:
            return self.dt
        T = self.case().T
        if self.test == "deformational":
            n = self.n if n is None else n
            if n not in DEFORMATIONAL_DT:
                raise ConfigError(f"no default dt for the deformational flow at N={n}; set dt", "dt")
            return DEFORMATIONAL_DT[n] * T / 5.0
        return T / 1000.0

    def solver_config(self, n=None):
        return SolverConfig(
            method=self.method, m=self.m, delta_multiplier=self.delta_multiplier, c_multiplier=self.c_multiplier,
            dt=self.resolved_dt(n), rel_tol=self.rel_tol, max_iter=self.max_iter,
            correlation_distance=self.correlation_distance, stencil_safety=self.stencil_safety, basis=self.basis,
        )

    def point_set(self, n=None):
        if self.points_file is not None and n is None:
            return load_point_set(self.points_file, self.points_format)
        return generate_phyllotaxis(self.n if n is None else n)

    def evaluation_set(self):
        return None if self.eval_set is None else load_point_set(self.eval_set)

    def run_label(self, n=None):
        if self.label:
            return self.label
        src = Path(self.points_file).stem if self.points_file and n is None else f"pts{self.n if n is None else n}"
        return f"{self.test}_{self.method.lower()}_{src}"

    def output_path(self):
        return Path(os.environ.get(OUTPUT_DIR_ENV) or self.output_dir)

    def validate(self):
        """Check the manifest; raises :class:`ConfigError` naming the key."""
        if self.test not in CASES:
            raise ConfigError(f"unknown test {self.test!r}; valid tests: {', '.join(sorted(CASES))}", "test")
        if self.points_file is None and (self.n is None or self.n < 4):
            raise ConfigError("need n >= 4 or a points_file", "n")
        if self.snapshot_format not in SNAPSHOT_FORMATS:
            raise ConfigError(f"must be one of {', '.join(SNAPSHOT_FORMATS)}", "snapshot_format")
        if self.final_time is not None and self.final_time < 0:
            raise ConfigError("must be non-negative", "final_time")
        if self.bell_radius is not None and not 0 < self.bell_radius <= np.pi:
            raise ConfigError("must lie in (0, pi]", "bell_radius")
        cfg = self.solver_config()  # method, m, tolerances, ...
        T = self.case().T
        step_count(T, cfg.dt, "dt")
        for t in self.snapshot_times:
            if not 0 <= t <= T * (1 + 1e-12):
                raise ConfigError(f"snapshot time {t} outside [0, {T}]", "snapshot_times")
            step_count(t, cfg.dt, "snapshot_times")
        return self


_CONVERTERS = {
    "test": _str,
    "method": _str,
    "n": _optional(_int),
    "points_file": _optional(_str),
    "points_format": _optional(_str),
    "m": _int,
    "delta_multiplier": parse_number,
    "c_multiplier": parse_number,
    "dt": _optional(parse_number),
    "final_time": _optional(parse_number),
    "rel_tol": parse_number,
    "max_iter": _int,
    "correlation_distance": _str,
    "stencil_safety": parse_number,
    "basis": _str,
    "bell_radius": _optional(parse_number),
    "snapshot_times": _float_list,
    "snapshot_format": _str,
    "eval_set": _optional(_str),
    "output_dir": _str,
    "label": _optional(_str),
}
KEYS = tuple(f.name for f in fields(RunManifest))
assert set(KEYS) == set(_CONVERTERS)


def read_config_file(path):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}", "config") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'", "config")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def parse_config(path=None, overrides=None):
    """Build a validated :class:`RunManifest`.

    ``overrides`` (a mapping of raw strings, e.g. from command-line flags)
    win over the file. Unknown keys, bad values and a ``dt`` that does not
    divide the final time raise :class:`ConfigError`.
    """
    raw = read_config_file(path) if path is not None else {}
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    values = {}
    for key, text in raw.items():
        key = key.replace("-", "_")
        if key not in _CONVERTERS:
            raise ConfigError(f"unknown key {key!r}", key)
        values[key] = _CONVERTERS[key](text, key)
    if "points_file" in values and values.get("points_file") and "n" not in values:
        values["n"] = None
    if "method" in values:
        values["method"] = values["method"].upper()
    try:
        return RunManifest(**values).validate()
    except ConfigError:
        raise
    except (TransportError, ValueError) as exc:
        raise ConfigError(str(exc), "test") from exc


def manifest_dict(manifest):
    return asdict(manifest)
