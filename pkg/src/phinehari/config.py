"""Run configuration: an INI file with a fixed schema.

Example::

    [phi]
    family = power
    p = 2

    [problem]
    N = 4

    [mesh]
    dim = 1
    extents = 1.0
    cells = 128

    [source]
    shape = bump
    target_fraction = 0.5

    [run]
    seed = 42

Every key is validated before any computation starts. Unknown sections or
keys, missing required keys and malformed values all raise
:class:`ConfigError` carrying the line and column of the offending entry.
"""
from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError

SCHEMA = {
    "phi": {"family", "p", "q", "scale", "table", "t_min", "t_max", "samples"},
    "problem": {"n", "crit_exp"},
    "mesh": {"dim", "extents", "cells"},
    "source": {"shape", "center", "width", "file", "target_fraction", "amplitude"},
    "solver": {"starts", "budget", "tol_res", "tol_step", "metric", "workers", "branches"},
    "fiber": {"direction", "file", "t_min", "t_max", "points"},
    "run": {"seed", "output_dir", "directions", "s_starts"},
}
REQUIRED = {"phi": {"family"}, "problem": {"n"}, "mesh": {"dim", "extents", "cells"}}

_SECTION = re.compile(r"^\s*\[([^\]]*)\]")
_KEY = re.compile(r"^(\s*)([^=:\s][^=:]*?)\s*[=:]\s*(.*)$")


@dataclass
class PhiConfig:
    family: str
    p: float | None = None
    q: float | None = None
    scale: float = 1.0
    table: Path | None = None
    t_min: float = 1e-6
    t_max: float = 1e6
    samples: int = 4096


@dataclass
class SourceConfig:
    shape: str = "zero"
    center: tuple = ()
    width: float = 0.1
    file: Path | None = None
    target_fraction: float | None = None
    amplitude: float | None = None


@dataclass
class SolverConfig:
    starts: int = 8
    budget: int = 5000
    tol_res: float = 1e-6
    tol_step: float = 1e-14
    metric: str = "h1"
    workers: int = 1
    branches: tuple = ("plus", "minus")


@dataclass
class FiberConfig:
    direction: str = "bump"
    file: Path | None = None
    t_min: float = 1e-2
    t_max: float = 1e2
    points: int = 200


@dataclass
class RunConfig:
    phi: PhiConfig
    N: int
    mesh_dim: int
    extents: tuple
    cells: tuple
    crit_exp: float | None = None
    source: SourceConfig = field(default_factory=SourceConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    fiber: FiberConfig = field(default_factory=FiberConfig)
    seed: int = 0
    output_dir: Path = Path("out")
    directions: int = 100
    s_starts: int = 8


def _locate(text):
    """Map ``(section, key)`` to the 1-based ``(line, column)`` of its value."""
    where, section = {}, None
    for lineno, line in enumerate(text.splitlines(), 1):
        if line.lstrip().startswith(("#", ";")) or not line.strip():
            continue
        m = _SECTION.match(line)
        if m:
            section = m.group(1).strip().lower()
            where[(section, None)] = (lineno, line.index("[") + 1)
            continue
        m = _KEY.match(line)
        if m and section is not None:
            key = m.group(2).strip().lower()
            where[(section, key)] = (lineno, m.start(3) + 1 if m.group(3) else len(line) + 1)
            where[(section, key, "key")] = (lineno, m.start(2) + 1)
    return where


class _Reader:
    def __init__(self, parser, where, base):
        self.p, self.where, self.base = parser, where, base

    def fail(self, section, key, msg, at_key=False):
        spot = (section, key, "key") if at_key else (section, key)
        line, col = self.where.get(spot, self.where.get((section, None), (None, None)))
        raise ConfigError(f"[{section}] {key}: {msg}" if key else f"[{section}]: {msg}",
                          line, col)

    def has(self, section, key):
        return self.p.has_option(section, key)

    def raw(self, section, key):
        return self.p.get(section, key).strip()

    def get(self, section, key, conv, default=None, check=None, what=""):
        if not self.has(section, key):
            return default
        text = self.raw(section, key)
        try:
            val = conv(text)
        except (TypeError, ValueError):
            self.fail(section, key, f"cannot read {text!r} as {conv.__name__}")
        if check is not None and not check(val):
            self.fail(section, key, f"value {text!r} must be {what}")
        return val

    def floats(self, section, key, default=()):
        if not self.has(section, key):
            return default
        parts = self.raw(section, key).replace(",", " ").split()
        try:
            return tuple(float(x) for x in parts)
        except ValueError:
            self.fail(section, key, "expected a list of numbers")

    def path(self, section, key):
        if not self.has(section, key):
            return None
        p = Path(self.raw(section, key))
        return p if p.is_absolute() else self.base / p


def _positive(x):
    return np.isfinite(x) and x > 0


def parse_config(text: str, base_dir=".") -> RunConfig:
    """Parse and validate config text; relative paths resolve against ``base_dir``."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        if not line and getattr(exc, "errors", None):
            line = exc.errors[0][0]
        raise ConfigError(f"malformed config: {exc.message.splitlines()[0]}", line, 1) from None
    where = _locate(text)
    rd = _Reader(parser, where, Path(base_dir))

    for section in parser.sections():
        if section not in SCHEMA:
            rd.fail(section, None, "unknown section")
        for key in parser.options(section):
            if key not in SCHEMA[section]:
                rd.fail(section, key, "unknown key", at_key=True)
    for section, keys in REQUIRED.items():
        if not parser.has_section(section):
            raise ConfigError(f"missing section [{section}]")
        for key in keys:
            if not parser.has_option(section, key):
                rd.fail(section, None, f"missing required key '{key}'")

    family = rd.raw("phi", "family").lower()
    if family not in ("power", "double_power", "tabulated"):
        rd.fail("phi", "family", f"unknown family {family!r}")
    phi = PhiConfig(
        family=family,
        p=rd.get("phi", "p", float, check=lambda x: x > 1, what="> 1"),
        q=rd.get("phi", "q", float, check=lambda x: x > 1, what="> 1"),
        scale=rd.get("phi", "scale", float, 1.0, _positive, "positive"),
        table=rd.path("phi", "table"),
        t_min=rd.get("phi", "t_min", float, 1e-6, _positive, "positive"),
        t_max=rd.get("phi", "t_max", float, 1e6, _positive, "positive"),
        samples=rd.get("phi", "samples", int, 4096, lambda n: n >= 16, ">= 16"))
    if family in ("power", "double_power") and phi.p is None:
        rd.fail("phi", None, f"family {family} needs 'p'")
    if family == "double_power" and phi.q is None:
        rd.fail("phi", None, "family double_power needs 'q'")
    if family == "tabulated" and phi.table is None:
        rd.fail("phi", None, "family tabulated needs 'table'")
    if phi.t_min >= phi.t_max:
        rd.fail("phi", "t_max", "must exceed t_min")

    N = rd.get("problem", "n", int, check=lambda n: n >= 2, what="an integer >= 2")
    crit = rd.get("problem", "crit_exp", float, check=lambda x: x > 1, what="> 1")

    dim = rd.get("mesh", "dim", int, check=lambda d: d in (1, 2), what="1 or 2")
    extents = rd.floats("mesh", "extents")
    if len(extents) != dim or not all(_positive(e) for e in extents):
        rd.fail("mesh", "extents", f"need {dim} positive lengths")
    try:
        cells = tuple(int(x) for x in rd.raw("mesh", "cells").replace(",", " ").split())
    except ValueError:
        rd.fail("mesh", "cells", "expected integers")
    if len(cells) != dim or min(cells) < 1 or int(np.prod(cells)) < 4:
        rd.fail("mesh", "cells", f"need {dim} positive counts with at least 4 cells total")

    shape = rd.get("source", "shape", str.lower, "zero",
                   lambda s: s in ("zero", "bump", "constant", "file"),
                   "one of zero, bump, constant, file")
    source = SourceConfig(
        shape=shape,
        center=rd.floats("source", "center", tuple(0.5 * e for e in extents)),
        width=rd.get("source", "width", float, 0.1, _positive, "positive"),
        file=rd.path("source", "file"),
        target_fraction=rd.get("source", "target_fraction", float, None, _positive,
                               "positive"),
        amplitude=rd.get("source", "amplitude", float, None, np.isfinite, "finite"))
    if len(source.center) != dim:
        rd.fail("source", "center", f"need {dim} coordinates")
    if shape == "file" and source.file is None:
        rd.fail("source", "shape", "shape 'file' needs a 'file' entry")
    if source.target_fraction is not None and source.amplitude is not None:
        rd.fail("source", "amplitude", "give either target_fraction or amplitude, not both")

    branches = tuple(rd.get("solver", "branches", str.lower, "plus minus").split())
    if not branches or any(b not in ("plus", "minus") for b in branches):
        rd.fail("solver", "branches", "entries must be 'plus' or 'minus'")
    solver = SolverConfig(
        starts=rd.get("solver", "starts", int, 8, lambda n: n >= 1, ">= 1"),
        budget=rd.get("solver", "budget", int, 5000, lambda n: n >= 1, ">= 1"),
        tol_res=rd.get("solver", "tol_res", float, 1e-6, _positive, "positive"),
        tol_step=rd.get("solver", "tol_step", float, 1e-14, _positive, "positive"),
        metric=rd.get("solver", "metric", str.lower, "h1", lambda s: s in ("h1", "l2"),
                      "h1 or l2"),
        workers=rd.get("solver", "workers", int, 1, lambda n: n >= 1, ">= 1"),
        branches=branches)

    fiber = FiberConfig(
        direction=rd.get("fiber", "direction", str.lower, "bump",
                         lambda s: s in ("bump", "sine", "file"), "bump, sine or file"),
        file=rd.path("fiber", "file"),
        t_min=rd.get("fiber", "t_min", float, 1e-2, _positive, "positive"),
        t_max=rd.get("fiber", "t_max", float, 1e2, _positive, "positive"),
        points=rd.get("fiber", "points", int, 200, lambda n: n >= 2, ">= 2"))
    if fiber.direction == "file" and fiber.file is None:
        rd.fail("fiber", "direction", "direction 'file' needs a 'file' entry")
    if fiber.t_min >= fiber.t_max:
        rd.fail("fiber", "t_max", "must exceed t_min")

    out = rd.path("run", "output_dir") or Path(base_dir) / "out"
    return RunConfig(
        phi=phi, N=N, mesh_dim=dim, extents=extents, cells=cells, crit_exp=crit,
        source=source, solver=solver, fiber=fiber,
        seed=rd.get("run", "seed", int, 0, lambda n: n >= 0, ">= 0"),
        output_dir=out,
        directions=rd.get("run", "directions", int, 100, lambda n: n >= 0, ">= 0"),
        s_starts=rd.get("run", "s_starts", int, 8, lambda n: n >= 1, ">= 1"))


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, base_dir=path.parent)
