"""Run configuration: a flat ``key = value`` text format with typed fields."""
import dataclasses
import os
from dataclasses import dataclass, fields
from typing import Optional

from .boundary import (DEFAULT_JUMP_POLICY, NAMED_DATA, REGULARIZERS, canonical_policy,
                       expression_datum)
from .solver import canonical_method

MODES = ("uniform", "adaptive")
DEFAULT_N = {"uniform": 16, "adaptive": 6}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    datum: str = "cavity"
    regularizer: str = "modified-lagrange"
    jump_policy: str = DEFAULT_JUMP_POLICY
    method: str = "mini"
    mode: str = "uniform"
    theta: Optional[float] = None
    n: Optional[int] = None
    mesh_file: Optional[str] = None
    levels: int = 5
    max_dofs: int = 70000
    max_iters: int = 25
    csv: Optional[str] = None
    vtk_dir: Optional[str] = None

    def validated(self):
        """A normalised copy; raises :class:`ConfigError` on any inconsistency."""
        c = dataclasses.replace(self)
        try:
            c.method = canonical_method(c.method)
            c.jump_policy = canonical_policy(c.jump_policy)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if c.regularizer not in REGULARIZERS:
            raise ConfigError(f"unknown regularizer {c.regularizer!r}; expected one of {tuple(REGULARIZERS)}")
        if c.mode not in MODES:
            raise ConfigError(f"unknown mode {c.mode!r}; expected one of {MODES}")
        if c.mode == "adaptive":
            if c.theta is None:
                raise ConfigError("adaptive mode needs --theta")
            if not 0.0 < c.theta < 1.0:
                raise ConfigError(f"theta must lie in (0, 1), got {c.theta}")
        elif c.theta is not None:
            raise ConfigError("theta is only meaningful in adaptive mode")
        if c.datum not in NAMED_DATA and not os.path.isfile(c.datum):
            raise ConfigError(f"datum {c.datum!r} is neither a known name {tuple(NAMED_DATA)} nor a file")
        if c.mesh_file is not None:
            if c.n is not None:
                raise ConfigError("give either n or mesh_file, not both")
            if not os.path.isfile(c.mesh_file):
                raise ConfigError(f"mesh file {c.mesh_file!r} not found")
        elif c.n is None:
            c.n = DEFAULT_N[c.mode]
        if c.n is not None and c.n < 1:
            raise ConfigError("n must be a positive integer")
        if c.levels < 1 or c.max_iters < 1 or c.max_dofs < 1:
            raise ConfigError("levels, max_iters and max_dofs must be positive")
        for path in (c.csv,):
            if path is not None:
                parent = os.path.dirname(os.path.abspath(path))
                if not os.path.isdir(parent) or not os.access(parent, os.W_OK):
                    raise ConfigError(f"cannot write {path!r}")
        if c.vtk_dir is not None:
            parent = os.path.dirname(os.path.abspath(c.vtk_dir))
            if not os.access(c.vtk_dir if os.path.isdir(c.vtk_dir) else parent, os.W_OK):
                raise ConfigError(f"cannot write into {c.vtk_dir!r}")
        return c

    def make_datum(self):
        if self.datum in NAMED_DATA:
            return NAMED_DATA[self.datum](self.jump_policy)
        return read_datum_file(self.datum, self.jump_policy)


_TYPES = {f.name: f.type for f in fields(RunConfig)}
_CASTS = {"theta": float, "n": int, "levels": int, "max_dofs": int, "max_iters": int}


def parse_config(text):
    """Parse ``key = value`` lines; blank lines and ``#`` comments are skipped.

    Keys use either underscores or the dashed flag spelling.
    """
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if value.lower() in ("", "none"):
            values[key] = None
            continue
        try:
            values[key] = _CASTS.get(key, str)(value)
        except ValueError:
            raise ConfigError(f"line {lineno}: bad value {value!r} for {key}") from None
    return RunConfig(**values)


def serialize_config(config):
    lines = []
    for f in fields(config):
        v = getattr(config, f.name)
        if v is not None:
            lines.append(f"{f.name} = {v!r}" if isinstance(v, float) else f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read())


def read_datum_file(path, jump_policy=DEFAULT_JUMP_POLICY):
    """Datum on the unit square from a file with one ``ux, uy`` expression line per side.

    Sides are bottom, right, top, left (counterclockwise from the origin).
    """
    with open(path) as fh:
        exprs = [s.split("#", 1)[0].strip() for s in fh]
    exprs = [e for e in exprs if e]
    if len(exprs) != 4:
        raise ConfigError(f"{path}: expected 4 expression lines, found {len(exprs)}")
    try:
        return expression_datum(exprs, jump_policy=jump_policy)
    except (SyntaxError, ValueError, NameError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
