"""Metric presets, INI configs and small string parsers used by the CLI."""

from __future__ import annotations

import configparser
import hashlib
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError
from .linearized_cr import GoodMetric
from .riemannian import ConformalMetric, FlatMetric, MetricField, TubeMetric, read_grid_file


def parse_vector(text: str, integer: bool = True) -> np.ndarray:
    """'1,0,-2' -> array."""
    try:
        vals = [float(x) for x in str(text).replace(" ", "").split(",") if x != ""]
    except ValueError as exc:
        raise InvalidArgumentError(f"cannot parse vector {text!r}") from exc
    if not vals:
        raise InvalidArgumentError("empty vector")
    v = np.array(vals)
    if integer:
        if not np.all(v == np.round(v)):
            raise InvalidArgumentError(f"{text!r} is not an integer vector")
        return v.astype(int)
    return v


def parse_grid(text: str) -> tuple:
    """'128x64' -> (128, 64)."""
    m = re.fullmatch(r"\s*(\d+)\s*[xX]\s*(\d+)\s*", str(text))
    if not m:
        raise InvalidArgumentError(f"grid must look like 128x128, got {text!r}")
    return int(m.group(1)), int(m.group(2))


def parse_modes(text: str, dim: int) -> list:
    """'1 0 : 0.2 0.0; 0 1 : 0 0.1' -> [((1, 0), 0.2, 0.0), ((0, 1), 0.0, 0.1)]."""
    out = []
    for chunk in str(text).split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        if ":" not in chunk:
            raise InvalidArgumentError(f"mode {chunk!r} needs 'k1 .. kn : a b'")
        left, right = chunk.split(":", 1)
        try:
            k = tuple(int(x) for x in left.split())
            a, b = (float(x) for x in right.split())
        except ValueError as exc:
            raise InvalidArgumentError(f"cannot parse mode {chunk!r}") from exc
        if len(k) != dim:
            raise InvalidArgumentError(f"mode {chunk!r} has the wrong dimension")
        out.append((k, a, b))
    return out


def _positive(name, x):
    if not x > 0:
        raise InvalidArgumentError(f"{name} must be positive")
    return x


def metric_from_section(sec, base_dir: Path | None = None) -> MetricField:
    kind = sec.get("kind", "flat").strip()
    dim = int(sec.get("dim", "2"))
    if dim < 1:
        raise InvalidArgumentError("dim must be >= 1")
    if kind == "flat":
        if "matrix" in sec:
            m = parse_vector(sec["matrix"], integer=False).reshape(dim, dim)
            return FlatMetric(dim, m)
        return FlatMetric(dim)
    if kind == "conformal":
        return ConformalMetric(dim, parse_modes(sec.get("modes", ""), dim))
    if kind == "tube":
        return TubeMetric(dim, _positive("k", float(sec.get("k", "1"))), int(sec.get("axis", "0")))
    if kind == "good":
        eps = _positive("eps", float(sec.get("eps", "0.05")))
        return GoodMetric(dim, eps, _positive("k", float(sec.get("k", "1"))), int(sec.get("axis", "0")))
    if kind == "grid":
        path = Path(sec["file"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return read_grid_file(path)
    raise InvalidArgumentError(f"unknown metric kind {kind!r}")


def load_metric(source: str) -> MetricField:
    """A preset name (flat2, flat3, ...) or the path of an INI file with [metric]."""
    m = re.fullmatch(r"flat(\d+)", source.strip())
    if m:
        return FlatMetric(int(m.group(1)))
    path = Path(source)
    if not path.exists():
        raise InvalidArgumentError(f"unknown metric preset or missing file {source!r}")
    cp = configparser.ConfigParser()
    cp.read(path)
    if "metric" not in cp:
        raise InvalidArgumentError(f"{source} has no [metric] section")
    return metric_from_section(cp["metric"], path.parent)


def load_defaults(path: str | None, command: str) -> dict:
    """Flag defaults from the [<command>] section of an INI file."""
    if not path:
        return {}
    cp = configparser.ConfigParser()
    cp.optionxform = str        # flags such as --S are case sensitive
    if not cp.read(path):
        raise InvalidArgumentError(f"cannot read config {path!r}")
    if command not in cp:
        return {}
    return dict(cp[command].items())


@dataclass
class Report:
    command: str
    echo: dict
    fields: list = field(default_factory=list)
    version: str = ""

    def add(self, key, value):
        self.fields.append((key, value))

    @property
    def input_hash(self) -> str:
        txt = "\n".join(f"{k} = {_fmt(v)}" for k, v in sorted(self.echo.items()))
        return hashlib.sha256(f"{self.command}\n{txt}".encode()).hexdigest()

    def text(self) -> str:
        lines = [f"command = {self.command}", f"version = {self.version}",
                 f"input_hash = {self.input_hash}"]
        lines += [f"arg.{k} = {_fmt(v)}" for k, v in sorted(self.echo.items())]
        lines += [f"{k} = {_fmt(v)}" for k, v in self.fields]
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, np.ndarray):
        return ",".join(_fmt(x) for x in v.ravel())
    if isinstance(v, (list, tuple)):
        return ",".join(_fmt(x) for x in v)
    return str(v)
