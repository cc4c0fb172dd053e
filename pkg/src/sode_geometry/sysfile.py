"""Loading system definition files and sampling evaluation points."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable

import jsonschema
import numpy as np

from . import jets as J
from .constrained import ConstrainedFrame, ConstrainedSystem
from .expr import ExprSyntaxError, UnboundVariableError, parse
from .nonholonomic import NonholonomicProblem, ReducedSystem, SingularSystemError
from .unconstrained import SodeSystem, build_frame

__all__ = [
    "SystemFileError",
    "LoadedSystem",
    "load_schema",
    "load_system",
    "parse_system",
    "sample_points",
]

MAX_RESAMPLES = 100
DEFAULT_RANGE = (-1.0, 1.0)


class SystemFileError(ValueError):
    """Invalid system file; ``where`` is a JSON path like ``F[1]``."""

    def __init__(self, message: str, where: str = "", source: str = ""):
        self.where = where
        self.source = source
        prefix = f"{source}: " if source else ""
        loc = f"{where}: " if where else ""
        super().__init__(prefix + loc + message)


def load_schema(name: str = "system") -> dict:
    text = resources.files("sode_geometry").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


@dataclass
class LoadedSystem:
    kind: str
    name: str
    system: Any  # SodeSystem | ConstrainedSystem | NonholonomicProblem
    points: list[np.ndarray]
    seed: int
    domain: dict[str, tuple[float, float]]
    closed_form_F: ConstrainedSystem | None = None
    doc: dict = field(default_factory=dict)

    @property
    def names(self) -> list[str]:
        return list(self.system.names)

    @property
    def evaluator(self):
        """Object exposing the constrained-system interface (or the SODE)."""
        if self.kind == "nonholonomic":
            return ReducedSystem(self.system)
        return self.system

    def frame(self, point, order: int, perturb: float = 0.0):
        if self.kind == "sode":
            return build_frame(self.system, point, order, perturb)
        return ConstrainedFrame(self.evaluator, point, order, perturb)

    def as_constrained(self):
        """Constrained-system view; a SODE becomes one with no constrained coordinates."""
        if self.kind == "sode":
            s = self.system
            return ConstrainedSystem(s.coords, (), s.F, (), None, None, dict(s.constants))
        return self.evaluator

    def probe(self, point) -> None:
        """Cheap evaluation raising the domain/singularity errors a full run would hit."""
        z = J.seeds(np.asarray(point, dtype=float), 1)
        if self.kind == "sode":
            self.system.evaluate(z)
        else:
            self.evaluator.evaluate(z)
            self.evaluator.upsilon(z)


def _check_expr(text: str, where: str, source: str):
    try:
        return parse(text)
    except ExprSyntaxError as exc:
        raise SystemFileError(f"{exc}", where, source) from None


def _nested(obj, where: str, source: str):
    if obj is None:
        return None
    if isinstance(obj, str):
        _check_expr(obj, where, source)
        return obj
    return [_nested(o, f"{where}[{i}]", source) for i, o in enumerate(obj)]


def parse_system(doc: dict, source: str = "") -> LoadedSystem:
    try:
        jsonschema.validate(doc, load_schema("system"))
    except jsonschema.ValidationError as exc:
        path = "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in exc.absolute_path).lstrip(".")
        raise SystemFileError(exc.message, path, source) from None

    kind = doc["kind"]
    coords = list(doc["coords"])
    constants = {k: float(v) for k, v in doc.get("constants", {}).items()}
    clash = set(constants) & set(coords)
    if clash:
        raise SystemFileError(f"constants shadow coordinates: {sorted(clash)}", "constants", source)
    for key in ("F", "Psi"):
        for i, text in enumerate(doc.get(key, [])):
            _check_expr(text, f"{key}[{i}]", source)
    if "L" in doc:
        _check_expr(doc["L"], "L", source)
    Ups = _nested(doc.get("Upsilon"), "Upsilon", source)
    metric = _nested(doc.get("metric"), "metric", source)

    closed = None
    try:
        if kind == "sode":
            if len(doc["F"]) != len(coords):
                raise SystemFileError(f"expected {len(coords)} F components, got {len(doc['F'])}", "F", source)
            system = SodeSystem.from_strings(coords, doc["F"], constants)
        else:
            split = doc["split"]
            if split > len(coords):
                raise SystemFileError("split exceeds the number of coordinates", "split", source)
            free, cons = coords[:split], coords[split:]
            if len(doc["Psi"]) != len(cons):
                raise SystemFileError(f"expected {len(cons)} Psi components, got {len(doc['Psi'])}", "Psi", source)
            if kind == "constrained":
                if len(doc["F"]) != split:
                    raise SystemFileError(f"expected {split} F components, got {len(doc['F'])}", "F", source)
                system = ConstrainedSystem.from_strings(free, cons, doc["F"], doc["Psi"], Ups, metric, constants)
            else:
                system = NonholonomicProblem.from_strings(free, cons, doc["L"], doc["Psi"], Ups, metric, constants)
                if "F" in doc:
                    if len(doc["F"]) != split:
                        raise SystemFileError(f"expected {split} F components, got {len(doc['F'])}", "F", source)
                    closed = ConstrainedSystem.from_strings(free, cons, doc["F"], doc["Psi"], Ups, metric, constants)
    except UnboundVariableError as exc:
        raise SystemFileError(str(exc), exc.location or "", source) from None
    except SystemFileError:
        raise
    except ValueError as exc:
        raise SystemFileError(str(exc), "", source) from None

    names = list(system.names)
    points = []
    for i, pt in enumerate(doc.get("points", [])):
        if len(pt) != len(names):
            raise SystemFileError(f"point has {len(pt)} coordinates, expected {len(names)} {names}", f"points[{i}]", source)
        points.append(np.asarray(pt, dtype=float))
    domain = {}
    for key, rng in doc.get("domain", {}).items():
        if key not in names:
            raise SystemFileError(f"unknown coordinate {key!r} (known: {names})", f"domain.{key}", source)
        lo, hi = rng
        if not lo <= hi:
            raise SystemFileError("empty range", f"domain.{key}", source)
        domain[key] = (float(lo), float(hi))
    return LoadedSystem(kind, doc.get("name", Path(source).stem if source else kind), system, points,
                        int(doc.get("seed", 0)), domain, closed, doc)


def load_system(path: str | Path) -> LoadedSystem:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SystemFileError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}", "", str(path)) from None
    except OSError as exc:
        raise SystemFileError(f"cannot read file: {exc.strerror}", "", str(path)) from None
    return parse_system(doc, str(path))


def sample_points(
    loaded: LoadedSystem,
    count: int,
    rng: np.random.Generator,
    accept: Callable[[np.ndarray], None] | None = None,
) -> list[np.ndarray]:
    """Uniform points in the domain box; rejected candidates are redrawn.

    ``accept`` raises (domain error, singular system) for unusable points;
    after ``MAX_RESAMPLES`` consecutive rejections the last error propagates.
    """
    accept = accept or loaded.probe
    lo = np.array([loaded.domain.get(n, DEFAULT_RANGE)[0] for n in loaded.names])
    hi = np.array([loaded.domain.get(n, DEFAULT_RANGE)[1] for n in loaded.names])
    out = []
    for _ in range(count):
        for attempt in range(MAX_RESAMPLES):
            p = rng.uniform(lo, hi)
            try:
                accept(p)
            except (ArithmeticError, SingularSystemError, np.linalg.LinAlgError):
                if attempt == MAX_RESAMPLES - 1:
                    raise
                continue
            out.append(p)
            break
    return out
