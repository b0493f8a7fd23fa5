"""
Scenario files: a YAML document with ``domain``, ``geometry``, ``fields`` and
``tasks`` sections. Geometry and field bindings are named expressions that
rasterize deterministically onto the grid (node-centre membership).

Example::

    name: annulus_capacity
    domain: {dim: 2, bounds: [-2.25, 2.25], resolution: 289, p: 2}
    geometry:
      E: {ball: {center: [0, 0], radius: 1}}
      A: {ball: {center: [0, 0], radius: 2}}
    tasks:
      - {name: cap, kind: capacity, E: E, A: A, expect: {value: 9.0647, rtol: 0.05}}
"""

from __future__ import annotations

import copy
import difflib
import logging
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from finepot.classes.errors import ConfigError
from finepot.core.dumps import read_binary, read_field_csv
from finepot.core.fine_topology import positivity_set
from finepot.core.grid_domain import GridDomain, NodeSet, ScalarField, build_domain

_LOGGER = logging.getLogger(__name__)

GALLERY_DIR = Path(__file__).parent / "gallery"
SECTIONS = ("name", "description", "seed", "domain", "geometry", "fields", "tasks")
RESERVED_SETS = ("all", "empty")

SET_PRIMITIVES = ("ball", "box", "segment", "cusp", "point", "halfspace", "all", "empty",
                  "union", "intersection", "difference", "complement", "level_set")
FIELD_PRIMITIVES = ("constant", "affine", "log_norm", "power_norm", "distance", "tent", "quadratic",
                    "scaled", "min", "max", "file", "from_task", "indicator", "overlay")


@dataclass
class Scenario:
    name: str
    domain: dict
    tasks: list[dict]
    geometry: dict = field(default_factory=dict)
    fields: dict = field(default_factory=dict)
    description: str = ""
    seed: int = 0
    source: Path | None = None

    @classmethod
    def from_dict(cls, data: dict, source: Path | None = None) -> "Scenario":
        if not isinstance(data, dict):
            raise ConfigError("scenario must be a mapping")
        unknown = set(data) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"unknown scenario sections: {', '.join(sorted(unknown))}")
        for key in ("name", "domain", "tasks"):
            if key not in data:
                raise ConfigError(f"scenario is missing the '{key}' section")
        if not isinstance(data["tasks"], list) or not data["tasks"]:
            raise ConfigError("'tasks' must be a non-empty list")
        try:
            seed = int(data.get("seed", 0))
        except (TypeError, ValueError) as e:
            raise ConfigError(f"seed must be an integer: {e}") from e
        scenario = cls(
            name=str(data["name"]),
            description=str(data.get("description", "")),
            seed=seed,
            domain=dict(data["domain"]),
            geometry=dict(data.get("geometry") or {}),
            fields=dict(data.get("fields") or {}),
            tasks=[dict(t) for t in data["tasks"]],
            source=source,
        )
        scenario.validate()
        return scenario

    @classmethod
    def from_file(cls, path: str | Path) -> "Scenario":
        path = Path(path)
        try:
            with path.open() as handle:
                data = yaml.safe_load(handle)
        except OSError as e:
            raise ConfigError(f"cannot read scenario {path}: {e}") from e
        except yaml.YAMLError as e:
            raise ConfigError(f"cannot parse scenario {path}: {e}") from e
        return cls.from_dict(data, source=path)

    def to_dict(self) -> dict:
        return copy.deepcopy({
            "name": self.name,
            "description": self.description,
            "seed": self.seed,
            "domain": self.domain,
            "geometry": self.geometry,
            "fields": self.fields,
            "tasks": self.tasks,
        })

    @property
    def base_dir(self) -> Path:
        return self.source.parent if self.source is not None else Path.cwd()

    def validate(self) -> None:
        """Every task has a unique name, a known kind and references only bound names."""
        from finepot.scenarios.tasks import TASKS

        for key in ("dim", "bounds", "resolution"):
            if key not in self.domain:
                raise ConfigError(f"domain is missing '{key}'")
        seen: list[str] = []
        for task in self.tasks:
            name = task.get("name")
            kind = task.get("kind")
            if not name or not isinstance(name, str):
                raise ConfigError(f"task without a name: {task}")
            if name in seen:
                raise ConfigError(f"duplicate task name {name!r}")
            if kind not in TASKS:
                raise ConfigError(f"task {name!r}: unknown kind {kind!r}; known kinds: {', '.join(sorted(TASKS))}")
            spec = TASKS[kind]
            for key in spec.required:
                if key not in task:
                    raise ConfigError(f"task {name!r} ({kind}) is missing '{key}'")
            for key in spec.sets:
                if key in task:
                    self._check_set(task[key], f"task {name!r}.{key}")
            for key in spec.fields:
                if key in task:
                    self._check_field(task[key], f"task {name!r}.{key}", seen)
            for key in spec.task_refs:
                if key in task and task[key] not in seen:
                    raise ConfigError(f"task {name!r}.{key} references {task[key]!r}, not an earlier task")
            seen.append(name)

    def _check_set(self, spec: Any, where: str) -> None:
        if isinstance(spec, str):
            if spec not in self.geometry and spec not in RESERVED_SETS:
                raise ConfigError(f"{where}: unbound geometry name {spec!r}")
        elif not isinstance(spec, dict) or len(spec) != 1 or next(iter(spec)) not in SET_PRIMITIVES:
            raise ConfigError(f"{where}: expected a geometry name or one of {', '.join(SET_PRIMITIVES)}")

    def _check_field(self, spec: Any, where: str, earlier: list[str]) -> None:
        if isinstance(spec, str):
            if spec not in self.fields:
                raise ConfigError(f"{where}: unbound field name {spec!r}")
            for task in _from_task_refs(self.fields[spec], self.fields):
                if task not in earlier:
                    raise ConfigError(f"{where}: field {spec!r} needs task {task!r} to run first")
        elif isinstance(spec, (int, float)):
            return
        elif not isinstance(spec, dict) or len(spec) != 1 or next(iter(spec)) not in FIELD_PRIMITIVES:
            raise ConfigError(f"{where}: expected a field name, a number or one of {', '.join(FIELD_PRIMITIVES)}")
        else:
            for task in _from_task_refs(spec, self.fields):
                if task not in earlier:
                    raise ConfigError(f"{where}: needs task {task!r} to run first")

    def task_dependencies(self, task: dict) -> set[str]:
        from finepot.scenarios.tasks import TASKS

        spec = TASKS[task["kind"]]
        deps = {task[key] for key in spec.task_refs if key in task}
        for key in spec.fields:
            if key in task:
                value = task[key]
                target = self.fields.get(value) if isinstance(value, str) else value
                deps |= set(_from_task_refs(target, self.fields))
        for key in spec.sets:
            if key in task:
                deps |= set(_set_task_refs(task[key], self.geometry, self.fields))
        return deps

    def build_domain(self) -> GridDomain:
        spec = self.domain
        try:
            return build_domain(int(spec["dim"]), spec["bounds"], spec["resolution"],
                                spec.get("weight"), spec.get("p"))
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid domain section: {e}") from e

    @property
    def p(self) -> float:
        return float(self.domain.get("p", 2.0))


def _from_task_refs(spec: Any, fields: dict, depth: int = 0) -> list[str]:
    if depth > 32:
        raise ConfigError("field bindings are nested too deeply (cycle?)")
    refs: list[str] = []
    if isinstance(spec, str) and spec in fields:
        refs += _from_task_refs(fields[spec], fields, depth + 1)
    elif isinstance(spec, dict):
        for key, value in spec.items():
            if key == "from_task":
                refs.append(value["task"] if isinstance(value, dict) else value)
            elif key in ("field", "fields", "with"):
                refs += _from_task_refs(value, fields, depth + 1)
            elif isinstance(value, (dict, list)):
                refs += _from_task_refs(value, fields, depth + 1)
    elif isinstance(spec, list):
        for item in spec:
            refs += _from_task_refs(item, fields, depth + 1)
    return refs


def _set_task_refs(spec: Any, geometry: dict, fields: dict, depth: int = 0) -> list[str]:
    if depth > 32:
        raise ConfigError("geometry bindings are nested too deeply (cycle?)")
    if isinstance(spec, str):
        return _set_task_refs(geometry[spec], geometry, fields, depth + 1) if spec in geometry else []
    refs: list[str] = []
    if isinstance(spec, dict):
        for key, value in spec.items():
            if key == "level_set":
                refs += _from_task_refs(value.get("field"), fields, depth + 1)
            else:
                refs += _set_task_refs(value, geometry, fields, depth + 1)
    elif isinstance(spec, list):
        for item in spec:
            refs += _set_task_refs(item, geometry, fields, depth + 1)
    return refs


def gallery() -> list[tuple[str, str, Path]]:
    """(name, description, path) of every bundled scenario, sorted by name."""
    entries = []
    for path in sorted(GALLERY_DIR.glob("*.yaml")):
        with path.open() as handle:
            data = yaml.safe_load(handle) or {}
        entries.append((str(data.get("name", path.stem)), str(data.get("description", "")).strip(), path))
    return sorted(entries)


def find_scenario(name: str | Path) -> Path:
    """A path to an existing file, or the name of a gallery scenario."""
    path = Path(name)
    if path.exists():
        return path
    known = {entry[0]: entry[2] for entry in gallery()}
    known.update({entry[2].stem: entry[2] for entry in gallery()})
    if str(name) in known:
        return known[str(name)]
    suggestions = difflib.get_close_matches(str(name), sorted(known), n=5, cutoff=0.4)
    message = f"unknown scenario {str(name)!r}"
    if suggestions:
        message += f"; did you mean: {', '.join(suggestions)}"
    raise ConfigError(message, suggestions=suggestions)


def load_scenario(config: str | Path | dict | Scenario) -> Scenario:
    if isinstance(config, Scenario):
        return config
    if isinstance(config, dict):
        return Scenario.from_dict(copy.deepcopy(config))
    return Scenario.from_file(find_scenario(config))


def apply_overrides(data: dict, overrides: list[str] | tuple[str, ...]) -> dict:
    """
    Apply ``dotted.path=value`` overrides (value parsed as YAML). List items are
    addressed by index or, for ``tasks``, by task name.
    """
    data = copy.deepcopy(data)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as e:
            raise ConfigError(f"override {item!r}: cannot parse value: {e}") from e
        parts = key.strip().split(".")
        target = data
        for depth, part in enumerate(parts[:-1]):
            target = _descend(target, part, key)
        last = parts[-1]
        if isinstance(target, list):
            target[_list_index(target, last, key)] = value
        elif isinstance(target, dict):
            target[last] = value
        else:
            raise ConfigError(f"override {key!r}: {parts[-2] if len(parts) > 1 else key} is not a section")
    return data


def _descend(target, part: str, key: str):
    if isinstance(target, dict):
        if part not in target:
            raise ConfigError(f"override {key!r}: no section {part!r}")
        return target[part]
    if isinstance(target, list):
        return target[_list_index(target, part, key)]
    raise ConfigError(f"override {key!r}: cannot descend into {part!r}")


def _list_index(items: list, part: str, key: str) -> int:
    if part.lstrip("-").isdigit():
        index = int(part)
        if -len(items) <= index < len(items):
            return index
        raise ConfigError(f"override {key!r}: index {index} out of range")
    for index, item in enumerate(items):
        if isinstance(item, dict) and item.get("name") == part:
            return index
    raise ConfigError(f"override {key!r}: no list item named {part!r}")


class Rasterizer:
    """Resolves geometry and field expressions of a scenario onto its grid."""

    def __init__(self, scenario: Scenario, domain: GridDomain, outputs: dict | None = None):
        self.scenario = scenario
        self.domain = domain
        self.outputs = outputs if outputs is not None else {}
        self._sets: dict[str, NodeSet] = {}
        self._fields: dict[str, ScalarField] = {}
        self._lock = threading.Lock()

    # geometry

    def nodeset(self, spec: Any, _stack: tuple = ()) -> NodeSet:
        if isinstance(spec, str):
            with self._lock:
                if spec in self._sets:
                    return self._sets[spec]
            if spec not in self.scenario.geometry:
                if spec == "all":
                    return self.domain.full()
                if spec == "empty":
                    return self.domain.empty()
                raise ConfigError(f"unbound geometry name {spec!r}")
            if spec in _stack:
                raise ConfigError(f"geometry binding {spec!r} refers to itself")
            result = self.nodeset(self.scenario.geometry[spec], _stack + (spec,))
            with self._lock:
                self._sets[spec] = result
            return result
        if not isinstance(spec, dict) or len(spec) != 1:
            raise ConfigError(f"invalid geometry expression {spec!r}")
        (kind, args), = spec.items()
        try:
            return self._primitive_set(kind, args, _stack)
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"invalid {kind} geometry {args!r}: {e}") from e

    def _primitive_set(self, kind: str, args: Any, stack: tuple) -> NodeSet:
        domain = self.domain
        if kind == "ball":
            if args.get("closed", False):
                return domain.closed_ball(args["center"], float(args["radius"]))
            return domain.ball(args["center"], float(args["radius"]))
        if kind == "box":
            if args.get("open", False):
                return domain.open_box(args["lower"], args["upper"])
            return domain.box(args["lower"], args["upper"])
        if kind == "point":
            return domain.point(args["at"] if isinstance(args, dict) else args)
        if kind == "segment":
            start = np.asarray(args["start"], dtype=float)
            end = np.asarray(args["end"], dtype=float)
            halfwidth = float(args.get("halfwidth", 0.5 * domain.h_min))
            direction = end - start
            length2 = float(direction @ direction)
            t = np.clip((domain.coords - start) @ direction / length2, 0.0, 1.0)
            distance = np.linalg.norm(domain.coords - (start + t[:, None] * direction), axis=1)
            return NodeSet(domain, distance < halfwidth)
        if kind == "cusp":
            return NodeSet(domain, _cusp_mask(domain, args))
        if kind == "halfspace":
            axis = int(args["axis"])
            value = float(args["value"])
            slack = 1e-9 * domain.h_min
            if args.get("side", "below") == "below":
                return NodeSet(domain, domain.coords[:, axis] <= value + slack)
            return NodeSet(domain, domain.coords[:, axis] >= value - slack)
        if kind == "all":
            return domain.full()
        if kind == "empty":
            return domain.empty()
        if kind == "union":
            result = domain.empty()
            for item in args:
                result = result | self.nodeset(item, stack)
            return result
        if kind == "intersection":
            result = domain.full()
            for item in args:
                result = result & self.nodeset(item, stack)
            return result
        if kind == "difference":
            first, second = args
            return self.nodeset(first, stack) - self.nodeset(second, stack)
        if kind == "complement":
            return ~self.nodeset(args, stack)
        if kind == "level_set":
            return positivity_set(self.field(args["field"]), float(args.get("threshold", 0.0)))
        raise ConfigError(f"unknown geometry primitive {kind!r}")

    # fields

    def field(self, spec: Any, _stack: tuple = ()) -> ScalarField:
        if isinstance(spec, bool):
            raise ConfigError(f"invalid field expression {spec!r}")
        if isinstance(spec, (int, float)):
            return self.domain.constant(float(spec))
        if isinstance(spec, str):
            with self._lock:
                if spec in self._fields:
                    return self._fields[spec]
            if spec not in self.scenario.fields:
                raise ConfigError(f"unbound field name {spec!r}")
            if spec in _stack:
                raise ConfigError(f"field binding {spec!r} refers to itself")
            result = self.field(self.scenario.fields[spec], _stack + (spec,))
            if not _uses_task(self.scenario.fields[spec], self.scenario.fields):
                with self._lock:
                    self._fields[spec] = result
            return result
        if not isinstance(spec, dict) or len(spec) != 1:
            raise ConfigError(f"invalid field expression {spec!r}")
        (kind, args), = spec.items()
        try:
            return self._primitive_field(kind, args, _stack)
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"invalid {kind} field {args!r}: {e}") from e

    def _primitive_field(self, kind: str, args: Any, stack: tuple) -> ScalarField:
        domain = self.domain
        coords = domain.coords
        if kind == "constant":
            value = args["value"] if isinstance(args, dict) else args
            return domain.constant(float(value))
        if kind == "affine":
            gradient = np.asarray(args.get("gradient", [0.0] * domain.dim), dtype=float)
            return ScalarField(domain, float(args.get("offset", 0.0)) + coords @ gradient)
        if kind in ("log_norm", "power_norm", "distance", "tent", "quadratic"):
            center = args.get("center", args.get("to", [0.0] * domain.dim))
            radius = domain.distances(center)
            floor = args.get("floor")
            if floor is not None:
                radius = np.maximum(radius, float(floor))
            scale = float(args.get("scale", 1.0))
            with np.errstate(divide="ignore"):
                if kind == "log_norm":
                    values = scale * np.log(radius)
                elif kind == "power_norm":
                    values = scale * radius ** float(args["gamma"])
                elif kind == "distance":
                    values = scale * radius
                elif kind == "tent":
                    values = float(args.get("height", 0.0)) - float(args.get("slope", 1.0)) * radius
                else:
                    values = float(args.get("coefficient", 1.0)) * radius ** 2
            return ScalarField(domain, values + float(args.get("offset", 0.0)))
        if kind == "scaled":
            base = self.field(args["field"], stack)
            return base.with_values(float(args.get("factor", 1.0)) * base.values + float(args.get("offset", 0.0)))
        if kind in ("min", "max"):
            items = [self.field(item, stack) for item in args]
            reduce = np.minimum if kind == "min" else np.maximum
            values = items[0].values
            for item in items[1:]:
                values = reduce(values, item.values)
            return ScalarField(domain, values)
        if kind == "overlay":
            base = self.field(args["field"], stack)
            nodes = self.nodeset(args["on"])
            top = self.field(args["with"], stack)
            return ScalarField(domain, np.where(nodes.mask, top.values, base.values))
        if kind == "indicator":
            nodes = self.nodeset(args["set"])
            return ScalarField(domain, np.where(nodes.mask, float(args.get("inside", 1.0)),
                                                float(args.get("outside", 0.0))))
        if kind == "file":
            path = Path(args["path"] if isinstance(args, dict) else args)
            if not path.is_absolute():
                path = self.scenario.base_dir / path
            if path.suffix == ".csv":
                return read_field_csv(path, domain)
            return read_binary(path, domain)
        if kind == "from_task":
            task = args["task"] if isinstance(args, dict) else args
            output = args.get("output") if isinstance(args, dict) else None
            if task not in self.outputs:
                raise ConfigError(f"field refers to task {task!r}, which has not produced output")
            produced = self.outputs[task].fields
            if output is None:
                if len(produced) != 1:
                    raise ConfigError(f"task {task!r} produced {sorted(produced)}; name an output")
                output = next(iter(produced))
            if output not in produced:
                raise ConfigError(f"task {task!r} has no output {output!r}; it produced {sorted(produced)}")
            return produced[output]
        raise ConfigError(f"unknown field primitive {kind!r}")


def _uses_task(spec: Any, fields: dict) -> bool:
    return bool(_from_task_refs(spec, fields))


def _cusp_mask(domain: GridDomain, args: dict) -> np.ndarray:
    """
    Thin spike from ``tip`` along ``axis`` (sign ``direction``): nodes with 0 <= t <= length and
    transverse distance <= width(t), width = scale·exp(−rate/t) ("exp") or scale·t^beta ("power").
    Only the resolved part, width(t) >= h/2, is kept unless ``resolved`` is false, in which case
    the axis nodes below grid resolution are kept as well.
    """
    tip = np.asarray(args["tip"], dtype=float)
    axis = int(args.get("axis", 0))
    direction = float(args.get("direction", 1.0))
    length = float(args["length"])
    profile = args.get("profile", "exp")
    scale = float(args.get("scale", 1.0))
    rel = domain.coords - tip
    t = direction * rel[:, axis]
    transverse = np.linalg.norm(np.delete(rel, axis, axis=1), axis=1)
    slack = 1e-9 * domain.h_min
    with np.errstate(divide="ignore", over="ignore"):
        if profile == "exp":
            width = np.where(t > 0, scale * np.exp(-float(args.get("rate", 1.0)) / np.where(t > 0, t, 1.0)), 0.0)
        elif profile == "power":
            width = scale * np.clip(t, 0.0, None) ** float(args["beta"])
        else:
            raise ConfigError(f"unknown cusp profile {profile!r}")
    mask = (t >= -slack) & (t <= length + slack) & (transverse <= width + slack)
    if args.get("resolved", True):
        mask &= width >= 0.5 * domain.h_min - slack
    return mask
