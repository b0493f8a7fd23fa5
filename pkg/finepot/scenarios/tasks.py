"""
Task kinds a scenario can run. Each kind declares which of its parameters are
geometry expressions, field expressions or references to earlier tasks, so a
scenario can be validated before anything is computed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from finepot.classes.errors import ConfigError
from finepot.core.capacity import sobolev_capacity, strictness_modulus, variational_capacity
from finepot.core.fine_analysis import (DEFAULT_TRIM, MIN_ANNULUS_NODES, fine_continuity_at, fine_limit_probe,
                                        fine_regularize, min_combine, paste, paste_with_constant,
                                        remove_and_verify)
from finepot.core.fine_topology import (fine_boundary, fine_closure, fine_interior, is_finely_open,
                                        quasiopen_from_potential, wiener_profile)
from finepot.core.grid_domain import GridDomain, NodeSet, ScalarField, p_energy
from finepot.core.minimizer import DEFAULT_TOL
from finepot.core.radial import radial_capacity
from finepot.core.variational_solver import (DEFAULT_TESTS, SUPER, ObstacleProblem, SolveReport,
                                             comparison_check, energy_optimality_check, solve_obstacle,
                                             uniqueness_check, verify_superminimizer, verify_weak_form)

_LOGGER = logging.getLogger(__name__)

# keys of an expect block that modify comparisons instead of naming a result
EXPECT_MODIFIERS = ("rtol", "atol")


@dataclass
class TaskOutcome:
    result: dict
    fields: dict[str, ScalarField] = field(default_factory=dict)
    nodesets: dict[str, NodeSet] = field(default_factory=dict)
    labels: dict[str, np.ndarray] = field(default_factory=dict)
    passed: bool | None = None
    report: Any = None


class TaskContext:
    """What a running task may read: the grid, the rasterizer and the outputs of earlier tasks."""

    def __init__(self, scenario, domain: GridDomain, rasterizer, outputs: dict, seed: int):
        self.scenario = scenario
        self.domain = domain
        self.rasterizer = rasterizer
        self.outputs = outputs
        self.seed = seed

    def nodeset(self, task: dict, key: str, default: Any = None) -> NodeSet | None:
        spec = task.get(key, default)
        return None if spec is None else self.rasterizer.nodeset(spec)

    def field(self, task: dict, key: str, default: Any = None) -> ScalarField | None:
        spec = task.get(key, default)
        return None if spec is None else self.rasterizer.field(spec)

    def p(self, task: dict) -> float:
        return float(task.get("p", self.scenario.p))

    def tol(self, task: dict) -> float:
        return float(task.get("tol", DEFAULT_TOL))

    def seed_for(self, task: dict) -> int:
        return int(task.get("seed", self.seed))

    def solve_report(self, name: str) -> SolveReport:
        outcome = self.outputs.get(name)
        if outcome is None or not isinstance(outcome.report, SolveReport):
            raise ConfigError(f"task {name!r} is not a solve task that has run")
        return outcome.report


@dataclass(frozen=True)
class TaskKind:
    run: Callable[[TaskContext, dict], TaskOutcome]
    description: str
    required: tuple[str, ...] = ()
    sets: tuple[str, ...] = ()
    fields: tuple[str, ...] = ()
    task_refs: tuple[str, ...] = ()


def _profile_options(task: dict) -> dict:
    options = {key: float(task[key]) for key in ("delta", "tau", "delta_ref") if key in task}
    if "refine" in task:
        options["refine"] = bool(task["refine"])
    return options


def _optional_float(task: dict, key: str) -> float | None:
    return None if task.get(key) is None else float(task[key])


def run_capacity(ctx: TaskContext, task: dict) -> TaskOutcome:
    result = variational_capacity(ctx.nodeset(task, "E"), ctx.nodeset(task, "A"), ctx.p(task), ctx.tol(task))
    return TaskOutcome(result=result.to_dict(), fields={"potential": result.potential}, report=result)


def run_sobolev_capacity(ctx: TaskContext, task: dict) -> TaskOutcome:
    result = sobolev_capacity(ctx.nodeset(task, "E"), ctx.p(task), ctx.tol(task))
    return TaskOutcome(result=result.to_dict(), fields={"potential": result.potential}, report=result)


def run_strictness(ctx: TaskContext, task: dict) -> TaskOutcome:
    modulus = strictness_modulus(ctx.nodeset(task, "A"), ctx.nodeset(task, "E_sub"), ctx.p(task), ctx.tol(task))
    return TaskOutcome(result={"modulus": modulus, "strict": bool(math.isfinite(modulus))})


def run_wiener(ctx: TaskContext, task: dict) -> TaskOutcome:
    K = task.get("K")
    profile = wiener_profile(ctx.nodeset(task, "E"), task["x"], ctx.p(task), float(task["R0"]),
                             None if K is None else int(K), tol=ctx.tol(task), **_profile_options(task))
    return TaskOutcome(result=profile.to_dict(), report=profile)


def run_fine_check(ctx: TaskContext, task: dict) -> TaskOutcome:
    report = is_finely_open(ctx.nodeset(task, "V"), ctx.p(task), task.get("sample"),
                            _optional_float(task, "R0"), tol=ctx.tol(task), **_profile_options(task))
    return TaskOutcome(result=report.to_dict(), report=report)


def run_fine_boundary(ctx: TaskContext, task: dict) -> TaskOutcome:
    report = fine_boundary(ctx.nodeset(task, "E"), ctx.p(task), task.get("sample"),
                           _optional_float(task, "R0"), tol=ctx.tol(task), **_profile_options(task))
    return TaskOutcome(result=report.to_dict(), nodesets={"boundary": report.boundary},
                       labels={"classes": report.classification()}, report=report)


def run_fine_interior(ctx: TaskContext, task: dict) -> TaskOutcome:
    E = ctx.nodeset(task, "E")
    inside = fine_interior(E, ctx.p(task), task.get("sample"), _optional_float(task, "R0"),
                           tol=ctx.tol(task), **_profile_options(task))
    return TaskOutcome(result={"count": inside.count, "nodes": inside.indices().tolist()},
                       nodesets={"interior": inside})


def run_fine_closure(ctx: TaskContext, task: dict) -> TaskOutcome:
    E = ctx.nodeset(task, "E")
    closure = fine_closure(E, ctx.p(task), task.get("sample"), _optional_float(task, "R0"),
                           tol=ctx.tol(task), **_profile_options(task))
    added = closure - E
    return TaskOutcome(result={"count": closure.count, "added": added.count, "added_nodes": added.indices().tolist()},
                       nodesets={"closure": closure})


def run_positivity(ctx: TaskContext, task: dict) -> TaskOutcome:
    nodes = quasiopen_from_potential(ctx.field(task, "field"), ctx.field(task, "obstacle"),
                                     float(task.get("threshold", 0.0)))
    return TaskOutcome(result={"count": nodes.count, "measure": nodes.measure()}, nodesets={"set": nodes})


def run_solve(ctx: TaskContext, task: dict) -> TaskOutcome:
    prob = ObstacleProblem(U=ctx.nodeset(task, "U"), f=ctx.field(task, "f"), psi=ctx.field(task, "psi"),
                           p=ctx.p(task), tol=ctx.tol(task))
    report = solve_obstacle(prob)
    result = report.to_dict()
    result["contact_nodes"] = report.contact_set.indices().tolist()
    return TaskOutcome(result=result, fields={"solution": report.solution},
                       nodesets={"contact": report.contact_set}, report=report)


def _verify_outcome(report, fields: dict | None = None) -> TaskOutcome:
    fields = dict(fields or {})
    if report.witness is not None:
        fields["witness"] = report.witness
    return TaskOutcome(result=report.to_dict(), fields=fields, passed=report.passed, report=report)


def run_verify(ctx: TaskContext, task: dict) -> TaskOutcome:
    report = verify_superminimizer(ctx.field(task, "field"), ctx.nodeset(task, "U"), ctx.p(task),
                                   int(task.get("n_tests", DEFAULT_TESTS)), ctx.seed_for(task),
                                   kind=task.get("mode", SUPER), hats=bool(task.get("hats", True)))
    return _verify_outcome(report)


def run_weak_form(ctx: TaskContext, task: dict) -> TaskOutcome:
    report = verify_weak_form(ctx.field(task, "field"), ctx.nodeset(task, "U"), ctx.p(task),
                              kind=task.get("mode", SUPER))
    return _verify_outcome(report)


def run_compare(ctx: TaskContext, task: dict) -> TaskOutcome:
    holds = comparison_check(ctx.solve_report(task["first"]), ctx.solve_report(task["second"]))
    return TaskOutcome(result={"holds": holds}, passed=holds)


def run_optimality(ctx: TaskContext, task: dict) -> TaskOutcome:
    report = energy_optimality_check(ctx.solve_report(task["task"]), int(task.get("n_tests", DEFAULT_TESTS)),
                                     ctx.seed_for(task))
    return _verify_outcome(report)


def run_uniqueness(ctx: TaskContext, task: dict) -> TaskOutcome:
    first = ctx.solve_report(task["task"])
    return _verify_outcome(uniqueness_check(first.problem, ctx.seed_for(task), first=first))


def _maybe_verify(ctx: TaskContext, task: dict, combined: ScalarField, region: NodeSet) -> TaskOutcome:
    mode = task.get("verify")
    if not mode:
        return TaskOutcome(result={"verified": False}, fields={"field": combined})
    kind = SUPER if mode is True else str(mode)
    report = verify_superminimizer(combined, region, ctx.p(task), int(task.get("n_tests", DEFAULT_TESTS)),
                                   ctx.seed_for(task), kind=kind)
    outcome = _verify_outcome(report, {"field": combined})
    outcome.result["verified"] = True
    return outcome


def run_paste(ctx: TaskContext, task: dict) -> TaskOutcome:
    U2 = ctx.nodeset(task, "U2")
    combined = paste(ctx.nodeset(task, "U1"), U2, ctx.field(task, "u1"), ctx.field(task, "u2"))
    return _maybe_verify(ctx, task, combined, U2)


def run_paste_constant(ctx: TaskContext, task: dict) -> TaskOutcome:
    B = ctx.nodeset(task, "B")
    combined = paste_with_constant(ctx.field(task, "field"), ctx.nodeset(task, "U"), B, float(task["c"]))
    region = ctx.nodeset(task, "verify_on") or B
    return _maybe_verify(ctx, task, combined, region)


def run_min_combine(ctx: TaskContext, task: dict) -> TaskOutcome:
    U = ctx.nodeset(task, "U")
    combined = min_combine(ctx.field(task, "u"), ctx.field(task, "v"), U)
    return _maybe_verify(ctx, task, combined, U)


def run_remove(ctx: TaskContext, task: dict) -> TaskOutcome:
    report = remove_and_verify(ctx.field(task, "field"), ctx.nodeset(task, "U"), ctx.nodeset(task, "E"),
                               ctx.p(task), int(task.get("n_tests", DEFAULT_TESTS)), ctx.seed_for(task),
                               kind=task.get("mode", SUPER),
                               capacity_threshold=_optional_float(task, "capacity_threshold"))
    return _verify_outcome(report)


def run_regularize(ctx: TaskContext, task: dict) -> TaskOutcome:
    u = ctx.field(task, "field")
    U = ctx.nodeset(task, "U")
    options = {"radius": float(task["radius"])} if "radius" in task else {}
    regular = fine_regularize(u, U, task.get("mode", "lsc"), float(task.get("trim", DEFAULT_TRIM)), **options)
    change = np.abs(regular.values[U.mask] - u.values[U.mask])
    return TaskOutcome(result={"changed": int(np.count_nonzero(change > 0)),
                               "max_change": float(np.max(change, initial=0.0))},
                       fields={"field": regular})


def run_probe(ctx: TaskContext, task: dict) -> TaskOutcome:
    probe = fine_limit_probe(ctx.field(task, "field"), task["z"], float(task["R0"]),
                             float(task.get("trim", DEFAULT_TRIM)), ctx.nodeset(task, "U"),
                             int(task.get("min_nodes", MIN_ANNULUS_NODES)))
    return TaskOutcome(result=probe.to_dict(), report=probe)


def run_continuity(ctx: TaskContext, task: dict) -> TaskOutcome:
    report = fine_continuity_at(ctx.field(task, "field"), task["z"], _optional_float(task, "R0"),
                                float(task.get("trim", DEFAULT_TRIM)), ctx.nodeset(task, "U"))
    result = report.to_dict()
    result["probe"] = report.probe.to_dict()
    return TaskOutcome(result=result, report=report)


def run_energy(ctx: TaskContext, task: dict) -> TaskOutcome:
    report = p_energy(ctx.field(task, "field"), ctx.nodeset(task, "region"), ctx.p(task),
                      float(task.get("eps", 0.0)))
    return TaskOutcome(result={"total": report.total, "p": report.p},
                       fields={"density": ScalarField(ctx.domain, report.density)})


TASKS: dict[str, TaskKind] = {
    "capacity": TaskKind(run_capacity, "variational capacity cp(E, A)", ("E", "A"), sets=("E", "A")),
    "sobolev_capacity": TaskKind(run_sobolev_capacity, "Sobolev capacity Cp(E)", ("E",), sets=("E",)),
    "strictness": TaskKind(run_strictness, "strictness modulus cp(E_sub, A)", ("A", "E_sub"), sets=("A", "E_sub")),
    "wiener": TaskKind(run_wiener, "dyadic Wiener profile and thinness verdict", ("E", "x", "R0"), sets=("E",)),
    "fine_check": TaskKind(run_fine_check, "sampled fine openness of V", ("V",), sets=("V",)),
    "fine_boundary": TaskKind(run_fine_boundary, "sampled fine boundary of E", ("E",), sets=("E",)),
    "fine_interior": TaskKind(run_fine_interior, "sampled fine interior of E", ("E",), sets=("E",)),
    "fine_closure": TaskKind(run_fine_closure, "sampled fine closure of E", ("E",), sets=("E",)),
    "positivity": TaskKind(run_positivity, "positivity set of a potential", ("field",),
                           fields=("field", "obstacle")),
    "solve": TaskKind(run_solve, "obstacle or Dirichlet problem", ("U", "f"), sets=("U",), fields=("f", "psi")),
    "verify": TaskKind(run_verify, "energy-comparison (super/sub)minimizer check", ("field", "U"),
                       sets=("U",), fields=("field",)),
    "weak_form": TaskKind(run_weak_form, "weak-form sign check", ("field", "U"), sets=("U",), fields=("field",)),
    "compare": TaskKind(run_compare, "comparison of two solve tasks", ("first", "second"),
                        task_refs=("first", "second")),
    "optimality": TaskKind(run_optimality, "random admissible perturbations of a solution", ("task",),
                           task_refs=("task",)),
    "uniqueness": TaskKind(run_uniqueness, "second solve from a perturbed start", ("task",), task_refs=("task",)),
    "paste": TaskKind(run_paste, "paste two superminimizers", ("U1", "U2", "u1", "u2"),
                      sets=("U1", "U2"), fields=("u1", "u2")),
    "paste_constant": TaskKind(run_paste_constant, "paste a solution with a constant", ("field", "U", "B", "c"),
                               sets=("U", "B", "verify_on"), fields=("field",)),
    "min_combine": TaskKind(run_min_combine, "pointwise minimum of two superminimizers", ("u", "v", "U"),
                            sets=("U",), fields=("u", "v")),
    "remove": TaskKind(run_remove, "remove a small set and verify", ("field", "U", "E"),
                       sets=("U", "E"), fields=("field",)),
    "regularize": TaskKind(run_regularize, "fine lsc/usc regularization", ("field", "U"),
                           sets=("U",), fields=("field",)),
    "probe": TaskKind(run_probe, "fine-limit probe over dyadic annuli", ("field", "z", "R0"),
                      sets=("U",), fields=("field",)),
    "continuity": TaskKind(run_continuity, "fine continuity at a point", ("field", "z"),
                           sets=("U",), fields=("field",)),
    "energy": TaskKind(run_energy, "p-energy of a field", ("field",), sets=("region",), fields=("field",)),
}


def evaluate_expectations(ctx: TaskContext, task: dict, outcome: TaskOutcome) -> list[str]:
    """
    Check a task's ``expect`` block against its result. Numeric targets use rtol/atol,
    ``min_<key>``/``max_<key>`` are bounds, ``radial`` compares a capacity with the radial
    closed form and ``oracle`` compares an output field with a field expression in the
    sup-relative norm. Returns the failure messages.
    """
    expect = dict(task.get("expect") or {})
    if not expect:
        return []
    rtol = float(expect.pop("rtol", 1e-6))
    atol = float(expect.pop("atol", 0.0))
    failures: list[str] = []
    result = outcome.result

    if "radial" in expect:
        spec = expect.pop("radial")
        weight = ctx.domain.weight
        alpha = float(weight.alpha) if weight.kind == "power" else 0.0
        oracle = radial_capacity(float(spec["r"]), float(spec["R"]), ctx.p(task), ctx.domain.dim, alpha)
        error = abs(result["value"] - oracle) / oracle
        result["oracle_value"] = oracle
        result["oracle_error"] = error
        if error > float(spec.get("rtol", rtol)):
            failures.append(f"value {result['value']:.6g} is {error:.2%} from the radial oracle {oracle:.6g}")

    if "oracle" in expect:
        spec = expect.pop("oracle")
        produced = outcome.fields.get(spec.get("output", "solution"))
        if produced is None:
            raise ConfigError(f"task {task['name']!r}: no output {spec.get('output', 'solution')!r} to compare")
        reference = ctx.rasterizer.field(spec["field"])
        region = ctx.rasterizer.nodeset(spec["region"]) if "region" in spec else ctx.domain.full()
        mask = region.mask & np.isfinite(reference.values) & np.isfinite(produced.values)
        if not np.any(mask):
            raise ConfigError(f"task {task['name']!r}: oracle region is empty")
        scale = float(np.max(np.abs(reference.values[mask])))
        error = float(np.max(np.abs(produced.values[mask] - reference.values[mask]))) / max(scale, 1e-300)
        result["oracle_error"] = error
        if error > float(spec.get("rtol", rtol)):
            failures.append(f"sup-relative error {error:.3g} exceeds {float(spec.get('rtol', rtol)):.3g}")

    for key, target in expect.items():
        bound = None
        name = key
        if key.startswith("min_") or key.startswith("max_"):
            bound, name = key[:3], key[4:]
        if name not in result:
            failures.append(f"result has no {name!r}")
            continue
        actual = result[name]
        if bound == "min" and not actual >= target:
            failures.append(f"{name}={actual} is below {target}")
        elif bound == "max" and not actual <= target:
            failures.append(f"{name}={actual} is above {target}")
        elif bound is None and not _matches(actual, target, rtol, atol):
            failures.append(f"{name}={actual!r}, expected {target!r}")
    return failures


def _matches(actual: Any, target: Any, rtol: float, atol: float) -> bool:
    if isinstance(target, bool) or isinstance(actual, bool):
        return actual == target
    if isinstance(target, (int, float)) and isinstance(actual, (int, float)):
        return math.isclose(actual, target, rel_tol=rtol, abs_tol=atol)
    if isinstance(target, list) and isinstance(actual, list):
        return len(actual) == len(target) and all(_matches(a, t, rtol, atol) for a, t in zip(actual, target))
    return actual == target
