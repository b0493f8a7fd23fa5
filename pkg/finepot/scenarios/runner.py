"""
Runs a scenario: rasterizes its bindings, executes the tasks in dependency waves
and writes ``<task>.json`` per task, requested dumps, ``run.json`` and, when the
run stops on an error, ``error.json``.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

import finepot
from finepot.classes.errors import ConfigError, FinepotError
from finepot.core.dumps import (write_binary, write_classification_pgm, write_field_csv, write_json,
                                write_nodeset_csv, write_pgm)
from finepot.core.grid_domain import ScalarField
from finepot.scenarios.scenario import Rasterizer, Scenario, apply_overrides, load_scenario
from finepot.scenarios.tasks import TASKS, TaskContext, TaskOutcome, evaluate_expectations

_LOGGER = logging.getLogger(__name__)

DUMP_FORMATS = ("csv", "pgm", "binary")
OK = "ok"
FAILED = "failed"
ERROR = "error"
SKIPPED = "skipped"


@dataclass
class TaskResult:
    name: str
    kind: str
    status: str
    passed: bool | None = None
    wall_time: float = 0.0
    result: dict = field(default_factory=dict)
    files: list[str] = field(default_factory=list)
    failures: list[str] = field(default_factory=list)
    error: dict | None = None

    def to_dict(self) -> dict:
        return {
            "task": self.name,
            "kind": self.kind,
            "status": self.status,
            "passed": self.passed,
            "wall_time": self.wall_time,
            "result": self.result,
            "files": self.files,
            "failures": self.failures,
            "error": self.error,
        }


@dataclass
class RunReport:
    scenario: str
    seed: int
    config: dict
    out_dir: str
    tasks: list[TaskResult] = field(default_factory=list)
    exit_code: int = 0
    error: dict | None = None
    started: datetime = field(default_factory=lambda: datetime.now(timezone.utc))
    wall_time: float = 0.0
    tool_version: str = finepot.__version__

    @property
    def manifest(self) -> list[str]:
        files = [name for task in self.tasks for name in task.files]
        return files + [f"{task.name}.json" for task in self.tasks if task.status != SKIPPED]

    @property
    def passed(self) -> bool:
        return self.exit_code == 0

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "config": self.config,
            "out_dir": self.out_dir,
            "tasks": [task.to_dict() for task in self.tasks],
            "manifest": sorted(self.manifest),
            "exit_code": self.exit_code,
            "error": self.error,
            "started": self.started.isoformat(),
            "wall_time": self.wall_time,
            "tool_version": self.tool_version,
        }


def task_seed(seed: int, index: int) -> int:
    """Per-task seed derived from the run seed and the task position, independent of scheduling."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def schedule(scenario: Scenario) -> list[list[int]]:
    """Group task indices into waves; a task runs one wave after the last task it depends on."""
    position = {task["name"]: i for i, task in enumerate(scenario.tasks)}
    level: list[int] = []
    for i, task in enumerate(scenario.tasks):
        deps = scenario.task_dependencies(task)
        for dep in deps:
            if dep not in position or position[dep] >= i:
                raise ConfigError(f"task {task['name']!r} depends on {dep!r}, which is not an earlier task")
        level.append(1 + max((level[position[d]] for d in deps), default=-1))
    waves: list[list[int]] = [[] for _ in range(max(level) + 1)]
    for i, lv in enumerate(level):
        waves[lv].append(i)
    return waves


def _write_dumps(out: Path, name: str, formats: list[str], outcome: TaskOutcome) -> list[str]:
    unknown = set(formats) - set(DUMP_FORMATS)
    if unknown:
        raise ConfigError(f"task {name!r}: unknown dump formats {sorted(unknown)}")
    files: list[Path] = []
    for key, values in outcome.fields.items():
        stem = out / f"{name}_{key}"
        if "csv" in formats:
            files.append(write_field_csv(stem.with_suffix(".csv"), values))
        if "pgm" in formats:
            files.append(write_pgm(stem.with_suffix(".pgm"), values))
        if "binary" in formats:
            files.append(write_binary(stem.with_suffix(".bin"), values))
    for key, nodes in outcome.nodesets.items():
        stem = out / f"{name}_{key}"
        if "csv" in formats:
            files.append(write_nodeset_csv(stem.with_suffix(".csv"), nodes))
        if "pgm" in formats:
            files.append(write_pgm(stem.with_suffix(".pgm"), ScalarField(nodes.domain, nodes.mask.astype(float))))
    for key, labels in outcome.labels.items():
        if "pgm" in formats:
            files.append(write_classification_pgm(out / f"{name}_{key}.pgm", _domain_of(outcome), labels))
    return [path.name for path in files]


def _domain_of(outcome: TaskOutcome):
    for container in (outcome.fields, outcome.nodesets):
        for item in container.values():
            return item.domain
    return outcome.report.boundary.domain


def _run_task(scenario: Scenario, ctx: TaskContext, task: dict) -> tuple[TaskResult, TaskOutcome | None]:
    name, kind = task["name"], task["kind"]
    start = time.perf_counter()
    try:
        outcome = TASKS[kind].run(ctx, task)
        failures = evaluate_expectations(ctx, task, outcome)
    except FinepotError as e:
        elapsed = time.perf_counter() - start
        _LOGGER.error("Task %s (%s) failed: %s", name, kind, e)
        return TaskResult(name=name, kind=kind, status=ERROR, passed=False, wall_time=elapsed,
                          error={**e.to_dict(), "task": name}), None

    if task.get("expect"):
        passed = not failures
    else:
        passed = outcome.passed
    for message in failures:
        _LOGGER.warning("Task %s: %s", name, message)
    elapsed = time.perf_counter() - start
    status = FAILED if passed is False else OK
    return TaskResult(name=name, kind=kind, status=status, passed=passed, wall_time=elapsed,
                      result=outcome.result, failures=failures), outcome


def run(config: str | Path | dict | Scenario, out_dir: str | Path = "finepot_out",
        overrides: list[str] | tuple[str, ...] = (), seed: int | None = None, jobs: int = 1,
        archive=None) -> RunReport:
    """
    Run a scenario (file path, gallery name, mapping or Scenario). Never raises
    FinepotError: failures end up in the report's exit code and in ``error.json``.
    """
    out = Path(out_dir)
    started = time.perf_counter()
    if isinstance(config, Scenario):
        label = config.name
    elif isinstance(config, dict):
        label = str(config.get("name", "?"))
    else:
        label = str(config)
    report = RunReport(scenario=label, seed=0 if seed is None else int(seed), config={}, out_dir=str(out))
    try:
        scenario = load_scenario(config)
        if overrides:
            scenario = Scenario.from_dict(apply_overrides(scenario.to_dict(), overrides), source=scenario.source)
        if seed is not None:
            scenario.seed = int(seed)
        report.scenario = scenario.name
        report.seed = scenario.seed
        report.config = scenario.to_dict()
        domain = scenario.build_domain()
        waves = schedule(scenario)
    except FinepotError as e:
        return _finish(report, out, started, archive, error=e.to_dict())

    print(f"Running scenario {scenario.name} ({len(scenario.tasks)} tasks, {len(waves)} waves, "
          f"{domain.n_nodes} nodes)")
    outputs: dict[str, TaskOutcome] = {}
    rasterizer = Rasterizer(scenario, domain, outputs)
    results: dict[int, TaskResult] = {}
    stopped = None

    for wave in waves:
        if stopped is not None:
            break
        contexts = {i: TaskContext(scenario, domain, rasterizer, outputs, task_seed(scenario.seed, i))
                    for i in wave}
        if jobs > 1 and len(wave) > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                futures = {i: pool.submit(_run_task, scenario, contexts[i], scenario.tasks[i]) for i in wave}
                finished = {i: future.result() for i, future in futures.items()}
        else:
            finished = {i: _run_task(scenario, contexts[i], scenario.tasks[i]) for i in wave}

        for i in wave:
            task = scenario.tasks[i]
            task_result, outcome = finished[i]
            if outcome is not None:
                outputs[task_result.name] = outcome
                try:
                    task_result.files = _write_dumps(out, task_result.name, list(task.get("dump", [])), outcome)
                except (FinepotError, OSError) as e:
                    task_result.status = ERROR
                    task_result.error = {"error": str(e), "kind": "config", "exit_code": 2, "task": task_result.name}
            write_json(out / f"{task_result.name}.json", task_result.to_dict())
            results[i] = task_result
            print(f"Task {task_result.name} ({task_result.kind}) {task_result.status} "
                  f"in {task_result.wall_time:.2f} s")
            if task_result.error is not None and stopped is None:
                stopped = task_result.error

    for i, task in enumerate(scenario.tasks):
        results.setdefault(i, TaskResult(name=task["name"], kind=task["kind"], status=SKIPPED))
    report.tasks = [results[i] for i in range(len(scenario.tasks))]
    return _finish(report, out, started, archive, error=stopped)


def _finish(report: RunReport, out: Path, started: float, archive, error: dict | None) -> RunReport:
    report.wall_time = time.perf_counter() - started
    if error is not None:
        report.error = error
        report.exit_code = int(error.get("exit_code", 1))
        write_json(out / "error.json", {"task": None, **error})
    elif any(task.passed is False for task in report.tasks):
        report.exit_code = 1
    else:
        report.exit_code = 0
    write_json(out / "run.json", report.to_dict())
    if archive is not None:
        archive.record(report)
    print(f"Scenario {report.scenario} finished with exit code {report.exit_code} "
          f"in {report.wall_time:.2f} s")
    return report
