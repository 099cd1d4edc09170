"""Task/stage/pipeline workload hierarchy and run-eligibility computation.

Tasks within a stage are mutually independent; stages within a pipeline run
strictly in order (stage i+1 starts only after every task of stage i is done);
pipelines are mutually concurrent. All values are immutable after
construction and every operation here is a pure function, so they are safe to
evaluate from any number of threads.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


class TaskKind(enum.Enum):
    DOCKING = "Docking"
    ESMACS_SIM = "EsmacsSim"
    ESMACS_ANALYSIS = "EsmacsAnalysis"
    TIES_SIM = "TiesSim"
    TIES_ANALYSIS = "TiesAnalysis"
    SURROGATE_TRAIN = "SurrogateTrain"
    GENERIC = "Generic"


@dataclass(frozen=True)
class Fixed:
    """Deterministic duration in seconds."""

    seconds: float

    def sample(self, rng: np.random.Generator) -> float:
        return self.seconds


@dataclass(frozen=True)
class Stochastic:
    """Truncated-at-zero normal duration: Normal(mean, rel_spread * mean), redrawn while <= 0."""

    mean: float
    rel_spread: float

    def sample(self, rng: np.random.Generator) -> float:
        sd = self.rel_spread * self.mean
        while True:
            value = rng.normal(self.mean, sd)
            if value > 0.0:
                return float(value)


Duration = Fixed | Stochastic


@dataclass(frozen=True)
class TaskSpec:
    id: str
    kind: TaskKind = TaskKind.GENERIC
    cores: int = 1
    gpus: int = 0
    spannable: bool = False
    duration: Duration = Fixed(1.0)


@dataclass(frozen=True)
class Stage:
    id: str
    tasks: tuple[TaskSpec, ...]

    def __init__(self, id: str, tasks) -> None:
        object.__setattr__(self, "id", id)
        object.__setattr__(self, "tasks", tuple(tasks))


@dataclass(frozen=True)
class Pipeline:
    id: str
    stages: tuple[Stage, ...]

    def __init__(self, id: str, stages) -> None:
        object.__setattr__(self, "id", id)
        object.__setattr__(self, "stages", tuple(stages))


@dataclass(frozen=True)
class Workflow:
    pipelines: tuple[Pipeline, ...] = ()

    def __init__(self, pipelines=()) -> None:
        object.__setattr__(self, "pipelines", tuple(pipelines))

    def tasks(self) -> list[TaskSpec]:
        return [t for p in self.pipelines for s in p.stages for t in s.tasks]

    def task_ids(self) -> set[str]:
        return {t.id for t in self.tasks()}


@dataclass(frozen=True)
class CompletionState:
    done: frozenset[str] = frozenset()
    running: frozenset[str] = frozenset()

    def __init__(self, done=(), running=()) -> None:
        object.__setattr__(self, "done", frozenset(done))
        object.__setattr__(self, "running", frozenset(running))


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_workflow(wf: Workflow) -> ValidationReport:
    """Collect every structural violation; violations are data, not faults."""
    violations: list[str] = []
    seen: set[str] = set()
    for pipeline in wf.pipelines:
        if not pipeline.stages:
            violations.append(f"pipeline {pipeline.id!r}: no stages")
        for stage in pipeline.stages:
            if not stage.tasks:
                violations.append(f"stage {stage.id!r}: no tasks")
            for task in stage.tasks:
                if task.id in seen:
                    violations.append(f"task {task.id!r}: duplicate id")
                seen.add(task.id)
                if task.cores < 1 and task.gpus < 1:
                    violations.append(f"task {task.id!r}: zero-resource task")
                if task.cores < 0 or task.gpus < 0:
                    violations.append(f"task {task.id!r}: negative resource count")
                if task.gpus >= 1 and task.spannable:
                    violations.append(
                        f"task {task.id!r}: GPU task cannot span nodes"
                    )
                if isinstance(task.duration, Fixed) and task.duration.seconds <= 0:
                    violations.append(f"task {task.id!r}: non-positive duration")
                if isinstance(task.duration, Stochastic) and (
                    task.duration.mean <= 0 or task.duration.rel_spread < 0
                ):
                    violations.append(f"task {task.id!r}: invalid stochastic duration")
    return ValidationReport(violations)


def _check_state(wf: Workflow, cs: CompletionState) -> None:
    known = wf.task_ids()
    unknown = (cs.done | cs.running) - known
    if unknown:
        raise ValueError(f"unknown task ids in completion state: {sorted(unknown)}")
    overlap = cs.done & cs.running
    if overlap:
        raise ValueError(f"task ids both done and running: {sorted(overlap)}")


def ready_tasks(wf: Workflow, cs: CompletionState) -> list[TaskSpec]:
    """Tasks eligible to start: in the earliest incomplete stage of their pipeline,
    with every earlier stage fully done, and not already done or running.

    Returned in workflow declaration order.
    """
    _check_state(wf, cs)
    ready: list[TaskSpec] = []
    for pipeline in wf.pipelines:
        for stage in pipeline.stages:
            incomplete = [t for t in stage.tasks if t.id not in cs.done]
            if incomplete:
                ready.extend(t for t in incomplete if t.id not in cs.running)
                break
    return ready


def merge_workflows(w1: Workflow, w2: Workflow) -> Workflow:
    """Union of pipelines; no ordering is introduced between the two inputs."""
    collisions = w1.task_ids() & w2.task_ids()
    if collisions:
        raise ValueError(f"task id collision on merge: {sorted(collisions)}")
    return Workflow(w1.pipelines + w2.pipelines)
