"""Deterministic discrete-event execution of a workflow on a virtual cluster.

One run is strictly single-threaded; same workflow + config + seed gives a
byte-identical serialized trace. Event tie-breaking is (time, end-before-start,
task id). Placement scans ready tasks in (pipeline id, stage index, task id)
order with backfill: a task that does not fit is skipped and later ready tasks
are still tried.
"""

from __future__ import annotations

import csv
import heapq
import io
from dataclasses import dataclass, field

from .placement import (
    NodeSpec,
    Placement,
    POLICIES,
    SlotGrant,
    SlotLedger,
    busy_slot_seconds,
    fits_empty,
    release,
    try_place,
    utilization,
)
from .seeding import tagged_rng
from .workload import (
    CompletionState,
    TaskKind,
    Workflow,
    merge_workflows,
    ready_tasks,
    validate_workflow,
)


class UnschedulableError(RuntimeError):
    """A task demands more than the whole cluster can ever offer."""

    def __init__(self, task_id: str) -> None:
        super().__init__(f"task {task_id!r} exceeds total cluster capacity")
        self.task_id = task_id


@dataclass(frozen=True)
class SimConfig:
    nodes: tuple[NodeSpec, ...]
    seed: int = 0
    policy: str = "first_fit"

    def __init__(self, nodes, seed: int = 0, policy: str = "first_fit") -> None:
        object.__setattr__(self, "nodes", tuple(nodes))
        object.__setattr__(self, "seed", seed)
        object.__setattr__(self, "policy", policy)
        if not self.nodes:
            raise ValueError("simulation needs at least one node")
        if policy not in POLICIES:
            raise ValueError(f"unknown placement policy {policy!r}")


@dataclass(frozen=True)
class TaskRun:
    task_id: str
    kind: TaskKind
    start: float
    end: float
    placement: Placement


@dataclass
class Trace:
    runs: list[TaskRun] = field(default_factory=list)

    def intervals(self) -> list[tuple[float, float, Placement]]:
        return [(r.start, r.end, r.placement) for r in self.runs]

    def events(self) -> list[tuple[float, str, str]]:
        """Event log ordered by (time, end before start, task id)."""
        evs = [(r.start, "start", r.task_id) for r in self.runs]
        evs += [(r.end, "end", r.task_id) for r in self.runs]
        evs.sort(key=lambda e: (e[0], 0 if e[1] == "end" else 1, e[2]))
        return evs

    def makespan(self) -> float:
        return max((r.end for r in self.runs), default=0.0)


@dataclass
class SimMetrics:
    makespan: float
    core_utilization: float
    gpu_utilization: float
    node_hours_by_kind: dict[str, float]


def _scan_order(wf: Workflow) -> dict[str, tuple[str, int, str]]:
    order: dict[str, tuple[str, int, str]] = {}
    for pipeline in wf.pipelines:
        for stage_idx, stage in enumerate(pipeline.stages):
            for task in stage.tasks:
                order[task.id] = (pipeline.id, stage_idx, task.id)
    return order


def run(wf: Workflow, cfg: SimConfig) -> tuple[Trace, SimMetrics]:
    """Event loop: release finished placements, recompute ready tasks, place, repeat."""
    report = validate_workflow(wf)
    if not report.ok:
        raise ValueError(f"invalid workflow: {report.violations}")

    nodes = list(cfg.nodes)
    tasks = wf.tasks()
    for task in tasks:
        if not fits_empty(task, nodes):
            raise UnschedulableError(task.id)

    policy = POLICIES[cfg.policy]
    ledger = SlotLedger(nodes)
    scan_key = _scan_order(wf)
    # Duration depends only on (seed, task id), not on placement order.
    durations = {
        t.id: t.duration.sample(tagged_rng(cfg.seed, "duration", t.id)) for t in tasks
    }
    done: set[str] = set()
    running: dict[str, tuple[float, Placement]] = {}
    end_heap: list[tuple[float, str]] = []
    runs: list[TaskRun] = []

    def place_pass(now: float) -> None:
        ready = ready_tasks(wf, CompletionState(done, running.keys()))
        for task in sorted(ready, key=lambda t: scan_key[t.id]):
            placement = try_place(task, ledger, policy)
            if placement is None:
                continue
            end = now + durations[task.id]
            running[task.id] = (end, placement)
            heapq.heappush(end_heap, (end, task.id))
            runs.append(TaskRun(task.id, task.kind, now, end, placement))

    place_pass(0.0)
    while end_heap:
        now = end_heap[0][0]
        while end_heap and end_heap[0][0] == now:
            _, task_id = heapq.heappop(end_heap)
            _, placement = running.pop(task_id)
            release(placement, ledger)
            done.add(task_id)
        place_pass(now)

    if len(done) != len(tasks):
        raise RuntimeError("simulation stalled with work remaining")  # unreachable

    trace = Trace(runs)
    return trace, compute_metrics(trace, nodes)


def compute_metrics(trace: Trace, nodes: list[NodeSpec]) -> SimMetrics:
    makespan = trace.makespan()
    if makespan > 0:
        core_util, gpu_util = utilization(trace.intervals(), nodes, makespan)
    else:
        core_util, gpu_util = 0.0, 0.0
    return SimMetrics(makespan, core_util, gpu_util, node_hours(trace))


def node_hours(trace: Trace) -> dict[str, float]:
    """Node-hours per task kind: distinct nodes touched x duration / 3600."""
    totals: dict[str, float] = {}
    for r in trace.runs:
        hours = len(set(r.placement.node_ids())) * (r.end - r.start) / 3600.0
        totals[r.kind.value] = totals.get(r.kind.value, 0.0) + hours
    return totals


@dataclass
class HybridComparison:
    makespan_first: float
    makespan_second: float
    sequential_makespan: float
    merged_makespan: float
    sequential_core_utilization: float
    sequential_gpu_utilization: float
    merged_core_utilization: float
    merged_gpu_utilization: float


def compare_hybrid(w1: Workflow, w2: Workflow, cfg: SimConfig) -> HybridComparison:
    """Back-to-back execution of w1 then w2 versus the merged hybrid schedule."""
    trace1, m1 = run(w1, cfg)
    trace2, m2 = run(w2, cfg)
    merged_trace, merged = run(merge_workflows(w1, w2), cfg)

    nodes = list(cfg.nodes)
    seq_makespan = m1.makespan + m2.makespan
    if seq_makespan > 0:
        busy1 = busy_slot_seconds(trace1.intervals(), m1.makespan)
        busy2 = busy_slot_seconds(trace2.intervals(), m2.makespan)
        total_cores = sum(n.cores for n in nodes)
        total_gpus = sum(n.gpus for n in nodes)
        seq_core = (busy1[0] + busy2[0]) / (total_cores * seq_makespan) if total_cores else 0.0
        seq_gpu = (busy1[1] + busy2[1]) / (total_gpus * seq_makespan) if total_gpus else 0.0
    else:
        seq_core, seq_gpu = 0.0, 0.0

    return HybridComparison(
        makespan_first=m1.makespan,
        makespan_second=m2.makespan,
        sequential_makespan=seq_makespan,
        merged_makespan=merged.makespan,
        sequential_core_utilization=seq_core,
        sequential_gpu_utilization=seq_gpu,
        merged_core_utilization=merged.core_utilization,
        merged_gpu_utilization=merged.gpu_utilization,
    )


TRACE_COLUMNS = ["task_id", "kind", "start_s", "end_s", "nodes", "cores", "gpus"]


def trace_to_csv(trace: Trace) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRACE_COLUMNS)
    for r in sorted(trace.runs, key=lambda r: (r.start, r.task_id)):
        writer.writerow(
            [
                r.task_id,
                r.kind.value,
                repr(r.start),
                repr(r.end),
                "+".join(r.placement.node_ids()),
                r.placement.total_cores,
                r.placement.total_gpus,
            ]
        )
    return buf.getvalue()


def trace_from_csv(text: str) -> Trace:
    """Rebuild a trace from its CSV form (grants collapse to per-node core splits)."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != TRACE_COLUMNS:
        raise ValueError(f"bad trace header: {header}")
    runs = []
    for row in reader:
        task_id, kind, start_s, end_s, nodes_field, cores_s, gpus_s = row
        node_ids = nodes_field.split("+") if nodes_field else []
        cores, gpus = int(cores_s), int(gpus_s)
        if len(node_ids) == 1:
            grants = (SlotGrant(node_ids[0], cores, gpus),)
        else:
            # Per-node split is not serialized; spread evenly for reload purposes.
            base, extra = divmod(cores, len(node_ids))
            grants = tuple(
                SlotGrant(nid, base + (1 if i < extra else 0), 0)
                for i, nid in enumerate(node_ids)
            )
        runs.append(
            TaskRun(task_id, TaskKind(kind), float(start_s), float(end_s), Placement(task_id, grants))
        )
    return Trace(runs)


def metrics_to_csv(metrics: SimMetrics) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["metric", "value"])
    writer.writerow(["makespan_s", repr(metrics.makespan)])
    writer.writerow(["core_utilization", repr(metrics.core_utilization)])
    writer.writerow(["gpu_utilization", repr(metrics.gpu_utilization)])
    for kind in sorted(metrics.node_hours_by_kind):
        writer.writerow([f"node_hours_{kind}", repr(metrics.node_hours_by_kind[kind])])
    return buf.getvalue()


def metrics_from_csv(text: str) -> SimMetrics:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != ["metric", "value"]:
        raise ValueError(f"bad metrics header: {header}")
    values = {row[0]: float(row[1]) for row in reader}
    node_hours_by_kind = {
        key.removeprefix("node_hours_"): v
        for key, v in values.items()
        if key.startswith("node_hours_")
    }
    return SimMetrics(
        makespan=values["makespan_s"],
        core_utilization=values["core_utilization"],
        gpu_utilization=values["gpu_utilization"],
        node_hours_by_kind=node_hours_by_kind,
    )


def metrics_summary(metrics: SimMetrics) -> str:
    lines = [
        f"makespan: {metrics.makespan:.3f} s",
        f"core utilization: {metrics.core_utilization:.4f}",
        f"gpu utilization: {metrics.gpu_utilization:.4f}",
    ]
    for kind in sorted(metrics.node_hours_by_kind):
        lines.append(f"node-hours {kind}: {metrics.node_hours_by_kind[kind]:.4f}")
    return "\n".join(lines) + "\n"
