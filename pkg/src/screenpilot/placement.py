"""Per-node core/GPU slot accounting and first-fit placement of heterogeneous tasks.

A GPU task binds to a single node and is granted one companion CPU core per
GPU on top of its own core demand. Spannable CPU tasks may gather cores from
several nodes, first-fit in ascending node-id order. The ledger has a
single-writer contract: one owner mutates it at a time.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Callable

from .workload import TaskSpec


@dataclass(frozen=True)
class NodeSpec:
    id: str
    cores: int
    gpus: int = 0

    def __post_init__(self) -> None:
        if self.cores < 1:
            raise ValueError(f"node {self.id!r}: cores must be >= 1")
        if self.gpus < 0:
            raise ValueError(f"node {self.id!r}: gpus must be >= 0")


@dataclass(frozen=True)
class SlotGrant:
    node_id: str
    cores: int
    gpus: int


@dataclass(frozen=True)
class Placement:
    task_id: str
    grants: tuple[SlotGrant, ...]

    @property
    def total_cores(self) -> int:
        return sum(g.cores for g in self.grants)

    @property
    def total_gpus(self) -> int:
        return sum(g.gpus for g in self.grants)

    def node_ids(self) -> list[str]:
        return [g.node_id for g in self.grants]


class LedgerError(RuntimeError):
    """Double release, unknown placement, or similar ledger misuse."""


class SlotLedger:
    """Free/used slot counts per node plus which task holds which slots."""

    def __init__(self, nodes: list[NodeSpec]) -> None:
        if not nodes:
            raise ValueError("ledger needs at least one node")
        ids = [n.id for n in nodes]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate node ids")
        self.nodes: dict[str, NodeSpec] = {n.id: n for n in nodes}
        self.free_cores: dict[str, int] = {n.id: n.cores for n in nodes}
        self.free_gpus: dict[str, int] = {n.id: n.gpus for n in nodes}
        self.holdings: dict[str, Placement] = {}

    @property
    def total_cores(self) -> int:
        return sum(n.cores for n in self.nodes.values())

    @property
    def total_gpus(self) -> int:
        return sum(n.gpus for n in self.nodes.values())

    def check_conservation(self) -> None:
        """Held + free must equal capacity on every node; raises on violation."""
        held_cores = {nid: 0 for nid in self.nodes}
        held_gpus = {nid: 0 for nid in self.nodes}
        for placement in self.holdings.values():
            for grant in placement.grants:
                held_cores[grant.node_id] += grant.cores
                held_gpus[grant.node_id] += grant.gpus
        for nid, node in self.nodes.items():
            if held_cores[nid] + self.free_cores[nid] != node.cores:
                raise LedgerError(f"core conservation violated on node {nid!r}")
            if held_gpus[nid] + self.free_gpus[nid] != node.gpus:
                raise LedgerError(f"gpu conservation violated on node {nid!r}")
            if not (0 <= self.free_cores[nid] <= node.cores):
                raise LedgerError(f"free cores out of range on node {nid!r}")
            if not (0 <= self.free_gpus[nid] <= node.gpus):
                raise LedgerError(f"free gpus out of range on node {nid!r}")


PlacementPolicy = Callable[[SlotLedger], list[str]]


def first_fit_order(ledger: SlotLedger) -> list[str]:
    """Candidate nodes in ascending node-id order."""
    return sorted(ledger.nodes)


POLICIES: dict[str, PlacementPolicy] = {"first_fit": first_fit_order}


def try_place(
    task: TaskSpec,
    ledger: SlotLedger,
    policy: PlacementPolicy = first_fit_order,
) -> Placement | None:
    """Place a task, debiting the ledger; None (ledger untouched) when it does not fit.

    GPU tasks get task.gpus GPUs plus task.cores + task.gpus cores on one node.
    Non-spannable CPU tasks get task.cores cores on one node. Spannable CPU
    tasks gather cores across nodes in policy order.
    """
    if task.id in ledger.holdings:
        raise LedgerError(f"task {task.id!r} already placed")
    order = policy(ledger)

    if task.gpus >= 1:
        need_cores = task.cores + task.gpus
        for nid in order:
            if ledger.free_gpus[nid] >= task.gpus and ledger.free_cores[nid] >= need_cores:
                grant = SlotGrant(nid, need_cores, task.gpus)
                return _commit(ledger, Placement(task.id, (grant,)))
        return None

    if not task.spannable:
        for nid in order:
            if ledger.free_cores[nid] >= task.cores:
                grant = SlotGrant(nid, task.cores, 0)
                return _commit(ledger, Placement(task.id, (grant,)))
        return None

    remaining = task.cores
    grants: list[SlotGrant] = []
    for nid in order:
        if remaining == 0:
            break
        take = min(ledger.free_cores[nid], remaining)
        if take > 0:
            grants.append(SlotGrant(nid, take, 0))
            remaining -= take
    if remaining > 0:
        return None
    return _commit(ledger, Placement(task.id, tuple(grants)))


def _commit(ledger: SlotLedger, placement: Placement) -> Placement:
    for grant in placement.grants:
        ledger.free_cores[grant.node_id] -= grant.cores
        ledger.free_gpus[grant.node_id] -= grant.gpus
    ledger.holdings[placement.task_id] = placement
    return placement


def release(placement: Placement, ledger: SlotLedger) -> None:
    """Return every slot of a previously granted placement."""
    held = ledger.holdings.get(placement.task_id)
    if held is None or held is not placement and held != placement:
        raise LedgerError(
            f"release of unknown or already-released placement {placement.task_id!r}"
        )
    for grant in placement.grants:
        ledger.free_cores[grant.node_id] += grant.cores
        ledger.free_gpus[grant.node_id] += grant.gpus
    del ledger.holdings[placement.task_id]


def fits_empty(task: TaskSpec, nodes: list[NodeSpec]) -> bool:
    """Whether the task could ever be placed on an empty cluster of these nodes."""
    if task.gpus >= 1:
        need = task.cores + task.gpus
        return any(n.gpus >= task.gpus and n.cores >= need for n in nodes)
    if not task.spannable:
        return any(n.cores >= task.cores for n in nodes)
    return sum(n.cores for n in nodes) >= task.cores


def busy_slot_seconds(
    intervals: list[tuple[float, float, Placement]], horizon: float
) -> tuple[float, float]:
    """Total core-seconds and gpu-seconds consumed within [0, horizon]."""
    core_s = 0.0
    gpu_s = 0.0
    for start, end, placement in intervals:
        span = min(end, horizon) - max(start, 0.0)
        if span <= 0:
            continue
        core_s += span * placement.total_cores
        gpu_s += span * placement.total_gpus
    return core_s, gpu_s


def utilization(
    intervals: list[tuple[float, float, Placement]],
    nodes: list[NodeSpec],
    horizon: float,
) -> tuple[float, float]:
    """Cluster-wide (core, gpu) busy fractions over [0, horizon]."""
    if not nodes:
        raise ValueError("empty node list")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    total_cores = sum(n.cores for n in nodes)
    total_gpus = sum(n.gpus for n in nodes)
    core_s, gpu_s = busy_slot_seconds(intervals, horizon)
    core_util = core_s / (total_cores * horizon) if total_cores else 0.0
    gpu_util = gpu_s / (total_gpus * horizon) if total_gpus else 0.0
    return core_util, gpu_util


def per_node_utilization(
    intervals: list[tuple[float, float, Placement]],
    nodes: list[NodeSpec],
    horizon: float,
) -> list[tuple[str, float, float]]:
    """Rows (node id, core_util, gpu_util) over [0, horizon]."""
    if not nodes:
        raise ValueError("empty node list")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    core_s = {n.id: 0.0 for n in nodes}
    gpu_s = {n.id: 0.0 for n in nodes}
    for start, end, placement in intervals:
        span = min(end, horizon) - max(start, 0.0)
        if span <= 0:
            continue
        for grant in placement.grants:
            core_s[grant.node_id] += span * grant.cores
            gpu_s[grant.node_id] += span * grant.gpus
    rows = []
    for n in nodes:
        cu = core_s[n.id] / (n.cores * horizon) if n.cores else 0.0
        gu = gpu_s[n.id] / (n.gpus * horizon) if n.gpus else 0.0
        rows.append((n.id, cu, gu))
    return rows


def utilization_rows_to_csv(rows: list[tuple[str, float, float]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["node_id", "core_util", "gpu_util"])
    for nid, cu, gu in rows:
        writer.writerow([nid, repr(cu), repr(gu)])
    return buf.getvalue()


def utilization_rows_from_csv(text: str) -> list[tuple[str, float, float]]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != ["node_id", "core_util", "gpu_util"]:
        raise ValueError(f"bad utilization header: {header}")
    return [(row[0], float(row[1]), float(row[2])) for row in reader]
