"""Multi-fidelity promotion funnel with a surrogate feedback loop.

Each iteration: the surrogate (once trained) pre-ranks the pool and picks a
candidate subset (best 4x dock_keep predictions plus 1x dock_keep uniformly
random for exploration); the docking oracle scores the subset; the top
dock_keep get ensemble free-energy estimates; the top esmacs_keep feed
adjacent-rank pair evaluations; every new (features, dG) pair is appended to
the surrogate training set for the next round. Lower scores are better
campaign-wide. Oracle calls for distinct compounds are independent; promotion
and surrogate updates are sequential barriers per iteration.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .energetics import (
    EsmacsEstimate,
    LambdaWindow,
    ReplicaSeries,
    TiesEstimate,
    default_lambda_grid,
    esmacs_aggregate,
    ties_integrate,
)
from .seeding import tagged_rng
from .workload import Fixed, Pipeline, Stage, Stochastic, TaskKind, TaskSpec, Workflow


@dataclass
class CompoundRecord:
    id: str
    features: np.ndarray
    dock_score: float | None = None
    esmacs: EsmacsEstimate | None = None
    true_affinity: float | None = None


@dataclass(frozen=True)
class FunnelConfig:
    pool_size: int = 10000
    dock_keep: int = 100
    esmacs_keep: int = 10
    ties_pairs: int = 5
    iterations: int = 1
    seed: int = 0
    surrogate_k: int = 5
    exploit_factor: int = 4  # surrogate pre-selection keeps exploit_factor * dock_keep
    feature_dim: int = 4

    def __post_init__(self) -> None:
        if not (self.pool_size >= self.dock_keep >= self.esmacs_keep >= 1):
            raise ValueError("require pool_size >= dock_keep >= esmacs_keep >= 1")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.ties_pairs < 0 or self.ties_pairs > self.esmacs_keep - 1:
            raise ValueError("ties_pairs must be within [0, esmacs_keep - 1]")
        if self.surrogate_k < 1:
            raise ValueError("surrogate_k must be >= 1")


class OracleError(RuntimeError):
    """A scoring oracle failed for one compound; the campaign flags and continues."""


class UntrainedModelError(ValueError):
    pass


@dataclass
class SurrogateModel:
    """k-nearest-neighbor regressor over (features, dG) pairs, Euclidean distance.

    Equidistant neighbors are broken by training insertion order (earliest
    wins), which keeps predictions deterministic.
    """

    features: np.ndarray
    targets: np.ndarray
    k: int


def fit_surrogate(train: list[tuple[np.ndarray, float]], k: int = 5) -> SurrogateModel:
    if not train:
        raise UntrainedModelError("empty training set")
    if k > len(train):
        raise ValueError(f"k={k} exceeds training set size {len(train)}")
    features = np.array([f for f, _t in train], dtype=float)
    targets = np.array([t for _f, t in train], dtype=float)
    return SurrogateModel(features, targets, k)


def predict(model: SurrogateModel, features: np.ndarray) -> float:
    return float(predict_batch(model, np.asarray(features, float)[None, :])[0])


def predict_batch(model: SurrogateModel, queries: np.ndarray) -> np.ndarray:
    """Mean target of the k nearest training points for each query row."""
    diffs = queries[:, None, :] - model.features[None, :, :]
    dists = np.sqrt((diffs * diffs).sum(axis=2))
    nearest = np.argsort(dists, axis=1, kind="stable")[:, : model.k]
    return model.targets[nearest].mean(axis=1)


def promote(scored: list[tuple[str, float]], n: int) -> list[str]:
    """Ids of the n lowest scores, ties broken lexicographically; rank order."""
    if n > len(scored):
        raise ValueError(f"cannot promote {n} of {len(scored)}")
    ranked = sorted(scored, key=lambda kv: (kv[1], kv[0]))
    return [cid for cid, _score in ranked[:n]]


def pearson(xs, ys) -> float:
    """Pearson product-moment correlation coefficient."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.size != y.size:
        raise ValueError("length mismatch")
    if x.size < 2:
        raise ValueError("need at least 2 points")
    xm = x - x.mean()
    ym = y - y.mean()
    vx = float(xm @ xm)
    vy = float(ym @ ym)
    if vx == 0.0 or vy == 0.0:
        raise ValueError("undefined correlation: zero variance")
    return float((xm @ ym) / math.sqrt(vx * vy))


# ---------------------------------------------------------------------------
# Oracles

class SyntheticOracles:
    """Seeded oracles keyed to each compound's hidden true affinity.

    Noise is keyed by compound id, so re-scoring a compound reproduces its
    value (results behave like a cache, as a real campaign database would).
    """

    def __init__(
        self,
        seed: int = 0,
        dock_noise_sd: float = 0.25,
        replica_sd: float = 0.5,
        frame_sd: float = 1.0,
        esmacs_replicas: int = 25,
        esmacs_frames: int = 50,
        ties_noise_sd: float = 0.5,
        ties_replicas: int = 5,
        ties_samples: int = 20,
        lambda_windows: int = 13,
        fail_ids: frozenset[str] = frozenset(),
    ) -> None:
        self.seed = seed
        self.dock_noise_sd = dock_noise_sd
        self.replica_sd = replica_sd
        self.frame_sd = frame_sd
        self.esmacs_replicas = esmacs_replicas
        self.esmacs_frames = esmacs_frames
        self.ties_noise_sd = ties_noise_sd
        self.ties_replicas = ties_replicas
        self.ties_samples = ties_samples
        self.lambda_windows = lambda_windows
        self.fail_ids = fail_ids

    def _truth(self, record: CompoundRecord) -> float:
        if record.id in self.fail_ids:
            raise OracleError(f"oracle failure for {record.id!r}")
        if record.true_affinity is None:
            raise OracleError(f"no ground-truth affinity for {record.id!r}")
        return record.true_affinity

    def dock(self, record: CompoundRecord) -> float:
        truth = self._truth(record)
        rng = tagged_rng(self.seed, "dock", record.id)
        return float(truth + rng.normal(0.0, self.dock_noise_sd))

    def esmacs(self, record: CompoundRecord) -> list[ReplicaSeries]:
        truth = self._truth(record)
        rng = tagged_rng(self.seed, "esmacs-oracle", record.id)
        mus = truth + rng.normal(0.0, self.replica_sd, size=self.esmacs_replicas)
        return [
            ReplicaSeries(f"rep{r:02d}", mu + rng.normal(0.0, self.frame_sd, size=self.esmacs_frames))
            for r, mu in enumerate(mus)
        ]

    def ties(self, rec_a: CompoundRecord, rec_b: CompoundRecord) -> list[LambdaWindow]:
        ddg_true = self._truth(rec_b) - self._truth(rec_a)
        rng = tagged_rng(self.seed, "ties-oracle", rec_a.id, rec_b.id)
        windows = []
        for lam in default_lambda_grid(self.lambda_windows):
            reps = [
                ddg_true + rng.normal(0.0, self.ties_noise_sd, size=self.ties_samples)
                for _ in range(self.ties_replicas)
            ]
            windows.append(LambdaWindow(float(lam), reps))
        return windows


class FileOracles:
    """Oracles serving pre-computed results; missing compounds raise OracleError."""

    def __init__(
        self,
        dock_scores: dict[str, float],
        esmacs_data: dict[str, list[ReplicaSeries]] | None = None,
        ties_data: dict[str, list[LambdaWindow]] | None = None,
    ) -> None:
        self.dock_scores = dock_scores
        self.esmacs_data = esmacs_data or {}
        self.ties_data = ties_data or {}

    def dock(self, record: CompoundRecord) -> float:
        try:
            return self.dock_scores[record.id]
        except KeyError:
            raise OracleError(f"no dock score on file for {record.id!r}") from None

    def esmacs(self, record: CompoundRecord) -> list[ReplicaSeries]:
        try:
            return self.esmacs_data[record.id]
        except KeyError:
            raise OracleError(f"no ESMACS data on file for {record.id!r}") from None

    def ties(self, rec_a: CompoundRecord, rec_b: CompoundRecord) -> list[LambdaWindow]:
        key = f"{rec_a.id}--{rec_b.id}"
        try:
            return self.ties_data[key]
        except KeyError:
            raise OracleError(f"no TIES data on file for {key!r}") from None


# ---------------------------------------------------------------------------
# Campaign loop

@dataclass
class CampaignState:
    iteration: int = 0
    training: list[tuple[np.ndarray, float]] = field(default_factory=list)
    trained_index: dict[str, int] = field(default_factory=dict)

    def record_result(self, compound_id: str, features: np.ndarray, dg: float) -> None:
        if compound_id in self.trained_index:
            row = self.trained_index[compound_id]
            self.training[row] = (self.training[row][0], dg)
        else:
            self.trained_index[compound_id] = len(self.training)
            self.training.append((np.asarray(features, float), dg))


@dataclass
class IterationReport:
    iteration: int
    candidate_count: int
    docked_count: int
    dock_promoted: list[str]
    dock_scores: dict[str, float]  # of the promoted compounds
    esmacs_results: list[tuple[str, EsmacsEstimate]]  # ranked by dG ascending
    esmacs_promoted: list[str]
    ties_results: list[tuple[str, str, TiesEstimate]]
    flagged: list[str]
    training_size: int
    mean_true_affinity_promoted: float | None


def run_iteration(
    pool: list[CompoundRecord],
    config: FunnelConfig,
    oracles,
    state: CampaignState | None = None,
    bootstrap_n: int = 1000,
    ci_level: float = 0.95,
) -> IterationReport:
    """One funnel pass; mutates pool records (scores) and the campaign state."""
    if state is None:
        state = CampaignState()
    state.iteration += 1
    by_id = {c.id: c for c in pool}
    flagged: list[str] = []

    candidates = _select_candidates(pool, config, state)

    scored: list[tuple[str, float]] = []
    for record in candidates:
        try:
            record.dock_score = oracles.dock(record)
        except OracleError:
            flagged.append(record.id)
            continue
        scored.append((record.id, record.dock_score))
    dock_promoted = promote(scored, min(config.dock_keep, len(scored)))

    esmacs_results: list[tuple[str, EsmacsEstimate]] = []
    for cid in dock_promoted:
        record = by_id[cid]
        try:
            replicas = oracles.esmacs(record)
            estimate = esmacs_aggregate(
                replicas, bootstrap_n=bootstrap_n, ci_level=ci_level, seed=config.seed
            )
        except OracleError:
            flagged.append(cid)
            continue
        record.esmacs = estimate
        esmacs_results.append((cid, estimate))
    esmacs_results.sort(key=lambda kv: (kv[1].dg, kv[0]))
    esmacs_promoted = [cid for cid, _est in esmacs_results[: config.esmacs_keep]]

    ties_results: list[tuple[str, str, TiesEstimate]] = []
    n_pairs = min(config.ties_pairs, max(len(esmacs_promoted) - 1, 0))
    for i in range(n_pairs):
        a, b = esmacs_promoted[i], esmacs_promoted[i + 1]
        try:
            windows = oracles.ties(by_id[a], by_id[b])
            estimate = ties_integrate(windows, bootstrap_n=bootstrap_n, seed=config.seed)
        except OracleError:
            flagged.append(f"{a}--{b}")
            continue
        ties_results.append((a, b, estimate))

    for cid, est in esmacs_results:
        state.record_result(cid, by_id[cid].features, est.dg)

    truths = [by_id[cid].true_affinity for cid in dock_promoted]
    mean_truth = (
        float(np.mean([t for t in truths if t is not None]))
        if any(t is not None for t in truths)
        else None
    )

    score_of = dict(scored)
    return IterationReport(
        iteration=state.iteration,
        candidate_count=len(candidates),
        docked_count=len(scored),
        dock_promoted=dock_promoted,
        dock_scores={cid: score_of[cid] for cid in dock_promoted},
        esmacs_results=esmacs_results,
        esmacs_promoted=esmacs_promoted,
        ties_results=ties_results,
        flagged=flagged,
        training_size=len(state.training),
        mean_true_affinity_promoted=mean_truth,
    )


def _select_candidates(
    pool: list[CompoundRecord], config: FunnelConfig, state: CampaignState
) -> list[CompoundRecord]:
    if len(state.training) < config.surrogate_k:
        return list(pool)  # cold start: whole pool
    model = fit_surrogate(state.training, k=config.surrogate_k)
    queries = np.array([c.features for c in pool])
    predictions = predict_batch(model, queries)
    order = np.argsort(predictions, kind="stable")
    n_exploit = min(config.exploit_factor * config.dock_keep, len(pool))
    exploit_idx = list(order[:n_exploit])
    chosen = set(exploit_idx)
    remaining = [i for i in range(len(pool)) if i not in chosen]
    rng = tagged_rng(config.seed, "explore", state.iteration)
    n_explore = min(config.dock_keep, len(remaining))
    explore_idx = (
        sorted(rng.choice(len(remaining), size=n_explore, replace=False).tolist())
        if n_explore
        else []
    )
    picks = exploit_idx + [remaining[i] for i in explore_idx]
    return [pool[i] for i in picks]


def run_campaign(
    pool: list[CompoundRecord],
    config: FunnelConfig,
    oracles,
    bootstrap_n: int = 1000,
    ci_level: float = 0.95,
) -> list[IterationReport]:
    state = CampaignState()
    return [
        run_iteration(pool, config, oracles, state, bootstrap_n, ci_level)
        for _ in range(config.iterations)
    ]


# ---------------------------------------------------------------------------
# Synthetic pool

def make_pool(
    pool_size: int,
    feature_dim: int = 4,
    seed: int = 0,
    affinity_range: tuple[float, float] = (-12.0, -4.0),
) -> list[CompoundRecord]:
    """Uniform feature pool with a smooth hidden affinity landscape.

    Affinity is a Gaussian well centered at a seeded point of feature space:
    compounds near the center bind strongest.
    """
    if pool_size < 1:
        raise ValueError("pool_size must be >= 1")
    rng = tagged_rng(seed, "pool")
    features = rng.random((pool_size, feature_dim))
    center = 0.25 + 0.5 * rng.random(feature_dim)
    length_scale = 0.35 * math.sqrt(feature_dim)
    d2 = ((features - center) ** 2).sum(axis=1)
    strongest, weakest = affinity_range
    affinity = weakest + (strongest - weakest) * np.exp(-d2 / (2.0 * length_scale**2))
    return [
        CompoundRecord(f"cmp{i:05d}", features[i], true_affinity=float(affinity[i]))
        for i in range(pool_size)
    ]


# ---------------------------------------------------------------------------
# Workflow emission

@dataclass(frozen=True)
class CostModel:
    """Task counts and durations for generated workloads.

    Per-complex defaults: 25 GPU simulations at 10 node-hours and 65 CPU
    simulations at 700 node-hours, split evenly across the simulations.
    """

    esmacs_sims: int = 25
    ties_sims: int = 65
    esmacs_node_hours: float = 10.0
    ties_node_hours: float = 700.0
    analysis_seconds: float = 300.0
    rel_spread: float = 0.0
    time_scale: float = 1.0

    def _duration(self, mean: float):
        mean *= self.time_scale
        if self.rel_spread > 0:
            return Stochastic(mean, self.rel_spread)
        return Fixed(mean)

    def esmacs_sim_duration(self):
        return self._duration(self.esmacs_node_hours * 3600.0 / self.esmacs_sims)

    def ties_sim_duration(self):
        return self._duration(self.ties_node_hours * 3600.0 / self.ties_sims)

    def analysis_duration(self):
        return self._duration(self.analysis_seconds)


def emit_workflow(report: IterationReport, cost: CostModel = CostModel()) -> Workflow:
    """One pipeline per promoted compound (ensemble sims, then analysis)."""
    pipelines = []
    for cid in report.dock_promoted:
        sims = [
            TaskSpec(
                id=f"esmacs-{cid}-sim{r:02d}",
                kind=TaskKind.ESMACS_SIM,
                cores=0,
                gpus=1,
                duration=cost.esmacs_sim_duration(),
            )
            for r in range(cost.esmacs_sims)
        ]
        analysis = TaskSpec(
            id=f"esmacs-{cid}-analysis",
            kind=TaskKind.ESMACS_ANALYSIS,
            cores=1,
            duration=cost.analysis_duration(),
        )
        pipelines.append(
            Pipeline(
                f"esmacs-{cid}",
                [Stage(f"esmacs-{cid}-sims", sims), Stage(f"esmacs-{cid}-post", [analysis])],
            )
        )
    for a, b, _est in report.ties_results:
        pair = f"{a}--{b}"
        sims = [
            TaskSpec(
                id=f"ties-{pair}-sim{r:02d}",
                kind=TaskKind.TIES_SIM,
                cores=1,
                duration=cost.ties_sim_duration(),
            )
            for r in range(cost.ties_sims)
        ]
        analysis = TaskSpec(
            id=f"ties-{pair}-analysis",
            kind=TaskKind.TIES_ANALYSIS,
            cores=1,
            duration=cost.analysis_duration(),
        )
        pipelines.append(
            Pipeline(
                f"ties-{pair}",
                [Stage(f"ties-{pair}-sims", sims), Stage(f"ties-{pair}-post", [analysis])],
            )
        )
    return Workflow(pipelines)


# ---------------------------------------------------------------------------
# CSV interfaces

def pool_to_csv(pool: list[CompoundRecord]) -> str:
    if not pool:
        raise ValueError("empty pool")
    dim = len(pool[0].features)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["id"] + [f"feature_{j}" for j in range(dim)] + ["dock_score", "true_affinity"]
    )
    for c in pool:
        writer.writerow(
            [c.id]
            + [repr(float(v)) for v in c.features]
            + [
                "" if c.dock_score is None else repr(c.dock_score),
                "" if c.true_affinity is None else repr(c.true_affinity),
            ]
        )
    return buf.getvalue()


def pool_from_csv(text: str) -> list[CompoundRecord]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if not header or header[0] != "id" or header[-2:] != ["dock_score", "true_affinity"]:
        raise ValueError(f"bad pool header: {header}")
    dim = len(header) - 3
    if dim < 1 or header[1 : 1 + dim] != [f"feature_{j}" for j in range(dim)]:
        raise ValueError(f"bad pool header: {header}")
    pool = []
    for lineno, row in enumerate(reader, start=2):
        if len(row) != len(header):
            raise ValueError(f"row {lineno}: expected {len(header)} fields")
        features = np.array([float(v) for v in row[1 : 1 + dim]])
        dock = float(row[-2]) if row[-2] else None
        truth = float(row[-1]) if row[-1] else None
        pool.append(CompoundRecord(row[0], features, dock_score=dock, true_affinity=truth))
    if not pool:
        raise ValueError("empty pool")
    return pool


def report_to_csv(report: IterationReport) -> str:
    """Per-compound ESMACS rows for one iteration, ranked by dG."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        [
            "compound_id",
            "esmacs_rank",
            "dock_score",
            "dg_kcal_mol",
            "ci_low",
            "ci_high",
            "promoted_to_ties",
        ]
    )
    promoted = set(report.esmacs_promoted)
    for rank, (cid, est) in enumerate(report.esmacs_results, start=1):
        score = report.dock_scores.get(cid)
        writer.writerow(
            [
                cid,
                rank,
                "" if score is None else repr(score),
                repr(est.dg),
                repr(est.ci_low),
                repr(est.ci_high),
                int(cid in promoted),
            ]
        )
    return buf.getvalue()


def report_rows_from_csv(text: str) -> list[dict]:
    """Parsed per-compound rows of an iteration report CSV."""
    reader = csv.DictReader(io.StringIO(text))
    expected = {
        "compound_id",
        "esmacs_rank",
        "dock_score",
        "dg_kcal_mol",
        "ci_low",
        "ci_high",
        "promoted_to_ties",
    }
    if set(reader.fieldnames or ()) != expected:
        raise ValueError(f"bad report header: {reader.fieldnames}")
    rows = []
    for row in reader:
        rows.append(
            {
                "compound_id": row["compound_id"],
                "esmacs_rank": int(row["esmacs_rank"]),
                "dock_score": float(row["dock_score"]) if row["dock_score"] else None,
                "dg_kcal_mol": float(row["dg_kcal_mol"]),
                "ci_low": float(row["ci_low"]),
                "ci_high": float(row["ci_high"]),
                "promoted_to_ties": bool(int(row["promoted_to_ties"])),
            }
        )
    return rows


def ties_report_to_csv(report: IterationReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["transformation_id", "ddg_kcal_mol", "sigma_kcal_mol", "n_windows"])
    for a, b, est in report.ties_results:
        writer.writerow([f"{a}--{b}", repr(est.ddg), repr(est.sigma), est.n_windows])
    return buf.getvalue()


def scatter_to_csv(pool: list[CompoundRecord]) -> str:
    """Docking-score vs ensemble-dG pairs for external plotting."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["compound_id", "dock_score", "esmacs_dg"])
    for c in pool:
        if c.dock_score is not None and c.esmacs is not None:
            writer.writerow([c.id, repr(c.dock_score), repr(c.esmacs.dg)])
    return buf.getvalue()


def read_scatter_csv(text: str) -> list[tuple[str, float, float]]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != ["compound_id", "dock_score", "esmacs_dg"]:
        raise ValueError(f"bad scatter header: {header}")
    out = []
    for lineno, row in enumerate(reader, start=2):
        try:
            out.append((row[0], float(row[1]), float(row[2])))
        except (IndexError, ValueError) as exc:
            raise ValueError(f"row {lineno}: {exc}") from None
    return out
