"""Ensemble free-energy statistics.

ESMACS-style aggregation averages per-replica mean energies over an ensemble
and attaches a seeded nonparametric bootstrap confidence interval (percentile
method, resampling replicas with replacement). TIES-style thermodynamic
integration takes per-window ensembles of dU/dlambda samples and integrates
the window means over lambda with the trapezoid rule; its sigma is the
standard deviation of the integral over bootstrap resamples of each window's
replicas. Everything is pure given an explicit seed.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .seeding import tagged_rng

#: kcal/mol at T ~ 300 K; reproduces the nM-scale dissociation thresholds to 2 decimals.
RT_DEFAULT = 0.59616

BOOTSTRAP_DEFAULT = 1000
CI_LEVEL_DEFAULT = 0.95


@dataclass(frozen=True)
class ReplicaSeries:
    """One replica's ordered energy samples (kcal/mol), e.g. per-frame totals."""

    replica_id: str
    samples: np.ndarray

    def __init__(self, replica_id: str, samples) -> None:
        arr = np.array(samples, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError(f"replica {replica_id!r}: samples must be a non-empty 1-d series")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"replica {replica_id!r}: non-finite energy sample")
        arr.setflags(write=False)
        object.__setattr__(self, "replica_id", replica_id)
        object.__setattr__(self, "samples", arr)

    def mean(self) -> float:
        return float(self.samples.mean())


@dataclass(frozen=True)
class EsmacsEstimate:
    dg: float
    ci_low: float
    ci_high: float
    n_replicas: int

    def __post_init__(self) -> None:
        if not (self.ci_low <= self.dg <= self.ci_high):
            raise ValueError("confidence interval must bracket the estimate")


@dataclass(frozen=True)
class LambdaWindow:
    """Per-lambda ensemble of dU/dlambda sample lists (kcal/mol)."""

    lam: float
    replicas: tuple[np.ndarray, ...]

    def __init__(self, lam: float, replicas) -> None:
        if not 0.0 <= lam <= 1.0:
            raise ValueError(f"lambda {lam} outside [0, 1]")
        arrays = []
        for rep in replicas:
            arr = np.array(rep, dtype=float)
            if arr.size == 0:
                raise ValueError(f"window lambda={lam}: empty replica")
            arr.setflags(write=False)
            arrays.append(arr)
        if not arrays:
            raise ValueError(f"window lambda={lam}: no replicas")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "replicas", tuple(arrays))

    def replica_means(self) -> np.ndarray:
        return np.array([rep.mean() for rep in self.replicas])

    def mean(self) -> float:
        return float(self.replica_means().mean())


@dataclass(frozen=True)
class TiesEstimate:
    ddg: float
    sigma: float
    n_windows: int
    window_means: tuple[tuple[float, float], ...] = ()

    def __post_init__(self) -> None:
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")


class EnsembleRequiredError(ValueError):
    """Single-trajectory input rejected: ensembles are required for reliable estimates."""


def esmacs_aggregate(
    replicas: list[ReplicaSeries],
    bootstrap_n: int = BOOTSTRAP_DEFAULT,
    ci_level: float = CI_LEVEL_DEFAULT,
    seed: int = 0,
) -> EsmacsEstimate:
    """Mean of per-replica means with a percentile-bootstrap CI over replicas."""
    if len(replicas) < 2:
        raise EnsembleRequiredError("ensemble required: got fewer than 2 replicas")
    if bootstrap_n < 100:
        raise ValueError("bootstrap_n must be >= 100")
    if not 0.0 < ci_level < 1.0:
        raise ValueError("ci_level must be in (0, 1)")
    means = np.array([r.mean() for r in replicas])
    dg = float(means.mean())
    rng = tagged_rng(seed, "esmacs-bootstrap")
    idx = rng.integers(0, means.size, size=(bootstrap_n, means.size))
    boot = means[idx].mean(axis=1)
    alpha = (1.0 - ci_level) / 2.0
    ci_low, ci_high = np.quantile(boot, [alpha, 1.0 - alpha])
    # Degenerate ensembles can put the point estimate a float ulp outside the CI.
    return EsmacsEstimate(dg, min(float(ci_low), dg), max(float(ci_high), dg), means.size)


def ties_integrate(
    windows: list[LambdaWindow],
    bootstrap_n: int = BOOTSTRAP_DEFAULT,
    seed: int = 0,
) -> TiesEstimate:
    """Trapezoidal integral of window means over lambda, with bootstrap sigma."""
    if len(windows) < 2:
        raise ValueError("at least 2 lambda windows required")
    if bootstrap_n < 100:
        raise ValueError("bootstrap_n must be >= 100")
    lams = np.array([w.lam for w in windows])
    if np.unique(lams).size != lams.size:
        raise ValueError("duplicate lambda values")
    if not (np.isclose(lams.min(), 0.0) and np.isclose(lams.max(), 1.0)):
        raise ValueError("incomplete alchemical path: endpoints 0 and 1 required")
    for w in windows:
        if len(w.replicas) < 2:
            raise ValueError(f"window lambda={w.lam}: at least 2 replicas required")

    order = np.argsort(lams)
    sorted_windows = [windows[i] for i in order]
    lams = lams[order]
    means = np.array([w.mean() for w in sorted_windows])
    ddg = float(np.trapezoid(means, lams))

    rng = tagged_rng(seed, "ties-bootstrap")
    boot_means = np.empty((bootstrap_n, len(sorted_windows)))
    for j, w in enumerate(sorted_windows):
        rep_means = w.replica_means()
        idx = rng.integers(0, rep_means.size, size=(bootstrap_n, rep_means.size))
        boot_means[:, j] = rep_means[idx].mean(axis=1)
    integrals = np.trapezoid(boot_means, lams, axis=1)
    sigma = float(integrals.std(ddof=1)) if bootstrap_n > 1 else 0.0

    window_means = tuple((float(l), float(m)) for l, m in zip(lams, means))
    return TiesEstimate(ddg, sigma, len(sorted_windows), window_means)


def dg_to_kd(dg: float, rt: float = RT_DEFAULT) -> float:
    """Dissociation constant (molar) for a binding free energy: K_D = exp(dG/RT)."""
    if rt <= 0:
        raise ValueError("RT must be positive")
    return math.exp(dg / rt)


def kd_to_dg(kd: float, rt: float = RT_DEFAULT) -> float:
    """Binding free energy (kcal/mol) for a dissociation constant: dG = RT ln K_D."""
    if rt <= 0:
        raise ValueError("RT must be positive")
    if kd <= 0:
        raise ValueError("K_D must be positive")
    return rt * math.log(kd)


@dataclass(frozen=True)
class AffinityBin:
    label: str
    threshold: float  # dG upper bound (exclusive) of the stronger side, kcal/mol
    rt: float = RT_DEFAULT


DEFAULT_BINS = (
    AffinityBin("10 nM", -10.98),
    AffinityBin("100 nM", -9.61),
    AffinityBin("1 uM", -8.24),
)

PROMISING_CUTOFF = -8.24


@dataclass
class AffinityBinCounts:
    """Counts per bin, lower-closed upper-open except the open strongest bin."""

    labels: list[str]
    counts: list[int]
    promising_total: int  # compounds with dG < -8.24

    def as_rows(self) -> list[tuple[str, int]]:
        return list(zip(self.labels, self.counts)) + [
            (f"total < {PROMISING_CUTOFF}", self.promising_total)
        ]


def bin_affinities(
    estimates: list[tuple[str, float]],
    bins: tuple[AffinityBin, ...] = DEFAULT_BINS,
) -> AffinityBinCounts:
    """Assign each compound to exactly one affinity range by its dG."""
    thresholds = [b.threshold for b in bins]
    if thresholds != sorted(thresholds):
        raise ValueError("bins must be ordered strongest to weakest")
    labels = [f"< {thresholds[0]}"]
    for lo, hi in zip(thresholds, thresholds[1:]):
        labels.append(f"[{lo}, {hi})")
    labels.append(f">= {thresholds[-1]}")

    counts = [0] * (len(thresholds) + 1)
    promising = 0
    for _cid, dg in estimates:
        slot = len(thresholds)
        for i, thr in enumerate(thresholds):
            if dg < thr:
                slot = i
                break
        counts[slot] += 1
        if dg < PROMISING_CUTOFF:
            promising += 1
    return AffinityBinCounts(labels, counts, promising)


@dataclass
class TransformationSummary:
    n_rows: int
    n_above_one: int
    n_statistically_zero: int
    max_sigma: float
    max_sigma_label: str
    n_sigma_within: int
    sigma_threshold: float


def summarize_transformations(
    table: list[tuple[str, float, float]],
    ddg_threshold: float = 1.0,
    sigma_threshold: float = 0.82,
) -> TransformationSummary:
    """Headline statistics over (label, ddG, sigma) rows.

    "Statistically zero" means |ddG| <= 2 sigma.
    """
    if not table:
        raise ValueError("empty transformation table")
    for label, _ddg, sigma in table:
        if sigma < 0:
            raise ValueError(f"transformation {label!r}: negative sigma")
    n_above = sum(1 for _l, ddg, _s in table if ddg > ddg_threshold)
    n_zero = sum(1 for _l, ddg, s in table if abs(ddg) <= 2.0 * s)
    max_label, _, max_sigma = max(table, key=lambda row: (row[2], row[0]))
    n_within = sum(1 for _l, _d, s in table if s <= sigma_threshold)
    return TransformationSummary(
        n_rows=len(table),
        n_above_one=n_above,
        n_statistically_zero=n_zero,
        max_sigma=max_sigma,
        max_sigma_label=max_label,
        n_sigma_within=n_within,
        sigma_threshold=sigma_threshold,
    )


# ---------------------------------------------------------------------------
# Synthetic sample generation (estimator test support)

@dataclass(frozen=True)
class DistributionSpec:
    """Seeded sampling spec: normal(mu, sd), mixture of normals, or heavy-tailed.

    kind "mixture" takes components [(weight, mu, sd), ...]; kind "student_t"
    takes mu, sd (scale) and dof. Predictions from ensemble methods are known
    to be non-normal, so estimator tests exercise all three shapes.
    """

    kind: str
    mu: float = 0.0
    sd: float = 1.0
    components: tuple[tuple[float, float, float], ...] = ()
    dof: float = 3.0


def sample_distribution(spec: DistributionSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    if n <= 0:
        raise ValueError("sample count must be positive")
    if spec.kind == "normal":
        return rng.normal(spec.mu, spec.sd, size=n)
    if spec.kind == "mixture":
        if not spec.components:
            raise ValueError("mixture spec needs components")
        weights = np.array([w for w, _m, _s in spec.components], dtype=float)
        weights = weights / weights.sum()
        choice = rng.choice(len(spec.components), size=n, p=weights)
        out = np.empty(n)
        for i, (_w, mu, sd) in enumerate(spec.components):
            mask = choice == i
            out[mask] = rng.normal(mu, sd, size=int(mask.sum()))
        return out
    if spec.kind == "student_t":
        return spec.mu + spec.sd * rng.standard_t(spec.dof, size=n)
    raise ValueError(f"unknown distribution kind {spec.kind!r}")


def distribution_mean(spec: DistributionSpec) -> float:
    """Exact mean of the spec, for coverage oracles."""
    if spec.kind in ("normal", "student_t"):
        return spec.mu
    if spec.kind == "mixture":
        weights = np.array([w for w, _m, _s in spec.components], dtype=float)
        mus = np.array([m for _w, m, _s in spec.components])
        return float((weights / weights.sum()) @ mus)
    raise ValueError(f"unknown distribution kind {spec.kind!r}")


def synth_replica_series(
    spec: DistributionSpec,
    n_replicas: int,
    n_frames: int,
    seed: int,
    frame_sd: float = 0.0,
) -> list[ReplicaSeries]:
    """Replica ensembles whose replica means are drawn from the spec.

    Frame-level noise (sd frame_sd, mean zero) rides on top of each replica
    mean so the series look like per-frame energies.
    """
    rng = tagged_rng(seed, "synth-esmacs")
    replica_means = sample_distribution(spec, n_replicas, rng)
    out = []
    for i, mu in enumerate(replica_means):
        frames = mu + (rng.normal(0.0, frame_sd, size=n_frames) if frame_sd > 0 else np.zeros(n_frames))
        out.append(ReplicaSeries(f"rep{i:02d}", frames))
    return out


def synth_lambda_windows(
    integrand,
    lambdas: np.ndarray,
    n_replicas: int,
    n_samples: int,
    seed: int,
    noise_sd: float = 0.0,
) -> list[LambdaWindow]:
    """Windows whose replica samples scatter around integrand(lambda)."""
    rng = tagged_rng(seed, "synth-ties")
    windows = []
    for lam in lambdas:
        target = float(integrand(lam))
        reps = [
            target + (rng.normal(0.0, noise_sd, size=n_samples) if noise_sd > 0 else np.zeros(n_samples))
            for _ in range(n_replicas)
        ]
        windows.append(LambdaWindow(float(lam), reps))
    return windows


def default_lambda_grid(n_windows: int = 13) -> np.ndarray:
    """Uniform lambda grid including both endpoints (13 windows by default)."""
    if n_windows < 2:
        raise ValueError("need at least 2 windows")
    return np.linspace(0.0, 1.0, n_windows)


# ---------------------------------------------------------------------------
# CSV schemas

ESMACS_INPUT_COLUMNS = ["compound_id", "replica_id", "frame", "energy_kcal_mol"]
TIES_INPUT_COLUMNS = ["transformation_id", "lambda", "replica_id", "sample_index", "dudl_kcal_mol"]


def read_esmacs_csv(text: str) -> dict[str, list[ReplicaSeries]]:
    """Parse (compound_id, replica_id, frame, energy_kcal_mol) rows into ensembles."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != ESMACS_INPUT_COLUMNS:
        raise ValueError(f"bad ESMACS header: expected {ESMACS_INPUT_COLUMNS}, got {header}")
    raw: dict[str, dict[str, list[tuple[int, float]]]] = {}
    for lineno, row in enumerate(reader, start=2):
        if len(row) != 4:
            raise ValueError(f"row {lineno}: expected 4 fields, got {len(row)}")
        cid, rid, frame_s, energy_s = row
        try:
            frame, energy = int(frame_s), float(energy_s)
        except ValueError as exc:
            raise ValueError(f"row {lineno}: {exc}") from None
        raw.setdefault(cid, {}).setdefault(rid, []).append((frame, energy))
    out: dict[str, list[ReplicaSeries]] = {}
    for cid, reps in raw.items():
        series = []
        for rid in sorted(reps):
            frames = sorted(reps[rid])
            series.append(ReplicaSeries(rid, [e for _f, e in frames]))
        out[cid] = series
    return out


def write_esmacs_csv(ensembles: dict[str, list[ReplicaSeries]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ESMACS_INPUT_COLUMNS)
    for cid in sorted(ensembles):
        for rep in ensembles[cid]:
            for frame, energy in enumerate(rep.samples):
                writer.writerow([cid, rep.replica_id, frame, repr(float(energy))])
    return buf.getvalue()


def read_ties_csv(text: str) -> dict[str, list[LambdaWindow]]:
    """Parse (transformation_id, lambda, replica_id, sample_index, dudl) rows."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != TIES_INPUT_COLUMNS:
        raise ValueError(f"bad TIES header: expected {TIES_INPUT_COLUMNS}, got {header}")
    raw: dict[str, dict[float, dict[str, list[tuple[int, float]]]]] = {}
    for lineno, row in enumerate(reader, start=2):
        if len(row) != 5:
            raise ValueError(f"row {lineno}: expected 5 fields, got {len(row)}")
        tid, lam_s, rid, idx_s, val_s = row
        try:
            lam, idx, val = float(lam_s), int(idx_s), float(val_s)
        except ValueError as exc:
            raise ValueError(f"row {lineno}: {exc}") from None
        raw.setdefault(tid, {}).setdefault(lam, {}).setdefault(rid, []).append((idx, val))
    out: dict[str, list[LambdaWindow]] = {}
    for tid, lam_map in raw.items():
        windows = []
        for lam in sorted(lam_map):
            reps = [
                [v for _i, v in sorted(lam_map[lam][rid])] for rid in sorted(lam_map[lam])
            ]
            windows.append(LambdaWindow(lam, reps))
        out[tid] = windows
    return out


def write_ties_csv(transformations: dict[str, list[LambdaWindow]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TIES_INPUT_COLUMNS)
    for tid in sorted(transformations):
        for window in transformations[tid]:
            for r, rep in enumerate(window.replicas):
                for s, val in enumerate(rep):
                    writer.writerow([tid, repr(window.lam), f"rep{r:02d}", s, repr(float(val))])
    return buf.getvalue()


def esmacs_estimates_to_csv(estimates: list[tuple[str, EsmacsEstimate]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["compound_id", "dg_kcal_mol", "ci_low", "ci_high", "n_replicas"])
    for cid, est in estimates:
        writer.writerow([cid, repr(est.dg), repr(est.ci_low), repr(est.ci_high), est.n_replicas])
    return buf.getvalue()


def ties_estimates_to_csv(estimates: list[tuple[str, TiesEstimate]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["transformation_id", "ddg_kcal_mol", "sigma_kcal_mol", "n_windows"])
    for tid, est in estimates:
        writer.writerow([tid, repr(est.ddg), repr(est.sigma), est.n_windows])
    return buf.getvalue()


def bin_counts_to_csv(counts: AffinityBinCounts) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["energy_range_kcal_mol", "count"])
    for label, count in counts.as_rows():
        writer.writerow([label, count])
    return buf.getvalue()


def bin_counts_from_csv(text: str) -> AffinityBinCounts:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != ["energy_range_kcal_mol", "count"]:
        raise ValueError(f"bad bin-count header: {header}")
    rows = [(row[0], int(row[1])) for row in reader]
    if not rows or not rows[-1][0].startswith("total"):
        raise ValueError("bin-count table must end with the total row")
    labels = [label for label, _c in rows[:-1]]
    counts = [c for _l, c in rows[:-1]]
    return AffinityBinCounts(labels, counts, rows[-1][1])


def read_estimates_csv(text: str) -> list[tuple[str, float]]:
    """(compound_id, dG) pairs from an estimates CSV; extra columns are ignored."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if not header or header[:2] != ["compound_id", "dg_kcal_mol"]:
        raise ValueError(f"bad estimates header: {header}")
    out = []
    for lineno, row in enumerate(reader, start=2):
        try:
            out.append((row[0], float(row[1])))
        except (IndexError, ValueError) as exc:
            raise ValueError(f"row {lineno}: {exc}") from None
    return out


def read_transformations_csv(text: str) -> list[tuple[str, float, float]]:
    """(label, ddG, sigma) rows; extra columns are ignored."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    expected = ["transformation_id", "ddg_kcal_mol", "sigma_kcal_mol"]
    if not header or header[:3] != expected:
        raise ValueError(f"bad transformations header: expected {expected}..., got {header}")
    out = []
    for lineno, row in enumerate(reader, start=2):
        try:
            out.append((row[0], float(row[1]), float(row[2])))
        except (IndexError, ValueError) as exc:
            raise ValueError(f"row {lineno}: {exc}") from None
    return out


def load_reference_transformations() -> list[tuple[str, float, float]]:
    """Bundled ADRP ligand-transformation results: (label, ddG, sigma) rows."""
    text = resources.files("screenpilot").joinpath("data/adrp_ties_reference.csv").read_text()
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if header != ["transformation_id", "ddg_kcal_mol", "sigma_kcal_mol"]:
        raise ValueError(f"unexpected fixture header: {header}")
    return [(row[0], float(row[1]), float(row[2])) for row in reader]
