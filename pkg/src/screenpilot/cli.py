"""Command-line entry point: configure, run, analyze, and report.

Exit codes: 0 ok, 2 input/config error, 3 semantic error (e.g. a task no
cluster node can ever host). Every subcommand is deterministic given
config + seed; the only wall-clock output is a timestamped log line,
suppressed by --quiet.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from datetime import datetime
from pathlib import Path

from . import energetics, funnel, simulate, transitions
from .config import CampaignConfig, ConfigError, load_config
from .placement import per_node_utilization, utilization_rows_to_csv
from .simulate import SimConfig, UnschedulableError


def _say(args, message: str) -> None:
    if not args.quiet:
        stamp = datetime.now().isoformat(timespec="seconds")
        print(f"[{stamp}] {message}")


def _outdir(args, cfg: CampaignConfig | None = None) -> Path:
    out = args.out or (cfg.output_dir if cfg else ".")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_cfg(args) -> CampaignConfig:
    if not args.config:
        raise ConfigError("--config is required for this subcommand")
    return load_config(args.config, seed_override=args.seed)


def _build_pool(cfg: CampaignConfig) -> list[funnel.CompoundRecord]:
    if cfg.pool_file:
        path = Path(cfg.pool_file)
        if not path.exists():
            raise ConfigError(f"pool file not found: {path}")
        return funnel.pool_from_csv(path.read_text())
    return funnel.make_pool(
        cfg.funnel.pool_size, feature_dim=cfg.funnel.feature_dim, seed=cfg.seed
    )


def _build_oracles(cfg: CampaignConfig):
    if cfg.oracles.kind == "synthetic":
        return funnel.SyntheticOracles(
            seed=cfg.seed,
            dock_noise_sd=cfg.oracles.dock_noise_sd,
            replica_sd=cfg.oracles.replica_sd,
            frame_sd=cfg.oracles.frame_sd,
            esmacs_replicas=cfg.stats.esmacs_replicas,
            esmacs_frames=cfg.stats.esmacs_frames,
            ties_noise_sd=cfg.oracles.ties_noise_sd,
            ties_replicas=cfg.stats.ties_replicas,
            ties_samples=cfg.stats.ties_samples,
            lambda_windows=cfg.stats.lambda_windows,
        )
    dock_scores: dict[str, float] = {}
    if cfg.oracles.dock_csv:
        dock_scores = _read_dock_csv(Path(cfg.oracles.dock_csv))
    esmacs_data = (
        energetics.read_esmacs_csv(Path(cfg.oracles.esmacs_csv).read_text())
        if cfg.oracles.esmacs_csv
        else None
    )
    ties_data = (
        energetics.read_ties_csv(Path(cfg.oracles.ties_csv).read_text())
        if cfg.oracles.ties_csv
        else None
    )
    return funnel.FileOracles(dock_scores, esmacs_data, ties_data)


def _read_dock_csv(path: Path) -> dict[str, float]:
    if not path.exists():
        raise ConfigError(f"dock score file not found: {path}")
    reader = csv.reader(io.StringIO(path.read_text()))
    header = next(reader, None)
    if header != ["compound_id", "dock_score"]:
        raise ValueError(f"bad dock score header: {header}")
    return {row[0]: float(row[1]) for row in reader}


# ---------------------------------------------------------------------------
# Subcommands

def cmd_simulate(args) -> int:
    cfg = _load_cfg(args)
    outdir = _outdir(args, cfg)
    pool = _build_pool(cfg)
    oracles = _build_oracles(cfg)
    report = funnel.run_iteration(
        pool,
        cfg.funnel,
        oracles,
        bootstrap_n=cfg.stats.bootstrap_n,
        ci_level=cfg.stats.ci_level,
    )
    cost = funnel.CostModel(
        esmacs_sims=cfg.stats.esmacs_replicas,
        ties_sims=cfg.stats.lambda_windows * cfg.stats.ties_replicas,
    )
    wf = funnel.emit_workflow(report, cost)
    sim_cfg = SimConfig(cfg.cluster.nodes, seed=cfg.seed, policy=cfg.cluster.policy)
    trace, metrics = simulate.run(wf, sim_cfg)

    (outdir / "trace.csv").write_text(simulate.trace_to_csv(trace))
    (outdir / "metrics.csv").write_text(simulate.metrics_to_csv(metrics))
    horizon = metrics.makespan if metrics.makespan > 0 else 1.0
    rows = per_node_utilization(trace.intervals(), list(cfg.cluster.nodes), horizon)
    (outdir / "utilization.csv").write_text(utilization_rows_to_csv(rows))
    (outdir / "summary.txt").write_text(
        f"tasks: {len(trace.runs)}\n" + simulate.metrics_summary(metrics)
    )
    _say(args, f"simulate: wrote trace.csv, metrics.csv, utilization.csv, summary.txt to {outdir}")
    return 0


def cmd_funnel(args) -> int:
    cfg = _load_cfg(args)
    outdir = _outdir(args, cfg)
    pool = _build_pool(cfg)
    oracles = _build_oracles(cfg)
    reports = funnel.run_campaign(
        pool,
        cfg.funnel,
        oracles,
        bootstrap_n=cfg.stats.bootstrap_n,
        ci_level=cfg.stats.ci_level,
    )
    summary_lines = []
    for report in reports:
        stem = f"iter_{report.iteration:02d}"
        (outdir / f"funnel_{stem}.csv").write_text(funnel.report_to_csv(report))
        (outdir / f"ties_{stem}.csv").write_text(funnel.ties_report_to_csv(report))
        line = (
            f"iteration {report.iteration}: candidates={report.candidate_count} "
            f"docked={report.docked_count} esmacs={len(report.esmacs_results)} "
            f"ties={len(report.ties_results)} flagged={len(report.flagged)}"
        )
        if report.mean_true_affinity_promoted is not None:
            line += f" mean_true_affinity={report.mean_true_affinity_promoted:.4f}"
        summary_lines.append(line)
    (outdir / "scatter.csv").write_text(funnel.scatter_to_csv(pool))
    (outdir / "funnel_summary.txt").write_text("\n".join(summary_lines) + "\n")
    _say(args, f"funnel: wrote {len(reports)} iteration reports to {outdir}")
    return 0


def cmd_esmacs_aggregate(args) -> int:
    text = _read_input(args.input)
    ensembles = energetics.read_esmacs_csv(text)
    estimates = [
        (cid, energetics.esmacs_aggregate(series, args.bootstrap_n, args.ci_level, args.seed or 0))
        for cid, series in sorted(ensembles.items())
    ]
    out = _outdir(args) / "esmacs_estimates.csv"
    out.write_text(energetics.esmacs_estimates_to_csv(estimates))
    _say(args, f"esmacs-aggregate: {len(estimates)} estimates -> {out}")
    return 0


def cmd_ties_integrate(args) -> int:
    text = _read_input(args.input)
    transformations = energetics.read_ties_csv(text)
    estimates = [
        (tid, energetics.ties_integrate(windows, args.bootstrap_n, args.seed or 0))
        for tid, windows in sorted(transformations.items())
    ]
    out = _outdir(args) / "ties_estimates.csv"
    out.write_text(energetics.ties_estimates_to_csv(estimates))
    _say(args, f"ties-integrate: {len(estimates)} estimates -> {out}")
    return 0


def cmd_classify_transitions(args) -> int:
    text = _read_input(args.input)
    sequences = transitions.parse_class_file(text)
    analyses, rows = transitions.analyze_sequences(sequences, args.window, args.horizon)
    out = _outdir(args) / "transition_divergence.csv"
    out.write_text(transitions.evaluation_to_csv(rows))
    if not analyses:
        print("no events: every residue keeps its class for the whole trajectory")
    _say(args, f"classify-transitions: {len(analyses)} events, {len(rows)} labels -> {out}")
    return 0


def cmd_report(args) -> int:
    outdir = _outdir(args)
    lines = []
    if args.esmacs:
        estimates = energetics.read_estimates_csv(_read_input(args.esmacs))
        counts = energetics.bin_affinities(estimates)
        (outdir / "affinity_bins.csv").write_text(energetics.bin_counts_to_csv(counts))
        lines.append(f"{counts.promising_total}/{len(estimates)} compounds with dG < -8.24")
    if args.ties:
        table = energetics.read_transformations_csv(_read_input(args.ties))
        summary = energetics.summarize_transformations(table)
        lines.append(
            f"{summary.n_above_one}/{summary.n_rows} transformations with ddG > +1"
        )
        lines.append(
            f"max sigma {summary.max_sigma} at {summary.max_sigma_label}; "
            f"{summary.n_sigma_within}/{summary.n_rows} within sigma <= {summary.sigma_threshold}"
        )
        lines.append(f"{summary.n_statistically_zero} statistically zero (|ddG| <= 2 sigma)")
    if args.scatter:
        rows = funnel.read_scatter_csv(_read_input(args.scatter))
        r = funnel.pearson([d for _c, d, _g in rows], [g for _c, _d, g in rows])
        lines.append(f"dock-score vs dG pearson r = {r:.4f} over {len(rows)} compounds")
    if not lines:
        raise ValueError("report: provide at least one of --esmacs, --ties, --scatter")
    report_text = "\n".join(lines) + "\n"
    (outdir / "report.txt").write_text(report_text)
    print(report_text, end="")
    return 0


def _read_input(path_str: str) -> str:
    path = Path(path_str)
    if not path.exists():
        raise ConfigError(f"input file not found: {path}")
    return path.read_text()


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="screenpilot",
        description="Desk-scale hybrid screening campaign engine",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="campaign config (TOML)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="output directory")
        p.add_argument("--quiet", action="store_true", help="suppress log lines")

    p = sub.add_parser("simulate", help="emit the funnel workflow and simulate it")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("funnel", help="run the iterative screening funnel")
    common(p)
    p.set_defaults(func=cmd_funnel)

    p = sub.add_parser("esmacs-aggregate", help="ensemble free-energy estimates from sample CSV")
    common(p)
    p.add_argument("--input", required=True, help="CSV: compound_id,replica_id,frame,energy_kcal_mol")
    p.add_argument("--bootstrap-n", type=int, default=1000)
    p.add_argument("--ci-level", type=float, default=0.95)
    p.set_defaults(func=cmd_esmacs_aggregate)

    p = sub.add_parser("ties-integrate", help="thermodynamic integration from dU/dlambda CSV")
    common(p)
    p.add_argument("--input", required=True, help="CSV: transformation_id,lambda,replica_id,sample_index,dudl_kcal_mol")
    p.add_argument("--bootstrap-n", type=int, default=1000)
    p.set_defaults(func=cmd_ties_integrate)

    p = sub.add_parser("classify-transitions", help="transition matrices and divergence table")
    common(p)
    p.add_argument("--input", required=True, help="class-sequence text file")
    p.add_argument("--window", type=int, default=100)
    p.add_argument("--horizon", type=int, default=1500)
    p.set_defaults(func=cmd_classify_transitions)

    p = sub.add_parser("report", help="affinity bins, transformation summary, scatter stats")
    common(p)
    p.add_argument("--esmacs", help="estimates CSV (compound_id,dg_kcal_mol,...)")
    p.add_argument("--ties", help="transformations CSV (transformation_id,ddg_kcal_mol,sigma_kcal_mol)")
    p.add_argument("--scatter", help="scatter CSV (compound_id,dock_score,esmacs_dg)")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UnschedulableError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
