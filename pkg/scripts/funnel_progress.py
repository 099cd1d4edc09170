#!/usr/bin/env python3
"""Track how the screening funnel's promoted set improves across iterations.

Runs the iterative funnel on a synthetic 10k-compound pool for several seeds
and prints the mean hidden affinity of the promoted top set per iteration;
the surrogate feedback loop should keep it from worsening.
"""

import argparse

from screenpilot.funnel import FunnelConfig, SyntheticOracles, make_pool, run_campaign


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--pool-size", type=int, default=10_000)
    parser.add_argument("--dock-keep", type=int, default=100)
    parser.add_argument("--esmacs-keep", type=int, default=10)
    parser.add_argument("--iterations", type=int, default=3)
    parser.add_argument("--seeds", type=int, default=5)
    parser.add_argument("--dock-noise", type=float, default=0.25)
    args = parser.parse_args()

    non_worsening = 0
    for seed in range(args.seeds):
        pool = make_pool(args.pool_size, feature_dim=4, seed=seed)
        config = FunnelConfig(
            pool_size=args.pool_size,
            dock_keep=args.dock_keep,
            esmacs_keep=args.esmacs_keep,
            ties_pairs=min(5, args.esmacs_keep - 1),
            iterations=args.iterations,
            seed=seed,
        )
        oracles = SyntheticOracles(seed=seed, dock_noise_sd=args.dock_noise)
        reports = run_campaign(pool, config, oracles, bootstrap_n=200)
        means = [r.mean_true_affinity_promoted for r in reports]
        ok = all(means[i + 1] <= means[i] + 1e-9 for i in range(len(means) - 1))
        non_worsening += ok
        trend = " -> ".join(f"{m:.3f}" for m in means)
        print(f"seed {seed}: mean promoted affinity {trend}  {'ok' if ok else 'WORSENED'}")
    print(f"non-worsening in {non_worsening}/{args.seeds} seeds")


if __name__ == "__main__":
    main()
