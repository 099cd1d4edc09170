import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from screenpilot.energetics import (
    DistributionSpec,
    EnsembleRequiredError,
    LambdaWindow,
    ReplicaSeries,
    bin_affinities,
    default_lambda_grid,
    dg_to_kd,
    esmacs_aggregate,
    esmacs_estimates_to_csv,
    kd_to_dg,
    load_reference_transformations,
    read_esmacs_csv,
    read_estimates_csv,
    read_ties_csv,
    read_transformations_csv,
    sample_distribution,
    summarize_transformations,
    synth_lambda_windows,
    synth_replica_series,
    ties_estimates_to_csv,
    ties_integrate,
    write_esmacs_csv,
    write_ties_csv,
)
from screenpilot.seeding import tagged_rng


def constant_replicas(values, frames=4):
    return [ReplicaSeries(f"r{i}", [v] * frames) for i, v in enumerate(values)]


# ---------------------------------------------------------------------------
# ESMACS aggregation

def test_esmacs_mean_of_replica_means():
    est = esmacs_aggregate(constant_replicas([-10.0, -12.0, -14.0]), bootstrap_n=200)
    assert est.dg == -12.0


def test_esmacs_degenerate_bootstrap_zero_width():
    est = esmacs_aggregate(constant_replicas([-7.5] * 5), bootstrap_n=200)
    assert est.dg == -7.5
    assert est.ci_high - est.ci_low == 0.0


def test_esmacs_sampling_distribution_bound():
    # Replica means ~ normal(-9.0, 1.5): the ensemble mean of 25 replicas
    # stays within 3 * 1.5 / sqrt(25) of the true mean.
    replicas = synth_replica_series(
        DistributionSpec("normal", mu=-9.0, sd=1.5), n_replicas=25, n_frames=10, seed=11
    )
    est = esmacs_aggregate(replicas, bootstrap_n=500)
    assert abs(est.dg - (-9.0)) <= 3 * 1.5 / math.sqrt(25)
    assert est.ci_low <= est.dg <= est.ci_high


def test_esmacs_single_replica_rejected():
    with pytest.raises(EnsembleRequiredError, match="ensemble required"):
        esmacs_aggregate(constant_replicas([-10.0]))


def test_esmacs_replica_order_invariant():
    replicas = synth_replica_series(
        DistributionSpec("normal", mu=-8.0, sd=1.0), n_replicas=10, n_frames=5, seed=3
    )
    a = esmacs_aggregate(replicas, bootstrap_n=300, seed=5)
    b = esmacs_aggregate(list(reversed(replicas)), bootstrap_n=300, seed=5)
    assert a.dg == pytest.approx(b.dg, abs=1e-12)


def test_esmacs_linearity_under_constant_shift():
    replicas = synth_replica_series(
        DistributionSpec("normal", mu=-8.0, sd=1.0), n_replicas=8, n_frames=6, seed=9
    )
    shifted = [ReplicaSeries(r.replica_id, r.samples + 2.5) for r in replicas]
    base = esmacs_aggregate(replicas, bootstrap_n=200, seed=1)
    moved = esmacs_aggregate(shifted, bootstrap_n=200, seed=1)
    assert moved.dg == pytest.approx(base.dg + 2.5, abs=1e-12)


def test_esmacs_ci_width_scales_with_replica_count():
    # Percentile-CI width shrinks ~ 1/sqrt(n): 25 vs 100 replicas gives ~2x.
    ratios = []
    for seed in range(50):
        spec = DistributionSpec("normal", mu=-9.0, sd=1.0)
        small = synth_replica_series(spec, 25, 5, seed=seed)
        large = synth_replica_series(spec, 100, 5, seed=seed + 1000)
        w_small = (lambda e: e.ci_high - e.ci_low)(esmacs_aggregate(small, 400, seed=seed))
        w_large = (lambda e: e.ci_high - e.ci_low)(esmacs_aggregate(large, 400, seed=seed))
        ratios.append(w_small / w_large)
    assert 1.5 <= np.mean(ratios) <= 2.5


# ---------------------------------------------------------------------------
# TIES integration

def window_with_means(lam, means, samples=3):
    return LambdaWindow(lam, [[m] * samples for m in means])


def test_ties_constant_integrand():
    windows = [window_with_means(l, [3.0, 3.0]) for l in (0.0, 0.5, 1.0)]
    est = ties_integrate(windows, bootstrap_n=200)
    assert est.ddg == pytest.approx(3.0, abs=1e-12)
    assert est.n_windows == 3


def test_ties_linear_integrand_exact():
    # Integrand 2*lambda sampled at {0, 0.5, 1}: trapezoid gives
    # 0.5*(0+1)/2 + 0.5*(1+2)/2 = 0.25 + 0.75 = 1.0, exact for linear.
    windows = [window_with_means(l, [2 * l, 2 * l]) for l in (0.0, 0.5, 1.0)]
    est = ties_integrate(windows, bootstrap_n=200)
    assert est.ddg == pytest.approx(1.0, abs=1e-12)


def test_ties_identical_replicas_zero_sigma():
    windows = [window_with_means(l, [1.5, 1.5, 1.5]) for l in (0.0, 0.25, 0.5, 1.0)]
    est = ties_integrate(windows, bootstrap_n=200)
    assert est.sigma == 0.0


def test_ties_missing_endpoint_rejected():
    windows = [window_with_means(l, [1.0, 1.0]) for l in (0.0, 0.5)]
    with pytest.raises(ValueError, match="incomplete alchemical path"):
        ties_integrate(windows)


def test_ties_duplicate_lambda_rejected():
    windows = [window_with_means(l, [1.0, 1.0]) for l in (0.0, 0.5, 0.5, 1.0)]
    with pytest.raises(ValueError, match="duplicate"):
        ties_integrate(windows)


def test_ties_single_replica_window_rejected():
    windows = [
        LambdaWindow(0.0, [[1.0, 1.0]]),
        window_with_means(1.0, [1.0, 1.0]),
    ]
    with pytest.raises(ValueError, match="2 replicas"):
        ties_integrate(windows)


def test_ties_window_order_invariant():
    windows = [window_with_means(l, [l**2, l**2]) for l in (0.0, 0.25, 0.5, 0.75, 1.0)]
    a = ties_integrate(windows, bootstrap_n=200, seed=4)
    b = ties_integrate(list(reversed(windows)), bootstrap_n=200, seed=4)
    assert a.ddg == pytest.approx(b.ddg, abs=1e-12)


def trapezoid_error(n_windows):
    grid = default_lambda_grid(n_windows)
    windows = [window_with_means(float(l), [float(l) ** 2] * 2) for l in grid]
    est = ties_integrate(windows, bootstrap_n=200)
    return abs(est.ddg - 1.0 / 3.0)


def test_ties_quadratic_convergence_order():
    # lambda^2 integrand: composite-trapezoid error is h^2/6 exactly, so
    # halving h divides the error by 4.
    err_h = trapezoid_error(5)     # h = 0.25
    err_h2 = trapezoid_error(9)    # h = 0.125
    ratio = err_h / err_h2
    assert abs(ratio - 4.0) <= 0.8


# ---------------------------------------------------------------------------
# dG <-> K_D and binning

def test_kd_to_dg_reference_thresholds():
    assert kd_to_dg(1e-8) == pytest.approx(-10.98, abs=0.005)
    assert kd_to_dg(1e-7) == pytest.approx(-9.61, abs=0.005)
    assert kd_to_dg(1e-6) == pytest.approx(-8.24, abs=0.005)


def test_kd_unity_gives_zero():
    assert kd_to_dg(1.0) == 0.0


def test_kd_nonpositive_rejected():
    with pytest.raises(ValueError):
        kd_to_dg(0.0)
    with pytest.raises(ValueError):
        kd_to_dg(-1e-9)
    with pytest.raises(ValueError):
        dg_to_kd(-10.0, rt=0.0)


def test_round_trip_identity_across_kd_range():
    for kd in np.logspace(-12, 0, 40):
        back = dg_to_kd(kd_to_dg(float(kd)))
        assert abs(back - kd) / kd <= 1e-12


@given(st.floats(min_value=-20.0, max_value=0.0))
def test_round_trip_identity_from_dg(dg):
    assert kd_to_dg(dg_to_kd(dg)) == pytest.approx(dg, abs=1e-10)


def test_bin_strongest():
    counts = bin_affinities([("a", -11.5)])
    assert counts.counts == [1, 0, 0, 0]


def test_bin_boundary_is_lower_closed():
    counts = bin_affinities([("a", -10.98)])
    assert counts.counts == [0, 1, 0, 0]
    assert counts.labels[1] == "[-10.98, -9.61)"


def test_bin_hand_counts():
    counts = bin_affinities([("a", -11.5), ("b", -10.0), ("c", -9.0), ("d", -5.0)])
    assert counts.counts == [1, 1, 1, 1]
    assert counts.promising_total == 3


# ---------------------------------------------------------------------------
# Transformation summaries (bundled reference table)

def test_reference_table_headline_numbers():
    table = load_reference_transformations()
    summary = summarize_transformations(table)
    assert summary.n_rows == 19
    assert summary.n_above_one == 12
    assert summary.max_sigma == 1.03
    assert summary.max_sigma_label == "a1-a43"
    others = [s for label, _d, s in table if label != "a1-a43"]
    assert all(s <= 0.82 for s in others)
    assert summary.n_sigma_within == 18


def test_reference_table_statistically_zero_recount():
    # Hand recount of |ddG| <= 2 sigma rows: a0-a5 (1.14 vs 1.20), a0-a9,
    # a0-a45, a0-a47, a0-a48, a0-a50, a1-a42, a1-a43 (2.05 vs 2.06), a3-a42.
    summary = summarize_transformations(load_reference_transformations())
    assert summary.n_statistically_zero == 9


def test_statistically_zero_single_row():
    summary = summarize_transformations([("x", 0.0, 0.5)])
    assert summary.n_statistically_zero == 1


def test_negative_sigma_rejected():
    with pytest.raises(ValueError):
        summarize_transformations([("x", 1.0, -0.1)])


# ---------------------------------------------------------------------------
# Synthetic generators

def test_synth_series_reproducible():
    spec = DistributionSpec("normal", mu=0.0, sd=1.0)
    a = synth_replica_series(spec, 4, 25, seed=7)
    b = synth_replica_series(spec, 4, 25, seed=7)
    for ra, rb in zip(a, b):
        np.testing.assert_array_equal(ra.samples, rb.samples)


def test_mixture_sample_is_skewed():
    spec = DistributionSpec(
        "mixture", components=((0.8, 0.0, 1.0), (0.2, 4.0, 1.0))
    )
    sample = sample_distribution(spec, 20000, tagged_rng(5, "skew"))
    centered = sample - sample.mean()
    skew = np.mean(centered**3) / np.mean(centered**2) ** 1.5
    assert abs(skew) > 0.2


def test_heavy_tailed_kind_supported():
    sample = sample_distribution(DistributionSpec("student_t", mu=1.0, sd=2.0, dof=3), 500, tagged_rng(1))
    assert sample.shape == (500,)


def test_zero_samples_rejected():
    with pytest.raises(ValueError):
        sample_distribution(DistributionSpec("normal"), 0, tagged_rng(1))


def test_unknown_distribution_rejected():
    with pytest.raises(ValueError, match="unknown distribution"):
        sample_distribution(DistributionSpec("cauchyish"), 10, tagged_rng(1))


def test_empty_replica_series_rejected():
    with pytest.raises(ValueError):
        ReplicaSeries("r", [])


# ---------------------------------------------------------------------------
# CSV round trips

def test_esmacs_csv_round_trip():
    ensembles = {
        "c1": synth_replica_series(DistributionSpec("normal", mu=-9, sd=1), 3, 4, seed=1),
        "c2": synth_replica_series(DistributionSpec("normal", mu=-7, sd=1), 2, 4, seed=2),
    }
    text = write_esmacs_csv(ensembles)
    back = read_esmacs_csv(text)
    assert set(back) == {"c1", "c2"}
    for cid in ensembles:
        for orig, loaded in zip(ensembles[cid], back[cid]):
            np.testing.assert_array_equal(orig.samples, loaded.samples)
    assert write_esmacs_csv(back) == text


def test_ties_csv_round_trip():
    grid = default_lambda_grid(5)
    transformations = {
        "t1": synth_lambda_windows(lambda l: 2 * l, grid, 3, 4, seed=3, noise_sd=0.1)
    }
    text = write_ties_csv(transformations)
    back = read_ties_csv(text)
    assert [w.lam for w in back["t1"]] == [w.lam for w in transformations["t1"]]
    assert write_ties_csv(back) == text


def test_estimates_csv_parsers():
    est = esmacs_aggregate(constant_replicas([-10.0, -12.0]), bootstrap_n=200)
    text = esmacs_estimates_to_csv([("c1", est)])
    assert read_estimates_csv(text) == [("c1", -11.0)]

    windows = [window_with_means(l, [1.0, 1.0]) for l in (0.0, 1.0)]
    ties_est = ties_integrate(windows, bootstrap_n=200)
    ties_text = ties_estimates_to_csv([("t1", ties_est)])
    rows = read_transformations_csv(ties_text)
    assert rows == [("t1", 1.0, 0.0)]


def test_bad_headers_rejected():
    with pytest.raises(ValueError, match="header"):
        read_esmacs_csv("nope\n1,2,3,4\n")
    with pytest.raises(ValueError, match="header"):
        read_ties_csv("nope\n")
    with pytest.raises(ValueError, match="header"):
        read_estimates_csv("id,dg\n")


def test_malformed_row_reports_line_number():
    text = "compound_id,replica_id,frame,energy_kcal_mol\nc1,r1,0,-9.0\nc1,r1,notanint,-9.1\n"
    with pytest.raises(ValueError, match="row 3"):
        read_esmacs_csv(text)
