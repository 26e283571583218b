"""Generator and oracle tests.

The frozen constants below are hand derivations for uniform distances
and linear-decay effects.  Writing tau(d) = A * max(0, 1 - d/c) and
distances uniform on [0, b]:

  E[tau | d <= x]   = A * (1 - x / (2c))            for x <= c
  E[tau | d <= b]   = A*c / (2b)                    whole support
  E[tau | x < d <= y] integrates the same line piecewise.

Each test states the arithmetic it relies on next to the number.
"""
import dataclasses
import math

import numpy as np
import pytest

from ringdid.data_model import first_differences
from ringdid.dgp import (
    Constant,
    DgpSpec,
    Linear,
    LinearDecay,
    QuantileTable,
    TableFn,
    TargetDraw,
    Uniform,
    Zero,
    curve_estimator,
    generate,
    monte_carlo,
    oracle_bin_means,
    oracle_rc_expectation,
    oracle_ring_expectation,
    oracle_tau_bar,
    replication_seed,
    ring_estimator,
)
from ringdid.errors import EstimationError, SpecError
from ringdid.ring import RingSpec, ring_estimate_rc

BASE = DgpSpec(
    n=100,
    distance_law=Uniform(0.0, 1.5),
    tau=LinearDecay(1.0, 0.75),
    trend=Zero(),
    seed=1234,
)


def spec_with(**kw):
    return dataclasses.replace(BASE, **kw)


# ---------------------------------------------------------------------------
# distance laws and distance functions


def test_uniform_cdf_quantile_roundtrip():
    law = Uniform(0.5, 2.5)
    p = np.linspace(0.0, 1.0, 11)
    np.testing.assert_allclose(law.cdf(law.quantile(p)), p, atol=1e-15)
    assert law.cdf(0.0) == 0.0
    assert law.cdf(10.0) == 1.0
    assert law.support == (0.5, 2.5)


@pytest.mark.parametrize("a,b", [(-0.1, 1.0), (1.0, 1.0), (2.0, 1.0)])
def test_uniform_rejects_bad_bounds(a, b):
    with pytest.raises(SpecError):
        Uniform(a, b)


def test_quantile_table_interpolates():
    law = QuantileTable(ps=(0.0, 0.5, 1.0), qs=(0.0, 1.0, 3.0))
    assert law.quantile(0.5) == 1.0
    assert law.quantile(0.25) == 0.5
    assert law.quantile(0.75) == 2.0
    assert law.cdf(2.0) == 0.75
    assert law.interior_ps == (0.5,)
    rng = np.random.default_rng(3)
    draws = law.sample(rng, 500)
    assert draws.min() >= 0.0 and draws.max() <= 3.0


@pytest.mark.parametrize(
    "ps,qs",
    [
        ((0.1, 1.0), (0.0, 1.0)),
        ((0.0, 0.9), (0.0, 1.0)),
        ((0.0, 0.5, 1.0), (0.0, 1.0, 1.0)),
        ((0.0, 0.5, 0.5, 1.0), (0.0, 1.0, 2.0, 3.0)),
        ((0.0, 1.0), (-1.0, 1.0)),
    ],
)
def test_quantile_table_rejects_bad_tables(ps, qs):
    with pytest.raises(SpecError):
        QuantileTable(ps=ps, qs=qs)


def test_linear_decay_shape():
    tau = LinearDecay(2.0, 0.5)
    np.testing.assert_allclose(tau(np.array([0.0, 0.25, 0.5, 1.0])), [2.0, 1.0, 0.0, 0.0])
    assert tau.knots == (0.5,)
    with pytest.raises(SpecError):
        LinearDecay(1.0, 0.0)


def test_table_fn_fills():
    fn = TableFn(ds=(1.0, 2.0), vs=(3.0, 4.0))
    assert fn(0.5) == 3.0  # flat left of the first knot
    assert fn(1.5) == 3.5
    assert fn(2.0) == 4.0
    assert fn(2.5) == 0.0  # zero beyond the last knot
    with pytest.raises(SpecError):
        TableFn(ds=(2.0, 1.0), vs=(0.0, 0.0))


def test_constant_linear_zero():
    assert Constant(3.5)(np.array([0.0, 9.0])).tolist() == [3.5, 3.5]
    assert Linear(2.0, 1.0)(np.array([0.0, 2.0])).tolist() == [1.0, 5.0]
    assert Zero()(np.array([4.0])).tolist() == [0.0]


# ---------------------------------------------------------------------------
# ring oracle


def test_ring_oracle_matched_rings():
    # treated [0, 0.75]: E[tau] = 1 - 0.75/(2*0.75) = 0.5; control has tau = 0
    o = oracle_ring_expectation(BASE, RingSpec(0.75, 1.5))
    assert o.te_diff == pytest.approx(0.5, rel=1e-9)
    assert o.trend_diff == 0.0
    assert o.total == pytest.approx(0.5, rel=1e-9)


def test_ring_oracle_too_wide_ring_dilutes():
    # treated [0, 1]: integral of tau is 0.375, spread over length 1
    o = oracle_ring_expectation(BASE, RingSpec(1.0, 1.5))
    assert o.te_diff == pytest.approx(0.375, rel=1e-9)


def test_ring_oracle_too_narrow_ring_contaminates_control():
    # treated [0, 0.375]: E[tau] = 1 - 0.375/1.5 = 0.75
    # control (0.375, 1.5]: integral 3/32 over length 1.125 -> 1/12
    o = oracle_ring_expectation(BASE, RingSpec(0.375, 1.5))
    assert o.te_diff == pytest.approx(0.75 - 1.0 / 12.0, rel=1e-9)
    assert o.te_diff == pytest.approx(2.0 / 3.0, rel=1e-9)


def test_ring_oracle_trend_difference():
    # E[d | d <= 0.75] = 0.375, E[d | 0.75 < d <= 1.5] = 1.125
    spec = spec_with(trend=Linear(0.2))
    o = oracle_ring_expectation(spec, RingSpec(0.75, 1.5))
    assert o.trend_diff == pytest.approx(0.2 * (0.375 - 1.125), rel=1e-9)
    assert o.total == pytest.approx(0.35, rel=1e-9)
    assert o.total == o.te_diff + o.trend_diff


def test_ring_oracle_quantile_table_law():
    spec = spec_with(
        distance_law=QuantileTable(ps=(0.0, 0.5, 1.0), qs=(0.0, 1.0, 3.0)),
        tau=LinearDecay(1.0, 1.0),
        trend=Linear(1.0),
    )
    o = oracle_ring_expectation(spec, RingSpec(1.0, 3.0))
    # treated half: d uniform-in-rank from 0 to 1 -> E[tau] = 0.5, E[d] = 0.5
    # control half: d from 1 to 3 -> tau = 0, E[d] = 2
    assert o.te_diff == pytest.approx(0.5, rel=1e-9)
    assert o.trend_diff == pytest.approx(0.5 - 2.0, rel=1e-9)


def test_ring_oracle_rejects_rings_without_mass():
    with pytest.raises(SpecError, match="no probability mass"):
        oracle_ring_expectation(BASE, RingSpec(2.0, 2.5))
    narrow = spec_with(distance_law=Uniform(1.0, 2.0))
    with pytest.raises(SpecError, match="no probability mass"):
        oracle_ring_expectation(narrow, RingSpec(0.5, 0.9))


# ---------------------------------------------------------------------------
# affected-region mean


@pytest.mark.parametrize("amplitude,cutoff,b", [(1.0, 0.75, 1.5), (2.0, 0.5, 3.0), (0.7, 1.0, 1.0)])
def test_tau_bar_linear_decay_is_half_amplitude(amplitude, cutoff, b):
    spec = spec_with(distance_law=Uniform(0.0, b), tau=LinearDecay(amplitude, cutoff))
    assert oracle_tau_bar(spec) == pytest.approx(amplitude / 2.0, rel=1e-12)


def test_tau_bar_with_cutoff():
    # over [0, 0.75] the full decay averages 0.5
    assert oracle_tau_bar(BASE, cutoff=0.75) == pytest.approx(0.5, rel=1e-12)
    # over [0, 0.375]: E[tau] = 1 - 0.375/1.5 = 0.75
    assert oracle_tau_bar(BASE, cutoff=0.375) == pytest.approx(0.75, rel=1e-12)
    # past the support: mean over everything = 0.375/1.5
    assert oracle_tau_bar(BASE, cutoff=10.0) == pytest.approx(0.25, rel=1e-12)


def test_tau_bar_sign_crossing_table():
    spec = spec_with(
        distance_law=Uniform(0.0, 1.0),
        tau=TableFn(ds=(0.0, 1.0), vs=(1.0, -1.0)),
    )
    # tau = 1 - 2d crosses zero at d = 0.5; mean over [0, 0.5) is 0.5
    assert oracle_tau_bar(spec) == pytest.approx(0.5, rel=1e-12)


def test_tau_bar_zero_effect_is_undefined():
    with pytest.raises(EstimationError, match="undefined estimand"):
        oracle_tau_bar(spec_with(tau=Zero()))


def test_tau_bar_cutoff_below_support():
    spec = spec_with(distance_law=Uniform(1.0, 2.0), tau=LinearDecay(1.0, 1.5))
    with pytest.raises(EstimationError, match="undefined estimand"):
        oracle_tau_bar(spec, cutoff=0.5)


# ---------------------------------------------------------------------------
# bin means


def test_bin_means_frozen_values():
    spec = spec_with(trend=Linear(0.2))
    bm = oracle_bin_means(spec, [0.0, 0.15, 0.5, 1.0, 1.5])
    # [0, 0.15]: E[tau] = 1 - 0.15/1.5 = 0.9
    assert bm.tau[0] == pytest.approx(0.9, rel=1e-9)
    # (0.15, 0.5]: E[tau] = 1 - 0.325/0.75 = 17/30
    assert bm.tau[1] == pytest.approx(17.0 / 30.0, rel=1e-9)
    # (0.5, 1.0]: integral of the decay over (0.5, 0.75] is 1/24, interval length 0.5
    assert bm.tau[2] == pytest.approx(1.0 / 12.0, rel=1e-9)
    assert bm.tau[3] == pytest.approx(0.0, abs=1e-12)
    # trend is 0.2 * E[d | bin]
    assert bm.trend[0] == pytest.approx(0.2 * 0.075, rel=1e-9)
    assert bm.trend[3] == pytest.approx(0.2 * 1.25, rel=1e-9)
    assert bm.composition.tolist() == [0.0, 0.0, 0.0, 0.0]


def test_bin_means_first_bin_reaches_support_minimum():
    bm = oracle_bin_means(BASE, [0.7, 0.75, 1.5])
    # the first bin is read as [0, 0.75] regardless of its nominal lower edge
    assert bm.tau[0] == pytest.approx(0.5, rel=1e-9)
    assert bm.tau[1] == pytest.approx(0.0, abs=1e-12)


def test_bin_means_empty_bin_raises():
    with pytest.raises(EstimationError, match="no probability mass"):
        oracle_bin_means(BASE, [0.0, 1.5, 2.0])


def test_bin_means_rejects_disordered_edges():
    with pytest.raises(SpecError):
        oracle_bin_means(BASE, [0.0, 1.0, 0.5])


# ---------------------------------------------------------------------------
# composition drift


def rc_spec(**kw):
    defaults = dict(design="rc", mu_sd=1.0, seed=77)
    defaults.update(kw)
    return spec_with(**defaults)


def test_rc_oracle_without_drift_matches_panel_oracle():
    spec = rc_spec(trend=Linear(0.2))
    rc = oracle_rc_expectation(spec, RingSpec(0.75, 1.5))
    panel = oracle_ring_expectation(spec, RingSpec(0.75, 1.5))
    assert rc.composition_diff == 0.0
    assert rc.te_diff == panel.te_diff
    assert rc.trend_diff == panel.trend_diff
    assert rc.total == panel.total


def test_rc_oracle_drift_sign_and_symmetry():
    up = oracle_rc_expectation(rc_spec(rc_composition_drift=1.0), RingSpec(0.375, 1.5))
    down = oracle_rc_expectation(rc_spec(rc_composition_drift=-1.0), RingSpec(0.375, 1.5))
    assert up.composition_diff > 0.1
    assert down.composition_diff == pytest.approx(-up.composition_diff, rel=1e-9)
    assert up.total == up.te_diff + up.trend_diff + up.composition_diff


def test_rc_oracle_composition_scales_with_mu_sd():
    one = oracle_rc_expectation(rc_spec(rc_composition_drift=1.0), RingSpec(0.375, 1.5))
    two = oracle_rc_expectation(
        rc_spec(rc_composition_drift=1.0, mu_sd=2.0), RingSpec(0.375, 1.5)
    )
    assert two.composition_diff == pytest.approx(2.0 * one.composition_diff, rel=1e-9)


def test_rc_oracle_composition_matches_simulation():
    # pure composition effect: no treatment effect, no trend, no noise
    spec = rc_spec(
        n=200_000,
        tau=Zero(),
        trend=Zero(),
        noise_sd=0.0,
        rc_composition_drift=1.0,
        seed=99,
    )
    rings = RingSpec(0.375, 1.5)
    est = ring_estimate_rc(generate(spec), rings)
    oracle = oracle_rc_expectation(spec, rings)
    assert abs(est.beta1 - oracle.total) <= 4.0 * est.se
    assert oracle.total == oracle.composition_diff


# ---------------------------------------------------------------------------
# spec validation


@pytest.mark.parametrize(
    "kw",
    [
        dict(n=0),
        dict(n=10.5),
        dict(design="both"),
        dict(noise_sd=-1.0),
        dict(mu_sd=float("inf")),
        dict(seed=-1),
        dict(rc_composition_drift=1.0),  # panel design
        dict(design="rc", mu_sd=0.0, rc_composition_drift=1.0),
    ],
)
def test_spec_validation(kw):
    with pytest.raises(SpecError):
        spec_with(**kw)


# ---------------------------------------------------------------------------
# generation


def test_generate_panel_layout():
    data = generate(spec_with(n=5))
    assert data.n_rows == 10
    assert data.unit_ids.tolist() == [0, 0, 1, 1, 2, 2, 3, 3, 4, 4]
    assert data.periods.tolist() == [0, 1] * 5
    np.testing.assert_array_equal(data.distances[0::2], data.distances[1::2])


def test_generate_is_deterministic_in_seed():
    a = generate(BASE)
    b = generate(BASE)
    np.testing.assert_array_equal(a.outcomes, b.outcomes)
    np.testing.assert_array_equal(a.distances, b.distances)
    c = generate(spec_with(seed=1235))
    assert not np.array_equal(a.outcomes, c.outcomes)


def test_generate_panel_noiseless_changes_are_exact():
    spec = spec_with(
        n=300,
        mu_mean=0.0,
        mu_sd=0.0,
        noise_sd=0.0,
        trend=Linear(0.3, 0.1),
        seed=5,
    )
    diffs = first_differences(generate(spec))
    expect = spec.tau(diffs.distances) + spec.trend(diffs.distances)
    np.testing.assert_array_equal(diffs.delta_y, expect)


def test_generate_panel_changes_uncorrelated_with_distance():
    spec = spec_with(n=100_000, tau=Zero(), trend=Zero(), seed=2718)
    diffs = first_differences(generate(spec))
    corr = np.corrcoef(diffs.delta_y, diffs.distances)[0, 1]
    assert abs(corr) < 0.01


def test_generate_rc_layout_and_balance():
    data = generate(rc_spec(n=4000, seed=7))
    assert data.n_rows == 4000
    assert set(np.unique(data.periods)) == {0, 1}
    assert 0.45 < data.periods.mean() < 0.55


def test_generate_rc_noiseless_outcomes_are_exact():
    spec = rc_spec(n=500, mu_mean=0.0, mu_sd=0.0, noise_sd=0.0, trend=Linear(0.3, 0.1))
    data = generate(spec)
    expect = (spec.tau(data.distances) + spec.trend(data.distances)) * data.periods
    np.testing.assert_array_equal(data.outcomes, expect)


def test_generate_rc_drift_keeps_period_split_balanced():
    spec = rc_spec(n=200_000, rc_composition_drift=1.5, seed=11)
    data = generate(spec)
    assert abs(data.periods.mean() - 0.5) < 0.005
    corr = np.corrcoef(data.periods, data.distances)[0, 1]
    assert abs(corr) < 0.01


def test_panel_and_rc_share_distance_draws():
    panel = generate(spec_with(n=1000, seed=42))
    rc = generate(spec_with(n=1000, seed=42, design="rc"))
    np.testing.assert_array_equal(panel.distances[0::2], rc.distances)


def test_drift_only_reshuffles_periods():
    base = generate(rc_spec(n=2000, seed=13))
    tilted = generate(rc_spec(n=2000, seed=13, rc_composition_drift=2.0))
    np.testing.assert_array_equal(base.distances, tilted.distances)
    same = base.periods == tilted.periods
    assert same.any() and not same.all()
    np.testing.assert_array_equal(base.outcomes[same], tilted.outcomes[same])


# ---------------------------------------------------------------------------
# monte carlo


def test_replication_seeds_are_stable_and_distinct():
    seeds = [replication_seed(123, i) for i in range(100)]
    assert seeds == [replication_seed(123, i) for i in range(100)]
    assert len(set(seeds)) == 100
    assert replication_seed(123, 0) != replication_seed(124, 0)


def test_monte_carlo_ring_panel():
    spec = spec_with(n=400, noise_sd=0.2, seed=31)
    rings = RingSpec(0.75, 1.5)
    report = monte_carlo(spec, ring_estimator(spec, rings), reps=30)
    assert report.requested == report.completed == 30
    assert report.failures == 0
    t = report.targets["beta1"]
    assert t.n == 30
    assert t.mean_truth == pytest.approx(oracle_ring_expectation(spec, rings).total)
    assert t.bias == pytest.approx(t.mean_estimate - t.mean_truth, rel=1e-12)
    assert 0.8 <= t.ci_coverage <= 1.0
    again = monte_carlo(spec, ring_estimator(spec, rings), reps=30)
    assert again.targets["beta1"].mean_estimate == t.mean_estimate
    assert again.targets["beta1"].rmse == t.rmse


def test_monte_carlo_counts_failures():
    spec = spec_with(n=50, seed=8)
    rings = RingSpec(0.75, 1.5)
    base = ring_estimator(spec, rings)

    def flaky(data):
        if data.outcomes[0] > 0:
            raise EstimationError("synthetic failure")
        return base(data)

    report = monte_carlo(spec, flaky, reps=40)
    assert report.completed + report.failures == 40
    assert 0 < report.failures < 40
    assert report.targets["beta1"].n == report.completed


def test_monte_carlo_all_failures_raise():
    def always_fail(data):
        raise EstimationError("nope")

    with pytest.raises(EstimationError, match="all 5 replications failed"):
        monte_carlo(spec_with(n=30), always_fail, reps=5)


@pytest.mark.parametrize("reps", [0, 1, -3])
def test_monte_carlo_rejects_bad_reps(reps):
    with pytest.raises(SpecError):
        monte_carlo(BASE, lambda data: {}, reps=reps)


def test_monte_carlo_master_seed_overrides_spec_seed():
    spec = spec_with(n=200, noise_sd=0.4, seed=1)
    rings = RingSpec(0.75, 1.5)
    est = ring_estimator(spec, rings)
    overridden = monte_carlo(spec, est, reps=5, master_seed=9)
    native = monte_carlo(spec_with(n=200, noise_sd=0.4, seed=9), est, reps=5)
    assert overridden.master_seed == 9
    assert overridden.targets["beta1"].mean_estimate == native.targets["beta1"].mean_estimate
    assert overridden.completed_reps == (0, 1, 2, 3, 4)


def test_curve_estimator_targets():
    spec = spec_with(n=2000, noise_sd=0.3, seed=21)
    runner = curve_estimator(spec, d_c=1.5, L=5, affected_cutoff=0.75, per_bin=True)
    report = monte_carlo(spec, runner, reps=10)
    keys = set(report.targets)
    assert keys == {"tau_bar", "tau_bin_01", "tau_bin_02", "tau_bin_03", "tau_bin_04", "lambda_hat"}
    t = report.targets["tau_bar"]
    assert abs(t.bias) < 0.1
    assert report.targets["lambda_hat"].mean_truth == pytest.approx(0.0, abs=1e-9)
    for target in report.targets.values():
        assert 0.0 <= target.ci_coverage <= 1.0
        assert math.isfinite(target.rmse)


def test_curve_estimator_rc_design():
    spec = rc_spec(n=3000, noise_sd=0.3, seed=23)
    runner = curve_estimator(spec, d_c=1.5, L=4, affected_cutoff="auto")
    report = monte_carlo(spec, runner, reps=5)
    assert report.completed == 5
    assert "tau_bar" in report.targets
