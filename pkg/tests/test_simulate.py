import math

import numpy as np
import pytest

from conftest import bench_spec

from inflbetareg.fitting import fit_model
from inflbetareg.model import ObservationSet, linear_predictors
from inflbetareg.simulate import (
    EstimatorSpec,
    ScenarioSpec,
    contaminate_continuous,
    contaminate_discrete,
    generate_clean,
    run_monte_carlo,
)


def test_scenario_spec_validation():
    with pytest.raises(ValueError):
        bench_spec(rate=0.6)
    with pytest.raises(ValueError):
        bench_spec(reps=0)
    with pytest.raises(ValueError):
        EstimatorSpec("ridge")


def test_generate_clean_reproducible(links):
    spec = bench_spec(n=50, seed=5)
    a = generate_clean(spec, links=links)
    b = generate_clean(spec, links=links)
    assert np.array_equal(a.y, b.y)
    assert np.array_equal(a.S, b.S)


def test_generate_clean_zero_fraction(links, bench_truth):
    spec = bench_spec(n=100_000, seed=8)
    obs = generate_clean(spec, links=links)
    theta, _, _ = linear_predictors(obs, links, bench_truth)
    observed = np.mean(obs.partition.y_c)
    assert observed == pytest.approx(np.mean(theta), abs=0.01)


def test_generate_clean_no_zeros_with_huge_negative_intercept(links):
    spec = ScenarioSpec(n=200, kappa=(-30.0, 0.0, 0.0), beta=(-1.8, -2.0), gamma=(4.5,),
                        seed=3, reps=1)
    obs = generate_clean(spec, links=links)
    assert obs.partition.n_dagger == 200


def test_contaminate_continuous_counts_and_mean(links, bench_truth):
    # craft a dataset with exactly 40 continuous observations
    rng = np.random.default_rng(12)
    y = np.zeros(100)
    y[:40] = rng.beta(2.0, 5.0, size=40).clip(1e-6, 1 - 1e-6)
    obs = ObservationSet(
        y=y,
        S=np.column_stack([np.ones(100), rng.standard_normal((100, 2))]),
        X=np.column_stack([np.ones(100), rng.uniform(size=100)]),
        Z=np.ones((100, 1)),
    )
    out = contaminate_continuous(obs, bench_truth, 0.05, seed=4, links=links)
    changed = np.nonzero(out.y != obs.y)[0]
    assert changed.size == 2  # ceil(0.05 * 40)
    _, mu, _ = linear_predictors(obs, links, bench_truth)
    wp = obs.partition.wp
    expected_rows = wp[np.argsort(mu[wp], kind="stable")[:2]]
    assert set(changed) == set(expected_rows)
    # untouched rows are bit-identical, designs unchanged
    keep = np.setdiff1d(np.arange(100), changed)
    assert np.array_equal(out.y[keep], obs.y[keep])
    assert out.S is obs.S


def test_contaminate_rate_zero_is_identity(links, bench_truth):
    obs = generate_clean(bench_spec(n=60), seed=2, links=links)
    assert contaminate_continuous(obs, bench_truth, 0.0) is obs
    assert contaminate_discrete(obs, bench_truth, 0.0) is obs


def test_contaminate_discrete_geometry(links, bench_truth):
    obs = generate_clean(bench_spec(n=100), seed=21, links=links)
    out = contaminate_discrete(obs, bench_truth, 0.05, seed=6, links=links)
    moved = np.nonzero(np.any(out.S != obs.S, axis=1))[0]
    assert moved.size == 5
    # all moved rows lie on the hyperplane parallel to the discriminant at
    # the implementation's offset: kappa_slope . s = ||kappa_slope|| * D
    kappa_slope = np.array([2.0, 2.0])
    distance = 3.0 * math.sqrt(3.0)
    target = np.linalg.norm(kappa_slope) * distance
    values = out.S[moved][:, 1:] @ kappa_slope
    assert np.max(np.abs(values - target)) <= 1e-10
    # the moved rows were the top true inflation probabilities
    theta, mu, phi = linear_predictors(obs, links, bench_truth)
    expected = np.argsort(-theta, kind="stable")[:5]
    assert set(moved) == set(expected)
    # their responses became continuous draws in (0, 1)
    assert np.all((out.y[moved] > 0.0) & (out.y[moved] < 1.0))
    keep = np.setdiff1d(np.arange(100), moved)
    assert np.array_equal(out.y[keep], obs.y[keep])
    assert np.array_equal(out.S[keep], obs.S[keep])


def test_contaminate_discrete_requires_slopes(links):
    spec = ScenarioSpec(n=50, kappa=(0.0,), beta=(-1.8, -2.0), gamma=(4.5,), seed=3, reps=1)
    obs = generate_clean(spec, links=links)
    from inflbetareg.model import ParamVector

    with pytest.raises(ValueError, match="slope"):
        contaminate_discrete(obs, ParamVector([0.0], [-1.8, -2.0], [4.5]), 0.05, seed=1)
    obs2 = generate_clean(bench_spec(n=50, seed=3), links=links)
    with pytest.raises(ValueError, match="zero"):
        contaminate_discrete(obs2, ParamVector([0.0, 0.0, 0.0], [-1.8, -2.0], [4.5]), 0.05, seed=1)


def test_run_monte_carlo_deterministic(links):
    spec = bench_spec(n=60, seed=77, reps=4, contaminate_continuous=True)
    a = run_monte_carlo(spec, estimators=["mle"], links=links)
    b = run_monte_carlo(spec, estimators=["mle"], links=links)
    assert np.array_equal(a.bias["mle"], b.bias["mle"])
    assert np.array_equal(a.rejection["mle"], b.rejection["mle"])
    assert a.tmse == b.tmse


def test_run_monte_carlo_zero_tuning_equivalence(links):
    spec = bench_spec(n=80, seed=55, reps=3)
    estimators = [("mle", 0.0, 0.0), ("mlse", 0.0, 0.0), ("mlme", 0.0, 0.0)]
    summary = run_monte_carlo(spec, estimators=estimators, links=links)
    for label in ("mlse", "mlme"):
        assert np.allclose(summary.bias[label], summary.bias["mle"], atol=1e-6)
        assert np.allclose(summary.rmse[label], summary.rmse["mle"], atol=1e-6)


def test_run_monte_carlo_single_rep_sd_markers(links):
    spec = bench_spec(n=60, seed=9, reps=1)
    summary = run_monte_carlo(spec, estimators=["mle"], links=links)
    assert np.all(np.isnan(summary.empirical_sd["mle"]))
    assert math.isnan(summary.alpha_disc_stats["mle"][1])


def test_fixed_designs_mode(links):
    spec = bench_spec(n=50, seed=13, reps=2, redraw_covariates=False)
    summary = run_monte_carlo(spec, estimators=["mle"], links=links)
    assert summary.n_used["mle"] == 2
