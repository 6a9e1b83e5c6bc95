import numpy as np
import pytest

from conftest import bench_spec

from inflbetareg.fitting import FitResult, fit_discrete_part, fit_model
from inflbetareg.model import ObservationSet
from inflbetareg.simulate import contaminate_continuous, generate_clean
from inflbetareg.tuning import NonConvergenceError


@pytest.fixture(scope="module")
def obs(links):
    return generate_clean(bench_spec(n=120), seed=404, links=links)


def test_fit_model_basics(obs, links):
    fit = fit_model(obs, links, estimator="mle")
    assert fit.converged
    assert fit.estimator == "mle"
    assert fit.tuning.alpha_disc == 0.0 and fit.tuning.alpha_cont == 0.0
    assert fit.params.full.shape == (6,)
    assert fit.cov.V.shape == (6, 6)
    assert len(fit.labels) == 6
    assert fit.weights is not None and fit.weights.size == obs.partition.n_dagger
    assert fit.weights.max() == pytest.approx(1.0)
    # parameter recovery within 3 standard errors on clean data
    truth = np.array([0.0, 2.0, 2.0, -1.8, -2.0, 4.5])
    assert np.all(np.abs(fit.params.full - truth) <= 3.5 * fit.cov.se + 0.3)


def test_zero_tuning_reduces_to_mle(obs, links):
    mle = fit_model(obs, links, estimator="mle")
    for estimator in ("mlse", "mlme"):
        robust = fit_model(obs, links, estimator=estimator, alpha_disc=0.0, alpha_cont=0.0)
        assert np.array_equal(robust.params.full, mle.params.full)


def test_auto_on_clean_selects_zero_and_matches_mle(obs, links):
    mle = fit_model(obs, links, estimator="mle")
    robust = fit_model(obs, links, estimator="mlse", alpha_disc="auto", alpha_cont="auto")
    assert robust.tuning.alpha_disc == 0.0
    assert robust.tuning.alpha_cont == 0.0
    assert np.array_equal(robust.params.full, mle.params.full)
    assert np.allclose(robust.cov.V, mle.cov.V)
    assert robust.disc_trace is not None and robust.cont_trace is not None


def test_shared_discrete_part(obs, links):
    disc = fit_discrete_part(obs, links, alpha="auto")
    fit_a = fit_model(obs, links, estimator="mlse", alpha_cont=0.05, disc_part=disc)
    fit_b = fit_model(obs, links, estimator="mlme", alpha_cont=0.05, disc_part=disc)
    assert np.array_equal(fit_a.params.kappa, fit_b.params.kappa)
    assert fit_a.tuning.alpha_disc == disc.alpha


def test_downweighting_on_contaminated_data(obs, links, bench_truth):
    bad = contaminate_continuous(obs, bench_truth, 0.05, seed=9)
    fit = fit_model(bad, links, estimator="mlse", alpha_disc=0.0, alpha_cont=0.12)
    # contaminated rows are the smallest weights
    changed = np.nonzero(bad.y != obs.y)[0]
    wp = bad.partition.wp
    weight_by_row = dict(zip(wp.tolist(), fit.weights))
    bad_weights = [weight_by_row[i] for i in changed]
    assert max(bad_weights) < np.median(fit.weights)


def test_artifact_round_trip(obs, links):
    fit = fit_model(obs, links, estimator="mlse", alpha_disc=0.1, alpha_cont=0.1)
    payload = fit.to_dict()
    restored = FitResult.from_dict(payload)
    assert np.allclose(restored.params.full, fit.params.full)
    assert np.allclose(restored.cov.V, fit.cov.V)
    assert restored.tuning == fit.tuning
    assert restored.links.names() == fit.links.names()
    assert restored.estimator == fit.estimator
    assert np.allclose(restored.weights, fit.weights)


def test_unknown_estimator_raises(obs, links):
    with pytest.raises(ValueError, match="unknown estimator"):
        fit_model(obs, links, estimator="huber")


def test_nonconvergence_is_reported(links):
    # a continuous part with (almost) no dispersion sends phi to infinity
    rng = np.random.default_rng(1)
    n = 40
    y = np.where(rng.uniform(size=n) < 0.4, 0.0, 0.5)
    y[y == 0.5] += rng.normal(scale=1e-9, size=(y == 0.5).sum())
    obs_bad = ObservationSet(y=y, S=np.ones((n, 1)), X=np.ones((n, 1)), Z=np.ones((n, 1)))
    with pytest.raises(NonConvergenceError):
        fit_model(obs_bad, links, estimator="mle")


def test_one_inflated_fit(links, bench_truth):
    # mirror a zero-inflated sample into a one-inflated one: y -> 1 - y flips
    # the inflation point and the sign of the mean-submodel coefficients
    obs0 = generate_clean(bench_spec(n=150), seed=808, links=links)
    y1 = np.where(obs0.y == 0.0, 1.0, 1.0 - obs0.y)
    obs1 = ObservationSet(y=y1, S=obs0.S, X=obs0.X, Z=obs0.Z, c=1)
    fit0 = fit_model(obs0, links, estimator="mle")
    fit1 = fit_model(obs1, links, estimator="mle")
    assert fit1.converged
    assert np.allclose(fit1.params.kappa, fit0.params.kappa, atol=1e-4)
    assert np.allclose(fit1.params.beta, -fit0.params.beta, atol=1e-4)
    assert np.allclose(fit1.params.gamma, fit0.params.gamma, atol=1e-4)
    robust = fit_model(obs1, links, estimator="mlse", alpha_disc=0.1, alpha_cont=0.1)
    assert robust.converged
