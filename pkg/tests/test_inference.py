import math

import numpy as np
import pytest

from conftest import bench_spec, tiny_obs

from inflbetareg.inference import (
    SingularMatrixError,
    cov_discrete,
    cov_mlme,
    cov_mlse,
    full_covariance,
    wald_test,
    wald_test_value,
)
from inflbetareg.fitting import fit_model
from inflbetareg.links import LinkSpec
from inflbetareg.model import ObservationSet, ParamVector, conditional_moments, logit_beta_log_density
from inflbetareg.simulate import generate_clean
from inflbetareg.special import QuadratureSpec, digamma, integrate, trigamma


@pytest.fixture(scope="module")
def obs(links):
    return generate_clean(bench_spec(n=150), seed=31, links=links)


@pytest.fixture(scope="module")
def fitted(obs, links):
    return fit_model(obs, links, estimator="mle")


# --- discrete part ------------------------------------------------------------

def test_cov_discrete_alpha_zero_is_inverse_information(obs, links):
    kappa = np.array([0.1, 1.5, 1.2])
    theta = links.g_theta.inverse(obs.S @ kappa)
    fisher = obs.S.T @ (obs.S * (theta * (1.0 - theta))[:, None])
    expected = np.linalg.inv(fisher)
    assert np.allclose(cov_discrete(obs, links, kappa, 0.0), expected, rtol=1e-10)


def test_cov_discrete_intercept_only_hand_value(links):
    # four observations, theta = 1/2, alpha = 1: M = 1, A = B = n/4, V = 1/(n/4)
    o = tiny_obs([0.0, 0.5, 0.0, 0.5], c=0)
    V = cov_discrete(o, links, [0.0], 1.0)
    assert V.shape == (1, 1)
    assert V[0, 0] == pytest.approx(1.0, abs=1e-12)


def test_cov_discrete_singular_design_named(links):
    obs = ObservationSet(
        y=np.array([0.0, 0.2, 0.5, 0.7, 0.4]),
        S=np.column_stack([np.ones(5), np.ones(5)]),
        X=np.ones((5, 1)),
        Z=np.ones((5, 1)),
    )
    with pytest.raises(SingularMatrixError, match="collinear columns"):
        cov_discrete(obs, links, [0.0, 0.0], 0.0)


# --- continuous part: scalar oracle for the surrogate-route sandwich -----------

def _mlse_scalar_oracle(theta, mu, phi, alpha):
    """Independent single-observation implementation of the sandwich blocks.

    Plain-float transcription of the bread and meat diagonals for an
    intercept-only model with logit mean link and log precision link.
    """
    phi_w = phi / (1.0 - alpha)
    t_mu = mu * (1.0 - mu)           # 1 / g'_mu
    t_phi = phi                      # 1 / g'_phi at the link-scale precision
    aw = 1.0 - theta

    def lbeta(p, q):
        return math.lgamma(p) + math.lgamma(q) - math.lgamma(p + q)

    lb_w = lbeta(mu * phi_w, (1.0 - mu) * phi_w)
    lb_0 = lbeta(mu * phi, (1.0 - mu) * phi)
    lb_hi = lbeta(mu * phi_w * (1.0 + alpha), (1.0 - mu) * phi_w * (1.0 + alpha))
    b1 = math.exp((1.0 - alpha) * lb_w - lb_0)
    b2 = math.exp(lb_hi - 2.0 * alpha * lb_w - lb_0)

    def vcd(scale):
        pa = phi_w * scale
        pa1 = float(trigamma(mu * pa))
        pa2 = float(trigamma((1.0 - mu) * pa))
        v = pa1 + pa2
        c = phi_w * (mu * pa1 - (1.0 - mu) * pa2)
        d = mu * mu * pa1 + (1.0 - mu) ** 2 * pa2 - float(trigamma(pa))
        return v, c, d

    v1, c1, d1 = vcd(1.0)
    v2, c2, d2 = vcd(1.0 + alpha)
    bread = np.array(
        [
            [(1.0 - alpha) * aw * b1 * t_mu**2 * phi_w**2 * v1, aw * b1 * t_mu * t_phi * c1],
            [aw * b1 * t_mu * t_phi * c1, aw * b1 * t_phi**2 * d1 / (1.0 - alpha)],
        ]
    )
    meat = np.array(
        [
            [aw * b2 * t_mu**2 * phi_w**2 * v2, aw * b2 * t_mu * t_phi * c2 / (1.0 - alpha)],
            [aw * b2 * t_mu * t_phi * c2 / (1.0 - alpha), aw * b2 * t_phi**2 * d2 / (1.0 - alpha) ** 2],
        ]
    )
    inv = np.linalg.inv(bread)
    return inv @ meat @ inv


@pytest.mark.parametrize("alpha", [0.0, 0.1, 0.3])
def test_cov_mlse_single_observation_matches_scalar_oracle(links, alpha):
    theta0, mu0, phi0 = 0.35, 0.25, 8.0
    y_val = 0.3
    o = tiny_obs([y_val, y_val, y_val, y_val], c=0)
    ups = ParamVector(
        [links.g_theta.evaluate(theta0)], [links.g_mu.evaluate(mu0)], [links.g_phi.evaluate(phi0)]
    )
    V = cov_mlse(o, links, ups, alpha)
    expected = _mlse_scalar_oracle(theta0, mu0, phi0, alpha) / 4.0  # four identical rows
    assert np.allclose(V, expected, rtol=1e-10)


def test_cov_mlse_alpha_zero_collapse(obs, links, fitted):
    V0 = cov_mlse(obs, links, fitted.params, 0.0)
    # at tuning zero bread equals meat, so the sandwich equals the inverse bread
    theta, mu, phi = fitted.predictors(obs)
    aw = 1.0 - theta
    t_mu = 1.0 / links.g_mu.derivative(mu)
    t_phi = 1.0 / links.g_phi.derivative(phi)
    psi1_a = trigamma(mu * phi)
    psi1_b = trigamma((1.0 - mu) * phi)
    v = psi1_a + psi1_b
    c = phi * (mu * psi1_a - (1.0 - mu) * psi1_b)
    d = mu**2 * psi1_a + (1.0 - mu) ** 2 * psi1_b - trigamma(phi)
    X, Z = obs.X, obs.Z
    top = np.hstack([X.T @ (X * (aw * t_mu**2 * phi**2 * v)[:, None]),
                     X.T @ (Z * (aw * t_mu * t_phi * c)[:, None])])
    bottom = np.hstack([(X.T @ (Z * (aw * t_mu * t_phi * c)[:, None])).T,
                        Z.T @ (Z * (aw * t_phi**2 * d)[:, None])])
    info = np.vstack([top, bottom])
    expected = np.linalg.inv(info)
    assert np.linalg.norm(V0 - expected) / np.linalg.norm(expected) <= 1e-8


# --- continuous part: quadrature oracle for the divergence-route matrices ------

@pytest.mark.parametrize("alpha", [0.1, 0.3])
def test_cov_mlme_blocks_match_quadrature(links, alpha):
    mu0, phi0 = 0.3, 6.0
    theta0 = 0.4
    o = tiny_obs([0.3] * 4, c=0)
    ups = ParamVector(
        [links.g_theta.evaluate(theta0)], [links.g_mu.evaluate(mu0)], [links.g_phi.evaluate(phi0)]
    )
    mu_star, mu_dagger = conditional_moments(mu0, phi0)
    t_mu = mu0 * (1.0 - mu0)
    t_phi = phi0
    spec = QuadratureSpec(-np.inf, np.inf, abs_tol=1e-10, max_subdivisions=400)

    def score(t, which):
        y_dagger = -math.log1p(math.exp(t))
        if which == "mu":
            return phi0 * (t - mu_star) * t_mu
        return (mu0 * (t - mu_star) + (y_dagger - mu_dagger)) * t_phi

    def tilted(f, power):
        return integrate(
            lambda t: f(t) * math.exp(power * logit_beta_log_density(t, mu0, phi0)), spec
        )

    power = 1.0 + alpha
    l11 = tilted(lambda t: score(t, "mu") ** 2, power)
    l12 = tilted(lambda t: score(t, "mu") * score(t, "ph"), power)
    l22 = tilted(lambda t: score(t, "ph") ** 2, power)
    l1 = tilted(lambda t: score(t, "mu"), power)
    l2 = tilted(lambda t: score(t, "ph"), power)
    m11 = tilted(lambda t: score(t, "mu") ** 2, 1.0 + 2.0 * alpha)
    m12 = tilted(lambda t: score(t, "mu") * score(t, "ph"), 1.0 + 2.0 * alpha)
    m22 = tilted(lambda t: score(t, "ph") ** 2, 1.0 + 2.0 * alpha)

    aw = 1.0 - theta0
    bread = aw * np.array([[l11, l12], [l12, l22]])
    meat = aw * np.array([[m11 - l1 * l1, m12 - l1 * l2], [m12 - l1 * l2, m22 - l2 * l2]])
    inv = np.linalg.inv(bread)
    expected = (inv @ meat @ inv) / 4.0
    V = cov_mlme(o, links, ups, alpha)
    assert np.allclose(V, expected, atol=1e-6, rtol=1e-6)


def test_cov_mlme_alpha_zero_is_inverse_information(obs, links, fitted):
    V_lme = cov_mlme(obs, links, fitted.params, 0.0)
    V_lse = cov_mlse(obs, links, fitted.params, 0.0)
    assert np.allclose(V_lme, V_lse, rtol=1e-8)


# --- assembled covariance -------------------------------------------------------

def test_full_covariance_block_diagonal(obs, links, fitted):
    cov = full_covariance(obs, links, fitted.params, "mlse", 0.2, 0.1)
    p0 = 3
    assert np.all(cov.V[:p0, p0:] == 0.0)
    assert np.all(cov.V[p0:, :p0] == 0.0)
    assert np.allclose(cov.V, cov.V.T, atol=1e-10)
    eigenvalues = np.linalg.eigvalsh(cov.V)
    assert eigenvalues.min() >= -1e-10
    assert np.all(cov.se >= 0.0)


def test_covariance_scale_equivariance(links):
    spec = bench_spec(n=200)
    obs = generate_clean(spec, seed=500, links=links)
    scale = 4.0
    obs_scaled = obs.with_values(X=np.column_stack([obs.X[:, 0], obs.X[:, 1] * scale]))
    fit = fit_model(obs, links, estimator="mle")
    fit_scaled = fit_model(obs_scaled, links, estimator="mle")
    assert fit_scaled.params.beta[1] == pytest.approx(fit.params.beta[1] / scale, rel=1e-3)
    se_idx = 4  # beta slope coordinate
    assert fit_scaled.cov.se[se_idx] == pytest.approx(fit.cov.se[se_idx] / scale, rel=1e-3)


# --- Wald tests -----------------------------------------------------------------

def test_wald_basic_values():
    test0 = wald_test_value(1.3, 0.5, 1.3)
    assert test0.statistic == 0.0 and test0.p_value == 1.0
    test1 = wald_test_value(1.96, 1.0, 0.0)
    assert test1.p_value == pytest.approx(0.05, abs=1e-3)
    with pytest.raises(ValueError):
        wald_test_value(1.0, 0.0, 0.0)


def test_wald_reported_application_row():
    # published coefficient row: estimate -0.267, se 0.096 -> z -2.774, p 0.006
    test = wald_test_value(-0.267, 0.096, 0.0)
    assert test.z == pytest.approx(-2.774, abs=0.01)
    assert test.p_value == pytest.approx(0.006, abs=1e-3)


def test_wald_on_fit(obs, links, fitted):
    test = wald_test(fitted, index=1, null_value=2.0)
    manual = wald_test_value(fitted.params.full[1], fitted.cov.se[1], 2.0, 1)
    assert test.statistic == manual.statistic
    assert 0.0 <= test.p_value <= 1.0
