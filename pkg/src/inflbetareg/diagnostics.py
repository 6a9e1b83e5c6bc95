"""Residuals, robustness weights, and simulated envelopes for fitted models."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import special as _special
from scipy import stats

from .links import LinkSpec
from .model import ObservationSet, ParamVector
from .objectives import _ContQuantities
from .special import trigamma

__all__ = [
    "ResidualSet",
    "EnvelopeTable",
    "quantile_residuals",
    "by_part_residuals",
    "robust_weights",
    "envelope",
    "simulate_from_fit",
]

_TINY = 1e-14


@dataclass
class ResidualSet:
    """Residual vectors plus the seed that produced any randomization.

    ``values`` holds the randomized quantile residuals (length n); the
    by-part variant instead fills ``discrete`` (length n, signed deviance)
    and ``continuous`` (length n-dagger, standardized weighted residuals).
    """

    kind: str
    rng_seed: Optional[int] = None
    values: Optional[np.ndarray] = None
    discrete: Optional[np.ndarray] = None
    continuous: Optional[np.ndarray] = None


@dataclass
class EnvelopeTable:
    """Per-order-statistic simulation bands for a QQ plot of residuals."""

    theoretical: np.ndarray
    observed: np.ndarray
    lower: np.ndarray
    median: np.ndarray
    upper: np.ndarray
    band: float
    n_sim: int
    rng_seed: Optional[int]


def _params_of(fit) -> ParamVector:
    return fit.params if hasattr(fit, "params") else fit


def _beta_cdf(y, mu, phi):
    return _special.betainc(mu * phi, (1.0 - mu) * phi, y)


def _quantile_residual_values(obs: ObservationSet, links: LinkSpec, params: ParamVector,
                              rng: np.random.Generator) -> np.ndarray:
    from .model import linear_predictors

    theta, mu, phi = linear_predictors(obs, links, params)
    y = obs.y
    at_c = obs.partition.y_c == 1.0
    u = np.empty(obs.n_obs)
    if obs.c == 0:
        # the mixture cdf jumps from 0 to theta at zero
        u[at_c] = rng.uniform(0.0, theta[at_c])
        cont = ~at_c
        u[cont] = theta[cont] + (1.0 - theta[cont]) * _beta_cdf(y[cont], mu[cont], phi[cont])
    else:
        # continuous mass fills (0, 1-theta); the jump to 1 happens at one
        u[at_c] = rng.uniform(1.0 - theta[at_c], 1.0)
        cont = ~at_c
        u[cont] = (1.0 - theta[cont]) * _beta_cdf(y[cont], mu[cont], phi[cont])
    u = np.clip(u, _TINY, 1.0 - _TINY)
    if np.any(u <= 0.0) or np.any(u >= 1.0) or not np.all(np.isfinite(u)):
        raise ValueError("mixture cdf left (0, 1) even after clamping")
    return stats.norm.ppf(u)


def quantile_residuals(obs: ObservationSet, links: LinkSpec, fit, seed: int = 0) -> ResidualSet:
    """Randomized quantile residuals of the inflated model.

    Point-mass observations draw a uniform over the cdf jump they sit on;
    continuous observations map through the mixture cdf.  Under a correct
    model the residuals are approximately standard normal.
    """
    rng = np.random.default_rng(seed)
    values = _quantile_residual_values(obs, links, _params_of(fit), rng)
    return ResidualSet(kind="randomized_quantile", rng_seed=seed, values=values)


def by_part_residuals(obs: ObservationSet, links: LinkSpec, fit) -> ResidualSet:
    """Signed deviance residuals (discrete part) and SWR2 (continuous part).

    The continuous-part leverage always uses the plain beta-regression hat
    matrix of the mean submodel, whatever estimator produced the fit.
    """
    from .model import linear_predictors

    params = _params_of(fit)
    theta, mu, phi = linear_predictors(obs, links, params)
    y_c = obs.partition.y_c
    with np.errstate(divide="ignore", invalid="ignore"):
        loglik_term = y_c * np.log(theta) + (1.0 - y_c) * np.log1p(-theta)
    loglik_term = np.where(np.isfinite(loglik_term), loglik_term, -np.inf)
    deviance = np.sign(y_c - theta) * np.sqrt(np.maximum(-2.0 * loglik_term, 0.0))

    wp = obs.partition.wp
    mu_p, phi_p = mu[wp], phi[wp]
    psi1_a = trigamma(mu_p * phi_p)
    psi1_b = trigamma((1.0 - mu_p) * phi_p)
    v = psi1_a + psi1_b
    w = phi_p * v / links.g_mu.derivative(mu_p) ** 2
    Xp = obs.X[wp]
    root_w = np.sqrt(w)
    Xw = Xp * root_w[:, None]
    gram_inv = np.linalg.pinv(Xw.T @ Xw)
    h = np.einsum("ij,jk,ik->i", Xw, gram_inv, Xw)
    mu_star = _special.psi(mu_p * phi_p) - _special.psi((1.0 - mu_p) * phi_p)
    resid = obs.transformed.y_star[wp] - mu_star
    denom = v * (1.0 - h)
    bad = denom <= 0.0
    if np.any(bad):
        warnings.warn("leverage at or above one; affected residuals reported as NaN")
    swr2 = np.where(bad, np.nan, resid / np.sqrt(np.where(bad, 1.0, denom)))
    return ResidualSet(kind="by_part", discrete=deviance, continuous=swr2)


def robust_weights(obs: ObservationSet, links: LinkSpec, fit, estimator: str,
                   alpha_cont: float) -> np.ndarray:
    """Per-observation downweights over the continuous subsample, max one.

    These are the density-power weights the robust estimating equations
    apply to each observation, rescaled so the most model-consistent
    observation has weight one.  All weights are one at tuning constant
    zero (or for the maximum likelihood estimator).
    """
    params = _params_of(fit)
    n_dagger = obs.partition.n_dagger
    if alpha_cont == 0.0 or estimator == "mle":
        return np.ones(n_dagger)
    reparam = alpha_cont if estimator == "mlse" else 0.0
    q = _ContQuantities(obs, links, params.theta, reparam_alpha=reparam)
    w = np.exp(alpha_cont * q.log_h)
    return w / w.max()


def simulate_from_fit(obs: ObservationSet, links: LinkSpec, params: ParamVector,
                      rng: np.random.Generator) -> ObservationSet:
    """Draw a synthetic response vector from a fitted model, reusing the designs."""
    from .model import linear_predictors

    theta, mu, phi = linear_predictors(obs, links, params)
    y = np.where(
        rng.uniform(size=obs.n_obs) < theta,
        float(obs.c),
        np.clip(rng.beta(mu * phi, (1.0 - mu) * phi), 1e-12, 1.0 - 1e-12),
    )
    return obs.with_values(y=y)


def envelope(obs: ObservationSet, links: LinkSpec, fit, n_sim: int = 100,
             band: float = 0.95, seed: int = 0, refit: bool = False) -> EnvelopeTable:
    """Simulated envelope for the randomized quantile residuals.

    Simulates ``n_sim`` datasets from the fitted model and returns, per
    order statistic, the central ``band`` quantiles of the simulated
    residuals next to the observed sorted residuals and normal plotting
    positions.  By default simulated residuals are evaluated at the fitted
    parameters; ``refit=True`` re-estimates each simulated dataset at the
    same tuning constants (slower, statistically stricter).
    """
    if not 0.0 < band < 1.0:
        raise ValueError("band must lie in (0, 1)")
    params = _params_of(fit)
    ss = np.random.SeedSequence(seed)
    children = ss.spawn(n_sim + 1)
    observed = np.sort(_quantile_residual_values(obs, links, params,
                                                 np.random.default_rng(children[0])))
    sims = np.empty((n_sim, obs.n_obs))
    for i in range(n_sim):
        rng = np.random.default_rng(children[i + 1])
        sim_obs = simulate_from_fit(obs, links, params, rng)
        sim_params = params
        if refit:
            from .fitting import fit_model

            estimator = getattr(fit, "estimator", "mle")
            tuning = getattr(fit, "tuning", None)
            refit_result = fit_model(
                sim_obs,
                links,
                estimator=estimator,
                alpha_disc=0.0 if tuning is None else tuning.alpha_disc,
                alpha_cont=0.0 if tuning is None else tuning.alpha_cont,
            )
            sim_params = refit_result.params
        sims[i] = np.sort(_quantile_residual_values(sim_obs, links, sim_params, rng))
    lo = (1.0 - band) / 2.0
    n = obs.n_obs
    theoretical = stats.norm.ppf((np.arange(1, n + 1) - 0.375) / (n + 0.25))
    return EnvelopeTable(
        theoretical=theoretical,
        observed=observed,
        lower=np.quantile(sims, lo, axis=0),
        median=np.quantile(sims, 0.5, axis=0),
        upper=np.quantile(sims, 1.0 - lo, axis=0),
        band=band,
        n_sim=n_sim,
        rng_seed=seed,
    )
