"""Data containers and density mathematics of the inflated beta regression model.

The response law is a mixture of a point mass at an inflation point c (0 or
1) with probability theta and a beta(mu, phi) variable on (0, 1), where the
beta distribution is indexed by its mean mu and precision phi (shape
parameters mu*phi and (1-mu)*phi).  Three linear predictors drive theta, mu
and phi through the links in :class:`~inflbetareg.links.LinkSpec`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from .links import LinkSpec
from .special import DomainError, digamma, log1pexp, log_beta

__all__ = [
    "EvaluationError",
    "ObservationSet",
    "ParamVector",
    "PartitionedSample",
    "TransformedResponse",
    "PROB_FLOOR",
    "beta_log_density",
    "inflated_log_density",
    "logit_beta_log_density",
    "conditional_moments",
    "linear_predictors",
    "log_likelihood",
]

# Clamp applied to inverse-link outputs for theta and mu while objectives are
# being optimized; keeps log terms finite at extreme trial points.  Reported
# fitted values are never clamped.
PROB_FLOOR = 1e-12


class EvaluationError(RuntimeError):
    """A linear predictor or density could not be evaluated."""


@dataclass(frozen=True)
class PartitionedSample:
    """Index bookkeeping: which observations fall strictly inside (0, 1)."""

    wp: np.ndarray          # ordered indices of continuous observations
    n_dagger: int           # their count
    y_c: np.ndarray         # indicator of y_i == c, length n


@dataclass(frozen=True)
class TransformedResponse:
    """logit(y) and log(1-y), stored as 0 outside the continuous subsample."""

    y_star: np.ndarray
    y_dagger: np.ndarray


@dataclass(frozen=True)
class ObservationSet:
    """Responses and the three design matrices.

    ``y`` must take values in (0, 1) or be exactly equal to the inflation
    point ``c``.  Responses sitting on the *other* endpoint are rejected,
    because the model support is (0,1) plus the single inflation point; use
    the loader's clamp option to pre-adjust such rows.
    """

    y: np.ndarray
    S: np.ndarray
    X: np.ndarray
    Z: np.ndarray
    c: int = 0

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        S = np.atleast_2d(np.asarray(self.S, dtype=float))
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        Z = np.atleast_2d(np.asarray(self.Z, dtype=float))
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Z", Z)
        if self.c not in (0, 1):
            raise ValueError("inflation point c must be 0 or 1")
        n = y.shape[0]
        for name, mat in (("S", S), ("X", X), ("Z", Z)):
            if mat.shape[0] != n:
                raise ValueError(f"design matrix {name} has {mat.shape[0]} rows, expected {n}")
            if not np.all(np.isfinite(mat)):
                raise ValueError(f"design matrix {name} contains non-finite entries")
        if S.shape[1] + X.shape[1] + Z.shape[1] >= n:
            raise ValueError("total number of regression coefficients must be below n")
        if not np.all(np.isfinite(y)):
            raise ValueError("responses contain non-finite values")
        interior = (y > 0.0) & (y < 1.0)
        at_c = y == float(self.c)
        bad = ~(interior | at_c)
        if np.any(bad):
            rows = np.nonzero(bad)[0][:5]
            raise ValueError(
                f"responses outside (0,1) U {{{self.c}}} at rows {rows.tolist()}; "
                "the model supports a point mass only at the inflation point"
            )

    @property
    def n_obs(self) -> int:
        return self.y.shape[0]

    @property
    def dims(self) -> tuple:
        return self.S.shape[1], self.X.shape[1], self.Z.shape[1]

    @cached_property
    def partition(self) -> PartitionedSample:
        y_c = (self.y == float(self.c)).astype(float)
        wp = np.nonzero(y_c == 0.0)[0]
        return PartitionedSample(wp=wp, n_dagger=int(wp.size), y_c=y_c)

    @cached_property
    def transformed(self) -> TransformedResponse:
        part = self.partition
        y_star = np.zeros(self.n_obs)
        y_dagger = np.zeros(self.n_obs)
        y_cont = self.y[part.wp]
        y_star[part.wp] = np.log(y_cont) - np.log1p(-y_cont)
        y_dagger[part.wp] = np.log1p(-y_cont)
        return TransformedResponse(y_star=y_star, y_dagger=y_dagger)

    def with_values(self, **changes) -> "ObservationSet":
        """Copy with some fields replaced (used by the contamination routines)."""
        return replace(self, **changes)


@dataclass(frozen=True)
class ParamVector:
    """Full parameter vector (kappa, beta, gamma) with submodel slicing."""

    kappa: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        for name in ("kappa", "beta", "gamma"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))

    @property
    def theta(self) -> np.ndarray:
        """Continuous-part block: beta and gamma stacked."""
        return np.concatenate([self.beta, self.gamma])

    @property
    def full(self) -> np.ndarray:
        return np.concatenate([self.kappa, self.beta, self.gamma])

    @property
    def dims(self) -> tuple:
        return self.kappa.size, self.beta.size, self.gamma.size

    @classmethod
    def from_full(cls, values, dims) -> "ParamVector":
        p0, p1, p2 = dims
        values = np.asarray(values, dtype=float)
        if values.size != p0 + p1 + p2:
            raise ValueError("parameter vector length does not match the design dimensions")
        return cls(values[:p0], values[p0 : p0 + p1], values[p0 + p1 :])

    def with_theta(self, theta) -> "ParamVector":
        theta = np.asarray(theta, dtype=float)
        p1 = self.beta.size
        return ParamVector(self.kappa, theta[:p1], theta[p1:])


def _check_mu_phi(mu, phi):
    mu = np.asarray(mu, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if np.any(mu <= 0.0) or np.any(mu >= 1.0):
        raise DomainError("mu must lie in (0, 1)")
    if np.any(phi <= 0.0):
        raise DomainError("phi must be positive")
    return mu, phi


def beta_log_density(y, mu, phi):
    """Log density of beta(mu, phi) at y in (0, 1)."""
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0.0) or np.any(y >= 1.0):
        raise DomainError("beta density is defined on the open interval (0, 1)")
    mu, phi = _check_mu_phi(mu, phi)
    a = mu * phi
    b = (1.0 - mu) * phi
    out = -log_beta(a, b) + (a - 1.0) * np.log(y) + (b - 1.0) * np.log1p(-y)
    return float(out) if np.ndim(out) == 0 else out


def inflated_log_density(y, theta, mu, phi, c: int = 0):
    """Log density of the c-inflated beta mixture at a single point y."""
    theta = float(theta)
    if not 0.0 < theta < 1.0:
        raise DomainError("theta must lie in (0, 1)")
    y = float(y)
    if y == float(c):
        return math.log(theta)
    if 0.0 < y < 1.0:
        return math.log1p(-theta) + beta_log_density(y, mu, phi)
    raise DomainError(f"y={y} is outside (0,1) U {{{c}}}")


def logit_beta_log_density(y_star, mu, phi):
    """Log density of logit(Y) when Y ~ beta(mu, phi); defined on all of R.

    Overflow-safe for large |y_star|: the softplus term is computed with
    logaddexp so both tails decay at their exact exponential rates.
    """
    mu, phi = _check_mu_phi(mu, phi)
    y_star = np.asarray(y_star, dtype=float)
    out = (
        -log_beta(mu * phi, (1.0 - mu) * phi)
        - y_star * (1.0 - mu) * phi
        - phi * log1pexp(-y_star)
    )
    return float(out) if np.ndim(out) == 0 else out


def conditional_moments(mu, phi):
    """Conditional means of (logit(Y), log(1-Y)) given Y in (0, 1).

    Returns ``(mu_star, mu_dagger)`` with mu_star = psi(mu phi) -
    psi((1-mu) phi) and mu_dagger = psi((1-mu) phi) - psi(phi).
    """
    mu, phi = _check_mu_phi(mu, phi)
    d_a = digamma(mu * phi)
    d_b = digamma((1.0 - mu) * phi)
    d_phi = digamma(phi)
    mu_star = d_a - d_b
    mu_dagger = d_b - d_phi
    if np.ndim(mu_star) == 0:
        return float(mu_star), float(mu_dagger)
    return mu_star, mu_dagger


def linear_predictors(obs: ObservationSet, links: LinkSpec, upsilon: ParamVector,
                      clamp_probs: bool = False):
    """Per-observation (theta_i, mu_i, phi_i) from the three submodels.

    With ``clamp_probs`` the inverse-link outputs for theta and mu are
    clipped away from {0, 1}; optimization paths use this, reported fits
    do not.
    """
    if upsilon.dims != obs.dims:
        raise ValueError(f"parameter dims {upsilon.dims} do not match design dims {obs.dims}")
    with np.errstate(over="ignore"):  # overflow surfaces as the error below
        theta = links.g_theta.inverse(obs.S @ upsilon.kappa)
        mu = links.g_mu.inverse(obs.X @ upsilon.beta)
        phi = links.g_phi.inverse(obs.Z @ upsilon.gamma)
    if clamp_probs:
        theta = np.clip(theta, PROB_FLOOR, 1.0 - PROB_FLOOR)
        mu = np.clip(mu, PROB_FLOOR, 1.0 - PROB_FLOOR)
    for name, values in (("discrete", theta), ("mean", mu), ("precision", phi)):
        bad = ~np.isfinite(values)
        if np.any(bad):
            row = int(np.nonzero(bad)[0][0])
            raise EvaluationError(f"non-finite fitted value in the {name} submodel at row {row}")
    return theta, mu, phi


def log_likelihood(obs: ObservationSet, links: LinkSpec, upsilon: ParamVector):
    """Log-likelihood split into its Bernoulli and beta factors.

    Returns ``(ell, ell1, ell2)`` where ell1 sums the point-mass indicator
    contributions over all observations and ell2 sums the beta log density
    over the continuous subsample; ell = ell1 + ell2.
    """
    theta, mu, phi = linear_predictors(obs, links, upsilon)
    part = obs.partition
    y_c = part.y_c
    ell1 = math.fsum(y_c * np.log(theta) + (1.0 - y_c) * np.log1p(-theta))
    if part.n_dagger:
        wp = part.wp
        ell2 = math.fsum(beta_log_density(obs.y[wp], mu[wp], phi[wp]))
    else:
        ell2 = 0.0
    return ell1 + ell2, ell1, ell2
