"""Asymptotic covariance matrices, standard errors, and Wald-type tests.

All covariances are sandwich forms assembled from per-observation diagonal
weights and design cross-products.  The full-parameter covariance is block
diagonal between the discrete block and the continuous block; the two model
parts share no information.

For the continuous part the two robust estimators have different bread and
meat matrices.  The surrogate (Lq) route evaluates its moment diagonals at
the inflated working precision ``phi / (1 - alpha)``; the divergence route
uses power-tilted score moments of the logit-scale density at the model
precision itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .links import LinkSpec
from .model import ObservationSet, ParamVector, conditional_moments, linear_predictors
from .objectives import power_integral
from .special import log_beta, trigamma

__all__ = [
    "SingularMatrixError",
    "CovarianceResult",
    "WaldTest",
    "cov_discrete",
    "cov_mlse",
    "cov_mlme",
    "beta_reg_cov",
    "full_covariance",
    "wald_test_value",
    "wald_test",
]


class SingularMatrixError(np.linalg.LinAlgError):
    """A sensitivity matrix could not be inverted."""


@dataclass(frozen=True)
class CovarianceResult:
    """Full covariance with exact zero blocks between kappa and theta."""

    V: np.ndarray
    se: np.ndarray


@dataclass(frozen=True)
class WaldTest:
    statistic: float
    p_value: float
    null_value: float
    index: int

    @property
    def z(self) -> float:
        """Signed square root of the statistic (two-sided z form)."""
        return float(np.sign(self._shift) * np.sqrt(self.statistic))

    # set in wald_test_value; kept private to keep the wire format minimal
    _shift: float = 0.0


def _name_collinear(weighted_design: np.ndarray) -> str:
    _, s, vt = np.linalg.svd(weighted_design, full_matrices=False)
    direction = np.abs(vt[-1])
    cols = np.nonzero(direction > 0.5 * direction.max())[0]
    return ", ".join(str(int(ix)) for ix in cols)

def _solve_sandwich(bread: np.ndarray, meat: np.ndarray, design, label: str) -> np.ndarray:
    try:
        inv_bread = np.linalg.solve(bread, np.eye(bread.shape[0]))
    except np.linalg.LinAlgError:
        raise SingularMatrixError(
            f"singular {label} sensitivity matrix; near-collinear columns: "
            f"{_name_collinear(design)}"
        ) from None
    V = inv_bread @ meat @ inv_bread
    return 0.5 * (V + V.T)


def cov_discrete(obs: ObservationSet, links: LinkSpec, kappa, alpha_disc: float) -> np.ndarray:
    """Sandwich covariance of the discrete-part estimator.

    Bread and meat share the weight ``M_i / (theta (1-theta) g'(theta)^2)``
    with ``M_i = (1+a)[(1-theta) theta^a + theta (1-theta)^a]``; the meat
    carries one extra factor of ``M_i``.  At ``a == 0`` both reduce to the
    Bernoulli Fisher information and the sandwich collapses to its inverse.
    """
    kappa = np.asarray(kappa, dtype=float)
    theta = np.clip(links.g_theta.inverse(obs.S @ kappa), 1e-12, 1.0 - 1e-12)
    a = alpha_disc
    m = (1.0 + a) * ((1.0 - theta) * theta**a + theta * (1.0 - theta) ** a)
    base = 1.0 / (theta * (1.0 - theta) * links.g_theta.derivative(theta) ** 2)
    A = obs.S.T @ (obs.S * (m * base)[:, None])
    B = obs.S.T @ (obs.S * (m * m * base)[:, None])
    return _solve_sandwich(A, B, obs.S * np.sqrt(m * base)[:, None], "discrete-part")


def _theta_blocks(X, Z, w11, w12, w22):
    top = np.hstack([X.T @ (X * w11[:, None]), X.T @ (Z * w12[:, None])])
    bottom = np.hstack([(X.T @ (Z * w12[:, None])).T, Z.T @ (Z * w22[:, None])])
    return np.vstack([top, bottom])


def cov_mlse(obs: ObservationSet, links: LinkSpec, upsilon: ParamVector, alpha_cont: float) -> np.ndarray:
    """Sandwich covariance for the surrogate-likelihood continuous estimator.

    Every moment diagonal is evaluated at the working precision
    ``phi_w = phi / (1 - alpha)``; the probability of landing in the
    continuous part enters through the diagonal weights ``1 - theta_i``.
    """
    a = alpha_cont
    theta, mu, phi = linear_predictors(obs, links, upsilon)
    mu = np.clip(mu, 1e-12, 1.0 - 1e-12)
    phi_w = phi / (1.0 - a)
    aw = 1.0 - theta
    t_mu = 1.0 / links.g_mu.derivative(mu)
    t_phi = 1.0 / links.g_phi.derivative(phi)

    lb = log_beta(mu * phi_w, (1.0 - mu) * phi_w)
    lb_low = log_beta(mu * phi_w * (1.0 - a), (1.0 - mu) * phi_w * (1.0 - a))
    lb_high = log_beta(mu * phi_w * (1.0 + a), (1.0 - mu) * phi_w * (1.0 + a))
    b1 = np.exp((1.0 - a) * lb - lb_low)
    b2 = np.exp(lb_high - 2.0 * a * lb - lb_low)

    def moments(scale):
        pa = phi_w * scale
        psi1_a = trigamma(mu * pa)
        psi1_b = trigamma((1.0 - mu) * pa)
        v = psi1_a + psi1_b
        c = phi_w * (mu * psi1_a - (1.0 - mu) * psi1_b)
        d = mu**2 * psi1_a + (1.0 - mu) ** 2 * psi1_b - trigamma(pa)
        return v, c, d

    v1, c1, d1 = moments(1.0)
    v2, c2, d2 = moments(1.0 + a)

    bread = _theta_blocks(
        obs.X,
        obs.Z,
        (1.0 - a) * aw * b1 * t_mu**2 * phi_w**2 * v1,
        aw * b1 * t_mu * t_phi * c1,
        aw * b1 * t_phi**2 * d1 / (1.0 - a),
    )
    meat = _theta_blocks(
        obs.X,
        obs.Z,
        aw * b2 * t_mu**2 * phi_w**2 * v2,
        aw * b2 * t_mu * t_phi * c2 / (1.0 - a),
        aw * b2 * t_phi**2 * d2 / (1.0 - a) ** 2,
    )
    design = np.hstack([obs.X, obs.Z])
    return _solve_sandwich(bread, meat, design, "continuous-part")


def _lme_scalars(mu, phi, gprime_mu, gprime_phi, power):
    """Power-tilted score moments of the logit-scale density.

    ``power = 1 + alpha`` gives the bread diagonals, ``1 + 2 alpha`` the
    uncentered meat diagonals.
    """
    phi_a = phi * power
    k = power_integral(mu, phi, power)
    mu_star, mu_dagger = conditional_moments(mu, phi)
    mu_star_a, mu_dagger_a = conditional_moments(mu, phi_a)
    shift_star = mu_star_a - mu_star
    shift_dagger = mu_dagger_a - mu_dagger
    psi1_a = trigamma(mu * phi_a)
    psi1_b = trigamma((1.0 - mu) * phi_a)
    v_a = psi1_a + psi1_b
    l11 = phi**2 * k / gprime_mu**2 * (v_a + shift_star**2)
    l12 = (
        phi
        * k
        / (gprime_mu * gprime_phi)
        * (mu * (v_a + shift_star**2) - psi1_b + shift_star * shift_dagger)
    )
    l22 = (
        k
        / gprime_phi**2
        * (
            mu**2 * psi1_a
            + (1.0 - mu) ** 2 * psi1_b
            - trigamma(phi_a)
            + (mu * shift_star + shift_dagger) ** 2
        )
    )
    l1 = phi * k * shift_star / gprime_mu
    l2 = k * (mu * shift_star + shift_dagger) / gprime_phi
    return l11, l12, l22, l1, l2


def cov_mlme(obs: ObservationSet, links: LinkSpec, upsilon: ParamVector, alpha_cont: float) -> np.ndarray:
    """Sandwich covariance for the divergence-route continuous estimator."""
    a = alpha_cont
    theta, mu, phi = linear_predictors(obs, links, upsilon)
    mu = np.clip(mu, 1e-12, 1.0 - 1e-12)
    aw = 1.0 - theta
    gm = links.g_mu.derivative(mu)
    gp = links.g_phi.derivative(phi)

    b11, b12, b22, l1, l2 = _lme_scalars(mu, phi, gm, gp, 1.0 + a)
    m11, m12, m22, _, _ = _lme_scalars(mu, phi, gm, gp, 1.0 + 2.0 * a)

    bread = _theta_blocks(obs.X, obs.Z, aw * b11, aw * b12, aw * b22)
    meat = _theta_blocks(
        obs.X,
        obs.Z,
        aw * (m11 - l1**2),
        aw * (m12 - l1 * l2),
        aw * (m22 - l2**2),
    )
    design = np.hstack([obs.X, obs.Z])
    return _solve_sandwich(bread, meat, design, "continuous-part")


def beta_reg_cov(obs: ObservationSet, links: LinkSpec, upsilon: ParamVector) -> np.ndarray:
    """Inverse Fisher information of a plain beta regression on the (0,1) rows.

    Used by the tuning-constant selector, which standardizes with errors
    that do not depend on the discrete-part parameters.
    """
    _, mu, phi = linear_predictors(obs, links, upsilon)
    wp = obs.partition.wp
    mu, phi = mu[wp], phi[wp]
    Xp, Zp = obs.X[wp], obs.Z[wp]
    t_mu = 1.0 / links.g_mu.derivative(mu)
    t_phi = 1.0 / links.g_phi.derivative(phi)
    psi1_a = trigamma(mu * phi)
    psi1_b = trigamma((1.0 - mu) * phi)
    v = psi1_a + psi1_b
    c = phi * (mu * psi1_a - (1.0 - mu) * psi1_b)
    d = mu**2 * psi1_a + (1.0 - mu) ** 2 * psi1_b - trigamma(phi)
    info = _theta_blocks(Xp, Zp, t_mu**2 * phi**2 * v, t_mu * t_phi * c, t_phi**2 * d)
    return _solve_sandwich(info, info, np.hstack([Xp, Zp]), "beta-regression")


def full_covariance(obs: ObservationSet, links: LinkSpec, upsilon: ParamVector,
                    estimator: str, alpha_disc: float, alpha_cont: float) -> CovarianceResult:
    """Block-diagonal covariance of the full parameter vector."""
    p0, p1, p2 = upsilon.dims
    V = np.zeros((p0 + p1 + p2, p0 + p1 + p2))
    V[:p0, :p0] = cov_discrete(obs, links, upsilon.kappa, alpha_disc)
    if estimator in ("mle", "mlse"):
        V[p0:, p0:] = cov_mlse(obs, links, upsilon, 0.0 if estimator == "mle" else alpha_cont)
    elif estimator == "mlme":
        V[p0:, p0:] = cov_mlme(obs, links, upsilon, alpha_cont)
    else:
        raise ValueError(f"unknown estimator {estimator!r}")
    diag = np.maximum(np.diag(V), 0.0)
    return CovarianceResult(V=V, se=np.sqrt(diag))


def wald_test_value(estimate: float, se: float, null_value: float, index: int = 0) -> WaldTest:
    """Wald-type test of a single coordinate against a null value."""
    if not se > 0:
        raise ValueError("standard error must be positive")
    shift = (float(estimate) - float(null_value)) / float(se)
    statistic = shift * shift
    p = float(stats.chi2.sf(statistic, df=1))
    test = WaldTest(statistic=float(statistic), p_value=p, null_value=float(null_value),
                    index=int(index), _shift=shift)
    return test


def wald_test(fit, index: int, null_value: float = 0.0) -> WaldTest:
    """Wald-type test for one coordinate of a fitted model.

    ``fit`` is any object exposing ``params`` (a ParamVector) and ``cov``
    (a CovarianceResult); at tuning constants zero this is the usual Wald
    statistic.
    """
    estimate = fit.params.full[index]
    se = fit.cov.se[index]
    return wald_test_value(estimate, se, null_value, index)
