"""Quasi-Newton maximization with backtracking line search, plus starting values.

The estimators in this package maximize smooth, low-dimensional objectives
with analytic gradients, so a dense BFGS inverse-Hessian update with an
Armijo backtracking search is enough.  The routine is fully deterministic:
identical inputs give bit-identical iterates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .links import LinkSpec
from .model import ObservationSet, ParamVector, PROB_FLOOR

__all__ = ["OptimizerConfig", "ConvergenceReport", "InputError", "maximize", "default_start"]


class InputError(ValueError):
    """Bad optimization input: non-finite start or degenerate design."""


@dataclass(frozen=True)
class OptimizerConfig:
    grad_tol: float = 1e-8
    step_tol: float = 1e-10
    max_iters: int = 500
    backtrack_factor: float = 0.5
    armijo_c: float = 1e-4

    def __post_init__(self):
        if min(self.grad_tol, self.step_tol, self.backtrack_factor, self.armijo_c) <= 0:
            raise ValueError("all optimizer tolerances must be positive")
        if not self.backtrack_factor < 1.0:
            raise ValueError("backtrack_factor must lie in (0, 1)")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


@dataclass
class ConvergenceReport:
    converged: bool
    iterations: int
    final_grad_norm: float
    objective_path: Sequence[float] = field(default_factory=list)
    reason: str = ""


def maximize(fun_and_grad: Callable, start, config: OptimizerConfig | None = None):
    """Maximize a smooth objective; returns ``(argmax, ConvergenceReport)``.

    ``fun_and_grad(x)`` must return ``(value, gradient)``.  Non-finite
    objective values during the line search are treated as rejected trial
    points; a non-finite value at the start is an input error.  The
    returned objective path is non-decreasing by construction.
    """
    cfg = config or OptimizerConfig()
    x = np.asarray(start, dtype=float).copy()
    if x.ndim != 1 or not np.all(np.isfinite(x)):
        raise InputError("starting point must be a finite vector")
    f, g = fun_and_grad(x)
    if not np.isfinite(f):
        raise InputError("objective is not finite at the starting point")
    g = np.asarray(g, dtype=float)
    dim = x.size
    H = np.eye(dim)
    path = [float(f)]
    grad_norm = float(np.max(np.abs(g))) if dim else 0.0

    h_is_identity = True
    for iteration in range(cfg.max_iters):
        if grad_norm <= cfg.grad_tol:
            return x, ConvergenceReport(True, iteration, grad_norm, path, "grad_tol")

        p = H @ g
        m = float(p @ g)
        if not np.isfinite(m) or m <= 0.0:
            # stale curvature: fall back to steepest ascent
            H = np.eye(dim)
            h_is_identity = True
            p = g.copy()
            m = float(g @ g)

        step = 1.0
        accepted = False
        while step * np.max(np.abs(p)) > cfg.step_tol:
            x_new = x + step * p
            f_new, g_new = fun_and_grad(x_new)
            # strict increase guards against zero-progress acceptance when
            # the sufficient-decrease increment rounds away
            if np.isfinite(f_new) and f_new > f and f_new >= f + cfg.armijo_c * step * m:
                accepted = True
                break
            step *= cfg.backtrack_factor
        if not accepted:
            if not h_is_identity:
                # a stale quasi-Newton direction can fail to certify progress
                # near the optimum; retry once along the raw gradient
                H = np.eye(dim)
                h_is_identity = True
                continue
            return x, ConvergenceReport(False, iteration, grad_norm, path, "step_tol")

        s = x_new - x
        y = np.asarray(g_new, dtype=float) - g
        x, f, g = x_new, float(f_new), np.asarray(g_new, dtype=float)
        path.append(f)
        grad_norm = float(np.max(np.abs(g)))

        # BFGS update in minimization convention: y_min = -y, curvature
        # requires s'y_min > 0, i.e. s'y < 0 for a maximization step.
        sy = float(s @ y)
        if sy < -1e-12 * max(1.0, float(np.abs(s) @ np.abs(y))):
            rho = -1.0 / sy
            sy_outer = np.outer(s, y)
            H = (np.eye(dim) + rho * sy_outer) @ H @ (np.eye(dim) + rho * sy_outer.T)
            H += rho * np.outer(s, s)
            h_is_identity = False

    return x, ConvergenceReport(False, cfg.max_iters, grad_norm, path, "max_iters")


def _lstsq_or_raise(design: np.ndarray, target: np.ndarray, submodel: str) -> np.ndarray:
    coef, _, rank, _ = np.linalg.lstsq(design, target, rcond=None)
    if rank < design.shape[1]:
        raise InputError(f"rank-deficient design matrix in the {submodel} submodel")
    return coef


def default_start(obs: ObservationSet, links: LinkSpec, kind: str = "mle") -> ParamVector:
    """Starting values for any of the estimators.

    kappa comes from one least-squares pass on the link scale of the
    add-1/2 smoothed point-mass indicator; beta from least squares of
    logit(y) on the continuous subsample; gamma puts a method-of-moments
    precision on the intercept and zeros elsewhere.
    """
    del kind  # same start works for every estimator
    part = obs.partition
    z_disc = links.g_theta.evaluate((part.y_c + 0.5) / 2.0)
    kappa = _lstsq_or_raise(obs.S, z_disc, "discrete")

    if part.n_dagger <= obs.X.shape[1]:
        raise InputError("too few observations in (0,1) to start the continuous submodels")
    wp = part.wp
    y_star = obs.transformed.y_star[wp]
    Xp = obs.X[wp]
    beta = _lstsq_or_raise(Xp, y_star, "mean")

    resid = y_star - Xp @ beta
    dof = max(part.n_dagger - obs.X.shape[1], 1)
    sigma2_lin = float(resid @ resid) / dof
    mu_hat = np.clip(links.g_mu.inverse(Xp @ beta), PROB_FLOOR, 1.0 - PROB_FLOOR)
    sigma2 = sigma2_lin / links.g_mu.derivative(mu_hat) ** 2
    phi_mm = float(np.mean(mu_hat * (1.0 - mu_hat) / sigma2 - 1.0))
    phi_mm = max(phi_mm, 0.1)
    gamma = np.zeros(obs.Z.shape[1])
    gamma[0] = links.g_phi.evaluate(phi_mm)
    if obs.Z.shape[1] > 1 and np.linalg.matrix_rank(obs.Z) < obs.Z.shape[1]:
        raise InputError("rank-deficient design matrix in the precision submodel")
    return ParamVector(kappa=kappa, beta=beta, gamma=np.atleast_1d(gamma))
