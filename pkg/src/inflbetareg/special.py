"""Scalar special functions and a generic quadrature routine.

These are the numerical primitives the rest of the package is built on:
log-beta, digamma, trigamma, logit/expit, a stable log(1+exp(x)), and an
adaptive integrator that copes with infinite endpoints.  All functions
accept scalars or numpy arrays and enforce their domains explicitly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate as _integrate
from scipy import special as _special

__all__ = [
    "DomainError",
    "QuadratureError",
    "QuadratureSpec",
    "log_beta",
    "digamma",
    "trigamma",
    "logit",
    "expit",
    "log1pexp",
    "integrate",
]


class DomainError(ValueError):
    """Argument outside the mathematical domain of a special function."""


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to converge.

    Carries the best available estimate and the estimated error bound so
    callers can decide whether the result is still usable.
    """

    def __init__(self, message: str, estimate: float, error_bound: float):
        super().__init__(message)
        self.estimate = estimate
        self.error_bound = error_bound


def _as_positive(x, name: str):
    arr = np.asarray(x, dtype=float)
    if arr.size and (not np.all(np.isfinite(arr)) or np.any(arr <= 0.0)):
        raise DomainError(f"{name} must be positive and finite")
    return arr


def _maybe_scalar(arr: np.ndarray):
    return float(arr) if arr.ndim == 0 else arr


def log_beta(a, b):
    """Natural log of the beta function, ln B(a, b).

    Computed through log-gamma so it stays finite for very large
    arguments instead of overflowing like the Gamma-product form.
    """
    a = _as_positive(a, "a")
    b = _as_positive(b, "b")
    return _maybe_scalar(_special.betaln(a, b))


def digamma(x):
    """Digamma function psi(x) for x > 0."""
    x = _as_positive(x, "x")
    return _maybe_scalar(_special.psi(x))


def trigamma(x):
    """Trigamma function psi'(x) for x > 0."""
    x = _as_positive(x, "x")
    return _maybe_scalar(_special.polygamma(1, x))


def logit(p):
    """log(p / (1 - p)) for p in (0, 1)."""
    arr = np.asarray(p, dtype=float)
    if arr.size and (np.any(arr <= 0.0) or np.any(arr >= 1.0)):
        raise DomainError("logit requires arguments in (0, 1)")
    return _maybe_scalar(_special.logit(arr))


def expit(x):
    """Inverse logit, 1 / (1 + exp(-x)); overflow-safe for any real x."""
    return _maybe_scalar(_special.expit(np.asarray(x, dtype=float)))


def log1pexp(x):
    """log(1 + exp(x)) without overflow for large positive x."""
    arr = np.asarray(x, dtype=float)
    return _maybe_scalar(np.logaddexp(0.0, arr))


@dataclass(frozen=True)
class QuadratureSpec:
    """Integration request: interval, absolute tolerance, subdivision cap.

    Endpoints may be ``-inf``/``+inf``; infinite ranges are mapped to a
    bounded interval with a monotone logit-type substitution before the
    adaptive rule runs.
    """

    lower: float
    upper: float
    abs_tol: float = 1e-10
    max_subdivisions: int = 200

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError("lower must be strictly below upper")
        if not self.abs_tol > 0:
            raise ValueError("abs_tol must be positive")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be at least 1")


def _substituted(f: Callable[[float], float], lower: float, upper: float):
    """Map an integrand on an unbounded interval onto (0, 1)."""
    lo_inf = np.isneginf(lower)
    hi_inf = np.isposinf(upper)
    if lo_inf and hi_inf:
        # t = logit(u): the logit-beta-type integrands this package cares
        # about become bounded beta-form integrands under this map.
        def g(u):
            return f(_special.logit(u)) / (u * (1.0 - u))

        return g, 0.0, 1.0
    if hi_inf:
        def g(u):
            return f(lower - np.log1p(-u)) / (1.0 - u)

        return g, 0.0, 1.0
    if lo_inf:
        def g(u):
            return f(upper + np.log(u)) / u

        return g, 0.0, 1.0
    return f, lower, upper


def _quad_once(g, lo, hi, tol, limit):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", _integrate.IntegrationWarning)
        out = _integrate.quad(g, lo, hi, epsabs=tol, epsrel=1e-12, limit=limit, full_output=1)
    value, err = out[0], out[1]
    return value, err, not (len(out) > 3 and err > tol)


def _bisected(g, lo, hi, tol, limit, depth):
    value, err, ok = _quad_once(g, lo, hi, tol, limit)
    if ok or depth == 0:
        return value, err
    # certify stubborn pieces (typically endpoint singularities) by
    # bisection: each half then carries at most one hard endpoint
    mid = 0.5 * (lo + hi)
    v1, e1 = _bisected(g, lo, mid, tol / 2, limit, depth - 1)
    v2, e2 = _bisected(g, mid, hi, tol / 2, limit, depth - 1)
    if e1 + e2 < err:
        return v1 + v2, e1 + e2
    return value, err


def integrate(f: Callable[[float], float], spec: QuadratureSpec) -> float:
    """Adaptive quadrature of ``f`` over ``spec``'s interval.

    Raises :class:`QuadratureError` (carrying the best estimate and its
    error bound) when the requested tolerance cannot be certified within
    the subdivision budget.
    """
    g, lo, hi = _substituted(f, float(spec.lower), float(spec.upper))
    value, err = _bisected(g, lo, hi, spec.abs_tol, spec.max_subdivisions, depth=4)
    if err > spec.abs_tol:
        raise QuadratureError(
            "quadrature did not converge within the requested tolerance",
            estimate=value,
            error_bound=err,
        )
    return value
