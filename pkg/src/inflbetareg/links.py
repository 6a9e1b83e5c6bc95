"""Link functions binding linear predictors to model parameters."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .special import expit, logit

__all__ = ["Link", "LinkSpec", "get_link", "LINKS"]


@dataclass(frozen=True)
class Link:
    """Strictly monotone, twice differentiable link.

    ``evaluate`` maps parameter -> predictor, ``inverse`` maps back, and
    ``derivative`` is d evaluate(x) / dx on the parameter scale.
    """

    name: str
    evaluate: Callable
    inverse: Callable
    derivative: Callable


def _cloglog(p):
    return np.log(-np.log1p(-np.asarray(p, dtype=float)))


def _cloglog_inv(eta):
    return -np.expm1(-np.exp(np.asarray(eta, dtype=float)))


def _cloglog_deriv(p):
    p = np.asarray(p, dtype=float)
    return -1.0 / ((1.0 - p) * np.log1p(-p))


LOGIT = Link("logit", logit, expit, lambda p: 1.0 / (np.asarray(p) * (1.0 - np.asarray(p))))
LOG = Link("log", np.log, np.exp, lambda x: 1.0 / np.asarray(x, dtype=float))
CLOGLOG = Link("cloglog", _cloglog, _cloglog_inv, _cloglog_deriv)

LINKS = {link.name: link for link in (LOGIT, LOG, CLOGLOG)}


def get_link(name: str) -> Link:
    try:
        return LINKS[name]
    except KeyError:
        raise ValueError(f"unknown link {name!r}; available: {sorted(LINKS)}") from None


@dataclass(frozen=True)
class LinkSpec:
    """Per-submodel links: inflation probability, mean, precision."""

    g_theta: Link = field(default=LOGIT)
    g_mu: Link = field(default=LOGIT)
    g_phi: Link = field(default=LOG)

    @classmethod
    def from_names(cls, theta: str = "logit", mu: str = "logit", phi: str = "log") -> "LinkSpec":
        if phi == "logit" or theta == "log" or mu == "log":
            raise ValueError("logit links apply to (0,1) parameters, log to the precision")
        return cls(get_link(theta), get_link(mu), get_link(phi))

    def names(self) -> dict:
        return {"theta": self.g_theta.name, "mu": self.g_mu.name, "phi": self.g_phi.name}
