"""Data generation, contamination mechanisms, and the Monte Carlo harness.

The data-generating process follows the benchmark design used throughout
the package: slope covariates of the discrete submodel are standard
normal, slope covariates of the mean and precision submodels are uniform
on (0, 1), and every submodel carries an intercept.

Two contamination mechanisms are provided.  The continuous mechanism
regenerates the responses with the lowest model means from a beta law
with mean pushed halfway towards one.  The discrete mechanism turns the
highest inflation-probability observations into continuous responses
drawn from the clean model and moves their discrete-submodel covariates
onto a hyperplane parallel to the discriminant hyperplane, creating bad
leverage points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .fitting import ESTIMATORS, fit_discrete_part, fit_model
from .inference import wald_test_value
from .links import LinkSpec
from .model import ObservationSet, ParamVector, linear_predictors
from .optimize import InputError, OptimizerConfig
from .special import DomainError
from .tuning import NonConvergenceError

__all__ = [
    "ScenarioSpec",
    "EstimatorSpec",
    "MonteCarloSummary",
    "generate_clean",
    "contaminate_continuous",
    "contaminate_discrete",
    "run_monte_carlo",
]


@dataclass(frozen=True)
class ScenarioSpec:
    """One Monte Carlo setting: sample size, truth, contamination recipe."""

    n: int
    kappa: Sequence[float]
    beta: Sequence[float]
    gamma: Sequence[float]
    c: int = 0
    contaminate_continuous: bool = False
    contaminate_discrete: bool = False
    rate: float = 0.05
    reps: int = 1
    seed: int = 0
    redraw_covariates: bool = True

    def __post_init__(self):
        if not 0.0 <= self.rate < 0.5:
            raise ValueError("contamination rate must lie in [0, 0.5)")
        if self.reps < 1 or self.n < 1:
            raise ValueError("n and reps must be positive")

    @property
    def true_params(self) -> ParamVector:
        return ParamVector(np.asarray(self.kappa, float), np.asarray(self.beta, float),
                           np.asarray(self.gamma, float))


@dataclass(frozen=True)
class EstimatorSpec:
    """Which estimator to run and how its tuning constants are chosen."""

    name: str
    alpha_disc: Union[str, float] = "auto"
    alpha_cont: Union[str, float] = "auto"

    def __post_init__(self):
        if self.name not in ESTIMATORS:
            raise ValueError(f"unknown estimator {self.name!r}")

    @property
    def label(self) -> str:
        return self.name


def _coerce_estimators(estimators) -> list:
    out = []
    for e in estimators:
        if isinstance(e, EstimatorSpec):
            out.append(e)
        elif isinstance(e, str):
            out.append(EstimatorSpec(e))
        else:
            name, a_disc, a_cont = e
            out.append(EstimatorSpec(name, a_disc, a_cont))
    return out


def _rng_of(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def generate_clean(spec: ScenarioSpec, seed=None, links: Optional[LinkSpec] = None,
                   designs: Optional[tuple] = None) -> ObservationSet:
    """Draw one clean dataset; pass ``designs=(S, X, Z)`` to reuse covariates."""
    rng = _rng_of(spec.seed if seed is None else seed)
    links = links or LinkSpec()
    p0, p1, p2 = len(spec.kappa), len(spec.beta), len(spec.gamma)
    n = spec.n
    if designs is None:
        S = np.hstack([np.ones((n, 1)), rng.standard_normal((n, p0 - 1))])
        X = np.hstack([np.ones((n, 1)), rng.uniform(size=(n, p1 - 1))])
        Z = np.hstack([np.ones((n, 1)), rng.uniform(size=(n, p2 - 1))])
    else:
        S, X, Z = designs
    theta = links.g_theta.inverse(S @ np.asarray(spec.kappa, float))
    mu = links.g_mu.inverse(X @ np.asarray(spec.beta, float))
    phi = links.g_phi.inverse(Z @ np.asarray(spec.gamma, float))
    at_c = rng.uniform(size=n) < theta
    y_cont = np.clip(rng.beta(mu * phi, (1.0 - mu) * phi), 1e-12, 1.0 - 1e-12)
    y = np.where(at_c, float(spec.c), y_cont)
    return ObservationSet(y=y, S=S, X=X, Z=Z, c=spec.c)


def contaminate_continuous(obs: ObservationSet, dgp: ParamVector, rate: float, seed=None,
                           links: Optional[LinkSpec] = None) -> ObservationSet:
    """Regenerate the lowest-mean continuous responses with inflated means.

    The ceil(rate * n_dagger) observations in (0,1) with the smallest true
    means are redrawn from a beta law with mean (1 + mu_i) / 2 at the same
    precision; covariates are untouched.
    """
    if rate == 0.0:
        return obs
    rng = _rng_of(seed)
    links = links or LinkSpec()
    _, mu, phi = linear_predictors(obs, links, dgp)
    wp = obs.partition.wp
    if wp.size == 0:
        raise ValueError("no continuous observations to contaminate")
    k = math.ceil(rate * wp.size)
    idx = wp[np.argsort(mu[wp], kind="stable")[:k]]
    mu_bad = (1.0 + mu[idx]) / 2.0
    y = obs.y.copy()
    y[idx] = np.clip(rng.beta(mu_bad * phi[idx], (1.0 - mu_bad) * phi[idx]), 1e-12, 1.0 - 1e-12)
    return obs.with_values(y=y)


def contaminate_discrete(obs: ObservationSet, dgp: ParamVector, rate: float, seed=None,
                         links: Optional[LinkSpec] = None,
                         distance_scale: float = 3.0) -> ObservationSet:
    """Turn the highest-inflation-probability rows into bad leverage points.

    For the ceil(rate * n) rows with the largest true point-mass
    probability: the response becomes a fresh draw from the clean beta law
    (so it follows the trend of the other continuous observations), and the
    slope part of the discrete-submodel covariate row is projected onto the
    through-origin slope hyperplane and offset by ``distance_scale *
    sqrt(p0)`` along the unit slope normal, on the high-probability side.

    The default offset is calibrated so the benchmark study reproduces the
    reference attenuation of the maximum likelihood slopes; pass
    ``distance_scale=1.5`` for the milder variant.
    """
    if rate == 0.0:
        return obs
    p0 = obs.S.shape[1]
    if p0 < 2:
        raise ValueError("discrete contamination needs at least one slope covariate")
    kappa_slope = np.asarray(dgp.kappa[1:], dtype=float)
    norm = float(np.linalg.norm(kappa_slope))
    if norm == 0.0:
        raise ValueError("slope coefficients of the discrete submodel are all zero")
    rng = _rng_of(seed)
    links = links or LinkSpec()
    theta, mu, phi = linear_predictors(obs, links, dgp)
    k = math.ceil(rate * obs.n_obs)
    idx = np.argsort(-theta, kind="stable")[:k]

    y = obs.y.copy()
    y[idx] = np.clip(rng.beta(mu[idx] * phi[idx], (1.0 - mu[idx]) * phi[idx]), 1e-12, 1.0 - 1e-12)

    S = obs.S.copy()
    unit = kappa_slope / norm
    distance = distance_scale * math.sqrt(p0)
    slopes = S[np.ix_(idx, np.arange(1, p0))]
    projected = slopes - np.outer(slopes @ unit, unit)
    S[np.ix_(idx, np.arange(1, p0))] = projected + distance * unit
    return obs.with_values(y=y, S=S)


@dataclass
class MonteCarloSummary:
    """Aggregated bias/RMSE, efficiency ratios, test levels, and tuning stats."""

    scenario: ScenarioSpec
    estimator_labels: list
    param_names: list
    true_values: np.ndarray
    bias: dict
    rmse: dict
    mean_se: dict
    empirical_sd: dict
    tmse: dict
    tmse_ratios: dict
    rejection: dict
    alpha_disc_stats: dict  # label -> (mean, sd)
    alpha_cont_stats: dict
    alpha_disc_values: dict  # label -> per-replication selections
    alpha_cont_values: dict
    n_used: dict
    n_failed: dict
    unreliable: bool
    nominal_level: float = 0.05
    failure_notes: list = field(default_factory=list)


def run_monte_carlo(
    spec: ScenarioSpec,
    estimators=("mle", "mlse", "mlme"),
    links: Optional[LinkSpec] = None,
    grids: tuple = (None, None),
    config: Optional[OptimizerConfig] = None,
    nominal_level: float = 0.05,
    progress: bool = False,
) -> MonteCarloSummary:
    """Run the full replication study for one scenario.

    Per replication: generate, contaminate as the scenario requests, fit
    every estimator (the two robust estimators share the discrete-part
    fit when their discrete tuning policies agree), and record estimates,
    standard errors, Wald rejections at the true values, and the selected
    tuning constants.  Replications where an estimator fails are excluded
    from that estimator's summaries and counted; more than 1% exclusions
    marks the summary unreliable.
    """
    links = links or LinkSpec()
    estimators = _coerce_estimators(estimators)
    labels = [e.label for e in estimators]
    if len(set(labels)) != len(labels):
        raise ValueError("estimator labels must be unique")
    truth = spec.true_params
    true_full = truth.full
    p_total = true_full.size
    param_names = (
        [f"kappa{i+1}" for i in range(truth.kappa.size)]
        + [f"beta{i+1}" for i in range(truth.beta.size)]
        + [f"gamma{i+1}" for i in range(truth.gamma.size)]
    )

    estimates = {lab: [] for lab in labels}
    ses = {lab: [] for lab in labels}
    rejections = {lab: [] for lab in labels}
    alpha_disc = {lab: [] for lab in labels}
    alpha_cont = {lab: [] for lab in labels}
    n_failed = {lab: 0 for lab in labels}
    failure_notes = []

    root = np.random.SeedSequence(spec.seed)
    children = root.spawn(spec.reps)
    fixed_designs = None
    if not spec.redraw_covariates:
        design_rng = np.random.default_rng(root.spawn(1)[0])
        proto = generate_clean(spec, seed=design_rng, links=links)
        fixed_designs = (proto.S, proto.X, proto.Z)

    cont_grid, disc_grid = grids

    for rep in range(spec.reps):
        gen_ss, cc_ss, cd_ss = children[rep].spawn(3)
        obs = generate_clean(spec, seed=np.random.default_rng(gen_ss), links=links,
                             designs=fixed_designs)
        if spec.contaminate_continuous:
            obs = contaminate_continuous(obs, truth, spec.rate,
                                         seed=np.random.default_rng(cc_ss), links=links)
        if spec.contaminate_discrete:
            obs = contaminate_discrete(obs, truth, spec.rate,
                                       seed=np.random.default_rng(cd_ss), links=links)

        disc_cache = {}
        for est in estimators:
            try:
                disc_part = None
                if est.name != "mle":
                    key = est.alpha_disc
                    if key not in disc_cache:
                        disc_cache[key] = fit_discrete_part(
                            obs, links, est.alpha_disc, disc_grid, config
                        )
                    disc_part = disc_cache[key]
                fit = fit_model(
                    obs,
                    links,
                    estimator=est.name,
                    alpha_disc=est.alpha_disc,
                    alpha_cont=est.alpha_cont,
                    grids=(cont_grid, disc_grid),
                    config=config,
                    disc_part=disc_part,
                )
            except (NonConvergenceError, InputError, DomainError, np.linalg.LinAlgError) as exc:
                n_failed[est.label] += 1
                failure_notes.append(f"rep {rep}: {est.label}: {exc}")
                continue
            se = fit.cov.se
            if not np.all(np.isfinite(se)) or np.any(se <= 0.0):
                n_failed[est.label] += 1
                failure_notes.append(f"rep {rep}: {est.label}: degenerate standard errors")
                continue
            full = fit.params.full
            estimates[est.label].append(full)
            ses[est.label].append(se)
            rejections[est.label].append(
                [
                    wald_test_value(full[j], se[j], true_full[j], j).p_value < nominal_level
                    for j in range(p_total)
                ]
            )
            alpha_disc[est.label].append(fit.tuning.alpha_disc)
            alpha_cont[est.label].append(fit.tuning.alpha_cont)
        if progress and (rep + 1) % 50 == 0:
            print(f"  replication {rep + 1}/{spec.reps}")

    bias, rmse, mean_se, emp_sd, tmse, rejection = {}, {}, {}, {}, {}, {}
    a_disc_stats, a_cont_stats, n_used = {}, {}, {}
    for lab in labels:
        mat = np.asarray(estimates[lab], dtype=float)
        n_used[lab] = mat.shape[0] if mat.size else 0
        if mat.size == 0:
            for book in (bias, rmse, mean_se, emp_sd, rejection):
                book[lab] = np.full(p_total, np.nan)
            tmse[lab] = np.nan
            a_disc_stats[lab] = (np.nan, np.nan)
            a_cont_stats[lab] = (np.nan, np.nan)
            continue
        err = mat - true_full[None, :]
        bias[lab] = err.mean(axis=0)
        rmse[lab] = np.sqrt((err**2).mean(axis=0))
        mean_se[lab] = np.asarray(ses[lab]).mean(axis=0)
        emp_sd[lab] = mat.std(axis=0, ddof=1) if mat.shape[0] > 1 else np.full(p_total, np.nan)
        tmse[lab] = float((err**2).mean(axis=0).sum())
        rejection[lab] = np.asarray(rejections[lab], dtype=float).mean(axis=0)
        ad = np.asarray(alpha_disc[lab], dtype=float)
        ac = np.asarray(alpha_cont[lab], dtype=float)
        a_disc_stats[lab] = (float(ad.mean()), float(ad.std(ddof=1)) if ad.size > 1 else np.nan)
        a_cont_stats[lab] = (float(ac.mean()), float(ac.std(ddof=1)) if ac.size > 1 else np.nan)

    ratios = {}
    for i, lab_a in enumerate(labels):
        for lab_b in labels[i + 1 :]:
            if np.isfinite(tmse.get(lab_a, np.nan)) and np.isfinite(tmse.get(lab_b, np.nan)):
                ratios[f"{lab_a}/{lab_b}"] = tmse[lab_a] / tmse[lab_b]

    unreliable = any(n_failed[lab] > 0.01 * spec.reps for lab in labels)
    return MonteCarloSummary(
        scenario=spec,
        estimator_labels=labels,
        param_names=param_names,
        true_values=true_full,
        bias=bias,
        rmse=rmse,
        mean_se=mean_se,
        empirical_sd=emp_sd,
        tmse=tmse,
        tmse_ratios=ratios,
        rejection=rejection,
        alpha_disc_stats=a_disc_stats,
        alpha_cont_stats=a_cont_stats,
        alpha_disc_values={lab: list(alpha_disc[lab]) for lab in labels},
        alpha_cont_values={lab: list(alpha_cont[lab]) for lab in labels},
        n_used=n_used,
        n_failed=n_failed,
        unreliable=unreliable,
        nominal_level=nominal_level,
        failure_notes=failure_notes,
    )
