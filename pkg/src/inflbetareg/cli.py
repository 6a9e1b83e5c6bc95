"""Batch command-line interface: fit, simulate, diagnose.

Exit codes are a stable contract for scripting: 0 on success, 2 for input
problems (unreadable files, bad formulas, rank-deficient designs), 3 for
numerical failures (non-convergence, singular covariance).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import secrets
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .diagnostics import by_part_residuals, envelope, quantile_residuals, robust_weights
from .fitting import ESTIMATORS, FitResult, fit_model
from .inference import SingularMatrixError, wald_test_value
from .links import LinkSpec
from .model import EvaluationError, ObservationSet
from .optimize import InputError
from .simulate import EstimatorSpec, MonteCarloSummary, ScenarioSpec, run_monte_carlo
from .special import DomainError, QuadratureError
from .tuning import NonConvergenceError, TuningGrid

SCHEMA_VERSION = 1

_INPUT_ERRORS = (FileNotFoundError, KeyError, ValueError, InputError, EvaluationError)
_NUMERICAL_ERRORS = (
    NonConvergenceError,
    SingularMatrixError,
    QuadratureError,
    DomainError,
    np.linalg.LinAlgError,
    FloatingPointError,
)


@dataclass
class ModelFormula:
    """Binds CSV columns to the three submodels; intercepts are implicit."""

    response: str
    c: int = 0
    discrete: list = field(default_factory=list)
    mean: list = field(default_factory=list)
    precision: list = field(default_factory=list)
    links: dict = field(default_factory=lambda: {"theta": "logit", "mu": "logit", "phi": "log"})

    def to_dict(self) -> dict:
        return {
            "response": self.response,
            "c": self.c,
            "discrete": list(self.discrete),
            "mean": list(self.mean),
            "precision": list(self.precision),
            "links": dict(self.links),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ModelFormula":
        return cls(**payload)

    def link_spec(self) -> LinkSpec:
        return LinkSpec.from_names(
            theta=self.links["theta"], mu=self.links["mu"], phi=self.links["phi"]
        )


def load_dataset(csv_path, formula: ModelFormula, clamp: float | None = None,
                 drop_rows=()) -> ObservationSet:
    """Read a CSV (UTF-8, header row) into an ObservationSet.

    ``drop_rows`` holds 1-based data row numbers to exclude.  ``clamp``
    replaces responses sitting exactly on the non-inflated endpoint by a
    value ``clamp`` away from it, mirroring the usual pre-adjustment of
    boundary observations.
    """
    frame = pd.read_csv(csv_path)
    needed = [formula.response, *formula.discrete, *formula.mean, *formula.precision]
    missing = [col for col in needed if col not in frame.columns]
    if missing:
        raise KeyError(f"columns not present in {csv_path}: {missing}")
    if drop_rows:
        drop_rows = sorted(set(int(r) for r in drop_rows))
        bad = [r for r in drop_rows if not 1 <= r <= len(frame)]
        if bad:
            raise ValueError(f"--drop-rows out of range: {bad}")
        frame = frame.drop(index=[r - 1 for r in drop_rows]).reset_index(drop=True)
    y = frame[formula.response].to_numpy(dtype=float)
    if np.any((y < 0.0) | (y > 1.0)):
        raise ValueError("response values must lie in [0, 1]")
    if clamp is not None:
        if not 0.0 < clamp < 0.5:
            raise ValueError("--clamp must lie in (0, 0.5)")
        if formula.c == 0:
            y = np.where(y == 1.0, 1.0 - clamp, y)
        else:
            y = np.where(y == 0.0, clamp, y)

    def design(cols):
        mat = np.ones((len(frame), 1 + len(cols)))
        for j, col in enumerate(cols):
            mat[:, j + 1] = frame[col].to_numpy(dtype=float)
        return mat

    return ObservationSet(
        y=y,
        S=design(formula.discrete),
        X=design(formula.mean),
        Z=design(formula.precision),
        c=formula.c,
    )


def _labels(formula: ModelFormula) -> list:
    def block(prefix, cols):
        return [f"{prefix}:intercept"] + [f"{prefix}:{c}" for c in cols]

    return (
        block("theta", formula.discrete)
        + block("mu", formula.mean)
        + block("phi", formula.precision)
    )


def coefficient_table(fit: FitResult) -> pd.DataFrame:
    rows = []
    for j, label in enumerate(fit.labels):
        est = fit.params.full[j]
        se = fit.cov.se[j]
        test = wald_test_value(est, se, 0.0, j)
        rows.append(
            {"term": label, "estimate": est, "se": se, "z": test.z, "p_value": test.p_value}
        )
    return pd.DataFrame(rows)


def render_report(fit: FitResult, seed: int | None) -> str:
    table = coefficient_table(fit)
    lines = [
        f"zero-or-one inflated beta regression (c={fit.c}), estimator: {fit.estimator}",
        f"n = {fit.n_obs}, continuous subsample = {fit.n_cont}",
        f"tuning constants: discrete {fit.tuning.alpha_disc:.2f}, "
        f"continuous {fit.tuning.alpha_cont:.2f}",
        f"converged: {fit.converged} "
        f"(discrete {fit.disc_report.iterations} it, continuous {fit.cont_report.iterations} it)",
    ]
    if seed is not None:
        lines.append(f"seed: {seed}")
    lines.append("")
    header = f"{'term':<22}{'estimate':>12}{'se':>10}{'z':>10}{'p-value':>10}"
    for prefix, title in (("theta:", "point-mass submodel"),
                          ("mu:", "mean submodel"),
                          ("phi:", "precision submodel")):
        lines.append(title)
        lines.append(header)
        sub = table[table["term"].str.startswith(prefix)]
        for _, row in sub.iterrows():
            lines.append(
                f"{row['term']:<22}{row['estimate']:>12.3f}{row['se']:>10.3f}"
                f"{row['z']:>10.3f}{row['p_value']:>10.3f}"
            )
        lines.append("")
    return "\n".join(lines)


def write_artifact(path: Path, fit: FitResult, formula: ModelFormula, csv_path,
                   drop_rows, clamp, seed) -> None:
    payload = {
        "schema_version": SCHEMA_VERSION,
        "fit": fit.to_dict(),
        "formula": formula.to_dict(),
        "data": {
            "csv": str(csv_path),
            "drop_rows": sorted(int(r) for r in drop_rows) if drop_rows else [],
            "clamp": clamp,
        },
        "seed": seed,
    }
    path.write_text(json.dumps(payload, indent=2))


def read_artifact(path) -> dict:
    payload = json.loads(Path(path).read_text())
    if payload.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported artifact schema: {payload.get('schema_version')}")
    return payload


def _split_columns(raw: str | None) -> list:
    if not raw:
        return []
    return [c.strip() for c in raw.split(",") if c.strip()]


def _alpha_policy(value: str):
    if value == "auto":
        return "auto"
    alpha = float(value)
    return alpha


def _parse_grid(raw: str | None) -> TuningGrid | None:
    """Compact grid override: 'spacing,first_phase_end,alpha_max[,L[,m]]'."""
    if raw is None:
        return None
    parts = [p.strip() for p in raw.split(",")]
    if len(parts) < 3:
        raise ValueError("grid override needs at least spacing,first_phase_end,alpha_max")
    spacing, end, amax = (float(p) for p in parts[:3])
    L = float(parts[3]) if len(parts) > 3 else 0.02
    m = int(parts[4]) if len(parts) > 4 else 3
    return TuningGrid(start=0.0, first_phase_end=end, spacing=spacing, alpha_max=amax, L=L, m=m)


def cmd_fit(args) -> int:
    formula = ModelFormula(
        response=args.response,
        c=args.inflation,
        discrete=_split_columns(args.discrete),
        mean=_split_columns(args.mean),
        precision=_split_columns(args.precision),
        links={"theta": args.link_theta, "mu": args.link_mu, "phi": args.link_phi},
    )
    drop_rows = [int(r) for r in _split_columns(args.drop_rows)]
    obs = load_dataset(args.csv, formula, clamp=args.clamp, drop_rows=drop_rows)
    seed = args.seed if args.seed is not None else secrets.randbits(32)
    alpha_base = _alpha_policy(args.alpha)
    alpha_disc = _alpha_policy(args.alpha_disc) if args.alpha_disc is not None else alpha_base
    alpha_cont = _alpha_policy(args.alpha_cont) if args.alpha_cont is not None else alpha_base
    grids = (_parse_grid(args.grid_cont), _parse_grid(args.grid_disc))
    fit = fit_model(
        obs,
        formula.link_spec(),
        estimator=args.estimator,
        alpha_disc=alpha_disc,
        alpha_cont=alpha_cont,
        grids=grids,
        labels=_labels(formula),
    )
    if not fit.converged:
        raise NonConvergenceError("model fit did not converge")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = render_report(fit, seed)
    (out / "report.txt").write_text(report)
    coefficient_table(fit).to_csv(out / "coefficients.csv", index=False)
    weights = pd.DataFrame(
        {"row": obs.partition.wp + 1, "weight": fit.weights}
    ).sort_values("weight", ascending=False)
    weights.to_csv(out / "weights.csv", index=False)
    write_artifact(out / "fit.json", fit, formula, args.csv, drop_rows, args.clamp, seed)
    print(report)
    print(f"artifacts written to {out}")
    return 0


def summary_frames(summary: MonteCarloSummary) -> dict:
    """Monte Carlo summary as table-shaped DataFrames keyed by file stem."""
    rows = []
    for j, name in enumerate(summary.param_names):
        row = {"parameter": name, "true": summary.true_values[j]}
        for lab in summary.estimator_labels:
            row[f"bias_{lab}"] = summary.bias[lab][j]
            row[f"rmse_{lab}"] = summary.rmse[lab][j]
        rows.append(row)
    bias_rmse = pd.DataFrame(rows)

    alpha_rows = []
    for lab in summary.estimator_labels:
        mean_d, sd_d = summary.alpha_disc_stats[lab]
        mean_c, sd_c = summary.alpha_cont_stats[lab]
        alpha_rows.append(
            {
                "estimator": lab,
                "alpha_disc_mean": mean_d,
                "alpha_disc_sd": sd_d,
                "alpha_cont_mean": mean_c,
                "alpha_cont_sd": sd_c,
            }
        )
    alphas = pd.DataFrame(alpha_rows)

    tmse_rows = [{"pair": pair, "tmse_ratio": value} for pair, value in summary.tmse_ratios.items()]
    tmse = pd.DataFrame(tmse_rows)

    wald_rows = []
    for j, name in enumerate(summary.param_names):
        row = {"parameter": name}
        for lab in summary.estimator_labels:
            row[f"rejection_{lab}"] = summary.rejection[lab][j]
        wald_rows.append(row)
    wald = pd.DataFrame(wald_rows)
    return {"bias_rmse": bias_rmse, "alpha_summary": alphas, "tmse_ratios": tmse,
            "wald_levels": wald}


def load_scenario(path) -> tuple:
    """Parse a scenario TOML into (ScenarioSpec, estimator specs, grids)."""
    with open(path, "rb") as handle:
        cfg = tomllib.load(handle)
    try:
        sc = cfg["scenario"]
        dgp = cfg["dgp"]
        spec = ScenarioSpec(
            n=sc["n"],
            kappa=dgp["kappa"],
            beta=dgp["beta"],
            gamma=dgp["gamma"],
            c=dgp.get("c", 0),
            contaminate_continuous=sc.get("contaminate_continuous", False),
            contaminate_discrete=sc.get("contaminate_discrete", False),
            rate=sc.get("rate", 0.05),
            reps=sc["reps"],
            seed=sc.get("seed", 0),
            redraw_covariates=sc.get("redraw_covariates", True),
        )
        est_cfg = cfg.get("estimators", {})
        names = est_cfg.get("include", ["mle", "mlse", "mlme"])
        alpha = est_cfg.get("alpha", "auto")
        estimators = [
            EstimatorSpec(name, "auto" if alpha == "auto" else alpha,
                          "auto" if alpha == "auto" else alpha)
            if name != "mle"
            else EstimatorSpec("mle", 0.0, 0.0)
            for name in names
        ]
        grids = (None, None)
        if "grids" in cfg:
            g = cfg["grids"]

            def grid_of(prefix):
                if f"{prefix}_spacing" not in g:
                    return None
                return TuningGrid(
                    start=g.get(f"{prefix}_start", 0.0),
                    first_phase_end=g[f"{prefix}_first_phase_end"],
                    spacing=g[f"{prefix}_spacing"],
                    alpha_max=g[f"{prefix}_alpha_max"],
                    L=g.get(f"{prefix}_L", 0.02),
                    m=g.get(f"{prefix}_m", 3),
                )

            grids = (grid_of("continuous"), grid_of("discrete"))
        return spec, estimators, grids
    except KeyError as exc:
        raise KeyError(f"scenario config {path} is missing field {exc}") from None


def cmd_simulate(args) -> int:
    spec, estimators, grids = load_scenario(args.config)
    if args.reps is not None:
        spec = dataclasses.replace(spec, reps=args.reps)
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
    summary = run_monte_carlo(spec, estimators, grids=grids, progress=args.progress)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    frames = summary_frames(summary)
    for stem, frame in frames.items():
        frame.to_csv(out / f"{stem}.csv", index=False)
    machine = {
        "scenario": {**spec.__dict__, "kappa": list(spec.kappa), "beta": list(spec.beta),
                     "gamma": list(spec.gamma)},
        "tmse": summary.tmse,
        "tmse_ratios": summary.tmse_ratios,
        "n_used": summary.n_used,
        "n_failed": summary.n_failed,
        "unreliable": summary.unreliable,
        "bias": {lab: summary.bias[lab].tolist() for lab in summary.estimator_labels},
        "rmse": {lab: summary.rmse[lab].tolist() for lab in summary.estimator_labels},
        "rejection": {lab: summary.rejection[lab].tolist() for lab in summary.estimator_labels},
        "alpha_disc_stats": summary.alpha_disc_stats,
        "alpha_cont_stats": summary.alpha_cont_stats,
    }
    (out / "summary.json").write_text(json.dumps(machine, indent=2))
    if summary.unreliable:
        print("warning: more than 1% of replications failed; summary flagged unreliable")
    print(f"simulation outputs written to {out}")
    return 0


def _reload_fit(artifact: dict):
    formula = ModelFormula.from_dict(artifact["formula"])
    data = artifact["data"]
    obs = load_dataset(data["csv"], formula, clamp=data.get("clamp"),
                       drop_rows=data.get("drop_rows", ()))
    fit = FitResult.from_dict(artifact["fit"])
    return obs, fit


def cmd_diagnose(args) -> int:
    artifact = read_artifact(args.artifact)
    obs, fit = _reload_fit(artifact)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = args.seed if args.seed is not None else artifact.get("seed") or 0
    links = fit.links
    if args.kind == "residuals":
        quant = quantile_residuals(obs, links, fit, seed=seed)
        parts = by_part_residuals(obs, links, fit)
        pd.DataFrame({"row": np.arange(1, obs.n_obs + 1), "quantile_residual": quant.values,
                      "deviance_discrete": parts.discrete}).to_csv(
            out / "residuals.csv", index=False
        )
        pd.DataFrame({"row": obs.partition.wp + 1, "swr2": parts.continuous}).to_csv(
            out / "residuals_continuous.csv", index=False
        )
    elif args.kind == "weights":
        weights = robust_weights(obs, links, fit, fit.estimator, fit.tuning.alpha_cont)
        quant = quantile_residuals(obs, links, fit, seed=seed)
        frame = pd.DataFrame(
            {
                "row": obs.partition.wp + 1,
                "weight": weights,
                "quantile_residual": quant.values[obs.partition.wp],
            }
        ).sort_values("weight", ascending=False)
        frame.to_csv(out / "weights.csv", index=False)
        if args.svg:
            _weights_svg(frame, out / "weights.svg")
    elif args.kind == "envelope":
        table = envelope(obs, links, fit, n_sim=args.n_sim, band=args.band, seed=seed,
                         refit=args.refit)
        pd.DataFrame(
            {
                "theoretical": table.theoretical,
                "observed": table.observed,
                "lower": table.lower,
                "median": table.median,
                "upper": table.upper,
            }
        ).to_csv(out / "envelope.csv", index=False)
        if args.svg:
            _envelope_svg(table, out / "envelope.svg")
    else:
        raise ValueError(f"unknown diagnostic kind {args.kind!r}")
    print(f"diagnostics written to {out}")
    return 0


def _envelope_svg(table, path) -> None:
    # fixed geometry: 6x6 inch QQ panel, observed points over the band
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 6))
    ax.fill_between(table.theoretical, table.lower, table.upper, color="0.85",
                    label=f"{table.band:.0%} envelope")
    ax.plot(table.theoretical, table.median, color="0.4", lw=1, label="simulated median")
    ax.plot(table.theoretical, table.observed, "o", ms=3, color="black", label="observed")
    ax.set_xlabel("normal quantiles")
    ax.set_ylabel("randomized quantile residuals")
    ax.legend(loc="upper left")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def _weights_svg(frame, path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(frame["quantile_residual"], frame["weight"], "o", ms=4, color="black")
    ax.set_xlabel("quantile residual")
    ax.set_ylabel("robustness weight")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="inflbetareg",
        description="Robust and maximum likelihood inflated beta regression",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit a model to CSV data")
    fit.add_argument("csv", help="input CSV (UTF-8, header row)")
    fit.add_argument("--response", required=True, help="response column name")
    fit.add_argument("--inflation", type=int, choices=(0, 1), default=0,
                     help="inflation point c")
    fit.add_argument("--discrete", default="", help="comma-separated covariates of theta")
    fit.add_argument("--mean", default="", help="comma-separated covariates of mu")
    fit.add_argument("--precision", default="", help="comma-separated covariates of phi")
    fit.add_argument("--estimator", choices=ESTIMATORS, default="mle")
    fit.add_argument("--alpha", default="auto",
                     help="'auto' or a fixed value for both tuning constants")
    fit.add_argument("--alpha-disc", default=None, help="override for the discrete part")
    fit.add_argument("--alpha-cont", default=None, help="override for the continuous part")
    fit.add_argument("--link-theta", default="logit")
    fit.add_argument("--link-mu", default="logit")
    fit.add_argument("--link-phi", default="log")
    fit.add_argument("--clamp", type=float, default=None,
                     help="replace responses on the non-inflated endpoint by this margin")
    fit.add_argument("--drop-rows", default="", help="comma-separated 1-based rows to drop")
    fit.add_argument("--grid-cont", default=None,
                     help="continuous tuning grid: spacing,first_phase_end,alpha_max[,L[,m]]")
    fit.add_argument("--grid-disc", default=None,
                     help="discrete tuning grid override, same format")
    fit.add_argument("--seed", type=int, default=None)
    fit.add_argument("--out", default="fit-output")
    fit.set_defaults(handler=cmd_fit)

    sim = sub.add_parser("simulate", help="run a Monte Carlo scenario from a TOML config")
    sim.add_argument("config", help="scenario TOML")
    sim.add_argument("--out", default="sim-output")
    sim.add_argument("--reps", type=int, default=None, help="override replication count")
    sim.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    sim.add_argument("--progress", action="store_true")
    sim.set_defaults(handler=cmd_simulate)

    diag = sub.add_parser("diagnose", help="residuals, weights, or envelope from a fit artifact")
    diag.add_argument("artifact", help="fit.json from a previous fit")
    diag.add_argument("--kind", choices=("residuals", "envelope", "weights"),
                      default="residuals")
    diag.add_argument("--out", default="diagnostics-output")
    diag.add_argument("--seed", type=int, default=None)
    diag.add_argument("--n-sim", type=int, default=100)
    diag.add_argument("--band", type=float, default=0.95)
    diag.add_argument("--refit", action="store_true",
                      help="re-estimate every simulated envelope dataset")
    diag.add_argument("--svg", action="store_true", help="also render an SVG plot")
    diag.set_defaults(handler=cmd_diagnose)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except _NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except _INPUT_ERRORS as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
