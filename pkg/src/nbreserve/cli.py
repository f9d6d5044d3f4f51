"""Command line interface.

Subcommands: ``fit`` (model estimates and dispersion report),
``reserve`` (bootstrap predictive distribution), ``simulate``
(coverage study), ``diagnose`` (residual and profile exports).

Every run is deterministic given the input file, flags, and seed. The
default seed comes from the ``NBRESERVE_SEED`` environment variable
(falling back to 0) and is always overridden by ``--seed``. Each run
writes a ``manifest.json`` into the output directory and stamps every
output file with the run id so results can be traced back to the exact
invocation. Exit codes: 0 on success, 1 on model or numerical failure,
2 on input or usage errors.
"""

from __future__ import annotations

import functools
import hashlib
import json
import os
import sys
import time
from pathlib import Path
from typing import List

import click
import numpy as np

from . import __version__, dispersion, predictive, simulation
from .chainladder import chain_ladder
from .diagnostics import export_profile, pearson_residuals, residuals_csv
from .errors import ConfigError, ReservingError, TriangleError
from .glm import Family, fit as glm_fit
from .triangle import read_triangle, to_long

_SEED_ENV = "NBRESERVE_SEED"


def _fail(kind: str, message: str, code: int) -> None:
    payload = {"error": {"kind": kind, "message": message}}
    click.echo(json.dumps(payload), err=True)
    sys.exit(code)


def _guarded(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except FileNotFoundError as exc:
            _fail("FileNotFound", str(exc), 2)
        except (TriangleError, ConfigError) as exc:
            _fail(exc.kind, str(exc), 2)
        except ValueError as exc:
            _fail("InvalidValue", str(exc), 2)
        except ReservingError as exc:
            _fail(exc.kind, str(exc), 1)

    return wrapper


class _Run:
    """Collects outputs for one invocation and writes the manifest."""

    def __init__(self, subcommand: str, params: dict, out_dir: str):
        self.subcommand = subcommand
        self.params = params
        self.out_dir = Path(out_dir)
        self.started = time.time()
        self.outputs: List[str] = []
        canon = json.dumps({"subcommand": subcommand, **params}, sort_keys=True, default=str)
        self.run_id = hashlib.sha256(canon.encode()).hexdigest()[:12]

    def write_text(self, name: str, text: str, stamp: bool = True) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / name
        if stamp:
            text = f"# run_id: {self.run_id}\n" + text
        path.write_text(text, encoding="utf-8")
        self.outputs.append(name)
        return path

    def write_json(self, name: str, payload: dict) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / name
        payload = {"run_id": self.run_id, **payload}
        path.write_text(json.dumps(payload, indent=2, default=str) + "\n", encoding="utf-8")
        self.outputs.append(name)
        return path

    def finish(self) -> None:
        manifest = {
            "run_id": self.run_id,
            "subcommand": self.subcommand,
            "params": self.params,
            "tool": "nbreserve",
            "version": __version__,
            "wall_time_s": round(time.time() - self.started, 3),
            "outputs": self.outputs,
        }
        self.out_dir.mkdir(parents=True, exist_ok=True)
        (self.out_dir / "manifest.json").write_text(
            json.dumps(manifest, indent=2, default=str) + "\n", encoding="utf-8"
        )
        click.echo(f"outputs written to {self.out_dir} (run_id {self.run_id})")


def _load_triangle(path: str, round_amounts: bool):
    if not os.path.exists(path):
        raise FileNotFoundError(f"input file not found: {path}")
    return read_triangle(path, round_amounts=round_amounts)


def _seed_option(func):
    return click.option(
        "--seed",
        type=int,
        envvar=_SEED_ENV,
        default=0,
        show_default=True,
        help=f"RNG seed; defaults to ${_SEED_ENV} when set.",
    )(func)


@click.group()
@click.version_option(__version__, prog_name="nbreserve")
def main():
    """Claims reserving for count triangles with negative binomial models."""


@main.command("fit")
@click.argument("triangle", type=str)
@click.option(
    "--family",
    type=click.Choice(["nb", "poisson", "odp"]),
    default="nb",
    show_default=True,
    help="nb profiles the dispersion; odp is quasi-Poisson.",
)
@click.option("--round-amounts", is_flag=True, help="Round monetary amounts to integer counts.")
@click.option("--out-dir", type=str, default="nbreserve_out", show_default=True)
@_seed_option
@_guarded
def cmd_fit(triangle: str, family: str, round_amounts: bool, out_dir: str, seed: int):
    """Fit the chain-ladder count model and report parameter estimates."""
    t = _load_triangle(triangle, round_amounts)
    run = _Run("fit", {"input": triangle, "family": family, "seed": seed}, out_dir)
    records = to_long(t)
    cl = chain_ladder(t)

    if family == "nb":
        est = dispersion.profile_kappa(records)
        report = dispersion.overdispersion_test(records)
        model = glm_fit(records, Family.negbin(est.kappa_mle))
        future = _future_sum(model)
        payload = {
            "family": "negbin",
            "kappa_mle": est.kappa_mle,
            "kappa_adj": est.kappa_adj,
            "kappa_ci95": list(est.ci95),
            "at_boundary": est.at_boundary,
            "loglik_nb": report.loglik_nb,
            "loglik_poisson": report.loglik_poisson,
            "lambda": report.statistic,
            "p_value": report.p_value,
            "aic_nb": report.aic_nb,
            "aic_poisson": report.aic_poisson,
            "bic_nb": report.bic_nb,
            "bic_poisson": report.bic_poisson,
        }
        lines = [
            f"family               negative binomial (kappa profiled)",
            f"kappa_mle            {est.kappa_mle:.4g}" + ("  [at search boundary]" if est.at_boundary else ""),
            f"kappa 95% CI         [{est.ci95[0]:.4g}, {est.ci95[1]:.4g}]",
            f"kappa_adj            {est.kappa_adj:.4g}",
            f"LRT vs Poisson       {report.statistic:.1f} (p = {report.p_value:.3g})",
            f"AIC (NB / Poisson)   {report.aic_nb:.1f} / {report.aic_poisson:.1f}",
        ]
    else:
        fam = Family.poisson() if family == "poisson" else Family.quasi_poisson()
        model = glm_fit(records, fam)
        future = _future_sum(model)
        payload = {
            "family": model.family.tag,
            "loglik": model.loglik,
            "deviance": model.deviance,
        }
        lines = [f"family               {model.family.tag}"]
        if family == "odp":
            payload["phi"] = model.phi
            lines.append(f"phi (Pearson)        {model.phi:.4g}")

    payload.update(
        {
            "expected_ultimates": np.exp(model.simplex_alpha).tolist(),
            "dev_weights": model.dev_weights.tolist(),
            "future_sum": future,
            "cl_total_reserve": cl.total_reserve,
            "condition_number": model.condition_number,
            "n_obs": model.n_obs,
            "n_params": model.n_params,
        }
    )
    lines += [
        f"future sum           {future:.1f}",
        f"chain-ladder total   {cl.total_reserve:.1f}",
        f"condition number     {model.condition_number:.3g}",
    ]
    if model.condition_number > 1e3:
        lines.append("warning: weighted information is poorly conditioned")
    click.echo("\n".join(lines))
    run.write_json("fit.json", payload)
    run.finish()


def _future_sum(model) -> float:
    total = 0.0
    for i in range(1, model.n_ay + 1):
        for j in range(model.n_dy):
            if i + j > model.n_ay:
                total += model.mu_at(i, j)
    return total


@main.command("reserve")
@click.argument("triangle", type=str)
@click.option("-B", "--bootstrap", "b", type=int, default=5000, show_default=True, help="Bootstrap replicates.")
@click.option("--level", "levels", type=float, multiple=True, default=(0.95,), show_default=True)
@click.option("--no-correct", is_flag=True, help="Skip the dispersion bias correction.")
@click.option("--threads", type=int, default=None, help="Worker processes; defaults to the CPU count.")
@click.option("--round-amounts", is_flag=True)
@click.option("--out-dir", type=str, default="nbreserve_out", show_default=True)
@_seed_option
@_guarded
def cmd_reserve(triangle, b, levels, no_correct, threads, round_amounts, out_dir, seed):
    """Bootstrap the predictive reserve distribution."""
    t = _load_triangle(triangle, round_amounts)
    workers = threads if threads is not None else (os.cpu_count() or 1)
    run = _Run(
        "reserve",
        {"input": triangle, "b": b, "levels": sorted(levels), "correct": not no_correct, "seed": seed},
        out_dir,
    )
    dist = predictive.bootstrap(t, b=b, correct=not no_correct, seed=seed, workers=workers)
    summaries = predictive.summarize(dist, levels)

    label = dist.origin_label if isinstance(dist.origin_label, int) else 1
    table = ["accident_year  point      lower      upper      cv_percent"]
    csv_lines = ["ay,level,point,lower,upper,cv_percent"]
    for level in sorted(levels):
        for i, row in zip(sorted(dist.draws_by_ay), predictive.ay_summary(dist, level)):
            csv_lines.append(
                f"{label + i - 1},{level:g},{row.point:.2f},{row.lower:.2f},{row.upper:.2f},{row.cv_percent:.2f}"
            )
            if level == max(levels):
                table.append(
                    f"{label + i - 1:<14d} {row.point:<10.0f} {row.lower:<10.0f} {row.upper:<10.0f} {row.cv_percent:.1f}"
                )
        total = next(s for s in summaries if s.level == level)
        csv_lines.append(
            f"total,{level:g},{total.point:.2f},{total.lower:.2f},{total.upper:.2f},{total.cv_percent:.2f}"
        )
        if level == max(levels):
            table.append(
                f"{'total':<14s} {total.point:<10.0f} {total.lower:<10.0f} {total.upper:<10.0f} {total.cv_percent:.1f}"
            )
    table.append(
        f"kappa_mle {dist.kappa_mle:.4g}; kappa_adj {dist.kappa_adj:.4g}; "
        f"b_effective {dist.b_effective}; refit failures {dist.refit_failures}"
    )
    click.echo("\n".join(table))

    run.write_json("reserve.json", predictive.summary_json(dist, levels))
    run.write_text("reserve.csv", "\n".join(csv_lines) + "\n")
    run.write_text("draws.csv", predictive.draws_csv(dist))
    run.finish()


@main.command("simulate")
@click.option("--scenario", type=click.Choice(list(simulation.SCENARIOS)), default="correct", show_default=True)
@click.option("--kappa", type=float, default=10.0, show_default=True, help="True dispersion for NB scenarios.")
@click.option("--nsim", type=int, default=50, show_default=True, help="Simulation replicates.")
@click.option("-B", "--bootstrap", "b", type=int, default=200, show_default=True, help="Bootstrap replicates per fit.")
@click.option("--threads", type=int, default=None, help="Worker processes; defaults to the CPU count.")
@click.option("--config", "config_path", type=str, default=None, help="JSON file overriding the default DGP.")
@click.option("--out-dir", type=str, default="nbreserve_out", show_default=True)
@_seed_option
@_guarded
def cmd_simulate(scenario, kappa, nsim, b, threads, config_path, out_dir, seed):
    """Run a frequentist coverage study against a known process."""
    overrides = {"scenario": scenario, "kappa_true": kappa, "n_sim": nsim, "b": b, "seed": seed}
    if config_path is not None:
        if not os.path.exists(config_path):
            raise FileNotFoundError(f"config file not found: {config_path}")
        with open(config_path, "r", encoding="utf-8") as fh:
            loaded = json.load(fh)
        for key in ("true_alpha", "true_dev_weights", "kappa_by_dy"):
            if key in loaded and loaded[key] is not None:
                loaded[key] = tuple(loaded[key])
        overrides.update(loaded)
    config = simulation.default_config(**overrides)
    workers = threads if threads is not None else (os.cpu_count() or 1)
    run = _Run(
        "simulate",
        {"scenario": config.scenario, "kappa": config.kappa_true, "nsim": config.n_sim, "b": config.b, "seed": config.seed},
        out_dir,
    )
    result = simulation.run_study(config, workers=workers)
    csv_text = simulation.study_csv(result)
    click.echo(csv_text.rstrip("\n"))
    run.write_text("study.csv", csv_text)
    run.write_json("study.json", simulation.study_json(result))
    run.finish()


@main.command("diagnose")
@click.argument("triangle", type=str)
@click.option("--round-amounts", is_flag=True)
@click.option("--out-dir", type=str, default="nbreserve_out", show_default=True)
@_seed_option
@_guarded
def cmd_diagnose(triangle, round_amounts, out_dir, seed):
    """Export Pearson residuals and the dispersion profile curve."""
    t = _load_triangle(triangle, round_amounts)
    run = _Run("diagnose", {"input": triangle, "seed": seed}, out_dir)
    records = to_long(t)
    est = dispersion.profile_kappa(records)
    model = glm_fit(records, Family.negbin(est.kappa_mle))
    rs = pearson_residuals(model)
    run.write_text("residuals.csv", residuals_csv(rs))
    run.write_text("profile.csv", export_profile(est))
    click.echo(
        f"{len(rs)} cells; kappa_mle {est.kappa_mle:.4g} "
        f"(95% CI [{est.ci95[0]:.4g}, {est.ci95[1]:.4g}]); "
        f"max |pearson| {np.max(np.abs(rs.pearson)):.2f}"
    )
    run.finish()


if __name__ == "__main__":
    main()
