"""Command-line entry points mirroring the HTTP service for batch use."""

from __future__ import annotations

import json
import sys
from datetime import date
from pathlib import Path

import click

from .alloc import AllocationProblem, pareto_sweep, solve, verify_plan
from .cohort import (AttributeManifest, SubpopulationFilter,
                     aggregate_prevalence, extract_calibration,
                     parse_cohort_csv, projected_mortality, stats_to_csv,
                     stats_to_json)
from .fitting import FitConfig, backtest as run_backtest, fit_many, load_series_csv
from .policy import (PolicySchedule, build_observations, fit_tree,
                     load_policy_log_csv, policy_from_string,
                     simulate_scenario)
from .export import daily_series, daily_series_csv


@click.group()
def main():
    """Epidemic forecasting, policy scenarios, and ventilator allocation."""


def _calibration(cohort_csv):
    records = parse_cohort_csv(cohort_csv) if cohort_csv else []
    return extract_calibration(records)


@main.command()
@click.argument("cohort_csv", type=click.Path(exists=True))
@click.option("--attribute", "-a", multiple=True,
              help="Attributes to aggregate; default: all in the manifest.")
@click.option("--region", default=None)
@click.option("--severity", default=None)
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]),
              default="csv")
def ingest(cohort_csv, attribute, region, severity, fmt):
    """Validate a cohort CSV and print aggregate statistics."""
    manifest = AttributeManifest.load()
    records = parse_cohort_csv(cohort_csv, manifest)
    subpop = SubpopulationFilter(region=region or None,
                                 severity=severity or None)
    names = list(attribute) or list(manifest.attributes)
    stats = [aggregate_prevalence(records, a, subpop, manifest)
             for a in names]
    stats.append(projected_mortality(records, subpop))
    click.echo(stats_to_csv(stats) if fmt == "csv" else stats_to_json(stats),
               nl=False)


@main.command()
@click.argument("series_csv", type=click.Path(exists=True))
@click.option("--cohort-csv", type=click.Path(exists=True), default=None,
              help="Cohort database for rate calibration (defaults used otherwise).")
@click.option("--out", type=click.Path(), default=None,
              help="Write fit results JSON here instead of stdout.")
@click.option("--seed", type=int, default=0)
@click.option("--n-starts", type=int, default=24)
@click.option("--workers", type=int, default=1)
def fit(series_csv, cohort_csv, out, seed, n_starts, workers):
    """Fit model parameters for every qualifying region in a series CSV."""
    series = load_series_csv(series_csv)
    if not series:
        raise click.ClickException("no region passes the inclusion rule")
    config = FitConfig(seed=seed, n_starts=n_starts)
    results = fit_many(series, _calibration(cohort_csv), config,
                       max_workers=workers)
    payload = json.dumps({rid: r.to_dict()
                          for rid, r in sorted(results.items())}, indent=2)
    if out:
        Path(out).write_text(payload)
        click.echo(f"wrote {out}")
    else:
        click.echo(payload)


@main.command(name="backtest")
@click.argument("series_csv", type=click.Path(exists=True))
@click.option("--cutoff", required=True, help="Fit on data through this date.")
@click.option("--horizon-end", required=True,
              help="Score MAPE on dates up to this date.")
@click.option("--cohort-csv", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=0)
def backtest_cmd(series_csv, cutoff, horizon_end, cohort_csv, seed):
    """Out-of-sample evaluation: per-region MAPE table plus medians."""
    import numpy as np
    series = load_series_csv(series_csv)
    if not series:
        raise click.ClickException("no region passes the inclusion rule")
    calib = _calibration(cohort_csv)
    config = FitConfig(seed=seed)
    cut = date.fromisoformat(cutoff)
    end = date.fromisoformat(horizon_end)
    rows = []
    click.echo("region_id,mape_cases,mape_deaths")
    for rid, s in sorted(series.items()):
        try:
            res = run_backtest(s, calib, cut, end, config)
        except ValueError as exc:
            click.echo(f"# skipped {rid}: {exc}", err=True)
            continue
        rows.append((res.mape_cases, res.mape_deaths))
        click.echo(f"{rid},{res.mape_cases:.3f},{res.mape_deaths:.3f}")
    if rows:
        arr = np.array(rows)
        click.echo(f"# median_mape_cases={np.median(arr[:, 0]):.3f} "
                   f"median_mape_deaths={np.median(arr[:, 1]):.3f}")


@main.command()
@click.argument("fit_json", type=click.Path(exists=True))
@click.argument("series_csv", type=click.Path(exists=True))
@click.argument("policy_log_csv", type=click.Path(exists=True))
@click.option("--region", required=True)
@click.option("--change", "changes", multiple=True,
              help="DATE:POLICY_CLASS entries, repeatable.")
@click.option("--horizon", type=float, default=120.0)
@click.option("--transition-days", type=float, default=10.0)
@click.option("--max-depth", type=int, default=4)
@click.option("--min-leaf", type=int, default=10)
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]),
              default="csv")
def scenario(fit_json, series_csv, policy_log_csv, region, changes, horizon,
             transition_days, max_depth, min_leaf, fmt):
    """Project a counterfactual policy schedule for one region."""
    from .fitting import FitResult
    raw = json.loads(Path(fit_json).read_text())
    fits = {rid: FitResult.from_dict(d) for rid, d in raw.items()}
    if region not in fits:
        raise click.ClickException(f"region {region} not in {fit_json}")
    series = load_series_csv(series_csv)
    if region not in series:
        raise click.ClickException(f"region {region} not in {series_csv}")
    log = load_policy_log_csv(policy_log_csv)
    usable = {rid: fr for rid, fr in fits.items() if fr.converged}
    tree = fit_tree(build_observations(usable, log), max_depth, min_leaf)
    try:
        entries = []
        for item in changes:
            day, _, pol = item.partition(":")
            entries.append((date.fromisoformat(day), policy_from_string(pol)))
        schedule = PolicySchedule(region_id=region, entries=tuple(entries))
        s = series[region]
        traj = simulate_scenario(fits[region].params, tree, schedule,
                                 horizon, transition_days,
                                 cases0=float(s.cumulative_cases[0]),
                                 deaths0=float(s.cumulative_deaths[0]))
    except ValueError as exc:
        raise click.ClickException(str(exc))
    daily = daily_series(traj)
    if fmt == "csv":
        click.echo(daily_series_csv(daily), nl=False)
    else:
        click.echo(json.dumps(daily, indent=2))


@main.command()
@click.argument("problem_json", type=click.Path(exists=True))
@click.option("--transfers-csv", type=click.Path(), default=None)
def allocate(problem_json, transfers_csv):
    """Solve a ventilator allocation problem and print the plan."""
    prob = AllocationProblem.from_dict(
        json.loads(Path(problem_json).read_text()))
    plan = solve(prob)
    verify_plan(plan)
    if transfers_csv:
        Path(transfers_csv).write_text(plan.transfers_csv())
    click.echo(plan.to_json())


@main.command()
@click.argument("problem_json", type=click.Path(exists=True))
@click.option("--rho", "rhos", multiple=True, type=float,
              default=(0.0, 0.05, 0.1, 0.2, 0.3, 0.5))
def sweep(problem_json, rhos):
    """Pooling-fraction sweep: shortage/distance frontier points."""
    prob = AllocationProblem.from_dict(
        json.loads(Path(problem_json).read_text()))
    points = pareto_sweep(prob, list(rhos))
    click.echo(json.dumps({"frontier": points}, indent=2))


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None, help="Service config JSON.")
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
def serve(config_path, host, port):
    """Run the HTTP service."""
    import uvicorn
    from .service import ServiceConfig, create_app
    cfg = ServiceConfig.load(Path(config_path) if config_path else None)
    if host:
        cfg.host = host
    if port:
        cfg.port = port
    uvicorn.run(create_app(cfg), host=cfg.host, port=cfg.port)


if __name__ == "__main__":
    sys.exit(main())
