"""Per-region parameter estimation and out-of-sample backtesting.

Seven parameters are searched with multi-start Nelder-Mead in a smooth
box-respecting reparameterization; the in-sample objective is weighted
squared error on log(1+cumulative) cases and deaths.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from datetime import date
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.optimize import least_squares, minimize
from scipy.special import expit
from scipy.stats import qmc

from .cohort import CalibrationBundle
from .model import (DelphiParams, FITTED_NAMES, IntegrationError,
                    ParameterError, initial_state, integrate, observables)

INCLUSION_THRESHOLD = 100  # first fitted day must exceed this many cases


class SeriesError(ValueError):
    pass


@dataclass(frozen=True)
class RegionSeries:
    region_id: str
    dates: tuple                  # strictly increasing calendar dates
    cumulative_cases: np.ndarray
    cumulative_deaths: np.ndarray
    population: float

    def __post_init__(self):
        cases = np.asarray(self.cumulative_cases, dtype=float)
        deaths = np.asarray(self.cumulative_deaths, dtype=float)
        object.__setattr__(self, "cumulative_cases", cases)
        object.__setattr__(self, "cumulative_deaths", deaths)
        if len(self.dates) != len(cases) or len(cases) != len(deaths):
            raise SeriesError("dates/cases/deaths length mismatch")
        if len(self.dates) == 0:
            raise SeriesError("empty series")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise SeriesError("dates must be strictly increasing")
        if np.any(np.diff(cases) < 0) or np.any(np.diff(deaths) < 0):
            raise SeriesError("cumulative series must be nondecreasing")
        if np.any(deaths > cases):
            raise SeriesError("cumulative deaths cannot exceed cases")
        if cases[0] <= INCLUSION_THRESHOLD:
            raise SeriesError(
                f"region {self.region_id}: first included day must exceed "
                f"{INCLUSION_THRESHOLD} cumulative cases")

    def day_offsets(self) -> np.ndarray:
        d0 = self.dates[0]
        return np.array([(d - d0).days for d in self.dates], dtype=float)

    def truncated(self, cutoff: date) -> "RegionSeries":
        """Series restricted to dates <= cutoff (backtests fit on this)."""
        keep = [i for i, d in enumerate(self.dates) if d <= cutoff]
        if not keep:
            raise SeriesError("cutoff precedes the whole series")
        return RegionSeries(
            region_id=self.region_id,
            dates=tuple(self.dates[i] for i in keep),
            cumulative_cases=self.cumulative_cases[keep],
            cumulative_deaths=self.cumulative_deaths[keep],
            population=self.population)


def load_series_csv(path, populations: Optional[dict] = None) -> dict:
    """Load per-region cumulative series from a CSV with columns
    region_id, date, cumulative_cases, cumulative_deaths and optionally
    population. Days at or below the inclusion threshold are dropped."""
    rows = {}
    with Path(path).open(newline="", encoding="utf-8") as f:
        for raw in csv.DictReader(f):
            rid = raw["region_id"].strip()
            pop = raw.get("population")
            rows.setdefault(rid, []).append((
                date.fromisoformat(raw["date"].strip()),
                float(raw["cumulative_cases"]),
                float(raw["cumulative_deaths"]),
                float(pop) if pop else None))
    out = {}
    for rid, entries in rows.items():
        entries.sort(key=lambda e: e[0])
        entries = [e for e in entries if e[1] > INCLUSION_THRESHOLD]
        if not entries:
            continue
        pop = entries[0][3] if entries[0][3] else (populations or {}).get(rid)
        if pop is None:
            raise SeriesError(f"no population known for region {rid}")
        out[rid] = RegionSeries(
            region_id=rid,
            dates=tuple(e[0] for e in entries),
            cumulative_cases=np.array([e[1] for e in entries]),
            cumulative_deaths=np.array([e[2] for e in entries]),
            population=pop)
    return out


DEFAULT_BOUNDS = {
    "alpha": (0.01, 2.0),
    "t0": (0.0, 120.0),
    "k": (1.0, 60.0),
    "p_d": (0.05, 0.8),
    "p_h": (0.02, 0.8),
    "m": (0.005, 0.4),
    "k_i": (0.5, 20.0),
}


@dataclass(frozen=True)
class FitConfig:
    bounds: dict = field(default_factory=lambda: dict(DEFAULT_BOUNDS))
    w_cases: float = 1.0
    w_deaths: float = 3.0
    n_starts: int = 24
    seed: int = 0
    step: float = 1.0            # integration step used inside the loss
    maxiter_start: int = 400     # Nelder-Mead budget per restart
    maxiter_polish: int = 2000
    n_hops: int = 30             # perturb-and-repolish attempts
    polish_target: float = 1e-22  # stop early once the loss is this small
    fit_detected_deaths: bool = True  # fit D_det; False fits total D

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["bounds"] = {k: list(v) for k, v in self.bounds.items()}
        return d


@dataclass
class FitResult:
    params: DelphiParams
    in_sample_loss: float
    loss_cases: float
    loss_deaths: float
    converged: bool
    n_restarts_used: int
    fit_window: tuple            # (start date, end date)
    at_bounds: tuple = ()

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "in_sample_loss": self.in_sample_loss,
            "loss_cases": self.loss_cases,
            "loss_deaths": self.loss_deaths,
            "converged": self.converged,
            "n_restarts_used": self.n_restarts_used,
            "fit_window": [d.isoformat() for d in self.fit_window],
            "at_bounds": list(self.at_bounds),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        return cls(
            params=DelphiParams.from_dict(d["params"]),
            in_sample_loss=d["in_sample_loss"],
            loss_cases=d["loss_cases"],
            loss_deaths=d["loss_deaths"],
            converged=d["converged"],
            n_restarts_used=d["n_restarts_used"],
            fit_window=tuple(date.fromisoformat(s) for s in d["fit_window"]),
            at_bounds=tuple(d.get("at_bounds", ())))


def _model_series(p: DelphiParams, series: RegionSeries, step: float,
                  fit_detected_deaths: bool = True):
    offsets = series.day_offsets()
    horizon = max(float(offsets[-1]), step)
    x0 = initial_state(p, series.cumulative_cases[0],
                       series.cumulative_deaths[0])
    traj = integrate(p, x0, horizon, step)
    obs = observables(traj)
    cases = np.interp(offsets, traj.t, obs["detected_cases"])
    death_col = (obs["detected_deaths"] if fit_detected_deaths
                 else traj.column("D"))
    deaths = np.interp(offsets, traj.t, death_col)
    return cases, deaths


def loss(p: DelphiParams, series: RegionSeries, w_cases: float = 1.0,
         w_deaths: float = 3.0, step: float = 1.0,
         fit_detected_deaths: bool = True):
    """Weighted squared error on log(1+cumulative) scale.

    Returns (total, cases_term, deaths_term). Integration failures yield
    an infinite loss so the candidate is rejected rather than crashing.
    """
    if w_cases <= 0 or w_deaths <= 0:
        raise ValueError("weights must be positive")
    try:
        offsets = series.day_offsets()
        horizon = max(float(offsets[-1]), step)
        x0 = initial_state(p, series.cumulative_cases[0],
                           series.cumulative_deaths[0])
        traj = integrate(p, x0, horizon, step)
    except (IntegrationError, ParameterError):
        # candidate rejected, not crashed
        return math.inf, math.inf, math.inf
    obs = observables(traj)
    cases = np.interp(offsets, traj.t, obs["detected_cases"])
    death_col = obs["detected_deaths"] if fit_detected_deaths else traj.column("D")
    deaths = np.interp(offsets, traj.t, death_col)
    cases_term = float(np.sum(
        (np.log1p(cases) - np.log1p(series.cumulative_cases)) ** 2))
    deaths_term = float(np.sum(
        (np.log1p(deaths) - np.log1p(series.cumulative_deaths)) ** 2))
    return w_cases * cases_term + w_deaths * deaths_term, cases_term, deaths_term


def _to_box(z: np.ndarray, bounds: list) -> np.ndarray:
    """Sigmoid map from unconstrained space into the parameter boxes."""
    u = expit(z)
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    return lo + (hi - lo) * u


def _from_box(v: np.ndarray, bounds: list) -> np.ndarray:
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    u = np.clip((v - lo) / (hi - lo), 1e-9, 1 - 1e-9)
    return np.log(u / (1.0 - u))


class FitError(RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or []


def _residuals(z, base, series, bounds, config):
    """Weighted residual vector whose squared norm equals the loss."""
    p = base.replace_fitted(_to_box(np.asarray(z), bounds))
    n_obs = len(series.dates)
    try:
        cases, deaths = _model_series(p, series, config.step,
                                      config.fit_detected_deaths)
    except (IntegrationError, ParameterError):
        return np.full(2 * n_obs, 1e3)
    return np.concatenate([
        math.sqrt(config.w_cases)
        * (np.log1p(cases) - np.log1p(series.cumulative_cases)),
        math.sqrt(config.w_deaths)
        * (np.log1p(deaths) - np.log1p(series.cumulative_deaths)),
    ])


def fit(series: RegionSeries, calib: CalibrationBundle,
        config: FitConfig = FitConfig()) -> FitResult:
    """Estimate the seven region parameters.

    Deterministic multi-start Nelder-Mead over sigmoid-reparameterized
    boxes, each restart's terminal point sharpened with a least-squares
    polish; if the best loss is still above the polish target, a seeded
    perturb-and-repolish pass follows (the in-sample surface has long,
    nearly flat valleys that a simplex alone crawls through too slowly).
    """
    bounds = [tuple(config.bounds[n]) for n in FITTED_NAMES]
    base = DelphiParams(
        **{n: (lo + hi) / 2 for n, (lo, hi) in zip(FITTED_NAMES, bounds)},
        **calib.rates(), population=series.population,
        start_date=series.dates[0])

    def objective(z):
        p = base.replace_fitted(_to_box(np.asarray(z), bounds))
        total, _, _ = loss(p, series, config.w_cases, config.w_deaths,
                           config.step, config.fit_detected_deaths)
        return total

    def ls_polish(z0):
        res = least_squares(_residuals, z0, method="trf",
                            args=(base, series, bounds, config),
                            xtol=1e-15, ftol=1e-15, gtol=1e-15)
        return float(2.0 * res.cost), res.x

    sampler = qmc.Halton(d=len(bounds), scramble=True, seed=config.seed)
    unit = sampler.random(config.n_starts)
    unit = 0.02 + 0.96 * unit  # keep starts strictly interior
    starts = np.log(unit / (1.0 - unit))

    best_z, best_val = None, math.inf
    diagnostics = []
    for z0 in starts:
        res = minimize(objective, z0, method="Nelder-Mead",
                       options={"maxiter": config.maxiter_start,
                                "xatol": 1e-4, "fatol": 1e-8})
        diagnostics.append((float(res.fun), bool(res.success)))
        if not math.isfinite(res.fun):
            continue
        val, z = ls_polish(res.x)
        if val < best_val:
            best_val, best_z = val, z
        if best_val < config.polish_target:
            break
    if best_z is None or not math.isfinite(best_val):
        raise FitError("all restarts failed integration",
                       diagnostics=diagnostics)

    hop_rng = np.random.default_rng(config.seed + 1)
    for _ in range(config.n_hops):
        if best_val < config.polish_target:
            break
        val, z = ls_polish(best_z + hop_rng.normal(0.0, 0.3, size=len(bounds)))
        if val < best_val:
            best_val, best_z = val, z

    polish = minimize(objective, best_z, method="Nelder-Mead",
                      options={"maxiter": config.maxiter_polish,
                               "xatol": 1e-9, "fatol": 1e-24})
    if polish.fun <= best_val:
        best_val, best_z = float(polish.fun), polish.x

    vec = _to_box(best_z, bounds)
    at_bounds = tuple(
        name for name, v, (lo, hi) in zip(FITTED_NAMES, vec, bounds)
        if v - lo < 1e-6 * (hi - lo) or hi - v < 1e-6 * (hi - lo))
    params = base.replace_fitted(vec)
    total, cases_term, deaths_term = loss(
        params, series, config.w_cases, config.w_deaths, config.step,
        config.fit_detected_deaths)
    return FitResult(
        params=params, in_sample_loss=total, loss_cases=cases_term,
        loss_deaths=deaths_term,
        converged=math.isfinite(total),
        n_restarts_used=len(starts),
        fit_window=(series.dates[0], series.dates[-1]),
        at_bounds=at_bounds)


def fit_many(series_map: dict, calib: CalibrationBundle,
             config: FitConfig = FitConfig(), max_workers: int = 1) -> dict:
    """Fit each region independently; regions are embarrassingly parallel."""
    if max_workers <= 1:
        return {rid: fit(s, calib, config) for rid, s in series_map.items()}
    from concurrent.futures import ProcessPoolExecutor
    with ProcessPoolExecutor(max_workers=max_workers) as pool:
        futures = {rid: pool.submit(fit, s, calib, config)
                   for rid, s in series_map.items()}
        return {rid: f.result() for rid, f in futures.items()}


def mape(predicted: np.ndarray, actual: np.ndarray) -> float:
    """Mean absolute percentage error, in percent; zero actuals excluded."""
    predicted = np.asarray(predicted, dtype=float)
    actual = np.asarray(actual, dtype=float)
    mask = actual != 0
    if not np.any(mask):
        raise ValueError("no nonzero actuals in the evaluation window")
    return float(np.mean(np.abs(predicted[mask] - actual[mask])
                         / actual[mask]) * 100.0)


@dataclass
class BacktestResult:
    region_id: str
    mape_cases: float
    mape_deaths: float
    fit_result: FitResult
    cutoff: date
    horizon_end: date

    def to_dict(self) -> dict:
        return {
            "region_id": self.region_id,
            "mape_cases": self.mape_cases,
            "mape_deaths": self.mape_deaths,
            "cutoff": self.cutoff.isoformat(),
            "horizon_end": self.horizon_end.isoformat(),
            "fit": self.fit_result.to_dict(),
        }


def backtest(series: RegionSeries, calib: CalibrationBundle, cutoff: date,
             horizon_end: date, config: FitConfig = FitConfig()
             ) -> BacktestResult:
    """Fit on data through the cutoff, project forward, score MAPE on the
    held-out cumulative series. The fit only ever sees the truncated
    series, so post-cutoff data cannot leak in by construction."""
    if cutoff >= horizon_end:
        raise ValueError("cutoff must precede horizon_end")
    if cutoff < series.dates[0] or horizon_end > series.dates[-1]:
        raise ValueError("cutoff and horizon_end must lie within the series")
    train = series.truncated(cutoff)
    result = fit(train, calib, config)
    p = result.params

    eval_idx = [i for i, d in enumerate(series.dates)
                if cutoff < d <= horizon_end]
    if not eval_idx:
        raise ValueError("empty evaluation window")
    d0 = train.dates[0]
    offsets = np.array([(series.dates[i] - d0).days for i in eval_idx],
                       dtype=float)
    x0 = initial_state(p, train.cumulative_cases[0],
                       train.cumulative_deaths[0])
    traj = integrate(p, x0, float(offsets[-1]), config.step)
    obs = observables(traj)
    pred_cases = np.interp(offsets, traj.t, obs["detected_cases"])
    pred_deaths = np.interp(offsets, traj.t, obs["detected_deaths"])
    return BacktestResult(
        region_id=series.region_id,
        mape_cases=mape(pred_cases, series.cumulative_cases[eval_idx]),
        mape_deaths=mape(pred_deaths, series.cumulative_deaths[eval_idx]),
        fit_result=result, cutoff=cutoff, horizon_end=horizon_end)
