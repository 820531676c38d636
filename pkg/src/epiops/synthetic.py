"""Deterministic synthetic benchmarks.

Real historical county data and the published cohort CSV are not shipped;
these generators produce the desk-scale stand-ins used by the test suite:
regions simulated from known parameters (so fits can be checked against
ground truth), policy observation sets with monotone policy effects, and a
51-region allocation instance driven by the simulated epidemics.
"""

from __future__ import annotations

from datetime import date, timedelta

import numpy as np

from .cohort import CalibrationBundle, extract_calibration
from .fitting import RegionSeries
from .model import DelphiParams, initial_state, integrate, observables
from .policy import GammaObservation, Policy

BENCHMARK_START = date(2020, 3, 15)

# interior of the default fit boxes, so recovery tests are fair but not rigged
_FITTED_RANGES = {
    "alpha": (0.15, 0.9),
    "t0": (10.0, 45.0),
    "k": (5.0, 25.0),
    "p_d": (0.1, 0.5),
    "p_h": (0.1, 0.5),
    "m": (0.02, 0.2),
    "k_i": (1.0, 6.0),
}


def default_calibration() -> CalibrationBundle:
    return extract_calibration([])


def make_params(rng: np.random.Generator, population: float,
                calib: CalibrationBundle,
                start_date: date = BENCHMARK_START) -> DelphiParams:
    drawn = {name: rng.uniform(lo, hi)
             for name, (lo, hi) in _FITTED_RANGES.items()}
    return DelphiParams(**drawn, **calib.rates(), population=population,
                        start_date=start_date)


def make_region_series(params: DelphiParams, n_days: int,
                       region_id: str, cases0: float = 150.0,
                       deaths0: float = 2.0, noise: float = 0.0,
                       rng: np.random.Generator = None,
                       round_counts: bool = True,
                       step: float = 0.5) -> RegionSeries:
    """Simulate a region and sample daily cumulative observations, with
    optional multiplicative noise (monotonicity restored afterwards).
    round_counts=False keeps exact model values, for recovery oracles."""
    x0 = initial_state(params, cases0, deaths0)
    traj = integrate(params, x0, float(n_days), step)
    obs = observables(traj)
    days = np.arange(n_days + 1, dtype=float)
    cases = np.interp(days, traj.t, obs["detected_cases"])
    deaths = np.interp(days, traj.t, obs["detected_deaths"])
    if noise > 0:
        if rng is None:
            raise ValueError("noise requires an rng")
        cases = cases * (1.0 + noise * rng.standard_normal(len(cases)))
        deaths = deaths * (1.0 + noise * rng.standard_normal(len(deaths)))
    cases = np.maximum.accumulate(np.maximum(cases, cases0))
    deaths = np.maximum.accumulate(np.maximum(deaths, deaths0))
    if round_counts:
        cases = np.round(cases)
        deaths = np.round(deaths)
    start = params.start_date or BENCHMARK_START
    return RegionSeries(
        region_id=region_id,
        dates=tuple(start + timedelta(days=int(d)) for d in days),
        cumulative_cases=cases,
        cumulative_deaths=deaths,
        population=params.population)


def make_fit_benchmark(n_regions: int = 20, n_days: int = 90,
                       noise: float = 0.0, seed: int = 7,
                       round_counts: bool = True, step: float = 0.5):
    """Regions with known ground-truth parameters. Returns
    (series by region id, true params by region id, calibration)."""
    rng = np.random.default_rng(seed)
    calib = default_calibration()
    series, truth = {}, {}
    for i in range(n_regions):
        rid = f"R{i:02d}"
        pop = float(rng.uniform(8e5, 2e7))
        p = make_params(rng, pop, calib)
        truth[rid] = p
        series[rid] = make_region_series(
            p, n_days, rid, cases0=float(rng.integers(120, 400)),
            deaths0=float(rng.integers(1, 8)), noise=noise, rng=rng,
            round_counts=round_counts, step=step)
    return series, truth, calib


# Monotone ground-truth policy effects used by the policy benchmark: more
# restrictive policies produce lower response multipliers.
POLICY_EFFECTS = {
    Policy.NO_MEASURE: 1.35,
    Policy.RESTRICT_MASS_GATHERINGS: 1.15,
    Policy.RESTRICT_OTHERS: 1.05,
    Policy.AUTHORIZE_SCHOOLS_RESTRICT_MG_AND_OTHERS: 0.95,
    Policy.RESTRICT_MG_AND_SCHOOLS: 0.85,
    Policy.RESTRICT_MG_SCHOOLS_AND_OTHERS: 0.7,
    Policy.STAY_AT_HOME: 0.5,
}

_ESCALATION = [
    Policy.NO_MEASURE,
    Policy.RESTRICT_MASS_GATHERINGS,
    Policy.RESTRICT_MG_AND_SCHOOLS,
    Policy.RESTRICT_MG_SCHOOLS_AND_OTHERS,
    Policy.STAY_AT_HOME,
]


def make_policy_observations(n_regions: int = 51, n_days: int = 60,
                             noise: float = 0.05, seed: int = 11) -> list:
    """Observations from regions that escalate restrictions over time, with
    region-level noise around the monotone policy effects."""
    rng = np.random.default_rng(seed)
    obs = []
    for i in range(n_regions):
        rid = f"R{i:02d}"
        region_shift = rng.normal(0.0, 0.05)
        # escalation dates: when each successive policy takes effect
        steps = np.sort(rng.integers(5, n_days - 5, size=len(_ESCALATION) - 1))
        for day_idx in range(n_days):
            level = int(np.searchsorted(steps, day_idx, side="right"))
            pol = _ESCALATION[level]
            g = POLICY_EFFECTS[pol] + region_shift + rng.normal(0.0, noise)
            g = float(np.clip(g, 0.05, 1.95))
            obs.append(GammaObservation(
                region_id=rid, day=BENCHMARK_START + timedelta(days=day_idx),
                policy=pol, gamma_value=g))
    return obs


def make_allocation_benchmark(n_regions: int = 51, n_days: int = 14,
                              seed: int = 23, lead_time: int = 1):
    """51-region allocation instance with demand from simulated epidemics.

    Supplies are sized so aggregate supply covers aggregate demand every
    day, but a fifth of the regions start under-provisioned and must be
    helped by the others' surplus.
    """
    from .alloc import AllocationProblem

    rng = np.random.default_rng(seed)
    calib = default_calibration()
    demand_rows = []
    for i in range(n_regions):
        pop = float(rng.uniform(8e5, 2e7))
        p = make_params(rng, pop, calib)
        x0 = initial_state(p, 200.0, 3.0)
        traj = integrate(p, x0, float(n_days + 1), 0.5)
        hosp = np.interp(np.arange(1, n_days + 1, dtype=float), traj.t,
                         observables(traj)["hospitalized"])
        # scale hospital occupancy down to a ventilator-fleet magnitude
        demand_rows.append(np.ceil(0.25 * hosp / 50.0).astype(np.int64))
    demand = np.vstack(demand_rows)

    supply = np.empty(n_regions, dtype=np.int64)
    deficit = rng.choice(n_regions, size=n_regions // 5, replace=False)
    for s in range(n_regions):
        peak = int(demand[s].max())
        first = int(demand[s, 0])
        if s in deficit:
            supply[s] = max(first, 1)          # covers day one only
        else:
            # sized so that a 10% pooling cap on the surplus regions can
            # absorb the deficit regions' unmet demand
            supply[s] = int(np.ceil(4.0 * peak)) + 10

    coords = rng.uniform(0.0, 2000.0, size=(n_regions, 2))
    diff = coords[:, None, :] - coords[None, :, :]
    distances = np.sqrt((diff ** 2).sum(axis=2))
    np.fill_diagonal(distances, 0.0)

    return AllocationProblem(
        region_ids=tuple(f"R{i:02d}" for i in range(n_regions)),
        base_supply=supply, distances=np.round(distances, 1),
        demand=demand, federal_stock=0, pooling_fraction=0.1,
        buffer=0.0, lead_time=lead_time)
