"""Eleven-compartment epidemic model with a time-varying response multiplier.

Compartments: susceptible (S), exposed (E), infectious (I), undetected
recovering/dying (U_R, U_D), detected hospitalized recovering/dying
(DH_R, DH_D), detected quarantined recovering/dying (DQ_R, DQ_D),
recovered (R), dead (D). Two cumulative counters ride along: detected
cases (C_det) and detected deaths (D_det).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, asdict
from datetime import date
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernel

STATE_NAMES = [
    "S", "E", "I", "U_R", "U_D", "DH_R", "DH_D", "DQ_R", "DQ_D", "R", "D",
    "C_det", "D_det",
]
N_COMPARTMENTS = 11  # population-conserving states; counters excluded

FITTED_NAMES = ("alpha", "t0", "k", "p_d", "p_h", "m", "k_i")
CALIBRATED_NAMES = ("sigma", "r_i", "r_r", "r_d", "r_rh", "r_dh")


class ParameterError(ValueError):
    """A model parameter violates its domain constraint."""


def gamma(t, t0, k):
    """Response multiplier (2/pi)*arctan(-(t - t0)/k) + 1, in (0, 2).

    Equals 1 at t = t0 and decreases as t grows: early on activity is near
    its baseline, then restrictions bite, then the decline saturates.
    Accepts scalars or arrays for t.
    """
    if k <= 0:
        raise ParameterError("response strength k must be positive")
    return (2.0 / math.pi) * np.arctan(-(np.asarray(t, dtype=float) - t0) / k) + 1.0


@dataclass(frozen=True)
class DelphiParams:
    """The 13 model parameters (7 region-fitted, 6 cohort-calibrated)."""

    # fitted per region
    alpha: float      # baseline infection rate (1/day)
    t0: float         # response start (days since region start)
    k: float          # response strength (days)
    p_d: float        # detection probability
    p_h: float        # hospitalization probability among detected
    m: float          # mortality probability
    k_i: float        # initial-infectious scale multiplier
    # calibrated from the cohort database
    sigma: float      # E -> I rate
    r_i: float        # I -> branch rate
    r_r: float        # non-hospital recovery rate
    r_d: float        # non-hospital death rate
    r_rh: float       # hospital recovery rate
    r_dh: float       # hospital death rate
    # metadata
    population: float
    start_date: Optional[date] = None

    def __post_init__(self):
        for name in ("alpha", "k", "k_i", "sigma", "r_i", "r_r", "r_d",
                     "r_rh", "r_dh"):
            if getattr(self, name) <= 0:
                raise ParameterError(f"{name} must be positive")
        for name in ("p_d", "p_h", "m"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ParameterError(f"{name} must lie in [0, 1]")
        if self.population <= 0:
            raise ParameterError("population must be positive")

    def fitted_vector(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in FITTED_NAMES])

    def replace_fitted(self, vec: Sequence[float]) -> "DelphiParams":
        kwargs = asdict(self)
        kwargs.update(dict(zip(FITTED_NAMES, (float(v) for v in vec))))
        return DelphiParams(**kwargs)

    def branch_fractions(self) -> np.ndarray:
        """Split of the infectious outflow into U_R, U_D, DH_R, DH_D,
        DQ_R, DQ_D. Sums to one for any (p_d, p_h, m)."""
        p_d, p_h, m = self.p_d, self.p_h, self.m
        return np.array([
            (1 - p_d) * (1 - m),
            (1 - p_d) * m,
            p_d * p_h * (1 - m),
            p_d * p_h * m,
            p_d * (1 - p_h) * (1 - m),
            p_d * (1 - p_h) * m,
        ])

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.start_date is not None:
            d["start_date"] = self.start_date.isoformat()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DelphiParams":
        d = dict(d)
        if d.get("start_date"):
            d["start_date"] = date.fromisoformat(d["start_date"])
        return cls(**d)


def derivatives(x, t, p: DelphiParams, gamma_value: Optional[float] = None):
    """Right-hand side of the ODE system at state x and time t.

    Reference implementation used for testing; the integrator runs the
    same arithmetic inside the kernel. ``gamma_value`` overrides the
    arctan response (used for spliced policy scenarios).
    """
    x = np.asarray(x, dtype=float)
    g = gamma(t, p.t0, p.k) if gamma_value is None else gamma_value
    beta = p.alpha * g
    inf_flow = beta * x[0] * x[2] / p.population
    e_out = p.sigma * x[1]
    i_out = p.r_i * x[2]
    f = p.branch_fractions()
    dx = np.empty(13)
    dx[0] = -inf_flow
    dx[1] = inf_flow - e_out
    dx[2] = e_out - i_out
    dx[3] = i_out * f[0] - p.r_r * x[3]
    dx[4] = i_out * f[1] - p.r_d * x[4]
    dx[5] = i_out * f[2] - p.r_rh * x[5]
    dx[6] = i_out * f[3] - p.r_dh * x[6]
    dx[7] = i_out * f[4] - p.r_r * x[7]
    dx[8] = i_out * f[5] - p.r_d * x[8]
    dx[9] = p.r_r * (x[3] + x[7]) + p.r_rh * x[5]
    dx[10] = p.r_d * (x[4] + x[8]) + p.r_dh * x[6]
    dx[11] = i_out * p.p_d
    dx[12] = p.r_d * x[8] + p.r_dh * x[6]
    return dx


def initial_state(p: DelphiParams, cases0: float, deaths0: float) -> np.ndarray:
    """Seed the compartments at the inclusion-threshold date.

    C_det starts at the observed cases, deaths at the observed deaths,
    I at k_i times observed cases, E at twice I. Active detected patients
    (cases minus deaths) are spread over the four detected compartments
    proportionally to the branch split; everyone else is susceptible.
    """
    if cases0 < 0 or deaths0 < 0 or deaths0 > cases0:
        raise ParameterError("need 0 <= deaths0 <= cases0")
    x = np.zeros(13)
    i0 = p.k_i * cases0
    e0 = 2.0 * i0
    f = p.branch_fractions()
    detected = f[2:6]
    det_total = detected.sum()
    active = max(cases0 - deaths0, 0.0)
    if det_total > 0:
        x[5:9] = active * detected / det_total
    x[1] = e0
    x[2] = i0
    x[10] = deaths0
    x[11] = cases0
    x[12] = deaths0
    occupied = x[1:11].sum()
    if occupied >= p.population:
        raise ParameterError("seeded compartments exceed the population")
    x[0] = p.population - occupied
    return x


@dataclass
class Trajectory:
    """States on a uniform time grid, plus the generating parameters."""

    t: np.ndarray               # days, shape (n,)
    states: np.ndarray          # shape (n, 13), columns per STATE_NAMES
    params: DelphiParams = field(repr=False)

    def column(self, name: str) -> np.ndarray:
        return self.states[:, STATE_NAMES.index(name)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        obs = observables(self)
        w.writerow(["t"] + STATE_NAMES + ["detected_cases", "detected_deaths",
                                         "hospitalized"])
        for i in range(len(self.t)):
            w.writerow([repr(float(self.t[i]))]
                       + [repr(float(v)) for v in self.states[i]]
                       + [repr(float(obs["detected_cases"][i])),
                          repr(float(obs["detected_deaths"][i])),
                          repr(float(obs["hospitalized"][i]))])
        return buf.getvalue()

    def to_json(self) -> str:
        obs = observables(self)
        return json.dumps({
            "t": self.t.tolist(),
            "states": {name: self.column(name).tolist()
                       for name in STATE_NAMES},
            "observables": {k: v.tolist() for k, v in obs.items()},
        })


class IntegrationError(RuntimeError):
    """A compartment undershot zero beyond tolerance (step too large)."""


def integrate(p: DelphiParams, x0, horizon: float, step: float,
              gamma_curve: Optional[Callable] = None) -> Trajectory:
    """Fixed-step RK4 integration over [0, horizon].

    ``gamma_curve``, when given, replaces the arctan response with an
    arbitrary multiplier curve (a callable over days); used for policy
    scenario splicing.
    """
    if step <= 0:
        raise ParameterError("step must be positive")
    if horizon < step:
        raise ParameterError("horizon must be at least one step")
    nsteps = int(round(horizon / step))
    t = np.arange(nsteps + 1) * step
    half_grid = np.arange(2 * nsteps + 1) * (step / 2.0)
    if gamma_curve is None:
        g = gamma(half_grid, p.t0, p.k)
    else:
        g = np.asarray(gamma_curve(half_grid), dtype=float)
    beta_half = np.ascontiguousarray(p.alpha * g)
    x0 = np.ascontiguousarray(x0, dtype=np.float64)
    if x0.shape != (13,):
        raise ParameterError("x0 must have 13 components")
    try:
        states = _kernel.rk4_trajectory(
            x0, beta_half, p.sigma, p.r_i, p.r_r, p.r_d, p.r_rh, p.r_dh,
            p.p_d, p.p_h, p.m, p.population, step, nsteps,
            1e-9 * p.population)
    except ArithmeticError as exc:
        raise IntegrationError(str(exc)) from exc
    return Trajectory(t=t, states=states, params=p)


def observables(traj: Trajectory) -> dict:
    """The three series consumed downstream: detected cases, detected
    deaths, and hospital occupancy (DH_R + DH_D)."""
    return {
        "detected_cases": traj.column("C_det"),
        "detected_deaths": traj.column("D_det"),
        "hospitalized": traj.column("DH_R") + traj.column("DH_D"),
    }


def conservation_error(traj: Trajectory) -> float:
    """Max relative deviation of the compartment sum from the population."""
    totals = traj.states[:, :N_COMPARTMENTS].sum(axis=1)
    return float(np.max(np.abs(totals - traj.params.population))
                 / traj.params.population)
