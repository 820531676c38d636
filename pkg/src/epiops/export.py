"""Daily-series export helpers shared by the HTTP service and the CLI.

The CSV renderer consumes the exact mapping that the JSON serializer
emits, so the two export formats always agree bit-for-bit.
"""

from __future__ import annotations

import numpy as np

from .model import Trajectory, observables


def daily_series(traj: Trajectory) -> dict:
    """Daily observables for charting: one value per integer day."""
    days = np.arange(0, int(np.floor(traj.t[-1])) + 1, dtype=float)
    obs = observables(traj)
    return {
        "day": [int(d) for d in days],
        "detected_cases": np.interp(days, traj.t,
                                    obs["detected_cases"]).tolist(),
        "detected_deaths": np.interp(days, traj.t,
                                     obs["detected_deaths"]).tolist(),
        "hospitalized": np.interp(days, traj.t,
                                  obs["hospitalized"]).tolist(),
    }


def daily_series_csv(daily: dict) -> str:
    """Render the daily-series mapping as CSV."""
    lines = ["day,detected_cases,detected_deaths,hospitalized"]
    for i, d in enumerate(daily["day"]):
        lines.append(f"{d},{daily['detected_cases'][i]!r},"
                     f"{daily['detected_deaths'][i]!r},"
                     f"{daily['hospitalized'][i]!r}")
    return "\n".join(lines) + "\n"
