import json
from datetime import timedelta
from pathlib import Path

import pytest

from epiops.cohort import parse_cohort_csv
from epiops.synthetic import default_calibration, make_fit_benchmark

FIXTURES = Path(__file__).parent / "fixtures"

# Cheap fit budget for plumbing tests; accuracy-critical tests use the
# full default configuration instead.
FAST_FIT = {"n_starts": 4, "n_hops": 4, "maxiter_start": 200,
            "maxiter_polish": 400}


@pytest.fixture(scope="session")
def golden_records():
    return parse_cohort_csv(FIXTURES / "cohort_golden.csv")


@pytest.fixture(scope="session")
def calib():
    return default_calibration()


@pytest.fixture(scope="session")
def alloc_oracle_problem():
    from epiops.alloc import AllocationProblem
    return AllocationProblem.from_dict(
        json.loads((FIXTURES / "alloc_oracle_problem.json").read_text()))


@pytest.fixture(scope="session")
def alloc_oracle_plan():
    return json.loads((FIXTURES / "alloc_oracle_plan.json").read_text())


def write_series_csv(series_map, path: Path):
    lines = ["region_id,date,cumulative_cases,cumulative_deaths,population"]
    for rid, s in series_map.items():
        for i, d in enumerate(s.dates):
            lines.append(
                f"{rid},{d.isoformat()},{float(s.cumulative_cases[i])!r},"
                f"{float(s.cumulative_deaths[i])!r},{float(s.population)!r}")
    path.write_text("\n".join(lines) + "\n")


def write_policy_csv(series_map, path: Path):
    lines = ["region_id,effective_date,policy_class"]
    for rid, s in series_map.items():
        lines.append(f"{rid},{s.dates[0].isoformat()},NoMeasure")
        lines.append(f"{rid},{(s.dates[0] + timedelta(days=20)).isoformat()},"
                     "RestrictMGAndSchools")
    path.write_text("\n".join(lines) + "\n")


@pytest.fixture(scope="session")
def service_env(tmp_path_factory):
    """A configured service with a 2-region dataset, a policy log, and the
    golden cohort database."""
    from fastapi.testclient import TestClient
    from epiops.service import ServiceConfig, create_app

    tmp = tmp_path_factory.mktemp("service")
    series, truth, _ = make_fit_benchmark(n_regions=2, n_days=60,
                                          noise=0.0, seed=3)
    write_series_csv(series, tmp / "series.csv")
    write_policy_csv(series, tmp / "policy.csv")
    cfg = ServiceConfig(data_dir=tmp / "data", series_csv=tmp / "series.csv",
                        policy_log_csv=tmp / "policy.csv",
                        cohort_csv=FIXTURES / "cohort_golden.csv")
    client = TestClient(create_app(cfg))
    return {"client": client, "series": series, "truth": truth, "tmp": tmp}


@pytest.fixture(scope="session")
def fit_run(service_env):
    """One cached fit run on the 2-region dataset, shared across tests."""
    r = service_env["client"].post("/v1/fit", json={"config": FAST_FIT})
    assert r.status_code == 200
    return r.json()
