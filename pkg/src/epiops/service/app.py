"""HTTP facade over fitting, scenarios, allocation, and cohort aggregates.

Run records are content-addressed: resubmitting identical inputs returns
the cached record. Fits execute synchronously within the request at desk
scale; every run remains retrievable afterwards via GET /v1/runs/{run_id}.
"""

from __future__ import annotations

import json
from datetime import date
from pathlib import Path
from typing import List, Optional

from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse, PlainTextResponse
from pydantic import BaseModel, ConfigDict

from .. import __version__
from .._kernel import BACKEND
from ..alloc import (AllocationError, AllocationProblem, pareto_sweep, solve,
                     verify_plan)
from ..cohort import (AttributeManifest, SubpopulationFilter,
                      aggregate_prevalence, extract_calibration,
                      parse_cohort_csv, projected_mortality)
from ..export import daily_series, daily_series_csv
from ..fitting import FitConfig, FitResult, SeriesError, fit_many, load_series_csv
from ..policy import (PolicySchedule, build_observations, fit_tree,
                      load_policy_log_csv, policy_from_string,
                      simulate_scenario)
from .config import ServiceConfig
from .runs import RunStore, digest, file_digest


class FitRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    dataset_path: Optional[str] = None
    config: dict = {}


class ScheduleEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")
    date: str
    policy: str


class ScenarioRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    region_id: str
    run_id: str
    schedule: List[ScheduleEntry]
    horizon: float = 120.0
    transition_days: float = 10.0
    tree_max_depth: int = 4
    tree_min_leaf: int = 10


class AllocateRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    problem: dict
    rho_sweep: Optional[List[float]] = None


def _bad_request(message: str):
    return HTTPException(status_code=400, detail=message)


def _fit_config(raw: dict) -> FitConfig:
    allowed = set(FitConfig.__dataclass_fields__)
    unknown = set(raw) - allowed
    if unknown:
        raise _bad_request(f"unknown fit config fields: {sorted(unknown)}")
    kwargs = dict(raw)
    if "bounds" in kwargs:
        kwargs["bounds"] = {k: tuple(v) for k, v in kwargs["bounds"].items()}
    return FitConfig(**kwargs)


def create_app(config: Optional[ServiceConfig] = None) -> FastAPI:
    config = config or ServiceConfig.load()
    app = FastAPI(title="epiops", version=__version__)
    store = RunStore(config.data_dir)
    state = {"records": None, "manifest": AttributeManifest.load(),
             "policy_log": None}
    if config.cohort_csv is not None:
        state["records"] = parse_cohort_csv(config.cohort_csv,
                                            state["manifest"])
    if config.policy_log_csv is not None:
        state["policy_log"] = load_policy_log_csv(config.policy_log_csv)

    def calibration():
        return extract_calibration(state["records"] or [])

    @app.get("/v1/health")
    def health():
        return {"status": "ok", "version": __version__,
                "kernel_backend": BACKEND}

    # ------------------------------------------------------------- fitting
    @app.post("/v1/fit")
    def fit_endpoint(req: FitRequest):
        path = req.dataset_path or (
            str(config.series_csv) if config.series_csv else None)
        if path is None or not Path(path).exists():
            raise _bad_request("no dataset configured or found at "
                              f"{path!r}")
        fit_cfg = _fit_config(req.config)
        inputs = digest({"dataset": file_digest(Path(path)),
                         "config": fit_cfg.to_dict()})

        def compute():
            try:
                series = load_series_csv(path)
            except (SeriesError, KeyError, ValueError) as exc:
                raise _bad_request(f"dataset rejected: {exc}")
            if not series:
                raise HTTPException(
                    status_code=422,
                    detail="no region passes the inclusion rule")
            results = fit_many(series, calibration(), fit_cfg)
            meta = {rid: {"cases0": float(s.cumulative_cases[0]),
                          "deaths0": float(s.cumulative_deaths[0])}
                    for rid, s in series.items()}
            return {"results": json.dumps(
                {rid: r.to_dict() for rid, r in sorted(results.items())},
                indent=2),
                    "meta": json.dumps(meta, indent=2)}

        record, cached = store.get_or_create("fit", inputs, compute)
        results = json.loads(store.read_artifact(record.run_id, "results"))
        return {"run_id": record.run_id, "cached": cached,
                "results": results}

    # ----------------------------------------------------------- scenarios
    def _load_fit_run(run_id: str) -> dict:
        record = store.get(run_id)
        if record is None or record.kind != "fit":
            raise HTTPException(status_code=404,
                                detail=f"unknown fit run {run_id}")
        raw = json.loads(store.read_artifact(run_id, "results"))
        return {rid: FitResult.from_dict(d) for rid, d in raw.items()}

    @app.post("/v1/scenario")
    def scenario_endpoint(req: ScenarioRequest):
        fits = _load_fit_run(req.run_id)
        if req.region_id not in fits:
            raise _bad_request(f"region {req.region_id} not in fit run")
        if state["policy_log"] is None:
            raise _bad_request("no policy log configured")
        try:
            entries = tuple(
                (date.fromisoformat(e.date), policy_from_string(e.policy))
                for e in req.schedule)
            schedule = PolicySchedule(region_id=req.region_id,
                                      entries=entries)
        except ValueError as exc:
            raise _bad_request(f"invalid schedule: {exc}")

        inputs = digest({
            "fit_run": req.run_id, "region": req.region_id,
            "schedule": [[e.date, e.policy] for e in req.schedule],
            "horizon": req.horizon, "transition_days": req.transition_days,
            "tree": [req.tree_max_depth, req.tree_min_leaf],
        })

        def compute():
            usable = {rid: fr for rid, fr in fits.items() if fr.converged}
            if not usable:
                raise _bad_request("fit run has no converged regions")
            try:
                obs = build_observations(usable, state["policy_log"])
                tree = fit_tree(obs, req.tree_max_depth, req.tree_min_leaf)
                fr = fits[req.region_id]
                meta = json.loads(store.read_artifact(req.run_id, "meta"))
                m = meta[req.region_id]
                traj = simulate_scenario(
                    fr.params, tree, schedule, req.horizon,
                    req.transition_days,
                    cases0=m["cases0"], deaths0=m["deaths0"])
            except (ValueError, KeyError) as exc:
                raise _bad_request(str(exc))
            daily = daily_series(traj)
            return {"series": json.dumps(daily, indent=2),
                    "series.csv": daily_series_csv(daily)}

        record, cached = store.get_or_create("scenario", inputs, compute)
        daily = json.loads(store.read_artifact(record.run_id, "series"))
        return {"run_id": record.run_id, "cached": cached, "series": daily}

    # ---------------------------------------------------------- allocation
    @app.post("/v1/allocate")
    def allocate_endpoint(req: AllocateRequest):
        try:
            prob = AllocationProblem.from_dict(req.problem)
        except (TypeError, ValueError, KeyError) as exc:
            raise _bad_request(f"invalid allocation problem: {exc}")
        inputs = digest({"problem": prob.to_dict(),
                         "rho_sweep": req.rho_sweep})

        def compute():
            try:
                if req.rho_sweep is not None:
                    points = pareto_sweep(prob, req.rho_sweep)
                    return {"frontier": json.dumps({"frontier": points},
                                                   indent=2)}
                plan = solve(prob)
                verify_plan(plan)
                return {"plan": plan.to_json(),
                        "transfers.csv": plan.transfers_csv(),
                        "shortages.csv": plan.shortages_csv()}
            except (AllocationError, ValueError) as exc:
                raise _bad_request(str(exc))

        record, cached = store.get_or_create("allocation", inputs, compute)
        name = "frontier" if req.rho_sweep is not None else "plan"
        payload = json.loads(store.read_artifact(record.run_id, name))
        return {"run_id": record.run_id, "cached": cached, name: payload}

    # ---------------------------------------------------------- aggregates
    @app.get("/v1/aggregates")
    def aggregates_endpoint(attribute: str, region: Optional[str] = None,
                            severity: Optional[str] = None):
        if state["records"] is None:
            raise _bad_request("no cohort database ingested")
        subpop = SubpopulationFilter(region=region, severity=severity)
        if attribute == "projected_mortality":
            stat = projected_mortality(state["records"], subpop)
        else:
            try:
                stat = aggregate_prevalence(state["records"], attribute,
                                            subpop, state["manifest"])
            except KeyError:
                raise HTTPException(status_code=404,
                                    detail=f"unknown attribute {attribute!r}")
        return stat.to_dict()

    # ---------------------------------------------------------------- runs
    @app.get("/v1/runs/{run_id}")
    def get_run(run_id: str):
        record = store.get(run_id)
        if record is None:
            raise HTTPException(status_code=404,
                                detail=f"unknown run {run_id}")
        return record.to_dict()

    @app.get("/v1/runs/{run_id}/artifacts/{name}")
    def get_artifact(run_id: str, name: str):
        try:
            content = store.read_artifact(run_id, name)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        if name.endswith(".csv"):
            return PlainTextResponse(content, media_type="text/csv")
        return JSONResponse(json.loads(content))

    if config.ui_dir is not None and Path(config.ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=config.ui_dir, html=True),
                  name="ui")

    return app
