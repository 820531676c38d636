"""Cohort-level clinical outcomes database.

Each record is one study cohort: patient counts, per-attribute
(reporting, positive) pairs, per-lab (reporting, mean, unit) triples, and
resolution outcomes. Aggregation pools counts across cohorts; absence of a
value is first-class and never becomes a zero.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

REGIONS = ("Asia", "Europe", "NorthAmerica", "Other")
SEVERITIES = ("Mild", "Severe", "Unspecified")
SUPPRESSION_THRESHOLD = 100  # below this many reporting patients, no number

FIXED_COLUMNS = [
    "study_id", "region", "severity", "n_patients", "n_discharged",
    "n_deceased", "mean_los_days", "n_ventilated",
]


class CohortValidationError(ValueError):
    """A row violates a record invariant; carries the row number."""

    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


@dataclass(frozen=True)
class AttributeManifest:
    """Versioned declaration of attribute and lab columns in the CSV."""

    version: int
    attributes: tuple
    labs: tuple

    @classmethod
    def load(cls, path: Optional[Path] = None) -> "AttributeManifest":
        if path is None:
            text = (resources.files("epiops") / "data/cohort_manifest.json"
                    ).read_text()
        else:
            text = Path(path).read_text()
        raw = json.loads(text)
        return cls(version=raw["version"],
                   attributes=tuple(raw["attributes"]),
                   labs=tuple(raw["labs"]))

    def expected_columns(self) -> list:
        cols = list(FIXED_COLUMNS)
        for a in self.attributes:
            cols += [f"{a}_reporting", f"{a}_positive"]
        for lab in self.labs:
            cols += [f"{lab}_reporting", f"{lab}_mean", f"{lab}_unit"]
        return cols


@dataclass(frozen=True)
class CohortRecord:
    study_id: str
    region: str
    severity: str
    n_patients: int
    attributes: dict = field(default_factory=dict)  # name -> (reporting, positive)
    labs: dict = field(default_factory=dict)        # name -> (reporting, mean, unit)
    n_discharged: Optional[int] = None
    n_deceased: Optional[int] = None
    mean_los_days: Optional[float] = None
    n_ventilated: Optional[int] = None


@dataclass(frozen=True)
class SubpopulationFilter:
    """Restriction of the database: by region, by severity, or both.

    Severity filters match exactly, so "Unspecified" cohorts contribute to
    unfiltered aggregates but to neither Mild nor Severe.
    """

    region: Optional[str] = None
    severity: Optional[str] = None

    def matches(self, rec: CohortRecord) -> bool:
        if self.region is not None and rec.region != self.region:
            return False
        if self.severity is not None and rec.severity != self.severity:
            return False
        return True

    def describe(self) -> str:
        parts = []
        if self.region:
            parts.append(f"region={self.region}")
        if self.severity:
            parts.append(f"severity={self.severity}")
        return " ".join(parts) if parts else "all"


@dataclass(frozen=True)
class AggregateStat:
    attribute: str
    subpopulation: str
    n_cohorts: int
    n_reporting: int
    n_positive: Optional[int]
    prevalence: Optional[float]
    suppressed: bool

    @property
    def no_data(self) -> bool:
        return self.n_cohorts == 0

    def to_dict(self) -> dict:
        return {
            "attribute": self.attribute,
            "subpopulation": self.subpopulation,
            "n_cohorts": self.n_cohorts,
            "n_reporting": self.n_reporting,
            "n_positive": self.n_positive,
            "prevalence": self.prevalence,
            "suppressed": self.suppressed,
            "no_data": self.no_data,
        }


def _parse_count(value: str, row: int, col: str) -> Optional[int]:
    if value is None or value.strip() == "":
        return None
    try:
        n = int(value)
    except ValueError:
        raise CohortValidationError(row, f"column {col}: not an integer: {value!r}")
    if n < 0:
        raise CohortValidationError(row, f"column {col}: negative count")
    return n


def _parse_real(value: str, row: int, col: str) -> Optional[float]:
    if value is None or value.strip() == "":
        return None
    try:
        return float(value)
    except ValueError:
        raise CohortValidationError(row, f"column {col}: not a number: {value!r}")


def parse_cohort_csv(path, manifest: Optional[AttributeManifest] = None) -> list:
    """Parse the cohort CSV into validated records.

    Empty cells are missing values. Any invariant violation raises
    CohortValidationError naming the row and the failing invariant.
    """
    manifest = manifest or AttributeManifest.load()
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        header = reader.fieldnames or []
        missing = [c for c in manifest.expected_columns() if c not in header]
        if missing:
            raise ValueError(
                f"CSV header missing manifest columns: {missing[:5]}"
                + ("..." if len(missing) > 5 else ""))
        records = []
        for i, raw in enumerate(reader, start=2):  # 1-based incl. header
            records.append(_parse_row(raw, i, manifest))
    return records


def _parse_row(raw: dict, row: int, manifest: AttributeManifest) -> CohortRecord:
    study_id = (raw.get("study_id") or "").strip()
    if not study_id:
        raise CohortValidationError(row, "study_id is required")
    region = (raw.get("region") or "").strip()
    if region not in REGIONS:
        raise CohortValidationError(row, f"unknown region {region!r}")
    severity = (raw.get("severity") or "").strip() or "Unspecified"
    if severity not in SEVERITIES:
        raise CohortValidationError(row, f"unknown severity {severity!r}")
    n_patients = _parse_count(raw.get("n_patients"), row, "n_patients")
    if n_patients is None:
        raise CohortValidationError(row, "n_patients is required")

    attrs = {}
    for a in manifest.attributes:
        rep = _parse_count(raw.get(f"{a}_reporting"), row, f"{a}_reporting")
        pos = _parse_count(raw.get(f"{a}_positive"), row, f"{a}_positive")
        if rep is None and pos is None:
            continue
        if rep is None or pos is None:
            raise CohortValidationError(
                row, f"attribute {a}: reporting and positive must both be "
                     "present or both absent")
        if pos > rep:
            raise CohortValidationError(
                row, f"attribute {a}: n_positive > n_reporting")
        if rep > n_patients:
            raise CohortValidationError(
                row, f"attribute {a}: n_reporting > n_patients")
        attrs[a] = (rep, pos)

    labs = {}
    for lab in manifest.labs:
        rep = _parse_count(raw.get(f"{lab}_reporting"), row, f"{lab}_reporting")
        mean = _parse_real(raw.get(f"{lab}_mean"), row, f"{lab}_mean")
        unit = (raw.get(f"{lab}_unit") or "").strip() or None
        if rep is None and mean is None:
            continue
        if rep is None or mean is None:
            raise CohortValidationError(
                row, f"lab {lab}: reporting and mean must both be present")
        if rep > n_patients:
            raise CohortValidationError(row, f"lab {lab}: n_reporting > n_patients")
        labs[lab] = (rep, mean, unit)

    n_discharged = _parse_count(raw.get("n_discharged"), row, "n_discharged")
    n_deceased = _parse_count(raw.get("n_deceased"), row, "n_deceased")
    resolved = (n_discharged or 0) + (n_deceased or 0)
    if resolved > n_patients:
        raise CohortValidationError(
            row, "n_discharged + n_deceased > n_patients")
    mean_los = _parse_real(raw.get("mean_los_days"), row, "mean_los_days")
    if mean_los is not None and mean_los <= 0:
        raise CohortValidationError(row, "mean_los_days must be positive")
    n_vent = _parse_count(raw.get("n_ventilated"), row, "n_ventilated")
    if n_vent is not None and n_vent > n_patients:
        raise CohortValidationError(row, "n_ventilated > n_patients")

    return CohortRecord(
        study_id=study_id, region=region, severity=severity,
        n_patients=n_patients, attributes=attrs, labs=labs,
        n_discharged=n_discharged, n_deceased=n_deceased,
        mean_los_days=mean_los, n_ventilated=n_vent)


def aggregate_prevalence(records, attribute: str,
                         subpop: SubpopulationFilter = SubpopulationFilter(),
                         manifest: Optional[AttributeManifest] = None
                         ) -> AggregateStat:
    """Count-weighted pooled prevalence of an attribute over cohorts that
    report it, with the <100-reporting suppression rule applied."""
    manifest = manifest or AttributeManifest.load()
    if attribute not in manifest.attributes:
        raise KeyError(f"unknown attribute {attribute!r}")
    total_rep = 0
    total_pos = 0
    n_cohorts = 0
    for rec in records:
        if not subpop.matches(rec) or attribute not in rec.attributes:
            continue
        rep, pos = rec.attributes[attribute]
        total_rep += rep
        total_pos += pos
        n_cohorts += 1
    suppressed = total_rep < SUPPRESSION_THRESHOLD
    return AggregateStat(
        attribute=attribute, subpopulation=subpop.describe(),
        n_cohorts=n_cohorts, n_reporting=total_rep,
        n_positive=None if suppressed else total_pos,
        prevalence=None if suppressed else total_pos / total_rep,
        suppressed=suppressed)


def projected_mortality(records,
                        subpop: SubpopulationFilter = SubpopulationFilter()
                        ) -> AggregateStat:
    """Deaths over resolved (discharged + deceased) patients only; cohorts
    with no resolved patients are excluded rather than counted as zeros."""
    total_resolved = 0
    total_deceased = 0
    n_cohorts = 0
    for rec in records:
        if not subpop.matches(rec):
            continue
        resolved = (rec.n_discharged or 0) + (rec.n_deceased or 0)
        if resolved == 0:
            continue
        total_resolved += resolved
        total_deceased += rec.n_deceased or 0
        n_cohorts += 1
    suppressed = total_resolved < SUPPRESSION_THRESHOLD
    return AggregateStat(
        attribute="projected_mortality", subpopulation=subpop.describe(),
        n_cohorts=n_cohorts, n_reporting=total_resolved,
        n_positive=None if suppressed else total_deceased,
        prevalence=None if suppressed else total_deceased / total_resolved,
        suppressed=suppressed)


def aggregate_lab(records, lab: str,
                  subpop: SubpopulationFilter = SubpopulationFilter(),
                  manifest: Optional[AttributeManifest] = None):
    """Count-weighted mean of a lab value. Mixed units across contributing
    cohorts are an ingestion error, never silently converted."""
    manifest = manifest or AttributeManifest.load()
    if lab not in manifest.labs:
        raise KeyError(f"unknown lab {lab!r}")
    total_rep = 0
    weighted = 0.0
    units = set()
    n_cohorts = 0
    for rec in records:
        if not subpop.matches(rec) or lab not in rec.labs:
            continue
        rep, mean, unit = rec.labs[lab]
        total_rep += rep
        weighted += rep * mean
        units.add(unit)
        n_cohorts += 1
    if len(units) > 1:
        raise ValueError(f"lab {lab}: mixed units {sorted(map(str, units))}")
    suppressed = total_rep < SUPPRESSION_THRESHOLD
    return {
        "lab": lab,
        "subpopulation": subpop.describe(),
        "n_cohorts": n_cohorts,
        "n_reporting": total_rep,
        "mean": None if suppressed or total_rep == 0 else weighted / total_rep,
        "unit": next(iter(units)) if units else None,
        "suppressed": suppressed,
    }


DEFAULT_VENT_FRACTION = 0.25
DEFAULT_LOS_DAYS = 10.0
# Clinical-duration defaults for rates the database does not pin down:
# 5-day incubation, 2-day pre-branching infectious window, 10-day
# non-hospital recovery, 20-day non-hospital death.
DEFAULT_RATES = {"sigma": 1 / 5, "r_i": 1 / 2, "r_r": 1 / 10, "r_d": 1 / 20}


@dataclass(frozen=True)
class CalibrationBundle:
    """Parameters exported to the model and the allocation engine, each
    tagged with where it came from (database vs configured default)."""

    los_days: float
    vent_fraction: float
    sigma: float
    r_i: float
    r_r: float
    r_d: float
    r_rh: float
    r_dh: float
    provenance: dict = field(default_factory=dict)

    def rates(self) -> dict:
        return {k: getattr(self, k)
                for k in ("sigma", "r_i", "r_r", "r_d", "r_rh", "r_dh")}

    def to_json(self) -> str:
        d = {k: getattr(self, k)
             for k in ("los_days", "vent_fraction", "sigma", "r_i", "r_r",
                       "r_d", "r_rh", "r_dh")}
        d["provenance"] = self.provenance
        return json.dumps(d, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "CalibrationBundle":
        return cls(**json.loads(text))


def extract_calibration(records) -> CalibrationBundle:
    """Pool length of stay and ventilation fraction from the database and
    map them onto the six calibrated transition rates.

    Hospital recovery and death rates are reciprocal pooled length of stay;
    the remaining rates use configured clinical defaults. Missing
    ventilation data falls back to the 0.25 default, flagged as such.
    """
    los_weight = 0
    los_sum = 0.0
    vent_patients = 0
    vent_count = 0
    for rec in records:
        if rec.mean_los_days is not None:
            los_weight += rec.n_patients
            los_sum += rec.n_patients * rec.mean_los_days
        if rec.n_ventilated is not None:
            vent_patients += rec.n_patients
            vent_count += rec.n_ventilated

    provenance = dict.fromkeys(DEFAULT_RATES, "default")
    if los_weight > 0:
        los = los_sum / los_weight
        provenance["los_days"] = "database"
    else:
        los = DEFAULT_LOS_DAYS
        provenance["los_days"] = "default"
    if vent_patients > 0:
        vent_fraction = vent_count / vent_patients
        provenance["vent_fraction"] = "database"
    else:
        vent_fraction = DEFAULT_VENT_FRACTION
        provenance["vent_fraction"] = "default"
    provenance["r_rh"] = provenance["r_dh"] = provenance["los_days"]

    return CalibrationBundle(
        los_days=los, vent_fraction=vent_fraction,
        r_rh=1.0 / los, r_dh=1.0 / los,
        provenance=provenance, **DEFAULT_RATES)


def stats_to_csv(stats) -> str:
    """Serialize AggregateStat rows to CSV, suppressed cells as '-'."""
    import io
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["attribute", "subpopulation", "n_cohorts", "n_reporting",
                "n_positive", "prevalence", "suppressed"])
    for s in stats:
        w.writerow([
            s.attribute, s.subpopulation, s.n_cohorts, s.n_reporting,
            "-" if s.n_positive is None else s.n_positive,
            "-" if s.prevalence is None else repr(s.prevalence),
            s.suppressed])
    return buf.getvalue()


def stats_to_json(stats) -> str:
    return json.dumps([s.to_dict() for s in stats], indent=2)
