"""Policy taxonomy, response-multiplier regression tree, and counterfactual
scenario simulation.

The seven mutually exclusive policy classes are encoded as four binary
features; a CART regression tree maps the in-force policy to a response
multiplier, and scenario simulation splices predicted multipliers onto the
fitted response curve with a linear transition ramp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import date, timedelta
from enum import Enum
from typing import Optional

import numpy as np

from .model import DelphiParams, Trajectory, gamma, initial_state, integrate


class Policy(Enum):
    NO_MEASURE = "NoMeasure"
    RESTRICT_MASS_GATHERINGS = "RestrictMassGatherings"
    RESTRICT_OTHERS = "RestrictOthers"
    AUTHORIZE_SCHOOLS_RESTRICT_MG_AND_OTHERS = "AuthorizeSchoolsRestrictMGAndOthers"
    RESTRICT_MG_AND_SCHOOLS = "RestrictMGAndSchools"
    RESTRICT_MG_SCHOOLS_AND_OTHERS = "RestrictMGSchoolsAndOthers"
    STAY_AT_HOME = "StayAtHome"


FEATURE_NAMES = ("mass_gatherings_restricted", "schools_restricted",
                 "others_restricted", "stay_at_home")

# (mass gatherings, schools, others, stay-at-home); one distinct tuple per
# class, so encoding is a bijection over the seven policies.
_ENCODING = {
    Policy.NO_MEASURE: (0, 0, 0, 0),
    Policy.RESTRICT_MASS_GATHERINGS: (1, 0, 0, 0),
    Policy.RESTRICT_OTHERS: (0, 0, 1, 0),
    Policy.AUTHORIZE_SCHOOLS_RESTRICT_MG_AND_OTHERS: (1, 0, 1, 0),
    Policy.RESTRICT_MG_AND_SCHOOLS: (1, 1, 0, 0),
    Policy.RESTRICT_MG_SCHOOLS_AND_OTHERS: (1, 1, 1, 0),
    Policy.STAY_AT_HOME: (1, 1, 1, 1),
}
_DECODING = {v: k for k, v in _ENCODING.items()}


def encode_policy(policy: Policy) -> np.ndarray:
    return np.array(_ENCODING[policy], dtype=float)


def decode_features(features) -> Policy:
    key = tuple(int(v) for v in features)
    if key not in _DECODING:
        raise ValueError(f"feature tuple {key} is not one of the seven classes")
    return _DECODING[key]


@dataclass(frozen=True)
class GammaObservation:
    region_id: str
    day: date
    policy: Policy
    gamma_value: float

    def __post_init__(self):
        if not (math.isfinite(self.gamma_value)
                and 0.0 < self.gamma_value < 2.0):
            raise ValueError("gamma_value must be finite and in (0, 2)")


def policy_from_string(name: str) -> Policy:
    try:
        return Policy(name)
    except ValueError:
        raise ValueError(f"unknown policy class {name!r}") from None


def load_policy_log_csv(path) -> "PolicyLog":
    """Policy log CSV with columns region_id, effective_date, policy_class."""
    import csv
    from pathlib import Path
    rows = []
    with Path(path).open(newline="", encoding="utf-8") as f:
        for raw in csv.DictReader(f):
            rows.append((raw["region_id"].strip(),
                         date.fromisoformat(raw["effective_date"].strip()),
                         policy_from_string(raw["policy_class"].strip())))
    return PolicyLog.from_rows(rows)


@dataclass(frozen=True)
class PolicyLog:
    """Dated policy records per region; the policy in force on a day is the
    latest entry at or before it."""

    entries: tuple  # of (region_id, effective_date, Policy), sorted per region

    @classmethod
    def from_rows(cls, rows) -> "PolicyLog":
        entries = sorted(((rid, d, pol) for rid, d, pol in rows),
                         key=lambda e: (e[0], e[1]))
        return cls(entries=tuple(entries))

    def policy_on(self, region_id: str, day: date) -> Policy:
        current = None
        for rid, d, pol in self.entries:
            if rid != region_id or d > day:
                continue
            if current is None or d >= current[0]:
                current = (d, pol)
        if current is None:
            raise KeyError(
                f"no policy record for region {region_id} on or before {day}")
        return current[1]


def build_observations(fits: dict, policy_log: PolicyLog) -> list:
    """One observation per region per day of its fit window: the policy in
    force and the fitted response multiplier for that day."""
    obs = []
    for rid, fr in fits.items():
        if not fr.converged:
            raise ValueError(f"fit for region {rid} did not converge")
        start, end = fr.fit_window
        p = fr.params
        n_days = (end - start).days + 1
        for i in range(n_days):
            day = start + timedelta(days=i)
            g = float(gamma(float(i), p.t0, p.k))
            obs.append(GammaObservation(
                region_id=rid, day=day,
                policy=policy_log.policy_on(rid, day), gamma_value=g))
    return obs


@dataclass
class TreeNode:
    # split node when feature is not None, else leaf
    feature: Optional[int] = None
    threshold: float = 0.5
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None
    mean: float = 0.0
    count: int = 0

    def is_leaf(self) -> bool:
        return self.feature is None

    def to_dict(self) -> dict:
        if self.is_leaf():
            return {"mean": self.mean, "count": self.count}
        return {"feature": self.feature,
                "feature_name": FEATURE_NAMES[self.feature],
                "threshold": self.threshold,
                "count": self.count,
                "left": self.left.to_dict(), "right": self.right.to_dict()}


@dataclass
class RegressionTree:
    root: TreeNode
    max_depth: int
    min_leaf: int

    def predict(self, features) -> float:
        node = self.root
        x = np.asarray(features, dtype=float)
        while not node.is_leaf():
            node = node.left if x[node.feature] <= node.threshold else node.right
        return node.mean

    def depth(self) -> int:
        def rec(node):
            if node.is_leaf():
                return 0
            return 1 + max(rec(node.left), rec(node.right))
        return rec(self.root)

    def leaves(self) -> list:
        out = []

        def rec(node):
            if node.is_leaf():
                out.append(node)
            else:
                rec(node.left)
                rec(node.right)
        rec(self.root)
        return out

    def training_sse(self, X, y) -> float:
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        preds = np.array([self.predict(row) for row in X])
        return float(np.sum((y - preds) ** 2))

    def to_dict(self) -> dict:
        return {"max_depth": self.max_depth, "min_leaf": self.min_leaf,
                "root": self.root.to_dict()}


def _best_split(X: np.ndarray, y: np.ndarray, min_leaf: int):
    """Exhaustive squared-error split search; ties go to the lowest feature
    index. Thresholds sit at midpoints between adjacent observed values."""
    n, d = X.shape
    total_sse = float(np.sum((y - y.mean()) ** 2))
    best = None  # (sse, feature, threshold)
    for f in range(d):
        values = np.unique(X[:, f])
        for lo, hi in zip(values, values[1:]):
            thr = (lo + hi) / 2.0
            mask = X[:, f] <= thr
            n_left = int(mask.sum())
            if n_left < min_leaf or n - n_left < min_leaf:
                continue
            yl, yr = y[mask], y[~mask]
            sse = float(np.sum((yl - yl.mean()) ** 2)
                        + np.sum((yr - yr.mean()) ** 2))
            if best is None or sse < best[0] - 1e-12:
                best = (sse, f, thr)
    if best is None or best[0] >= total_sse - 1e-12:
        return None
    return best[1], best[2]


def _grow(X, y, depth, max_depth, min_leaf) -> TreeNode:
    node = TreeNode(mean=float(y.mean()), count=len(y))
    if depth >= max_depth or len(y) < 2 * min_leaf or np.all(y == y[0]):
        return node
    split = _best_split(X, y, min_leaf)
    if split is None:
        return node
    f, thr = split
    mask = X[:, f] <= thr
    node.feature = f
    node.threshold = thr
    node.left = _grow(X[mask], y[mask], depth + 1, max_depth, min_leaf)
    node.right = _grow(X[~mask], y[~mask], depth + 1, max_depth, min_leaf)
    return node


def fit_tree(obs, max_depth: int, min_leaf: int) -> RegressionTree:
    """CART on the policy feature encoding with the response multiplier as
    target."""
    if not obs:
        raise ValueError("no observations")
    if max_depth < 0 or min_leaf <= 0:
        raise ValueError("hyperparameters must be positive")
    X = np.array([encode_policy(o.policy) for o in obs])
    y = np.array([o.gamma_value for o in obs])
    root = _grow(X, y, 0, max_depth, min_leaf)
    return RegressionTree(root=root, max_depth=max_depth, min_leaf=min_leaf)


def fit_tree_xy(X, y, max_depth: int, min_leaf: int) -> RegressionTree:
    """CART over raw feature rows (used by tests and generic callers)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(y) == 0:
        raise ValueError("no observations")
    root = _grow(X, y, 0, max_depth, min_leaf)
    return RegressionTree(root=root, max_depth=max_depth, min_leaf=min_leaf)


def predict_gamma(tree: RegressionTree, policy: Policy) -> float:
    return tree.predict(encode_policy(policy))


def leave_one_region_out_r2(obs, max_depth: int, min_leaf: int) -> float:
    """Out-of-sample fit quality: hold out one region at a time, train on
    the rest, pool squared errors over all held-out predictions."""
    regions = sorted({o.region_id for o in obs})
    if len(regions) < 2:
        raise ValueError("need at least two regions")
    y_all = np.array([o.gamma_value for o in obs])
    sse = 0.0
    for rid in regions:
        train = [o for o in obs if o.region_id != rid]
        test = [o for o in obs if o.region_id == rid]
        tree = fit_tree(train, max_depth, min_leaf)
        for o in test:
            sse += (o.gamma_value - predict_gamma(tree, o.policy)) ** 2
    sst = float(np.sum((y_all - y_all.mean()) ** 2))
    return 1.0 - sse / sst


@dataclass(frozen=True)
class PolicySchedule:
    """Dated policy changes for one region. The first entry (at or before
    the simulation start) is the status-quo policy; later entries are
    counterfactual changes."""

    region_id: str
    entries: tuple  # of (effective_date, Policy), strictly increasing

    def __post_init__(self):
        if not self.entries:
            raise ValueError("schedule must have at least one entry")
        ds = [d for d, _ in self.entries]
        if any(b <= a for a, b in zip(ds, ds[1:])):
            raise ValueError("schedule dates must be strictly increasing")

    def changes_after(self, start: date) -> list:
        return [(d, p) for d, p in self.entries if d > start]

    def validate_start(self, start: date):
        if self.entries[0][0] > start:
            raise ValueError(
                "first schedule entry must be at or before the simulation start")


def spliced_gamma_curve(params: DelphiParams, tree: RegressionTree,
                        schedule: PolicySchedule, transition_days: float):
    """Response multiplier as a function of days since the region start:
    the fitted arctan before the first counterfactual change, then a linear
    ramp (over transition_days) to the tree prediction for each new policy,
    held constant until the next change."""
    if transition_days < 0:
        raise ValueError("transition_days must be nonnegative")
    start = params.start_date
    schedule.validate_start(start)
    changes = [((d - start).days, predict_gamma(tree, pol))
               for d, pol in schedule.changes_after(start)]

    # Precompute each segment's ramp starting value: the value the curve
    # holds just before the change takes effect.
    segments = []  # (t_change, v_start, target)
    for tc, target in changes:
        if not segments:
            v_start = float(gamma(float(tc), params.t0, params.k))
        else:
            tp, vp, prev_target = segments[-1]
            if transition_days > 0 and tc < tp + transition_days:
                frac = (tc - tp) / transition_days
                v_start = vp + (prev_target - vp) * frac
            else:
                v_start = prev_target
        segments.append((float(tc), v_start, target))

    def curve(t):
        t = np.asarray(t, dtype=float)
        out = np.asarray(gamma(t, params.t0, params.k))
        for tc, v_start, target in segments:
            if transition_days > 0:
                frac = np.clip((t - tc) / transition_days, 0.0, 1.0)
                ramp = v_start + (target - v_start) * frac
            else:
                ramp = np.full_like(t, target)
            out = np.where(t >= tc, ramp, out)
        return out

    return curve


def simulate_scenario(params: DelphiParams, tree: RegressionTree,
                      schedule: PolicySchedule, horizon: float,
                      transition_days: float, cases0: float, deaths0: float,
                      step: float = 0.5) -> Trajectory:
    """Integrate the model with the spliced response curve."""
    start = params.start_date
    for d, _ in schedule.changes_after(start):
        if (d - start).days > horizon:
            raise ValueError(f"schedule date {d} lies outside the horizon")
    curve = spliced_gamma_curve(params, tree, schedule, transition_days)
    x0 = initial_state(params, cases0, deaths0)
    return integrate(params, x0, horizon, step, gamma_curve=curve)
