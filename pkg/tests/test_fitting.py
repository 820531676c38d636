import math
from datetime import date, timedelta

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from epiops.fitting import (DEFAULT_BOUNDS, FitConfig, FitResult,
                            RegionSeries, SeriesError,
                            _from_box, _to_box, backtest, fit, load_series_csv,
                            loss, mape)
from epiops.synthetic import make_params, make_region_series

START = date(2020, 3, 15)


def make_series(cases, deaths, region_id="X", population=1e6, start=START):
    n = len(cases)
    return RegionSeries(
        region_id=region_id,
        dates=tuple(start + timedelta(days=i) for i in range(n)),
        cumulative_cases=np.asarray(cases, dtype=float),
        cumulative_deaths=np.asarray(deaths, dtype=float),
        population=population)


class TestRegionSeries:
    def test_valid(self):
        s = make_series([150, 200, 300], [2, 3, 4])
        assert s.day_offsets().tolist() == [0.0, 1.0, 2.0]

    def test_first_day_must_exceed_threshold(self):
        with pytest.raises(SeriesError):
            make_series([100, 200], [1, 2])

    def test_monotonicity_enforced(self):
        with pytest.raises(SeriesError):
            make_series([150, 140], [1, 2])
        with pytest.raises(SeriesError):
            make_series([150, 200], [3, 2])

    def test_dates_strictly_increasing(self):
        with pytest.raises(SeriesError):
            RegionSeries(region_id="X",
                         dates=(START, START),
                         cumulative_cases=np.array([150.0, 160.0]),
                         cumulative_deaths=np.array([1.0, 1.0]),
                         population=1e6)

    def test_deaths_cannot_exceed_cases(self):
        with pytest.raises(SeriesError):
            make_series([150, 200], [1, 300])

    def test_truncated(self):
        s = make_series([150, 200, 300, 400], [2, 3, 4, 5])
        t = s.truncated(START + timedelta(days=1))
        assert len(t.dates) == 2
        with pytest.raises(SeriesError):
            s.truncated(START - timedelta(days=1))


class TestLoadSeriesCsv:
    def test_inclusion_rule_drops_low_days(self, tmp_path):
        path = tmp_path / "series.csv"
        rows = ["region_id,date,cumulative_cases,cumulative_deaths,population"]
        for i, c in enumerate([40, 90, 150, 220]):
            rows.append(f"A,{(START + timedelta(days=i)).isoformat()},"
                        f"{c},1,1000000")
        rows.append(f"B,{START.isoformat()},50,0,1000000")
        path.write_text("\n".join(rows) + "\n")
        out = load_series_csv(path)
        assert set(out) == {"A"}  # B never passes the inclusion rule
        assert len(out["A"].dates) == 2
        assert out["A"].cumulative_cases[0] == 150

    def test_population_fallback(self, tmp_path):
        path = tmp_path / "series.csv"
        path.write_text(
            "region_id,date,cumulative_cases,cumulative_deaths\n"
            f"A,{START.isoformat()},150,1\n")
        with pytest.raises(SeriesError, match="population"):
            load_series_csv(path)
        out = load_series_csv(path, populations={"A": 5e6})
        assert out["A"].population == 5e6


class TestBoxReparam:
    # beyond |z| ~ 20 the sigmoid saturates and round-tripping loses
    # precision by design; the property holds on the well-conditioned range
    @given(st.lists(st.floats(-12, 12), min_size=7, max_size=7))
    def test_roundtrip(self, z):
        bounds = list(DEFAULT_BOUNDS.values())
        z = np.asarray(z)
        v = _to_box(z, bounds)
        for val, (lo, hi) in zip(v, bounds):
            assert lo <= val <= hi
        z2 = _from_box(v, bounds)
        assert np.allclose(_to_box(z2, bounds), v, rtol=1e-9, atol=1e-12)


class TestLoss:
    def test_zero_at_truth_for_exact_series(self, calib):
        rng = np.random.default_rng(1)
        p = make_params(rng, 5e6, calib)
        series = make_region_series(p, 60, "X", round_counts=False, step=0.5)
        total, lc, ld = loss(p, series, step=0.5)
        assert total < 1e-12

    def test_weights_scale_terms(self, calib):
        rng = np.random.default_rng(1)
        p = make_params(rng, 5e6, calib)
        series = make_region_series(p, 40, "X", round_counts=False, step=0.5)
        wrong = p.replace_fitted(p.fitted_vector() * 1.2)
        t1, c1, d1 = loss(wrong, series, w_cases=1.0, w_deaths=3.0)
        t2, c2, d2 = loss(wrong, series, w_cases=2.0, w_deaths=3.0)
        # the returned terms are unweighted; the total applies the weights
        assert (c2, d2) == (c1, d1)
        assert t1 == pytest.approx(c1 + 3.0 * d1)
        assert t2 == pytest.approx(2.0 * c1 + 3.0 * d1)

    def test_unintegrable_candidate_gives_inf(self, calib):
        rng = np.random.default_rng(1)
        p = make_params(rng, 5e6, calib)
        series = make_region_series(p, 30, "X")
        # k_i large enough that the seeded compartments exceed the
        # population: the candidate is rejected with an infinite loss
        vec = p.fitted_vector()
        vec[-1] = 1e6
        bad = p.replace_fitted(vec)
        assert loss(bad, series)[0] == math.inf


class TestMape:
    def test_exact_match_is_zero(self):
        assert mape([100, 200], [100, 200]) == 0.0

    def test_ten_percent_fixture(self):
        assert mape([110, 220, 330], [100, 200, 300]) == pytest.approx(10.0)

    def test_zero_actuals_excluded(self):
        assert mape([5, 110], [0, 100]) == pytest.approx(10.0)

    def test_all_zero_actuals_raise(self):
        with pytest.raises(ValueError):
            mape([1, 2], [0, 0])


@pytest.fixture(scope="module")
def quick_recovery(calib):
    """One noiseless region fitted with a reduced budget."""
    rng = np.random.default_rng(42)
    p = make_params(rng, 5e6, calib)
    series = make_region_series(p, 70, "X", round_counts=False, step=0.5)
    config = FitConfig(n_starts=8, n_hops=10, step=0.5, seed=0)
    return p, series, config, fit(series, calib, config)


class TestFit:
    def test_recovers_truth(self, quick_recovery):
        p, series, config, result = quick_recovery
        rel = np.abs(result.params.fitted_vector() - p.fitted_vector()) \
            / np.abs(p.fitted_vector())
        assert result.converged
        assert np.max(rel) < 0.05

    def test_deterministic(self, quick_recovery, calib):
        p, series, config, result = quick_recovery
        again = fit(series, calib, config)
        assert np.array_equal(again.params.fitted_vector(),
                              result.params.fitted_vector())
        assert again.in_sample_loss == result.in_sample_loss

    def test_result_roundtrip(self, quick_recovery):
        _, _, _, result = quick_recovery
        back = FitResult.from_dict(result.to_dict())
        assert back.params == result.params
        assert back.fit_window == result.fit_window

    def test_degenerate_constant_series_flagged(self, calib):
        series = make_series([150] * 30 + [151], [2] * 31)
        config = FitConfig(n_starts=2, n_hops=0, maxiter_start=100,
                           maxiter_polish=100)
        result = fit(series, calib, config)  # must not crash
        assert (not result.converged) or result.at_bounds


class TestBacktest:
    def test_mutation_of_post_cutoff_data_cannot_leak(self, calib):
        rng = np.random.default_rng(5)
        p = make_params(rng, 5e6, calib)
        series = make_region_series(p, 50, "X", round_counts=False, step=0.5)
        cutoff = series.dates[35]
        end = series.dates[-1]
        config = FitConfig(n_starts=3, n_hops=2, maxiter_start=150,
                           maxiter_polish=200, step=0.5)
        base = backtest(series, calib, cutoff, end, config)

        mutated = RegionSeries(
            region_id="X", dates=series.dates,
            cumulative_cases=np.concatenate([
                series.cumulative_cases[:36],
                series.cumulative_cases[36:] * 3.0]),
            cumulative_deaths=series.cumulative_deaths,
            population=series.population)
        shifted = backtest(mutated, calib, cutoff, end, config)
        assert np.array_equal(shifted.fit_result.params.fitted_vector(),
                              base.fit_result.params.fitted_vector())
        assert shifted.mape_cases != base.mape_cases

    def test_perfect_forecast_zero_mape(self, calib):
        rng = np.random.default_rng(6)
        p = make_params(rng, 5e6, calib)
        series = make_region_series(p, 40, "X", round_counts=False, step=0.5)
        # score the generating parameters directly: stub the fit by running
        # backtest with a config whose optimum is the truth itself
        cutoff = series.dates[30]
        result = backtest(series, calib, cutoff, series.dates[-1],
                          FitConfig(n_starts=6, n_hops=6, step=0.5))
        assert result.mape_cases < 0.5
        assert result.mape_deaths < 0.5

    def test_window_validation(self, calib):
        series = make_series([150, 200, 300], [2, 3, 4])
        with pytest.raises(ValueError):
            backtest(series, calib, series.dates[-1], series.dates[0])
        with pytest.raises(ValueError):
            backtest(series, calib, series.dates[1],
                     series.dates[-1] + timedelta(days=5))
