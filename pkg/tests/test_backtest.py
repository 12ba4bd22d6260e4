"""Budget calibration, frontier assembly, and report serialization."""

import numpy as np
import pytest

from arbrisk.backtest import (
    BacktestReport,
    CalibrationError,
    StrategyId,
    build_frontier,
    calibrate_budget,
    compare_all,
    confidence_for,
    fit_models,
    prepare_bundle,
    run_strategy,
    solve_strategy,
)
from arbrisk.market_data import split_by_years
from arbrisk.storage import StorageSpec
from arbrisk.synthetic import synthetic_days

SPEC_SMALL = StorageSpec(1.0, 10.0, 0.9, 5.0)
SPEC_DEFAULT = StorageSpec(2.5, 10.0, 0.9, 5.0)
GRID = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)


def two_hour_train():
    # hour means exactly (10, 50), sample stds exactly (2, 5)
    c1, c2 = np.sqrt(2.0), 5.0 / np.sqrt(2.0)
    return np.array([[10.0 - c1, 50.0 - c2], [10.0 + c1, 50.0 + c2]])


@pytest.fixture(scope="module")
def small_synth():
    days = synthetic_days(days_per_year=60)
    return split_by_years(days, [2020, 2021], [2022, 2023])


@pytest.fixture(scope="module")
def small_bundle(small_synth):
    return prepare_bundle(small_synth.train_days, SPEC_DEFAULT)


class TestConfidenceMap:
    def test_endpoints(self):
        assert confidence_for(0.0) == 0.5
        assert confidence_for(1.0) == pytest.approx(0.999)

    def test_affine(self):
        assert confidence_for(0.4) == pytest.approx(0.5 + 0.499 * 0.4)


class TestCalibration:
    def test_constant_prices_degenerate(self):
        cal = calibrate_budget(
            StrategyId.POLY_MEAN_STD, np.full((4, 2), 42.0), SPEC_SMALL
        )
        assert cal.degenerate
        assert cal.r_max == 0.0

    def test_poly_quantile_fixed_at_one(self):
        cal = calibrate_budget(StrategyId.POLY_QUANTILE, two_hour_train(), SPEC_SMALL)
        assert cal.r_max == 1.0
        assert not cal.degenerate

    def test_mean_std_matches_linear_equation(self):
        # guarantee(r) = 0.81*(50 - 5r) - (10 + 2r) = 30.5 - 6.05 r
        cal = calibrate_budget(StrategyId.POLY_MEAN_STD, two_hour_train(), SPEC_SMALL)
        assert cal.r_max == pytest.approx(30.5 / 6.05, abs=1e-3)
        assert cal.nominal_worst_case == pytest.approx(30.5, abs=1e-6)
        # cross-check: the guarantee at the calibrated budget is zero
        bundle = fit_models(two_hour_train())
        bundle.calibrations[StrategyId.POLY_MEAN_STD] = cal
        _, gamma = solve_strategy(StrategyId.POLY_MEAN_STD, 1.0, bundle, SPEC_SMALL)
        assert abs(gamma) <= 1e-3

    def test_chance_strategy_rejected(self):
        with pytest.raises(ValueError):
            calibrate_budget(StrategyId.CHANCE_NORMAL, two_hour_train(), SPEC_SMALL)

    def test_calibration_zeroes_all_robust_strategies(self, small_synth, small_bundle):
        for sid, cal in small_bundle.calibrations.items():
            assert not cal.degenerate, sid
            _, gamma = solve_strategy(sid, 1.0, small_bundle, SPEC_DEFAULT)
            assert abs(gamma) <= 1e-3, sid


class TestRunStrategy:
    def test_mean_day_test_set_has_no_risk(self):
        rng = np.random.default_rng(8)
        train = rng.lognormal(3.5, 0.3, size=(50, 6)) + np.array([0, 0, 0, 30, 60, 20.0])
        bundle = prepare_bundle(train, SPEC_SMALL)
        mean_day = train.mean(axis=0)
        test = np.tile(mean_day, (5, 1))
        point = run_strategy(StrategyId.POLY_MEAN_STD, 0.0, bundle, SPEC_SMALL, test)
        assert point.risk_days_per_year == 0.0
        assert point.nonneg_ratio == 1.0
        # realized equals nominal by construction
        assert point.expected_profit == pytest.approx(point.worst_case, abs=1e-6)

    def test_zero_budget_reduction_identity(self, small_synth, small_bundle):
        pms = run_strategy(
            StrategyId.POLY_MEAN_STD, 0.0, small_bundle, SPEC_DEFAULT, small_synth.test_days
        )
        cov = run_strategy(
            StrategyId.ELLIP_COV, 0.0, small_bundle, SPEC_DEFAULT, small_synth.test_days
        )
        chn = run_strategy(
            StrategyId.CHANCE_NORMAL, 0.0, small_bundle, SPEC_DEFAULT, small_synth.test_days
        )
        assert pms.worst_case == pytest.approx(cov.worst_case, rel=1e-6)
        assert pms.worst_case == pytest.approx(chn.worst_case, rel=1e-6)
        assert pms.expected_profit == pytest.approx(cov.expected_profit, rel=1e-6)
        assert pms.expected_profit == pytest.approx(chn.expected_profit, rel=1e-6)
        # all three degenerate to the same mean-price LP, schedule included
        s_pms, _ = solve_strategy(StrategyId.POLY_MEAN_STD, 0.0, small_bundle, SPEC_DEFAULT)
        s_cov, _ = solve_strategy(StrategyId.ELLIP_COV, 0.0, small_bundle, SPEC_DEFAULT)
        np.testing.assert_allclose(
            s_pms.net_injection, s_cov.net_injection, atol=1e-6
        )

    def test_full_budget_guarantee_is_zero(self, small_synth, small_bundle):
        for sid in (StrategyId.POLY_QUANTILE, StrategyId.POLY_MEAN_STD,
                    StrategyId.ELLIP_MIN_VOL, StrategyId.ELLIP_COV):
            point = run_strategy(sid, 1.0, small_bundle, SPEC_DEFAULT, small_synth.test_days)
            assert abs(point.worst_case) <= 1e-3

    def test_bit_identical_rerun(self, small_synth, small_bundle):
        a = run_strategy(
            StrategyId.ELLIP_COV, 0.4, small_bundle, SPEC_DEFAULT, small_synth.test_days
        )
        b = run_strategy(
            StrategyId.ELLIP_COV, 0.4, small_bundle, SPEC_DEFAULT, small_synth.test_days
        )
        assert a == b

    def test_accounting_identity(self, small_synth, small_bundle):
        n = len(small_synth.test_days)
        point = run_strategy(
            StrategyId.CHANCE_NORMAL, 0.6, small_bundle, SPEC_DEFAULT, small_synth.test_days
        )
        loss_days = point.risk_days_per_year * n / 365.0
        nonneg_days = point.nonneg_ratio * n
        assert loss_days == pytest.approx(round(loss_days), abs=1e-9)
        assert loss_days + nonneg_days == pytest.approx(n, abs=1e-9)

    def test_budget_domain(self, small_synth, small_bundle):
        with pytest.raises(ValueError):
            run_strategy(StrategyId.ELLIP_COV, 1.2, small_bundle, SPEC_DEFAULT,
                         small_synth.test_days)

    def test_uncalibrated_robust_strategy_rejected(self, small_synth):
        bundle = fit_models(small_synth.train_days)
        with pytest.raises(CalibrationError):
            solve_strategy(StrategyId.ELLIP_COV, 0.5, bundle, SPEC_DEFAULT)


class TestBuildFrontier:
    def test_single_cell_grid(self, small_synth, small_bundle):
        points = build_frontier(
            StrategyId.POLY_MEAN_STD, (0.0,), small_synth, SPEC_DEFAULT, bundle=small_bundle
        )
        assert len(points) == 1
        assert points[0].gamma_norm == 0.0

    def test_worst_case_monotone(self, small_synth, small_bundle):
        for sid in (StrategyId.POLY_QUANTILE, StrategyId.POLY_MEAN_STD,
                    StrategyId.ELLIP_MIN_VOL, StrategyId.ELLIP_COV):
            points = build_frontier(
                sid, GRID, small_synth, SPEC_DEFAULT, bundle=small_bundle
            )
            worst = [p.worst_case for p in points]
            assert all(b <= a + 1e-6 for a, b in zip(worst, worst[1:])), sid

    def test_volatile_year_dominates_calm_year(self, small_bundle):
        days = synthetic_days(days_per_year=60)
        ds_hot = split_by_years(days, [2020, 2021], [2022])
        ds_calm = split_by_years(days, [2020, 2021], [2023])
        for sid in StrategyId:
            hot = build_frontier(sid, GRID, ds_hot, SPEC_DEFAULT, bundle=small_bundle)
            calm = build_frontier(sid, GRID, ds_calm, SPEC_DEFAULT, bundle=small_bundle)
            assert np.mean([p.expected_profit for p in hot]) > np.mean(
                [p.expected_profit for p in calm]
            ), sid
            assert np.mean([p.risk_days_per_year for p in hot]) >= np.mean(
                [p.risk_days_per_year for p in calm]
            ), sid

    def test_grid_validation(self, small_synth, small_bundle):
        with pytest.raises(ValueError):
            build_frontier(StrategyId.ELLIP_COV, (0.0, 1.3), small_synth, SPEC_DEFAULT,
                           bundle=small_bundle)
        with pytest.raises(ValueError):
            build_frontier(StrategyId.ELLIP_COV, (), small_synth, SPEC_DEFAULT,
                           bundle=small_bundle)


class TestCompareAll:
    def test_single_cell_report(self, small_synth, small_bundle):
        report = compare_all(
            [StrategyId.ELLIP_COV], (0.5,), small_synth, SPEC_DEFAULT, bundle=small_bundle
        )
        assert list(report.frontiers) == [StrategyId.ELLIP_COV]
        assert len(report.frontiers[StrategyId.ELLIP_COV]) == 1

    def test_empty_strategy_list_rejected(self, small_synth, small_bundle):
        with pytest.raises(ValueError):
            compare_all([], GRID, small_synth, SPEC_DEFAULT, bundle=small_bundle)

    def test_zero_budget_profits_shared_across_mean_centered(self, small_synth, small_bundle):
        report = compare_all(
            [StrategyId.POLY_MEAN_STD, StrategyId.ELLIP_COV, StrategyId.CHANCE_NORMAL],
            (0.0,),
            small_synth,
            SPEC_DEFAULT,
            bundle=small_bundle,
        )
        profits = [pts[0].expected_profit for pts in report.frontiers.values()]
        assert max(profits) - min(profits) <= 1e-6 * (1.0 + abs(profits[0]))

    def test_report_order_is_canonical(self, small_synth, small_bundle):
        report = compare_all(
            [StrategyId.CHANCE_NORMAL, StrategyId.POLY_QUANTILE],
            (0.0, 0.4),
            small_synth,
            SPEC_DEFAULT,
            bundle=small_bundle,
        )
        assert list(report.frontiers) == [StrategyId.POLY_QUANTILE, StrategyId.CHANCE_NORMAL]

    def test_report_json_round_trip_byte_identical(self, small_synth, small_bundle):
        report = compare_all(
            [StrategyId.POLY_MEAN_STD, StrategyId.CHANCE_LOGNORMAL],
            (0.0, 0.5, 1.0),
            small_synth,
            SPEC_DEFAULT,
            bundle=small_bundle,
        )
        text = report.to_json()
        assert BacktestReport.from_json(text).to_json() == text

    def test_frontier_csv_shape(self, small_synth, small_bundle):
        report = compare_all(
            [StrategyId.POLY_MEAN_STD, StrategyId.ELLIP_COV],
            (0.0, 0.5),
            small_synth,
            SPEC_DEFAULT,
            bundle=small_bundle,
        )
        lines = report.frontier_csv().strip().split("\n")
        assert lines[0] == "strategy,gamma,worst_case,expected_profit,risk_days_per_year,nonneg_ratio"
        assert len(lines) == 1 + 2 * 2
        assert lines[1].startswith("poly_mean_std,0.0,")


class TestBundleSerialization:
    def test_round_trip_preserves_solutions(self, small_synth, small_bundle):
        from arbrisk.backtest import ModelBundle

        text = small_bundle.to_json()
        back = ModelBundle.from_json(text)
        assert back.to_json() == text
        a = solve_strategy(StrategyId.POLY_QUANTILE, 0.3, small_bundle, SPEC_DEFAULT)
        b = solve_strategy(StrategyId.POLY_QUANTILE, 0.3, back, SPEC_DEFAULT)
        assert a[1] == pytest.approx(b[1], abs=1e-9)

    def test_bundle_lists_six_models_and_four_calibrations(self, small_bundle):
        doc = small_bundle.to_dict()
        assert len(doc["models"]) == 6
        assert len(doc["calibrations"]) == 4
