"""Budget calibration, out-of-sample backtests, and efficient frontiers.

Normalized budgets in [0, 1] map to raw set radii (robust strategies,
scaled so 1.0 is the smallest budget with zero guaranteed profit) or to
confidence levels (chance strategies).  Each (strategy, budget) cell is
solved once and the static schedule is evaluated on every test day.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .conic import SolverError
from .market_data import Dataset
from .robust import (
    reformulate_chance_normal,
    reformulate_ellipsoidal,
    reformulate_polyhedral,
    solve_chance_lognormal,
    solve_reformulated,
)
from .storage import Schedule, StorageSpec, build_feasible_set
from .uncertainty import (
    EllipsoidalSet,
    HourlyStats,
    LogNormalModel,
    NormalModel,
    build_ellip_cov,
    build_poly_mean_std,
    build_poly_quantile,
    day_matrix,
    estimate_hourly_stats,
    fit_lognormal,
    fit_normal,
    model_from_dict,
    model_to_dict,
    mvee,
    scale_ellipsoid,
)

LOSS_THRESHOLD = -1e-6  # realized profit below this counts as a loss day
DAYS_PER_YEAR = 365.0
DEFAULT_GAMMA_GRID = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)


class StrategyId(str, Enum):
    POLY_QUANTILE = "poly_quantile"
    POLY_MEAN_STD = "poly_mean_std"
    ELLIP_MIN_VOL = "ellip_min_vol"
    ELLIP_COV = "ellip_cov"
    CHANCE_NORMAL = "chance_normal"
    CHANCE_LOGNORMAL = "chance_lognormal"


ROBUST_STRATEGIES = (
    StrategyId.POLY_QUANTILE,
    StrategyId.POLY_MEAN_STD,
    StrategyId.ELLIP_MIN_VOL,
    StrategyId.ELLIP_COV,
)
CHANCE_STRATEGIES = (StrategyId.CHANCE_NORMAL, StrategyId.CHANCE_LOGNORMAL)


class CalibrationError(RuntimeError):
    """Budget calibration could not bracket or certify a zero-profit radius."""


def confidence_for(gamma_norm: float) -> float:
    """Affine map from normalized budget to chance-constraint confidence."""
    return 0.5 + 0.499 * gamma_norm


@dataclass(frozen=True)
class Calibration:
    """Raw-budget scaling for one robust strategy.

    r_max is the smallest raw budget at which the guaranteed profit
    reaches zero; degenerate flags training data whose nominal solve
    already guarantees nothing.
    """

    strategy: StrategyId
    r_max: float
    nominal_worst_case: float
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy.value,
            "r_max": self.r_max,
            "nominal_worst_case": self.nominal_worst_case,
            "degenerate": self.degenerate,
        }

    @staticmethod
    def from_dict(doc: dict) -> "Calibration":
        return Calibration(
            strategy=StrategyId(doc["strategy"]),
            r_max=float(doc["r_max"]),
            nominal_worst_case=float(doc["nominal_worst_case"]),
            degenerate=bool(doc["degenerate"]),
        )


@dataclass
class ModelBundle:
    """All fitted uncertainty models plus robust budget calibrations."""

    hourly_stats: HourlyStats
    min_vol_base: EllipsoidalSet  # unit-radius enclosing ellipsoid
    cov_base: EllipsoidalSet  # unit-radius covariance ellipsoid
    normal: NormalModel
    lognormal: LogNormalModel
    calibrations: dict[StrategyId, Calibration] = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return self.hourly_stats.horizon

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "models": {
                StrategyId.POLY_QUANTILE.value: {
                    "kind": "quantile_table",
                    "sorted_samples": self.hourly_stats.sorted_samples.tolist(),
                },
                StrategyId.POLY_MEAN_STD.value: {
                    "kind": "mean_std",
                    "mean": self.hourly_stats.mean.tolist(),
                    "std": self.hourly_stats.std.tolist(),
                },
                StrategyId.ELLIP_MIN_VOL.value: model_to_dict(self.min_vol_base),
                StrategyId.ELLIP_COV.value: model_to_dict(self.cov_base),
                StrategyId.CHANCE_NORMAL.value: model_to_dict(self.normal),
                StrategyId.CHANCE_LOGNORMAL.value: model_to_dict(self.lognormal),
            },
            "calibrations": {
                sid.value: cal.to_dict() for sid, cal in sorted(self.calibrations.items())
            },
        }

    @staticmethod
    def from_dict(doc: dict) -> "ModelBundle":
        if doc.get("version") != 1:
            raise ValueError(f"unsupported bundle version {doc.get('version')!r}")
        models = doc["models"]
        samples = np.asarray(
            models[StrategyId.POLY_QUANTILE.value]["sorted_samples"], dtype=float
        )
        mean_std = models[StrategyId.POLY_MEAN_STD.value]
        stats = HourlyStats(
            mean=np.asarray(mean_std["mean"], dtype=float),
            std=np.asarray(mean_std["std"], dtype=float),
            sorted_samples=samples,
            sample_count=samples.shape[0],
        )
        bundle = ModelBundle(
            hourly_stats=stats,
            min_vol_base=model_from_dict(models[StrategyId.ELLIP_MIN_VOL.value]),
            cov_base=model_from_dict(models[StrategyId.ELLIP_COV.value]),
            normal=model_from_dict(models[StrategyId.CHANCE_NORMAL.value]),
            lognormal=model_from_dict(models[StrategyId.CHANCE_LOGNORMAL.value]),
        )
        for key, cal in doc.get("calibrations", {}).items():
            bundle.calibrations[StrategyId(key)] = Calibration.from_dict(cal)
        return bundle

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "ModelBundle":
        return ModelBundle.from_dict(json.loads(text))


def fit_models(
    train_days, lognormal_clip: float = 0.01, mvee_tol: float = 1e-6
) -> ModelBundle:
    """Fit all uncertainty representations on the training days."""
    mat = day_matrix(train_days)
    return ModelBundle(
        hourly_stats=estimate_hourly_stats(mat),
        min_vol_base=mvee(mat, tol=mvee_tol),
        cov_base=build_ellip_cov(mat, 1.0),
        normal=fit_normal(mat),
        lognormal=fit_lognormal(mat, lognormal_clip),
    )


def _solve_raw(
    strategy: StrategyId,
    bundle: ModelBundle,
    spec: StorageSpec,
    raw_budget: float | None = None,
    confidence: float | None = None,
    solver_tol: float = 1e-8,
) -> tuple[Schedule, float]:
    """Solve one strategy at a raw budget (robust) or confidence (chance).

    The discharge sign rule is applied at the model's center/mean prices,
    since the realized sign is unknown at decision time.
    """
    T = bundle.horizon
    if strategy is StrategyId.POLY_QUANTILE:
        uset = build_poly_quantile(bundle.hourly_stats, raw_budget)
        fs = build_feasible_set(spec, T, uset.center)
        return solve_reformulated(reformulate_polyhedral(fs, uset), solver_tol)
    if strategy is StrategyId.POLY_MEAN_STD:
        uset = build_poly_mean_std(bundle.hourly_stats, raw_budget)
        fs = build_feasible_set(spec, T, uset.center)
        return solve_reformulated(reformulate_polyhedral(fs, uset), solver_tol)
    if strategy is StrategyId.ELLIP_MIN_VOL:
        eset = scale_ellipsoid(bundle.min_vol_base, raw_budget)
        fs = build_feasible_set(spec, T, eset.center)
        return solve_reformulated(reformulate_ellipsoidal(fs, eset), solver_tol)
    if strategy is StrategyId.ELLIP_COV:
        eset = scale_ellipsoid(bundle.cov_base, raw_budget)
        fs = build_feasible_set(spec, T, eset.center)
        return solve_reformulated(reformulate_ellipsoidal(fs, eset), solver_tol)
    if strategy is StrategyId.CHANCE_NORMAL:
        fs = build_feasible_set(spec, T, bundle.normal.mean)
        prog = reformulate_chance_normal(fs, bundle.normal, confidence)
        return solve_reformulated(prog, solver_tol)
    if strategy is StrategyId.CHANCE_LOGNORMAL:
        fs = build_feasible_set(spec, T, bundle.lognormal.hourly_means)
        result = solve_chance_lognormal(fs, bundle.lognormal, confidence, tol=solver_tol)
        return result.schedule, result.guaranteed_profit
    raise ValueError(f"unknown strategy {strategy!r}")


def calibrate_budget(
    strategy: StrategyId,
    train_days,
    spec: StorageSpec,
    bundle: ModelBundle | None = None,
    solver_tol: float = 1e-8,
) -> Calibration:
    """Find the raw budget at which the guaranteed profit first reaches zero.

    Doubles an upper bracket from 1 until the guarantee vanishes (cap
    2**20), then bisects, returning the zero side of the bracket so the
    guarantee at r_max is zero to within 1e-4 absolute.  The quantile box
    strategy is pinned at r_max = 1 (the full sample range is maximal).
    """
    if strategy not in ROBUST_STRATEGIES:
        raise ValueError(f"calibration applies to robust strategies, got {strategy}")
    if bundle is None:
        bundle = fit_models(train_days)

    def guarantee_at(r: float) -> float:
        return _solve_raw(strategy, bundle, spec, raw_budget=r, solver_tol=solver_tol)[1]

    gamma0 = guarantee_at(0.0)
    if gamma0 <= 1e-6:
        return Calibration(strategy, 0.0, gamma0, degenerate=True)
    if strategy is StrategyId.POLY_QUANTILE:
        return Calibration(strategy, 1.0, gamma0)

    spec_tol = 1e-3 * (1.0 + gamma0)
    zero_tol = min(1e-4, spec_tol)
    hi = 1.0
    for _ in range(21):
        if guarantee_at(hi) <= zero_tol:
            break
        hi *= 2.0
    else:
        raise CalibrationError(
            f"{strategy.value}: guaranteed profit still positive at budget 2**20"
        )
    lo = 0.0 if hi == 1.0 else hi / 2.0
    for _ in range(64):
        if hi - lo <= 1e-5 * max(hi, 1.0):
            break
        mid = 0.5 * (lo + hi)
        if guarantee_at(mid) <= zero_tol:
            hi = mid
        else:
            lo = mid
    final = guarantee_at(hi)
    if abs(final) > spec_tol:
        raise CalibrationError(
            f"{strategy.value}: guarantee {final} at r_max {hi} exceeds tolerance {spec_tol}"
        )
    return Calibration(strategy, hi, gamma0)


def calibrate_all(
    bundle: ModelBundle, spec: StorageSpec, solver_tol: float = 1e-8
) -> ModelBundle:
    """Fill in calibrations for every robust strategy; returns the bundle."""
    for strategy in ROBUST_STRATEGIES:
        bundle.calibrations[strategy] = calibrate_budget(
            strategy, None, spec, bundle=bundle, solver_tol=solver_tol
        )
    return bundle


def prepare_bundle(
    train_days,
    spec: StorageSpec,
    lognormal_clip: float = 0.01,
    solver_tol: float = 1e-8,
) -> ModelBundle:
    """Fit all models and calibrate all robust budgets in one pass."""
    return calibrate_all(fit_models(train_days, lognormal_clip), spec, solver_tol)


def solve_strategy(
    strategy: StrategyId,
    gamma_norm: float,
    bundle: ModelBundle,
    spec: StorageSpec,
    solver_tol: float = 1e-8,
) -> tuple[Schedule, float]:
    """Solve one strategy at a normalized budget in [0, 1]."""
    if not 0.0 <= gamma_norm <= 1.0:
        raise ValueError(f"normalized budget must be in [0, 1], got {gamma_norm}")
    if strategy in ROBUST_STRATEGIES:
        cal = bundle.calibrations.get(strategy)
        if cal is None:
            raise CalibrationError(f"{strategy.value} has no calibration; calibrate first")
        return _solve_raw(
            strategy, bundle, spec, raw_budget=gamma_norm * cal.r_max, solver_tol=solver_tol
        )
    return _solve_raw(
        strategy, bundle, spec, confidence=confidence_for(gamma_norm), solver_tol=solver_tol
    )


@dataclass(frozen=True)
class FrontierPoint:
    """One (budget, risk, profit) cell of an efficient frontier."""

    gamma_norm: float
    worst_case: float
    expected_profit: float
    risk_days_per_year: float
    nonneg_ratio: float

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma_norm,
            "worst_case": self.worst_case,
            "expected_profit": self.expected_profit,
            "risk_days_per_year": self.risk_days_per_year,
            "nonneg_ratio": self.nonneg_ratio,
        }

    @staticmethod
    def from_dict(doc: dict) -> "FrontierPoint":
        return FrontierPoint(
            gamma_norm=float(doc["gamma"]),
            worst_case=float(doc["worst_case"]),
            expected_profit=float(doc["expected_profit"]),
            risk_days_per_year=float(doc["risk_days_per_year"]),
            nonneg_ratio=float(doc["nonneg_ratio"]),
        )


def run_strategy(
    strategy: StrategyId,
    gamma_norm: float,
    bundle: ModelBundle,
    spec: StorageSpec,
    test_days,
    solver_tol: float = 1e-8,
) -> FrontierPoint:
    """Solve once and evaluate the static schedule on every test day.

    Uncertainty models are unconditional hour-of-day statistics, so the
    decision problem is identical for every day and the schedule is reused.
    """
    mat = day_matrix(test_days)
    if mat.shape[0] < 1:
        raise ValueError("need at least one test day")
    if mat.shape[1] != bundle.horizon:
        raise ValueError("test day horizon does not match the fitted models")
    schedule, worst_case = solve_strategy(strategy, gamma_norm, bundle, spec, solver_tol)
    profits = mat @ schedule.net_injection
    n = mat.shape[0]
    loss_days = int(np.sum(profits < LOSS_THRESHOLD))
    return FrontierPoint(
        gamma_norm=float(gamma_norm),
        worst_case=float(worst_case),
        expected_profit=float(profits.mean()),
        risk_days_per_year=loss_days * DAYS_PER_YEAR / n,
        nonneg_ratio=1.0 - loss_days / n,
    )


def _check_grid(gamma_grid) -> tuple[float, ...]:
    grid = tuple(float(g) for g in gamma_grid)
    if not grid:
        raise ValueError("budget grid is empty")
    for g in grid:
        if not 0.0 <= g <= 1.0:
            raise ValueError(f"budget grid values must be in [0, 1], got {g}")
    return tuple(sorted(grid))


def build_frontier(
    strategy: StrategyId,
    gamma_grid,
    dataset: Dataset,
    spec: StorageSpec,
    bundle: ModelBundle | None = None,
    solver_tol: float = 1e-8,
) -> tuple[FrontierPoint, ...]:
    """One frontier point per grid value, ordered by budget."""
    grid = _check_grid(gamma_grid)
    if bundle is None:
        bundle = prepare_bundle(dataset.train_days, spec, solver_tol=solver_tol)
    points = []
    for g in grid:
        try:
            points.append(
                run_strategy(strategy, g, bundle, spec, dataset.test_days, solver_tol)
            )
        except SolverError as exc:
            raise SolverError(f"{strategy.value} at gamma={g}: {exc}") from exc
    return tuple(points)


@dataclass
class BacktestReport:
    """Frontier points for every requested strategy plus run context."""

    frontiers: dict[StrategyId, tuple[FrontierPoint, ...]]
    dataset_info: dict
    storage: StorageSpec
    calibrations: dict[StrategyId, Calibration]

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "dataset": self.dataset_info,
            "storage": self.storage.to_dict(),
            "calibrations": {
                sid.value: cal.to_dict() for sid, cal in sorted(self.calibrations.items())
            },
            "frontiers": {
                sid.value: [p.to_dict() for p in pts]
                for sid, pts in sorted(self.frontiers.items())
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @staticmethod
    def from_dict(doc: dict) -> "BacktestReport":
        if doc.get("version") != 1:
            raise ValueError(f"unsupported report version {doc.get('version')!r}")
        return BacktestReport(
            frontiers={
                StrategyId(key): tuple(FrontierPoint.from_dict(p) for p in pts)
                for key, pts in doc["frontiers"].items()
            },
            dataset_info=doc["dataset"],
            storage=StorageSpec.from_dict(doc["storage"]),
            calibrations={
                StrategyId(key): Calibration.from_dict(cal)
                for key, cal in doc.get("calibrations", {}).items()
            },
        )

    @staticmethod
    def from_json(text: str) -> "BacktestReport":
        return BacktestReport.from_dict(json.loads(text))

    def frontier_csv(self) -> str:
        lines = ["strategy,gamma,worst_case,expected_profit,risk_days_per_year,nonneg_ratio"]
        for sid in StrategyId:
            for p in self.frontiers.get(sid, ()):
                lines.append(
                    f"{sid.value},{p.gamma_norm!r},{p.worst_case!r},"
                    f"{p.expected_profit!r},{p.risk_days_per_year!r},{p.nonneg_ratio!r}"
                )
        return "\n".join(lines) + "\n"


def _dataset_info(dataset: Dataset) -> dict:
    def span(days):
        if not days:
            return {"count": 0, "start": None, "end": None}
        return {
            "count": len(days),
            "start": days[0].date.isoformat(),
            "end": days[-1].date.isoformat(),
        }

    return {"train": span(dataset.train_days), "test": span(dataset.test_days)}


def compare_all(
    strategies,
    gamma_grid,
    dataset: Dataset,
    spec: StorageSpec,
    bundle: ModelBundle | None = None,
    lognormal_clip: float = 0.01,
    solver_tol: float = 1e-8,
) -> BacktestReport:
    """Full strategy-by-budget report in deterministic order."""
    wanted = [StrategyId(s) for s in strategies]
    if not wanted:
        raise ValueError("need at least one strategy")
    grid = _check_grid(gamma_grid)
    if bundle is None:
        bundle = prepare_bundle(
            dataset.train_days, spec, lognormal_clip=lognormal_clip, solver_tol=solver_tol
        )
    frontiers = {}
    for sid in StrategyId:  # canonical order regardless of request order
        if sid in wanted:
            frontiers[sid] = build_frontier(
                sid, grid, dataset, spec, bundle=bundle, solver_tol=solver_tol
            )
    return BacktestReport(
        frontiers=frontiers,
        dataset_info=_dataset_info(dataset),
        storage=spec,
        calibrations=dict(bundle.calibrations),
    )
