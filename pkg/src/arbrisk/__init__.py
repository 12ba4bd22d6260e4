"""Risk-averse energy storage arbitrage under price uncertainty.

Estimates polyhedral, ellipsoidal, and distributional price-uncertainty
models from historical hourly prices, solves robust and chance-constrained
dispatch problems as conic programs, and backtests the resulting static
schedules into risk-profit efficient frontiers.
"""

from .backtest import (
    BacktestReport,
    Calibration,
    CalibrationError,
    FrontierPoint,
    ModelBundle,
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
from .conic import (
    ConeKind,
    ConicProgram,
    ProgramBuilder,
    ResidualReport,
    Solution,
    SolverError,
    SolveStatus,
    solve,
    solve_checked,
    validate,
)
from .market_data import (
    Dataset,
    EmptyTrainSetError,
    GroupDiagnostics,
    MalformedRowError,
    PriceDay,
    PriceRecord,
    group_days,
    parse_price_csv,
    split_by_years,
)
from .robust import (
    ChanceLogNormalResult,
    inner_worst_case,
    normal_quantile,
    reformulate_chance_normal,
    reformulate_ellipsoidal,
    reformulate_polyhedral,
    solve_chance_lognormal,
)
from .storage import (
    FeasibleSet,
    Schedule,
    StorageSpec,
    TerminalPolicy,
    build_feasible_set,
    realized_profit,
    solve_perfect_foresight,
)
from .uncertainty import (
    EllipsoidalSet,
    HourlyStats,
    LogNormalModel,
    MveeConvergenceError,
    NonPositiveMeanError,
    NormalModel,
    PolyhedralSet,
    build_ellip_cov,
    build_poly_mean_std,
    build_poly_quantile,
    estimate_hourly_stats,
    fit_lognormal,
    fit_normal,
    fw_moment_match,
    mvee,
    scale_ellipsoid,
)

__version__ = "0.1.0"
