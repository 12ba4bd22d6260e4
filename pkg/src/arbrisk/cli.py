"""Config-driven command line: ingest, calibrate, frontier, synth.

All commands read one JSON config document; individual flags override
config fields, which override built-in defaults.  Outputs are plain files
(JSON day cache, JSON model bundle, frontier CSV + report + plot script)
and are byte-identical across reruns on identical inputs.

Exit codes: 0 success, 2 data/config error, 3 degenerate calibration,
4 solver failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, replace
from pathlib import Path

from .backtest import (
    DEFAULT_GAMMA_GRID,
    CalibrationError,
    ModelBundle,
    StrategyId,
    calibrate_all,
    compare_all,
    fit_models,
)
from .conic import SolverError
from .market_data import (
    EmptyTrainSetError,
    MalformedRowError,
    days_from_json,
    days_to_json,
    group_days,
    parse_price_csv,
    split_by_years,
)
from .storage import StorageSpec, TerminalPolicy
from .synthetic import DEFAULT_SEED, DEFAULT_YEARS, synthetic_csv

EXIT_OK = 0
EXIT_DATA_ERROR = 2
EXIT_DEGENERATE = 3
EXIT_SOLVER_FAILURE = 4

CACHE_FILENAME = "days.json"
BUNDLE_FILENAME = "models.json"
FRONTIER_FILENAME = "frontier.csv"
REPORT_FILENAME = "report.json"
PLOT_FILENAME = "plot_frontier.py"

PLOT_SCRIPT = '''#!/usr/bin/env python3
"""Render expected profit vs. risk days per strategy from frontier.csv."""
import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = Path(__file__).resolve().parent
series = defaultdict(list)
with open(here / "frontier.csv", newline="") as fh:
    for row in csv.DictReader(fh):
        series[row["strategy"]].append(
            (float(row["risk_days_per_year"]), float(row["expected_profit"]))
        )

fig, ax = plt.subplots(figsize=(7, 5))
for name, pts in series.items():
    pts = sorted(pts)
    ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=name)
ax.set_xlabel("risk (negative-profit days per year)")
ax.set_ylabel("expected daily profit ($)")
ax.set_title("Efficient frontiers")
ax.legend(fontsize=8)
fig.tight_layout()
fig.savefig(here / "frontier.png", dpi=150)
print("wrote", here / "frontier.png")
'''


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """One reproducible run: data location, split, asset, sweep, outputs."""

    data_path: str = "prices.csv"
    train_years: tuple[int, ...] = (2020, 2021)
    test_years: tuple[int, ...] = (2022, 2023)
    power_rating: float = 2.5
    energy_capacity: float = 10.0
    efficiency: float = 0.9
    initial_soc: float = 5.0
    terminal_policy: str = "equal_initial"
    gamma_grid: tuple[float, ...] = DEFAULT_GAMMA_GRID
    strategies: tuple[str, ...] = tuple(s.value for s in StrategyId)
    lognormal_clip: float = 0.01
    solver_tol: float = 1e-8
    output_dir: str = "out"

    def storage(self) -> StorageSpec:
        return StorageSpec(
            power_rating=self.power_rating,
            energy_capacity=self.energy_capacity,
            efficiency=self.efficiency,
            initial_soc=self.initial_soc,
            terminal_policy=TerminalPolicy(self.terminal_policy),
        )

    def strategy_ids(self) -> tuple[StrategyId, ...]:
        return tuple(StrategyId(s) for s in self.strategies)

    def out_path(self, filename: str) -> Path:
        return Path(self.output_dir) / filename


_CONFIG_KEYS = {
    "data_path": str,
    "train_years": lambda v: tuple(int(x) for x in v),
    "test_years": lambda v: tuple(int(x) for x in v),
    "gamma_grid": lambda v: tuple(float(x) for x in v),
    "strategies": lambda v: tuple(str(x) for x in v),
    "lognormal_clip": float,
    "solver_tol": float,
    "output_dir": str,
}
_STORAGE_KEYS = {
    "power_rating": float,
    "energy_capacity": float,
    "efficiency": float,
    "initial_soc": float,
    "terminal_policy": str,
}


def load_config(path: str | None, overrides: dict | None = None) -> RunConfig:
    """Build a RunConfig with precedence flag > config file > default."""
    cfg = RunConfig()
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        fields = {}
        for key, value in doc.items():
            if key in _CONFIG_KEYS:
                fields[key] = _CONFIG_KEYS[key](value)
            elif key == "storage":
                for skey, sval in value.items():
                    if skey not in _STORAGE_KEYS:
                        raise ConfigError(f"unknown storage field {skey!r}")
                    fields[skey] = _STORAGE_KEYS[skey](sval)
            else:
                raise ConfigError(f"unknown config field {key!r}")
        cfg = replace(cfg, **fields)
    if overrides:
        cfg = replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    _validate_config(cfg)
    return cfg


def _validate_config(cfg: RunConfig) -> None:
    if list(cfg.gamma_grid) != sorted(cfg.gamma_grid):
        raise ConfigError("gamma_grid must be sorted ascending")
    for g in cfg.gamma_grid:
        if not 0.0 <= g <= 1.0:
            raise ConfigError(f"gamma_grid values must be in [0, 1], got {g}")
    try:
        cfg.strategy_ids()
    except ValueError as exc:
        raise ConfigError(f"unknown strategy: {exc}") from exc
    try:
        cfg.storage()
    except ValueError as exc:
        raise ConfigError(f"invalid storage spec: {exc}") from exc
    if set(cfg.train_years) & set(cfg.test_years):
        raise ConfigError("train_years and test_years overlap")


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def cmd_ingest(cfg: RunConfig) -> int:
    source = Path(cfg.data_path)
    try:
        text = source.read_text()
    except OSError:
        print(f"error: cannot read price file {source}", file=sys.stderr)
        return EXIT_DATA_ERROR
    try:
        records = parse_price_csv(text)
    except MalformedRowError as exc:
        print(f"error: {source}: {exc}", file=sys.stderr)
        return EXIT_DATA_ERROR
    records.sort(key=lambda r: r.timestamp)
    days, diagnostics = group_days(records)
    _write(cfg.out_path(CACHE_FILENAME), days_to_json(days, diagnostics))
    print(json.dumps(diagnostics.to_json(), sort_keys=True))
    return EXIT_OK


def _load_cache(cfg: RunConfig):
    path = cfg.out_path(CACHE_FILENAME)
    try:
        return days_from_json(path.read_text())
    except OSError:
        print(f"error: missing day cache {path}; run ingest first", file=sys.stderr)
        return None


def cmd_calibrate(cfg: RunConfig) -> int:
    days = _load_cache(cfg)
    if days is None:
        return EXIT_DATA_ERROR
    try:
        dataset = split_by_years(days, cfg.train_years, cfg.test_years)
    except (EmptyTrainSetError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA_ERROR
    bundle = fit_models(dataset.train_days, lognormal_clip=cfg.lognormal_clip)
    try:
        calibrate_all(bundle, cfg.storage(), solver_tol=cfg.solver_tol)
    except (CalibrationError, SolverError) as exc:
        print(f"error: calibration failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER_FAILURE
    _write(cfg.out_path(BUNDLE_FILENAME), bundle.to_json())
    degenerate = sorted(
        sid.value for sid, cal in bundle.calibrations.items() if cal.degenerate
    )
    for sid, cal in sorted(bundle.calibrations.items()):
        print(f"{sid.value}: r_max={cal.r_max!r} nominal={cal.nominal_worst_case!r}")
    if degenerate:
        print(
            f"warning: degenerate training data for {', '.join(degenerate)}",
            file=sys.stderr,
        )
        return EXIT_DEGENERATE
    return EXIT_OK


def cmd_frontier(cfg: RunConfig) -> int:
    days = _load_cache(cfg)
    if days is None:
        return EXIT_DATA_ERROR
    bundle_path = cfg.out_path(BUNDLE_FILENAME)
    try:
        bundle = ModelBundle.from_json(bundle_path.read_text())
    except OSError:
        print(f"error: missing model bundle {bundle_path}; run calibrate first", file=sys.stderr)
        return EXIT_DATA_ERROR
    try:
        dataset = split_by_years(days, cfg.train_years, cfg.test_years)
    except (EmptyTrainSetError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA_ERROR
    if not dataset.test_days:
        print("error: no test days in the requested test years", file=sys.stderr)
        return EXIT_DATA_ERROR
    try:
        report = compare_all(
            cfg.strategy_ids(),
            cfg.gamma_grid,
            dataset,
            cfg.storage(),
            bundle=bundle,
            solver_tol=cfg.solver_tol,
        )
    except (SolverError, CalibrationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER_FAILURE
    _write(cfg.out_path(FRONTIER_FILENAME), report.frontier_csv())
    _write(cfg.out_path(REPORT_FILENAME), report.to_json())
    _write(cfg.out_path(PLOT_FILENAME), PLOT_SCRIPT)
    cells = sum(len(pts) for pts in report.frontiers.values())
    print(f"wrote {cells} frontier cells to {cfg.out_path(FRONTIER_FILENAME)}")
    return EXIT_OK


def cmd_synth(out_file: str, years: tuple[int, ...], seed: int, days_per_year: int | None) -> int:
    path = Path(out_file)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(synthetic_csv(years, seed, days_per_year))
    print(f"wrote synthetic prices for years {list(years)} to {path}")
    return EXIT_OK


def _parse_years(text: str) -> tuple[int, ...]:
    return tuple(int(part) for part in text.split(",") if part.strip())


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="arbrisk",
        description="Risk-averse storage arbitrage: ingest prices, calibrate "
        "uncertainty models, sweep budget grids into efficient frontiers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--data", help="price CSV path (overrides config)")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--train-years", help="comma-separated training years")
        p.add_argument("--test-years", help="comma-separated test years")
        p.add_argument("--gamma-grid", help="comma-separated budgets in [0,1]")
        p.add_argument("--strategies", help="comma-separated strategy names")
        p.add_argument("--power", type=float, help="power rating (MW)")
        p.add_argument("--energy", type=float, help="energy capacity (MWh)")
        p.add_argument("--efficiency", type=float, help="charge/discharge efficiency")
        p.add_argument("--initial-soc", type=float, help="initial state of charge (MWh)")
        p.add_argument("--terminal", choices=["equal_initial", "free"], help="terminal policy")
        p.add_argument("--lognormal-clip", type=float, help="price floor before log fits")
        p.add_argument("--solver-tol", type=float, help="conic solver tolerance")

    for name in ("ingest", "calibrate", "frontier"):
        add_common(sub.add_parser(name))

    synth = sub.add_parser("synth", help="write the bundled synthetic dataset")
    synth.add_argument("--out-file", default="synthetic_prices.csv")
    synth.add_argument("--years", default=",".join(str(y) for y in DEFAULT_YEARS))
    synth.add_argument("--seed", type=int, default=DEFAULT_SEED)
    synth.add_argument("--days-per-year", type=int, default=None)
    return parser


def _overrides_from_args(args: argparse.Namespace) -> dict:
    return {
        "data_path": args.data,
        "output_dir": args.out,
        "train_years": _parse_years(args.train_years) if args.train_years else None,
        "test_years": _parse_years(args.test_years) if args.test_years else None,
        "gamma_grid": tuple(float(x) for x in args.gamma_grid.split(","))
        if args.gamma_grid
        else None,
        "strategies": tuple(s.strip() for s in args.strategies.split(","))
        if args.strategies
        else None,
        "power_rating": args.power,
        "energy_capacity": args.energy,
        "efficiency": args.efficiency,
        "initial_soc": args.initial_soc,
        "terminal_policy": args.terminal,
        "lognormal_clip": args.lognormal_clip,
        "solver_tol": args.solver_tol,
    }


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "synth":
        return cmd_synth(args.out_file, _parse_years(args.years), args.seed, args.days_per_year)
    try:
        cfg = load_config(args.config, _overrides_from_args(args))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA_ERROR
    if args.command == "ingest":
        return cmd_ingest(cfg)
    if args.command == "calibrate":
        return cmd_calibrate(cfg)
    if args.command == "frontier":
        return cmd_frontier(cfg)
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
