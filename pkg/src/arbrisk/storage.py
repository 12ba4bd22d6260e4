"""Storage asset model and the deterministic arbitrage program.

Builds the feasible operating set of a price-taker storage unit (power
and energy limits, charge/discharge efficiency, state-of-charge chain,
terminal policy, no discharging at negative nominal prices) and solves
the perfect-foresight dispatch as a linear program.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .conic import ConeKind, ConicProgram, ProgramBuilder, Solution, solve_checked


class TerminalPolicy(Enum):
    EQUAL_INITIAL = "equal_initial"
    FREE = "free"


@dataclass(frozen=True)
class StorageSpec:
    """Ratings of the storage unit.

    power_rating (MW) caps charge and discharge each hour, energy_capacity
    (MWh) caps the state of charge, efficiency in (0, 1] applies to both
    charging and discharging, initial_soc (MWh) is the stored energy
    entering hour 0.  Hour duration is normalized to 1, so power and
    energy coincide numerically.
    """

    power_rating: float
    energy_capacity: float
    efficiency: float
    initial_soc: float
    terminal_policy: TerminalPolicy = TerminalPolicy.EQUAL_INITIAL

    def __post_init__(self):
        if not self.power_rating > 0:
            raise ValueError(f"power_rating must be > 0, got {self.power_rating}")
        if not self.energy_capacity > 0:
            raise ValueError(f"energy_capacity must be > 0, got {self.energy_capacity}")
        if not 0 < self.efficiency <= 1:
            raise ValueError(f"efficiency must be in (0, 1], got {self.efficiency}")
        if not 0 <= self.initial_soc <= self.energy_capacity:
            raise ValueError(
                f"initial_soc must be in [0, {self.energy_capacity}], got {self.initial_soc}"
            )

    def to_dict(self) -> dict:
        return {
            "power_rating": self.power_rating,
            "energy_capacity": self.energy_capacity,
            "efficiency": self.efficiency,
            "initial_soc": self.initial_soc,
            "terminal_policy": self.terminal_policy.value,
        }

    @staticmethod
    def from_dict(doc: dict) -> "StorageSpec":
        return StorageSpec(
            power_rating=float(doc["power_rating"]),
            energy_capacity=float(doc["energy_capacity"]),
            efficiency=float(doc["efficiency"]),
            initial_soc=float(doc["initial_soc"]),
            terminal_policy=TerminalPolicy(doc.get("terminal_policy", "equal_initial")),
        )


@dataclass(frozen=True)
class Schedule:
    """Hourly discharge/charge powers (MW) and the resulting SoC path (MWh)."""

    discharge: np.ndarray
    charge: np.ndarray
    soc: np.ndarray

    def __post_init__(self):
        for name in ("discharge", "charge", "soc"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (len(self.discharge) == len(self.charge) == len(self.soc)):
            raise ValueError("schedule components must share one horizon")

    @property
    def horizon(self) -> int:
        return len(self.discharge)

    @property
    def net_injection(self) -> np.ndarray:
        """Power sold to the market each hour (negative while charging)."""
        return self.discharge - self.charge

    def to_csv(self) -> str:
        lines = ["hour,discharge_mw,charge_mw,soc_mwh"]
        for t in range(self.horizon):
            lines.append(f"{t},{self.discharge[t]!r},{self.charge[t]!r},{self.soc[t]!r}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class FeasibleSet:
    """Constraint fragment of one dispatch horizon.

    Variable blocks are discharge/charge/soc vectors; the fragment fixes
    discharge to zero at hours whose nominal price is negative.
    """

    spec: StorageSpec
    horizon: int
    forced_zero: tuple[int, ...]

    @property
    def variable_count(self) -> int:
        return 3 * self.horizon

    @property
    def soc_equality_count(self) -> int:
        return self.horizon

    @property
    def terminal_equality_count(self) -> int:
        return 1 if self.spec.terminal_policy is TerminalPolicy.EQUAL_INITIAL else 0

    def install(self, builder: ProgramBuilder) -> None:
        """Register the dispatch blocks and constraints on a program builder."""
        T = self.horizon
        spec = self.spec
        builder.add_block("discharge", ConeKind.NONNEGATIVE, T)
        builder.add_block("charge", ConeKind.NONNEGATIVE, T)
        builder.add_block("soc", ConeKind.NONNEGATIVE, T)
        builder.add_block("discharge_cap", ConeKind.NONNEGATIVE, T)
        builder.add_block("charge_cap", ConeKind.NONNEGATIVE, T)
        builder.add_block("soc_cap", ConeKind.NONNEGATIVE, T)

        def unit(t: int) -> np.ndarray:
            e = np.zeros(T)
            e[t] = 1.0
            return e

        eta = spec.efficiency
        for t in range(T):
            # upper bounds via slack: x + slack = cap
            builder.add_equality({"discharge": unit(t), "discharge_cap": unit(t)}, spec.power_rating)
            builder.add_equality({"charge": unit(t), "charge_cap": unit(t)}, spec.power_rating)
            builder.add_equality({"soc": unit(t), "soc_cap": unit(t)}, spec.energy_capacity)
        for t in range(T):
            # soc[t] - soc[t-1] + discharge[t]/eta - eta*charge[t] = 0
            soc_coeff = unit(t)
            rhs = 0.0
            if t == 0:
                rhs = spec.initial_soc
            else:
                soc_coeff = soc_coeff - unit(t - 1)
            builder.add_equality(
                {"soc": soc_coeff, "discharge": unit(t) / eta, "charge": -eta * unit(t)}, rhs
            )
        if spec.terminal_policy is TerminalPolicy.EQUAL_INITIAL:
            builder.add_equality({"soc": unit(T - 1)}, spec.initial_soc)
        for t in self.forced_zero:
            builder.add_equality({"discharge": unit(t)}, 0.0)


def build_feasible_set(
    spec: StorageSpec, horizon: int, nominal_prices: np.ndarray
) -> FeasibleSet:
    """Build the dispatch feasible set, fixing discharge to zero wherever
    the nominal price is negative."""
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    prices = np.asarray(nominal_prices, dtype=float)
    if prices.shape != (horizon,):
        raise ValueError(f"expected {horizon} nominal prices, got shape {prices.shape}")
    forced = tuple(int(t) for t in np.flatnonzero(prices < 0))
    return FeasibleSet(spec=spec, horizon=horizon, forced_zero=forced)


def arbitrage_program(fs: FeasibleSet, objective_prices: np.ndarray) -> ConicProgram:
    """LP maximizing revenue sum(price * (discharge - charge)) over the set."""
    prices = np.asarray(objective_prices, dtype=float)
    if prices.shape != (fs.horizon,):
        raise ValueError("objective price vector does not match the horizon")
    builder = ProgramBuilder()
    fs.install(builder)
    return builder.build({"discharge": prices, "charge": -prices})


def extract_schedule(prog: ConicProgram, sol: Solution) -> Schedule:
    """Read the dispatch blocks out of an optimal solution."""
    x = sol.primal
    return Schedule(
        discharge=np.maximum(prog.extract(x, "discharge"), 0.0),
        charge=np.maximum(prog.extract(x, "charge"), 0.0),
        soc=np.maximum(prog.extract(x, "soc"), 0.0),
    )


def solve_perfect_foresight(
    spec: StorageSpec, prices: np.ndarray, tol: float = 1e-8
) -> tuple[Schedule, float]:
    """Optimal dispatch against known prices; returns schedule and profit."""
    prices = np.asarray(prices, dtype=float)
    fs = build_feasible_set(spec, len(prices), prices)
    prog = arbitrage_program(fs, prices)
    sol = solve_checked(prog, tol)
    return extract_schedule(prog, sol), float(sol.objective_value)


def realized_profit(schedule: Schedule, actual_prices: np.ndarray) -> float:
    """Revenue of a fixed schedule at realized prices (no feasibility re-check)."""
    actual = np.asarray(actual_prices, dtype=float)
    if actual.shape != (schedule.horizon,):
        raise ValueError(
            f"price vector length {actual.shape} does not match horizon {schedule.horizon}"
        )
    return float(actual @ schedule.net_injection)
