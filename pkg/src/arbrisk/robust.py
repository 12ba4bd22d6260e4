"""Reformulations of the uncertain arbitrage problem into conic programs.

Polyhedral sets are handled through linear-programming duality, ellipsoidal
sets and normal chance constraints through a second-order cone constraint,
and lognormal chance constraints through a sequential moment-matching
scheme.  A worst-case oracle provides solver-independent certification.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm as _std_normal

from .conic import ConeKind, ConicProgram, ProgramBuilder, solve_checked
from .storage import FeasibleSet, Schedule, extract_schedule
from .uncertainty import (
    EllipsoidalSet,
    LogNormalModel,
    NonPositiveMeanError,
    NormalModel,
    PolyhedralSet,
    UncertaintyModel,
    fw_moment_match,
)

CONFIDENCE_MIN = 0.5
CONFIDENCE_MAX = 0.999


def normal_quantile(p: float) -> float:
    """Inverse of the standard normal CDF."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"quantile level must be in (0, 1), got {p}")
    return float(_std_normal.ppf(p))


def _check_confidence(confidence: float) -> None:
    if not CONFIDENCE_MIN <= confidence <= CONFIDENCE_MAX:
        raise ValueError(
            f"confidence must be in [{CONFIDENCE_MIN}, {CONFIDENCE_MAX}], got {confidence}"
        )


def _unit(T: int, t: int) -> np.ndarray:
    e = np.zeros(T)
    e[t] = 1.0
    return e


def reformulate_polyhedral(fs: FeasibleSet, uset: PolyhedralSet) -> ConicProgram:
    """Dual reformulation of the worst case over a polyhedral price set.

    Maximizes the guaranteed profit g subject to the dispatch constraints
    and, with nonnegative dual weights y on the set rows,
    -offsets @ y >= g and rows^T y = -(discharge - charge).
    """
    if uset.horizon != fs.horizon:
        raise ValueError("uncertainty set horizon does not match the feasible set")
    T = fs.horizon
    k = uset.rows.shape[0]
    builder = ProgramBuilder()
    fs.install(builder)
    builder.add_block("guarantee", ConeKind.FREE, 1)
    builder.add_block("dual", ConeKind.NONNEGATIVE, k)
    builder.add_block("guarantee_slack", ConeKind.NONNEGATIVE, 1)
    builder.add_equality(
        {"dual": -uset.offsets, "guarantee": [-1.0], "guarantee_slack": [-1.0]}, 0.0
    )
    for t in range(T):
        builder.add_equality(
            {"dual": uset.rows[:, t], "discharge": _unit(T, t), "charge": -_unit(T, t)}, 0.0
        )
    return builder.build({"guarantee": [1.0]})


def reformulate_ellipsoidal(fs: FeasibleSet, eset: EllipsoidalSet) -> ConicProgram:
    """SOC reformulation of the worst case over an ellipsoidal price set:
    center @ x - ||shape^T x|| >= g for x = discharge - charge."""
    if eset.horizon != fs.horizon:
        raise ValueError("uncertainty set horizon does not match the feasible set")
    T = fs.horizon
    builder = ProgramBuilder()
    fs.install(builder)
    builder.add_block("guarantee", ConeKind.FREE, 1)
    builder.add_block("margin", ConeKind.SECOND_ORDER, T + 1)
    # margin[0] = center @ x - g
    builder.add_equality(
        {
            "margin": _unit(T + 1, 0),
            "discharge": -eset.center,
            "charge": eset.center,
            "guarantee": [1.0],
        },
        0.0,
    )
    # margin[1 + i] = (shape^T x)_i
    for i in range(T):
        col = eset.shape[:, i]
        builder.add_equality(
            {"margin": _unit(T + 1, 1 + i), "discharge": -col, "charge": col}, 0.0
        )
    return builder.build({"guarantee": [1.0]})


def reformulate_chance_normal(
    fs: FeasibleSet, model: NormalModel, confidence: float
) -> ConicProgram:
    """Profit-target chance constraint under independent normal hours.

    Identical in structure to the ellipsoidal reformulation with the mean
    as center and quantile-scaled standard deviations as the shape.
    """
    _check_confidence(confidence)
    if model.horizon != fs.horizon:
        raise ValueError("model horizon does not match the feasible set")
    z = normal_quantile(confidence)
    eset = EllipsoidalSet(center=model.mean, shape=z * np.diag(model.std))
    return reformulate_ellipsoidal(fs, eset)


def solve_reformulated(prog: ConicProgram, tol: float = 1e-8) -> tuple[Schedule, float]:
    """Solve a robust program and return (schedule, guaranteed profit)."""
    sol = solve_checked(prog, tol)
    return extract_schedule(prog, sol), float(sol.objective_value)


@dataclass(frozen=True)
class ChanceLogNormalResult:
    schedule: Schedule
    guaranteed_profit: float
    multiplier: float
    iterations: int
    converged: bool


def solve_chance_lognormal(
    fs: FeasibleSet,
    model: LogNormalModel,
    confidence: float,
    tol: float = 1e-8,
    max_iter: int = 20,
    multiplier_tol: float = 1e-4,
) -> ChanceLogNormalResult:
    """Sequential scheme for the lognormal profit chance constraint.

    Each pass solves the SOC program built from the hourly lognormal
    moments with the current multiplier, matches the resulting weighted
    sum to a single lognormal, evaluates its lower confidence quantile q,
    and updates the multiplier to (mean - q) / std of the sum.  Stops when
    the multiplier settles or the iteration cap is hit; the reported
    guarantee is q at the final iterate.
    """
    _check_confidence(confidence)
    if model.horizon != fs.horizon:
        raise ValueError("model horizon does not match the feasible set")
    hourly_mean = model.hourly_means
    hourly_sd = np.sqrt(model.hourly_variances)
    z_low = normal_quantile(1.0 - confidence) if confidence < 1.0 else 0.0
    kappa = normal_quantile(confidence)
    schedule: Schedule | None = None
    guarantee = 0.0
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        eset = EllipsoidalSet(center=hourly_mean, shape=kappa * np.diag(hourly_sd))
        schedule, _ = solve_reformulated(reformulate_ellipsoidal(fs, eset), tol)
        x = schedule.net_injection
        if float(np.max(np.abs(x), initial=0.0)) < 1e-9:
            guarantee = 0.0
            converged = True
            break
        mean_z = float(x @ hourly_mean)
        var_z = float((x**2) @ (hourly_sd**2))
        try:
            mu_z, sd_z = fw_moment_match(model, x)
        except NonPositiveMeanError:
            # normal approximation for this iterate
            guarantee = mean_z - kappa * np.sqrt(max(var_z, 0.0))
            kappa_next = normal_quantile(confidence)
        else:
            guarantee = float(np.exp(mu_z + sd_z * z_low))
            if var_z <= 0.0:
                converged = True
                break
            kappa_next = (mean_z - guarantee) / float(np.sqrt(var_z))
        if abs(kappa_next - kappa) < multiplier_tol:
            converged = True
            break
        kappa = kappa_next
    assert schedule is not None
    return ChanceLogNormalResult(
        schedule=schedule,
        guaranteed_profit=float(guarantee),
        multiplier=float(kappa),
        iterations=iterations,
        converged=converged,
    )


def inner_worst_case(
    x: np.ndarray, model: UncertaintyModel, tol: float = 1e-8
) -> tuple[np.ndarray, float]:
    """Worst price vector in the set for a fixed net injection x.

    Polyhedral sets solve the inner LP directly; ellipsoidal sets use the
    closed form center - shape @ shape^T x / ||shape^T x||.
    """
    x = np.asarray(x, dtype=float)
    if isinstance(model, PolyhedralSet):
        if x.shape != (model.horizon,):
            raise ValueError("net injection length does not match the set")
        if not np.any(x):
            return model.center.copy(), 0.0
        k = model.rows.shape[0]
        builder = ProgramBuilder()
        builder.add_block("price", ConeKind.FREE, model.horizon)
        builder.add_block("slack", ConeKind.NONNEGATIVE, k)
        for i in range(k):
            builder.add_equality(
                {"price": model.rows[i], "slack": _unit(k, i)}, float(model.offsets[i])
            )
        prog = builder.build({"price": -x})
        sol = solve_checked(prog, tol)
        worst = prog.extract(sol.primal, "price")
        return worst, float(x @ worst)
    if isinstance(model, EllipsoidalSet):
        if x.shape != (model.horizon,):
            raise ValueError("net injection length does not match the set")
        qx = model.shape.T @ x
        nrm = float(np.linalg.norm(qx))
        if nrm < 1e-15:
            return model.center.copy(), float(model.center @ x)
        worst = model.center - model.shape @ qx / nrm
        return worst, float(model.center @ x - nrm)
    raise ValueError(
        f"worst-case oracle needs a polyhedral or ellipsoidal model, got {type(model).__name__}"
    )
