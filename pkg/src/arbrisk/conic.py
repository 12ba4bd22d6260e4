"""Standard-form conic programs, a Clarabel-backed solver, and an
independent residual validator.

A program maximizes a linear objective over variables partitioned into
cone blocks (free, nonnegative, second-order) subject to dense linear
equalities.  Problems in this package are small (~100 variables), so the
representation is dense throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import clarabel
import numpy as np
from scipy import sparse


class ConeKind(Enum):
    FREE = "free"
    NONNEGATIVE = "nonnegative"
    SECOND_ORDER = "second_order"


class ProgramError(ValueError):
    """Structurally invalid program or solution handed to this module."""


class SolverError(RuntimeError):
    """A solve did not produce a usable optimal point."""


@dataclass(frozen=True)
class ConeBlock:
    """One contiguous block of the variable vector and its cone.

    For SECOND_ORDER blocks the first coordinate is the cone's scalar
    bound: x[0] >= ||x[1:]||.
    """

    name: str
    kind: ConeKind
    size: int
    offset: int

    @property
    def stop(self) -> int:
        return self.offset + self.size

    @property
    def indices(self) -> slice:
        return slice(self.offset, self.stop)


@dataclass(frozen=True)
class ConicProgram:
    """maximize objective @ x  s.t.  eq_matrix @ x = eq_rhs, blocks in cones."""

    objective: np.ndarray
    eq_matrix: np.ndarray
    eq_rhs: np.ndarray
    blocks: tuple[ConeBlock, ...]

    def __post_init__(self):
        offset = 0
        for blk in self.blocks:
            if blk.size < 1:
                raise ProgramError(f"block {blk.name!r} has size {blk.size}")
            if blk.kind is ConeKind.SECOND_ORDER and blk.size < 2:
                raise ProgramError(
                    f"second-order block {blk.name!r} needs size >= 2, got {blk.size}"
                )
            if blk.offset != offset:
                raise ProgramError(f"block {blk.name!r} is not contiguous")
            offset = blk.stop
        n = offset
        if self.objective.shape != (n,):
            raise ProgramError("objective length does not match variable count")
        if self.eq_matrix.ndim != 2 or self.eq_matrix.shape[1] != n:
            raise ProgramError("equality matrix width does not match variable count")
        if self.eq_rhs.shape != (self.eq_matrix.shape[0],):
            raise ProgramError("equality rhs length does not match row count")

    @property
    def num_vars(self) -> int:
        return self.blocks[-1].stop if self.blocks else 0

    @property
    def num_equalities(self) -> int:
        return self.eq_matrix.shape[0]

    def block(self, name: str) -> ConeBlock:
        for blk in self.blocks:
            if blk.name == name:
                return blk
        raise KeyError(name)

    def extract(self, x: np.ndarray, name: str) -> np.ndarray:
        """Slice a named block out of a full primal vector."""
        return np.asarray(x)[self.block(name).indices]

    def dump(self) -> str:
        """Plain-text rendering of the program for offline inspection."""
        lines = [f"maximize {self.objective.tolist()}"]
        lines.append("blocks:")
        for blk in self.blocks:
            lines.append(f"  {blk.name} {blk.kind.value} size={blk.size} offset={blk.offset}")
        lines.append(f"equalities ({self.num_equalities} x {self.num_vars}):")
        for row, rhs in zip(self.eq_matrix, self.eq_rhs):
            lines.append(f"  {row.tolist()} = {rhs!r}")
        return "\n".join(lines)


class ProgramBuilder:
    """Incrementally assemble a ConicProgram from named blocks and rows."""

    def __init__(self):
        self._blocks: list[ConeBlock] = []
        self._offset = 0
        self._rows: list[dict[str, np.ndarray]] = []
        self._rhs: list[float] = []

    def add_block(self, name: str, kind: ConeKind, size: int) -> str:
        if any(b.name == name for b in self._blocks):
            raise ProgramError(f"duplicate block name {name!r}")
        self._blocks.append(ConeBlock(name, kind, size, self._offset))
        self._offset += size
        return name

    def block_size(self, name: str) -> int:
        for blk in self._blocks:
            if blk.name == name:
                return blk.size
        raise KeyError(name)

    def add_equality(self, coeffs: dict[str, np.ndarray], rhs: float) -> None:
        """Add one row: sum over blocks of coeffs[name] @ x_block == rhs."""
        row = {}
        for name, vec in coeffs.items():
            arr = np.atleast_1d(np.asarray(vec, dtype=float))
            if arr.shape != (self.block_size(name),):
                raise ProgramError(f"coefficient length mismatch for block {name!r}")
            row[name] = arr
        self._rows.append(row)
        self._rhs.append(float(rhs))

    def build(self, objective: dict[str, np.ndarray]) -> ConicProgram:
        blocks = tuple(self._blocks)
        n = self._offset
        c = np.zeros(n)
        for name, vec in objective.items():
            blk = next(b for b in blocks if b.name == name)
            arr = np.atleast_1d(np.asarray(vec, dtype=float))
            if arr.shape != (blk.size,):
                raise ProgramError(f"objective length mismatch for block {name!r}")
            c[blk.indices] = arr
        A = np.zeros((len(self._rows), n))
        for i, row in enumerate(self._rows):
            for name, arr in row.items():
                blk = next(b for b in blocks if b.name == name)
                A[i, blk.indices] = arr
        return ConicProgram(c, A, np.asarray(self._rhs, dtype=float), blocks)


class SolveStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass(frozen=True)
class Solution:
    status: SolveStatus
    primal: np.ndarray | None
    objective_value: float
    diagnostic: str = ""


_STATUS_BY_NAME = {
    "Solved": SolveStatus.OPTIMAL,
    "PrimalInfeasible": SolveStatus.INFEASIBLE,
    "AlmostPrimalInfeasible": SolveStatus.INFEASIBLE,
    "DualInfeasible": SolveStatus.UNBOUNDED,
    "AlmostDualInfeasible": SolveStatus.UNBOUNDED,
}


def solve(prog: ConicProgram, tol: float = 1e-8) -> Solution:
    """Solve a program with Clarabel's interior-point method.

    Deterministic for identical inputs.  An OPTIMAL result is feasible and
    optimal to within `tol` (the backend is asked for a tighter tolerance
    so that independently recomputed residuals stay below 10*tol).
    """
    n = prog.num_vars
    if n == 0:
        raise ProgramError("program has no variables")
    row_parts = []
    rhs_parts = []
    cones = []
    m_eq = prog.num_equalities
    if m_eq:
        row_parts.append(prog.eq_matrix)
        rhs_parts.append(prog.eq_rhs)
        cones.append(clarabel.ZeroConeT(m_eq))
    for blk in prog.blocks:
        if blk.kind is ConeKind.FREE:
            continue
        sel = np.zeros((blk.size, n))
        sel[np.arange(blk.size), np.arange(blk.offset, blk.stop)] = -1.0
        row_parts.append(sel)
        rhs_parts.append(np.zeros(blk.size))
        if blk.kind is ConeKind.NONNEGATIVE:
            cones.append(clarabel.NonnegativeConeT(blk.size))
        else:
            cones.append(clarabel.SecondOrderConeT(blk.size))
    if row_parts:
        A = sparse.csc_matrix(np.vstack(row_parts))
        b = np.concatenate(rhs_parts)
    else:
        A = sparse.csc_matrix((0, n))
        b = np.zeros(0)
    P = sparse.csc_matrix((n, n))
    q = -prog.objective

    # Request a tighter tolerance first so residuals clear the validator's
    # 10*tol threshold with margin; fall back to the contract tolerance for
    # near-degenerate problems where the backend cannot certify the extra
    # accuracy.
    name = ""
    for backend_tol in (max(tol * 1e-1, 1e-12), tol):
        settings = clarabel.DefaultSettings()
        settings.verbose = False
        settings.tol_feas = backend_tol
        settings.tol_gap_abs = backend_tol
        settings.tol_gap_rel = backend_tol
        solver = clarabel.DefaultSolver(P, q, A, b, cones, settings)
        raw = solver.solve()
        name = str(raw.status)
        status = _STATUS_BY_NAME.get(name, SolveStatus.NUMERICAL_FAILURE)
        if status is SolveStatus.OPTIMAL:
            x = np.asarray(raw.x, dtype=float)
            return Solution(status, x, float(prog.objective @ x))
        if status is not SolveStatus.NUMERICAL_FAILURE:
            return Solution(status, None, float("nan"), diagnostic=f"solver status {name}")
    return Solution(
        SolveStatus.NUMERICAL_FAILURE, None, float("nan"), diagnostic=f"solver status {name}"
    )


@dataclass(frozen=True)
class ResidualReport:
    """Residuals recomputed from the raw program data, not solver state."""

    max_equality_residual: float
    max_cone_violation: float
    objective_value: float
    objective_mismatch: float
    threshold: float
    flagged: bool


def validate(prog: ConicProgram, sol: Solution, tol: float = 1e-8) -> ResidualReport:
    """Independently check an optimal solution against the program."""
    if sol.status is not SolveStatus.OPTIMAL or sol.primal is None:
        raise ProgramError("validate requires an optimal solution")
    x = np.asarray(sol.primal, dtype=float)
    if prog.num_equalities:
        eq_res = float(np.max(np.abs(prog.eq_matrix @ x - prog.eq_rhs)))
    else:
        eq_res = 0.0
    cone_v = 0.0
    for blk in prog.blocks:
        part = x[blk.indices]
        if blk.kind is ConeKind.NONNEGATIVE:
            cone_v = max(cone_v, float(max(0.0, -np.min(part))))
        elif blk.kind is ConeKind.SECOND_ORDER:
            cone_v = max(cone_v, float(max(0.0, np.linalg.norm(part[1:]) - part[0])))
    obj = float(prog.objective @ x)
    mismatch = abs(obj - sol.objective_value)
    threshold = 10.0 * tol
    flagged = max(eq_res, cone_v, mismatch) > threshold
    return ResidualReport(eq_res, cone_v, obj, mismatch, threshold, flagged)


def solve_checked(prog: ConicProgram, tol: float = 1e-8) -> Solution:
    """Solve and insist on a validated optimal point.

    Raises SolverError for infeasible/unbounded/failed solves and for
    optimal points whose recomputed residuals exceed the report threshold.
    """
    sol = solve(prog, tol)
    if sol.status is not SolveStatus.OPTIMAL:
        raise SolverError(sol.diagnostic or f"solve ended with status {sol.status.value}")
    report = validate(prog, sol, tol)
    if report.flagged:
        raise SolverError(
            "solution failed residual validation: "
            f"eq={report.max_equality_residual:.3e} cone={report.max_cone_violation:.3e}"
        )
    return sol
