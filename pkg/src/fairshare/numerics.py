"""Exact rational scalars and an exact simplex solver.

Every numeric quantity in the package is a :class:`fractions.Fraction`.  The
LP solver is a revised simplex method over rationals using Bland's rule, so it
terminates without perturbation and returns bit-identical answers for
identical inputs.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .errors import DivisionByZero, MalformedLP

Rat = Fraction

ZERO = Fraction(0)
ONE = Fraction(1)


def rat(value) -> Fraction:
    """Coerce ints, Fractions and ``"p/q"`` strings to a Fraction.

    Floats are rejected: they would silently smuggle rounding error into an
    exact computation.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("bool is not a rational")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        text = value.strip()
        if "/" in text:
            num, den = text.split("/", 1)
            if int(den) <= 0:
                raise ValueError(f"denominator must be positive in {value!r}")
            return Fraction(int(num), int(den))
        return Fraction(int(text))
    raise TypeError(f"cannot convert {type(value).__name__} to an exact rational")


def format_rat(q: Fraction) -> str:
    q = rat(q)
    return f"{q.numerator}/{q.denominator}"


def rat_add(a, b) -> Fraction:
    return rat(a) + rat(b)


def rat_sub(a, b) -> Fraction:
    return rat(a) - rat(b)


def rat_mul(a, b) -> Fraction:
    return rat(a) * rat(b)


def rat_div(a, b) -> Fraction:
    b = rat(b)
    if b == 0:
        raise DivisionByZero(f"{format_rat(rat(a))} / 0")
    return rat(a) / b


def rat_cmp(a, b) -> int:
    a, b = rat(a), rat(b)
    return (a > b) - (a < b)


# ---------------------------------------------------------------------------
# Linear programming


class Relation(str, enum.Enum):
    LE = "<="
    GE = ">="
    EQ = "="


class LPStatus(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


@dataclass(frozen=True)
class Constraint:
    coeffs: tuple
    relation: Relation
    rhs: Fraction


@dataclass
class LinearProgram:
    """``sense`` c.x subject to rows, with x >= lower_bounds (default 0)."""

    objective: Sequence[Fraction]
    constraints: list[Constraint] = field(default_factory=list)
    lower_bounds: Sequence[Fraction] | None = None
    sense: str = "max"

    @property
    def width(self) -> int:
        return len(self.objective)

    def add(self, coeffs: Iterable, relation, rhs) -> None:
        self.constraints.append(
            Constraint(tuple(rat(c) for c in coeffs), Relation(relation), rat(rhs))
        )

    def validate(self) -> None:
        w = self.width
        for k, row in enumerate(self.constraints):
            if len(row.coeffs) != w:
                raise MalformedLP(f"row {k} has width {len(row.coeffs)}, expected {w}")
        if self.lower_bounds is not None and len(self.lower_bounds) != w:
            raise MalformedLP("lower bound vector has the wrong width")
        if self.sense not in ("max", "min"):
            raise MalformedLP(f"unknown sense {self.sense!r}")


@dataclass(frozen=True)
class LPResult:
    status: LPStatus
    value: Fraction | None
    solution: tuple

    @property
    def optimal(self) -> bool:
        return self.status is LPStatus.OPTIMAL


def lp_solve(lp: LinearProgram) -> LPResult:
    """Solve ``lp`` exactly.

    The returned solution is re-substituted into every constraint before it
    is handed back; a failed check raises ``AssertionError`` since it would
    mean the solver itself is wrong.
    """
    lp.validate()
    n = lp.width
    lower = [rat(v) for v in lp.lower_bounds] if lp.lower_bounds is not None else [ZERO] * n
    sign = 1 if lp.sense == "max" else -1
    costs = [sign * rat(c) for c in lp.objective]

    # Shift x = x' + lower, then put each row into the form a.x' (+/- slack) = rhs >= 0.
    columns: list[list[tuple[int, Fraction]]] = [[] for _ in range(n)]
    rhs: list[Fraction] = []
    slack_cols: list[list[tuple[int, Fraction]]] = []
    for r, row in enumerate(lp.constraints):
        b = row.rhs - sum((a * l for a, l in zip(row.coeffs, lower) if a and l), ZERO)
        flip = b < 0
        factor = -1 if flip else 1
        for j, a in enumerate(row.coeffs):
            if a:
                columns[j].append((r, factor * a))
        if row.relation is Relation.LE:
            slack_cols.append([(r, Fraction(factor))])
        elif row.relation is Relation.GE:
            slack_cols.append([(r, Fraction(-factor))])
        rhs.append(factor * b)

    all_columns = columns + slack_cols
    all_costs = costs + [ZERO] * len(slack_cols)
    status, x, value = _simplex(all_columns, rhs, all_costs)
    if status is not LPStatus.OPTIMAL:
        return LPResult(status, None, ())

    solution = tuple(x[j] + lower[j] for j in range(n))
    _verify(lp, solution)
    objective = sum((rat(c) * v for c, v in zip(lp.objective, solution) if c), ZERO)
    return LPResult(LPStatus.OPTIMAL, objective, solution)


def _verify(lp: LinearProgram, x: Sequence[Fraction]) -> None:
    lower = lp.lower_bounds
    for j, v in enumerate(x):
        bound = rat(lower[j]) if lower is not None else ZERO
        assert v >= bound, f"variable {j} below its lower bound"
    for k, row in enumerate(lp.constraints):
        lhs = sum((a * v for a, v in zip(row.coeffs, x) if a and v), ZERO)
        ok = {
            Relation.LE: lhs <= row.rhs,
            Relation.GE: lhs >= row.rhs,
            Relation.EQ: lhs == row.rhs,
        }[row.relation]
        assert ok, f"row {k} violated by LP solution: {lhs} {row.relation.value} {row.rhs}"


def _simplex(columns, rhs, costs):
    """Two-phase revised simplex for max c.x, Ax = b, x >= 0, b >= 0.

    ``columns`` are sparse lists of (row, coefficient).  Returns
    (status, x, objective).
    """
    rows = len(rhs)
    ncols = len(columns)
    if rows == 0:
        if any(c > 0 for c in costs):
            return LPStatus.UNBOUNDED, None, None
        return LPStatus.OPTIMAL, [ZERO] * ncols, ZERO

    # Artificial variable for every row; rows whose slack already forms a
    # unit column could skip theirs, but uniform phase 1 keeps this simple.
    art = [[(r, ONE)] for r in range(rows)]
    cols = list(columns) + art
    basis = list(range(ncols, ncols + rows))
    binv = [[ONE if i == j else ZERO for j in range(rows)] for i in range(rows)]
    xb = list(rhs)

    phase1 = [ZERO] * ncols + [-ONE] * rows
    allowed = [True] * (ncols + rows)
    _iterate(cols, phase1, basis, binv, xb, allowed)
    if any(xb[k] != 0 for k in range(rows) if basis[k] >= ncols):
        return LPStatus.INFEASIBLE, None, None

    # Drive zero-level artificials out of the basis where possible.
    for k in range(rows):
        if basis[k] < ncols:
            continue
        row = binv[k]
        for j in range(ncols):
            if j in basis:
                continue
            u_k = sum((row[r] * a for r, a in cols[j]), ZERO)
            if u_k != 0:
                u = _ftran(binv, cols[j])
                _pivot(binv, xb, basis, k, j, u)
                break
        # Otherwise the row is redundant; the artificial stays basic at zero
        # and can never become nonzero because its row is zero off-basis.

    for j in range(ncols, ncols + rows):
        allowed[j] = False
    phase2 = list(costs) + [ZERO] * rows
    if not _iterate(cols, phase2, basis, binv, xb, allowed):
        return LPStatus.UNBOUNDED, None, None

    x = [ZERO] * ncols
    for k, j in enumerate(basis):
        if j < ncols:
            x[j] = xb[k]
    value = sum((c * v for c, v in zip(costs, x) if c and v), ZERO)
    return LPStatus.OPTIMAL, x, value


def _ftran(binv, col):
    rows = len(binv)
    out = [ZERO] * rows
    for r, a in col:
        for i in range(rows):
            b = binv[i][r]
            if b:
                out[i] += b * a
    return out


def _pivot(binv, xb, basis, p, j, u):
    rows = len(binv)
    pivot = u[p]
    prow = [v / pivot for v in binv[p]]
    binv[p] = prow
    xb[p] = xb[p] / pivot
    for i in range(rows):
        if i == p:
            continue
        f = u[i]
        if f:
            row = binv[i]
            binv[i] = [a - f * b if b else a for a, b in zip(row, prow)]
            xb[i] -= f * xb[p]
    basis[p] = j


def _iterate(cols, costs, basis, binv, xb, allowed) -> bool:
    """Run simplex iterations with Bland's rule; False means unbounded."""
    rows = len(binv)
    while True:
        cb = [costs[j] for j in basis]
        y = [ZERO] * rows
        for i in range(rows):
            c = cb[i]
            if c:
                row = binv[i]
                for r in range(rows):
                    if row[r]:
                        y[r] += c * row[r]
        in_basis = set(basis)
        entering = -1
        for j, col in enumerate(cols):
            if not allowed[j] or j in in_basis:
                continue
            d = costs[j]
            for r, a in col:
                if y[r]:
                    d -= y[r] * a
            if d > 0:
                entering = j
                break
        if entering < 0:
            return True
        u = _ftran(binv, cols[entering])
        leave = -1
        best = None
        for i in range(rows):
            if u[i] > 0:
                ratio = xb[i] / u[i]
                if best is None or ratio < best or (ratio == best and basis[i] < basis[leave]):
                    best, leave = ratio, i
        if leave < 0:
            return False
        _pivot(binv, xb, basis, leave, entering, u)
