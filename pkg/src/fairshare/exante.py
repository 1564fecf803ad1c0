"""Configuration LP, the exact ex-ante optimizer and integrality-gap instances.

The rounding here is an empirical instrument only: tentative bundles are
sampled from the LP and contention is resolved by a uniformly random agent
priority.  Ex-ante existence claims are certified by :func:`exante_opt`,
which solves the LP over all deterministic allocations exactly.
"""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .errors import HypothesisViolated, InvalidInstance, ParameterTooLarge, TooLarge
from .model import (
    XOS,
    Allocation,
    Instance,
    Table,
    Valuation,
    full,
    iter_bits,
    submasks,
)
from .numerics import ONE, ZERO, LinearProgram, format_rat, lp_solve

MAX_CLP_COLUMNS = 10**5
MAX_ALLOCATIONS = 10**6


# ---------------------------------------------------------------------------
# Configuration LP


@dataclass(frozen=True)
class CLPSolution:
    entries: dict  # (agent, mask) -> weight, positive entries only
    objective: Fraction

    def contribution(self, agent: int, valuations: Sequence[Valuation]) -> Fraction:
        v = valuations[agent]
        return sum((w * v.value(s) for (i, s), w in self.entries.items() if i == agent), ZERO)

    def bundles_of(self, agent: int) -> list[tuple[int, Fraction]]:
        return sorted((s, w) for (i, s), w in self.entries.items() if i == agent)

    def check(self, n: int, universe: int) -> None:
        """Re-verify the LP constraints by substitution."""
        for i in range(n):
            total = sum((w for (a, _), w in self.entries.items() if a == i), ZERO)
            if total != 1:
                raise AssertionError(f"agent {i} receives total weight {total}")
        for e in iter_bits(universe):
            cover = sum((w for (_, s), w in self.entries.items() if s >> e & 1), ZERO)
            if cover != 1:
                raise AssertionError(f"item {e} allocated with weight {cover}")
        if any(w < 0 for w in self.entries.values()):
            raise AssertionError("negative LP entry")


def clp_solve(
    instance: Instance | None = None,
    valuations: Sequence[Valuation] | None = None,
    items: int | None = None,
    warm_start: CLPSolution | None = None,
) -> CLPSolution:
    """Maximize welfare over the configuration LP.

    ``valuations`` overrides the instance's agents (for instance with
    truncated copies).  ``items`` restricts the item set.  A ``warm_start``
    is any feasible solution; the exact optimum is checked against it.
    """
    vals = list(valuations) if valuations is not None else instance.valuations
    if not vals:
        raise InvalidInstance("configuration LP needs at least one agent")
    m = vals[0].m
    universe = full(m) if items is None else items
    n = len(vals)
    subs = list(submasks(universe))
    if n * len(subs) > MAX_CLP_COLUMNS:
        raise TooLarge(f"configuration LP would have {n * len(subs)} columns")
    tables = [v.table() for v in vals]

    cols = [(i, s) for i in range(n) for s in subs]
    lp = LinearProgram([tables[i][s] for i, s in cols])
    for i in range(n):
        lp.add([ONE if a == i else ZERO for a, _ in cols], "=", 1)
    for e in iter_bits(universe):
        lp.add([ONE if s >> e & 1 else ZERO for _, s in cols], "=", 1)
    res = lp_solve(lp)
    if not res.optimal:
        raise AssertionError(f"configuration LP reported {res.status.value}")
    entries = {c: w for c, w in zip(cols, res.solution) if w}
    sol = CLPSolution(entries, res.value)
    sol.check(n, universe)
    if warm_start is not None:
        warm_start.check(n, universe)
        if warm_start.objective > sol.objective:
            raise AssertionError("warm start beats the reported LP optimum")
    return sol


def mes_warm_start(instance: Instance) -> CLPSolution:
    """Feasible CLP point built from every agent's MES partition.

    Agent i's partition covers each item with weight b_i, so the union over
    agents covers each item exactly once.
    """
    from .shares import mes

    entries: dict = {}
    objective = ZERO
    for i, agent in enumerate(instance.agents):
        value, fp = mes(agent.valuation, agent.entitlement)
        objective += value
        for s, w in fp.support():
            entries[(i, s)] = entries.get((i, s), ZERO) + w
    return CLPSolution(entries, objective)


# ---------------------------------------------------------------------------
# Randomized allocations and the ex-ante optimum


@dataclass(frozen=True)
class RandomizedAllocation:
    support: tuple  # of (Allocation, probability)

    def __post_init__(self):
        total = sum((p for _, p in self.support), ZERO)
        if total != 1:
            raise ValueError(f"probabilities sum to {total}")
        if any(p < 0 for _, p in self.support):
            raise ValueError("negative probability")

    def expected_values(self, instance: Instance) -> list[Fraction]:
        out = [ZERO] * instance.n
        for alloc, p in self.support:
            for i, val in enumerate(alloc.values(instance)):
                out[i] += p * val
        return out


def _shares(instance: Instance, share: str) -> list[Fraction]:
    from .shares import mes, mms

    share = share.lower()
    if share == "mes":
        return [mes(a.valuation, a.entitlement)[0] for a in instance.agents]
    if share == "mms":
        if not instance.equal_entitlements:
            raise HypothesisViolated("MMS is defined for equal entitlements only")
        return [mms(v, instance.n)[0] for v in instance.valuations]
    raise ValueError(f"unknown share {share!r}")


def exante_opt(
    instance: Instance, share: str = "mes", shares: Sequence[Fraction] | None = None
) -> tuple[RandomizedAllocation, Fraction]:
    """Largest r such that some lottery gives every agent r times its share.

    Solved exactly as an LP over all complete deterministic allocations;
    allocations with identical value vectors share a column.
    """
    n, m = instance.n, instance.m
    if n**m > MAX_ALLOCATIONS:
        raise TooLarge(f"{n}^{m} allocations exceed the enumeration limit")
    targets = list(shares) if shares is not None else _shares(instance, share)
    if all(t == 0 for t in targets):
        raise HypothesisViolated("every share is zero; the ratio is unbounded")
    tables = [v.table() for v in instance.valuations]

    columns: dict[tuple, tuple] = {}
    for owners in itertools.product(range(n), repeat=m):
        bundles = [0] * n
        for e, i in enumerate(owners):
            bundles[i] |= 1 << e
        key = tuple(tables[i][bundles[i]] for i in range(n))
        if key not in columns:
            columns[key] = tuple(bundles)
    keys = list(columns)

    # Variables: one probability per column, then r.
    lp = LinearProgram([ZERO] * len(keys) + [ONE])
    lp.add([ONE] * len(keys) + [ZERO], "=", 1)
    for i in range(n):
        if targets[i] > 0:
            lp.add([k[i] for k in keys] + [-targets[i]], ">=", 0)
    res = lp_solve(lp)
    if not res.optimal:
        raise AssertionError(f"ex-ante LP reported {res.status.value}")
    support = tuple(
        (Allocation(columns[k]), p) for k, p in zip(keys, res.solution[:-1]) if p
    )
    return RandomizedAllocation(support), res.value


# ---------------------------------------------------------------------------
# Vector instances


def fiber(n: int, agent: int, j: int) -> int:
    """Vectors in {0..n-1}^n (as base-n integers) whose ``agent``-th coordinate is j."""
    mask = 0
    for e in range(n**n):
        if (e // n**agent) % n == j:
            mask |= 1 << e
    return mask


class FiberValuation(Valuation):
    """v(S) = 2 if S contains one of the agent's fibers, 1 if nonempty, else 0."""

    kind = "fiber"

    def __init__(self, n: int, agent: int):
        self.n = n
        self.agent = agent
        self.m = n**n
        self.fibers = tuple(fiber(n, agent, j) for j in range(n))

    def value(self, mask: int) -> Fraction:
        self._check_mask(mask)
        if not mask:
            return ZERO
        if any(mask & f == f for f in self.fibers):
            return Fraction(2)
        return ONE

    def __repr__(self):
        return f"FiberValuation(n={self.n}, agent={self.agent})"


def gen_vector_instance(n: int, cls: str) -> Instance:
    if n not in (2, 3):
        raise ParameterTooLarge("vector instances are supported for n in {2, 3}")
    m = n**n
    vals: list[Valuation] = []
    for i in range(n):
        fibers = [fiber(n, i, j) for j in range(n)]
        if cls == "xos":
            vals.append(XOS([[1 if f >> e & 1 else 0 for e in range(m)] for f in fibers], m))
        elif cls == "subadditive":
            if m <= 16:
                fv = FiberValuation(n, i)
                vals.append(Table([fv.value(s) for s in range(1 << m)], m))
            else:
                vals.append(FiberValuation(n, i))
        else:
            raise ValueError(f"unknown class {cls!r}")
    return Instance.build(vals)


def vector_mms(n: int, cls: str) -> Fraction:
    """Closed-form MMS of every agent on the vector instance.

    The fibers reach it; it is also an upper bound because v(M) = 2 in the
    subadditive case and v(S) <= |S| with sum |S| = n^n in the XOS case.
    """
    return Fraction(2) if cls == "subadditive" else Fraction(n ** (n - 1))


def vector_welfare_cap(n: int, cls: str) -> Fraction:
    if cls == "subadditive":
        return Fraction(n + 1)
    return (1 - Fraction(n - 1, n) ** n) * n**n


def vector_ratio_bound(n: int, cls: str) -> Fraction:
    """Cap on the min-agent ex-ante ratio to MMS implied by the welfare cap."""
    return vector_welfare_cap(n, cls) / (n * vector_mms(n, cls))


# ---------------------------------------------------------------------------
# Empirical rounding


ROUNDING_TARGETS = {"xos": 1 - 1 / math.e, "subadditive": 0.5}


def _sample(rng: random.Random, options: list[tuple[int, Fraction]]) -> int:
    denom = math.lcm(*(w.denominator for _, w in options))
    ticket = rng.randrange(denom)
    acc = 0
    for s, w in options:
        acc += w.numerator * (denom // w.denominator)
        if ticket < acc:
            return s
    return options[-1][0]


def round_solution(
    x: CLPSolution,
    instance: Instance,
    cls: str = "xos",
    seed: int = 0,
    trials: int = 10_000,
    shares: Sequence[Fraction] | None = None,
) -> dict:
    """Sample tentative bundles from ``x`` and resolve contention by random priority.

    Each trial uses its own generator derived from (seed, trial), so trials
    can be split across workers without changing the report.
    """
    n = instance.n
    vals = instance.valuations
    options = [x.bundles_of(i) for i in range(n)]
    sums = [ZERO] * n
    squares = [ZERO] * n
    for t in range(trials):
        rng = random.Random(f"{seed}:{t}")
        tentative = [_sample(rng, options[i]) for i in range(n)]
        order = list(range(n))
        rng.shuffle(order)
        taken = 0
        for i in order:
            got = tentative[i] & ~taken
            taken |= got
            val = vals[i].value(got)
            sums[i] += val
            squares[i] += val * val
    agents = []
    for i in range(n):
        contribution = x.contribution(i, vals)
        mean = sums[i] / trials
        variance = squares[i] / trials - mean * mean
        share = shares[i] if shares is not None else None
        agents.append(
            {
                "lp_contribution": format_rat(contribution),
                "empirical_mean": format_rat(mean),
                "variance": format_rat(variance),
                "ratio": format_rat(mean / contribution) if contribution else None,
                "share": format_rat(share) if share is not None else None,
                "ratio_to_share": format_rat(mean / share) if share else None,
            }
        )
    return {
        "class": cls,
        "target": ROUNDING_TARGETS[cls],
        "seed": seed,
        "trials": trials,
        "agents": agents,
    }


__all__ = [
    "CLPSolution",
    "RandomizedAllocation",
    "FiberValuation",
    "clp_solve",
    "mes_warm_start",
    "exante_opt",
    "fiber",
    "gen_vector_instance",
    "vector_mms",
    "vector_welfare_cap",
    "vector_ratio_bound",
    "round_solution",
]
