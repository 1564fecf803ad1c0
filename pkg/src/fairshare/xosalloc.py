"""Allocation algorithms for XOS agents with anyprice-share guarantees.

* :func:`apsxos_allocate` maximizes welfare under capped valuations and
  gives each agent (1 - b + b_i) times its APS.
* :func:`allocate_one_sixth` runs the replacement procedure for arbitrary
  entitlements until every agent holds a sixth of its APS.
* :func:`allocate_equal_417` is the two-step algorithm for equal
  entitlements with ratio 4/17, and :func:`lemma817_check` re-derives the
  fractional partition that justifies its second step.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .errors import (
    BoundViolated,
    HypothesisViolated,
    LemmaViolated,
    StepBudgetExhausted,
    TooLarge,
    Unsplittable,
)
from .model import (
    Allocation,
    Instance,
    Valuation,
    check_fractional_partition,
    complete_fractional_partition,
    full,
    items_of,
    iter_bits,
    lex_key,
    size,
    supporting_clause,
    welfare_dp,
)
from .numerics import ONE, ZERO, format_rat, rat
from .shares import aps

MAX_WELFARE_ALLOCATIONS = 10**7

ONE_SIXTH_MARGIN = 10
RHO_417 = Fraction(4, 17)


class HatValuation(Valuation):
    """min(cap, scale * base(S))."""

    kind = "hat"

    def __init__(self, base: Valuation, cap, scale=1):
        self.base = base
        self.cap = rat(cap)
        self.scale = rat(scale)
        self.m = base.m

    def value(self, mask: int) -> Fraction:
        v = self.scale * self.base.value(mask)
        return v if v < self.cap else self.cap

    def _build_table(self):
        cap, scale = self.cap, self.scale
        return [min(cap, scale * x) for x in self.base.table()]

    def __repr__(self):
        return f"HatValuation({self.base!r}, cap={self.cap}, scale={self.scale})"


class _Zero(Valuation):
    kind = "zero"

    def __init__(self, m: int):
        self.m = m

    def value(self, mask: int) -> Fraction:
        return ZERO


def welfare_max(
    valuations: Sequence[Valuation], items: int | None = None
) -> tuple[tuple, Fraction]:
    """Bundles (one per valuation) maximizing total value, and that total.

    Exact subset DP; among maximizers the bundle tuple is lexicographically
    smallest as a tuple of bitmasks.
    """
    m = valuations[0].m
    universe = full(m) if items is None else items
    if len(valuations) ** size(universe) > MAX_WELFARE_ALLOCATIONS:
        raise TooLarge("welfare maximization beyond n^m = 10^7")
    total, bundles = welfare_dp([v.table() for v in valuations], universe)
    return bundles, total


# ---------------------------------------------------------------------------
# Welfare-maximizer allocation meeting (1 - b + b_i) APS


@dataclass
class AllocationResult:
    allocation: Allocation
    values: tuple
    aps: tuple
    bounds: tuple
    entitlements: tuple
    steps: list = field(default_factory=list)
    trace: object = None

    def to_json(self, instance: Instance | None = None) -> dict:
        agents = []
        for i, b in enumerate(self.allocation.bundles):
            share = self.aps[i]
            agents.append(
                {
                    "bundle": list(items_of(b)),
                    "value": format_rat(self.values[i]),
                    "entitlement": format_rat(self.entitlements[i]),
                    "aps": format_rat(share) if share is not None else None,
                    "bound": format_rat(self.bounds[i]) if self.bounds[i] is not None else None,
                    "ratio": format_rat(self.values[i] / share) if share else None,
                }
            )
        out = {"agents": agents}
        if self.steps:
            out["steps"] = [s.to_json() for s in self.steps]
        return out


def apsxos_allocate(
    instance: Instance,
    entitlements: dict | Sequence | None = None,
    items: int | None = None,
    agents: Sequence[int] | None = None,
) -> AllocationResult:
    """Welfare maximizer of the capped valuations min(b_i, (b_i/APS_i) v_i).

    ``entitlements`` may total less than 1.  Only ``agents`` take part and
    only ``items`` are distributed; everyone else gets an empty bundle.
    Every participant is checked against (1 - b + b_i) APS_i exactly.
    """
    n = instance.n
    members = list(range(n)) if agents is None else list(agents)
    universe = full(instance.m) if items is None else items
    if entitlements is None:
        ents = {i: instance.agents[i].entitlement for i in members}
    elif isinstance(entitlements, dict):
        ents = {i: rat(entitlements[i]) for i in members}
    else:
        ents = {i: rat(entitlements[i]) for i in members}
    b_total = sum(ents.values(), ZERO)

    shares: dict[int, Fraction] = {}
    hats = []
    for i in members:
        v = instance.agents[i].valuation
        share, _ = aps(v, ents[i], universe)
        shares[i] = share
        if share == 0:
            hats.append(_Zero(instance.m))
        else:
            hats.append(HatValuation(v, ents[i], ents[i] / share))
    bundles, _ = welfare_max(hats, universe)

    full_bundles = [0] * n
    for i, b in zip(members, bundles):
        full_bundles[i] = b
    alloc = Allocation(tuple(full_bundles))
    values = tuple(alloc.values(instance))
    bounds = [None] * n
    for i in members:
        bound = (1 - b_total + ents[i]) * shares[i]
        bounds[i] = bound
        if values[i] < bound:
            raise BoundViolated(
                f"agent {i} got {format_rat(values[i])} < (1 - b + b_i) APS = {format_rat(bound)}"
            )
    aps_all = tuple(shares.get(i) for i in range(n))
    ent_all = tuple(ents.get(i, ZERO) for i in range(n))
    return AllocationResult(alloc, values, aps_all, tuple(bounds), ent_all)


# ---------------------------------------------------------------------------
# Bundle splitting helpers


def split_min_value(B: int, v: Valuation, threshold) -> tuple[int, int]:
    """Insert items of B into B1 (highest value first) until v(B1) >= threshold.

    B2 is the rest.  Raises Unsplittable unless both parts reach the
    threshold.  Threshold 0 puts the first item alone in B1.
    """
    threshold = rat(threshold)
    order = sorted(iter_bits(B), key=lambda e: (-v.value(1 << e), e))
    b1 = 0
    for e in order:
        if b1 and v.value(b1) >= threshold:
            break
        b1 |= 1 << e
    b2 = B & ~b1
    if v.value(b1) < threshold or v.value(b2) < threshold:
        raise Unsplittable(
            f"cannot split {items_of(B)} into two parts worth {format_rat(threshold)}"
        )
    return b1, b2


def three_set_partition(
    B: int, values: Sequence, e: int, check_hypothesis: bool = True
) -> tuple[int, int, int]:
    """Three subsets of B - {e}, each worth half of v(B), no item in all three.

    ``values`` is an additive valuation as a per-item vector.  The sets are
    S1+S2, S2+S3, S3+S1 for the 3-partition S1 >= S2 >= S3 of B - {e} with
    the smallest spread v(S1) - v(S3).  ``check_hypothesis=False`` skips the
    pairs-below-a-quarter test; the half-value postcondition is still enforced.
    """
    vals = [rat(x) for x in values]
    if not B >> e & 1:
        raise ValueError(f"item {e} is not in the bundle")
    total = sum((vals[x] for x in iter_bits(B)), ZERO)
    if total <= 0:
        raise HypothesisViolated("bundle has no value")
    norm = {x: vals[x] / total for x in iter_bits(B)}
    members = items_of(B)
    for a, b in itertools.combinations(members, 2) if check_hypothesis else ():
        if norm[a] + norm[b] >= Fraction(1, 4):
            raise HypothesisViolated(f"pair ({a}, {b}) is worth at least a quarter")
    rest = [x for x in members if x != e]
    best, best_key = None, None
    # The spread ignores how the three sets are labelled, so the first item
    # can be pinned to set 0.
    for tail in itertools.product(range(3), repeat=max(len(rest) - 1, 0)):
        labels = ((0,) + tail) if rest else ()
        parts = [0, 0, 0]
        worth = [ZERO, ZERO, ZERO]
        for x, lab in zip(rest, labels):
            parts[lab] |= 1 << x
            worth[lab] += norm[x]
        order = sorted(range(3), key=lambda j: (-worth[j], j))
        spread = worth[order[0]] - worth[order[2]]
        if best_key is None or spread < best_key:
            best_key = spread
            best = tuple(parts[j] for j in order)
    s1, s2, s3 = best
    out = (s1 | s2, s2 | s3, s3 | s1)
    for part in out:
        if sum((norm[x] for x in iter_bits(part)), ZERO) < Fraction(1, 2):
            raise LemmaViolated(f"three-set partition part {items_of(part)} is below one half")
    return out


# ---------------------------------------------------------------------------
# 1/6 replacement procedure


@dataclass(frozen=True)
class ReplacementStep:
    agent: int
    case: str  # "SingleItem" or "MultiItems"
    old_bundle: int
    new_bundle: int
    welfare_before: Fraction
    welfare_after: Fraction
    alpha_i: Fraction
    alpha: Fraction

    def to_json(self) -> dict:
        return {
            "agent": self.agent,
            "case": self.case,
            "old_bundle": list(items_of(self.old_bundle)),
            "new_bundle": list(items_of(self.new_bundle)),
            "welfare_before": format_rat(self.welfare_before),
            "welfare_after": format_rat(self.welfare_after),
            "alpha_i": format_rat(self.alpha_i),
            "alpha": format_rat(self.alpha),
        }


def _rebuilt_partition(v: Valuation, scale: Fraction, b: Fraction, fp) -> list:
    """Single-item and multiple-items bundles from the agent's APS partition.

    Returns (kind, bundle, weight) triples; values are v * scale so that the
    APS equals b.
    """
    u = HatValuation(v, cap=Fraction(10**18), scale=scale)  # uncapped scaling
    large = b / 3
    out = []
    for B, w in fp.support():
        big = [e for e in iter_bits(B) if u.value(1 << e) >= large]
        if big:
            e = min(big, key=lambda x: (-u.value(1 << x), x))
            out.append(("SingleItem", 1 << e, w))
        else:
            b1, b2 = split_min_value(B, u, large)
            out.append(("MultiItems", b1, w / 2))
            out.append(("MultiItems", b2, w / 2))
    return out


def _contributions(instance, scales, caps, bundles, skip: int) -> dict[int, Fraction]:
    """Per-item contribution to the capped welfare of every agent but ``skip``.

    Agent j's capped value on A_j is written additively via its maximizing
    clause on A_j, scaled down uniformly if it exceeds the cap.
    """
    contrib: dict[int, Fraction] = {}
    for j, A in enumerate(bundles):
        if j == skip or not A or scales[j] is None:
            continue
        v = instance.agents[j].valuation
        clause = [scales[j] * x for x in supporting_clause(v, A)]
        total = sum((clause[e] for e in iter_bits(A)), ZERO)
        factor = caps[j] / total if total > caps[j] else ONE
        for e in iter_bits(A):
            contrib[e] = clause[e] * factor
    return contrib


def allocate_one_sixth(
    instance: Instance, max_steps: int | None = None, start: Sequence[int] | None = None
) -> AllocationResult:
    """Replacement procedure giving every agent at least APS/6.

    Valuations are scaled so that APS_i = b_i and capped at b_i/3.  Starting
    from the capped-welfare maximizer, an agent below b_i/6 swaps its bundle
    for a single-item or multiple-items bundle of least contribution to the
    others' welfare, following the two cases of the argument.  ``start``
    replaces the initial allocation (the argument works from any start).
    """
    n = instance.n
    ents = instance.entitlements
    b_min = min(ents)
    if max_steps is None:
        max_steps = math.ceil((1 / b_min) ** 2) + ONE_SIXTH_MARGIN

    shares, scales, caps, hats, partitions = [], [], [], [], []
    for a in instance.agents:
        share, fp = aps(a.valuation, a.entitlement)
        shares.append(share)
        if share == 0:
            scales.append(None)
            caps.append(ZERO)
            hats.append(_Zero(instance.m))
            partitions.append(None)
            continue
        scale = a.entitlement / share
        scales.append(scale)
        caps.append(a.entitlement / 3)
        hats.append(HatValuation(a.valuation, a.entitlement / 3, scale))
        partitions.append(fp)

    bundles = list(welfare_max(hats)[0] if start is None else start)
    rebuilt: dict[int, list] = {}
    steps: list[ReplacementStep] = []

    def welfare(bs):
        return sum((h.value(b) for h, b in zip(hats, bs)), ZERO)

    while True:
        poor = [
            i for i in range(n) if scales[i] is not None and hats[i].value(bundles[i]) < ents[i] / 6
        ]
        if not poor:
            break
        if len(steps) >= max_steps:
            raise StepBudgetExhausted(f"no acceptable allocation after {max_steps} replacement steps")
        i = poor[0]
        b_i = ents[i]
        if i not in rebuilt:
            rebuilt[i] = _rebuilt_partition(instance.agents[i].valuation, scales[i], b_i, partitions[i])
        parts = rebuilt[i]
        contrib = _contributions(instance, scales, caps, bundles, i)
        w_rest = sum(contrib.values(), ZERO)
        singles = [(bm, w) for kind, bm, w in parts if kind == "SingleItem"]
        multis = [(bm, w) for kind, bm, w in parts if kind == "MultiItems"]
        alpha_i = sum((w for _, w in singles), ZERO)
        single_items = 0
        for bm, _ in singles:
            single_items |= bm
        alpha = (
            sum((contrib.get(e, ZERO) for e in iter_bits(single_items)), ZERO) / w_rest
            if w_rest
            else ZERO
        )

        def cost(bm):
            return sum((contrib.get(e, ZERO) for e in iter_bits(bm)), ZERO)

        if singles and alpha_i >= alpha:
            case = "SingleItem"
            choice = min({bm for bm, _ in singles}, key=lambda bm: (cost(bm), lex_key(bm)))
            limit = b_i * w_rest
        else:
            case = "MultiItems"
            choice = min({bm for bm, _ in multis}, key=lambda bm: (cost(bm), lex_key(bm)))
            limit = b_i * w_rest / 2
        if cost(choice) > limit:
            raise LemmaViolated(
                f"replacement for agent {i} costs {format_rat(cost(choice))} > {format_rat(limit)}"
            )
        before = welfare(bundles)
        old = bundles[i]
        bundles = [choice if j == i else bundles[j] & ~choice for j in range(n)]
        after = welfare(bundles)
        if case == "MultiItems" and after <= before:
            raise LemmaViolated(f"multiple-items replacement for agent {i} did not raise welfare")
        steps.append(ReplacementStep(i, case, old, choice, before, after, alpha_i, alpha))

    alloc = Allocation(tuple(bundles))
    values = tuple(alloc.values(instance))
    bounds = tuple(s / 6 for s in shares)
    for i in range(n):
        if values[i] < bounds[i]:
            raise BoundViolated(f"agent {i} got {format_rat(values[i])} < APS/6 = {format_rat(bounds[i])}")
    return AllocationResult(alloc, values, tuple(shares), bounds, tuple(ents), steps)


# ---------------------------------------------------------------------------
# Equal entitlements: 4/17


@dataclass
class Step1Trace:
    n: int
    aps: tuple  # APS at 1/n per agent
    assignments: list  # (agent, bundle) in removal order
    agents5: tuple
    items5: int
    zero_agents: tuple

    def to_json(self) -> dict:
        return {
            "assignments": [
                {"agent": a, "bundle": list(items_of(b))} for a, b in self.assignments
            ],
            "agents5": list(self.agents5),
            "items5": list(items_of(self.items5)),
        }


def _smallest_acceptable_global(instance, scales, agents, remaining, rho, max_size):
    best, best_key = None, None
    pool = items_of(remaining)
    for k in range(1, min(max_size, len(pool)) + 1):
        for combo in itertools.combinations(pool, k):
            s = 0
            for e in combo:
                s |= 1 << e
            for i in agents:
                val = scales[i] * instance.agents[i].valuation.value(s)
                if val >= rho:
                    key = (-val, i, combo)
                    if best_key is None or key < best_key:
                        best, best_key = (i, s), key
        if best is not None:
            return best
    return None


def allocate_equal_417(instance: Instance) -> AllocationResult:
    """Step 1 hands out acceptable sets of at most four items; step 2 runs the
    capped-welfare allocation on what is left at entitlements 1/(2 n_5)."""
    n = instance.n
    if not instance.equal_entitlements:
        raise HypothesisViolated("the 4/17 algorithm needs equal entitlements")
    b = Fraction(1, n)
    shares = [aps(a.valuation, b)[0] for a in instance.agents]
    scales = [1 / s if s else None for s in shares]
    zero = tuple(i for i in range(n) if shares[i] == 0)
    agents = [i for i in range(n) if shares[i] > 0]
    remaining = full(instance.m)
    bundles = [0] * n
    assignments = []
    while agents:
        found = _smallest_acceptable_global(instance, scales, agents, remaining, RHO_417, 4)
        if found is None:
            break
        i, s = found
        bundles[i] = s
        remaining &= ~s
        agents.remove(i)
        assignments.append((i, s))
    trace = Step1Trace(n, tuple(shares), assignments, tuple(agents), remaining, zero)
    if agents:
        n5 = len(agents)
        step2 = apsxos_allocate(
            instance, {i: Fraction(1, 2 * n5) for i in agents}, items=remaining, agents=agents
        )
        for i in agents:
            bundles[i] = step2.allocation.bundles[i]
    alloc = Allocation(tuple(bundles))
    values = tuple(alloc.values(instance))
    bounds = tuple(RHO_417 * s for s in shares)
    for i in range(n):
        if values[i] < bounds[i]:
            raise BoundViolated(
                f"agent {i} got {format_rat(values[i])} < (4/17) APS = {format_rat(bounds[i])}"
            )
    return AllocationResult(alloc, values, tuple(shares), bounds, (b,) * n, trace=trace)


def lemma817_case(m1: int, m2: int, m3: int, m4: int) -> int:
    """Which of the five cases covers a bundle that lost m_j items to
    step-1 sets of size j.  Case 1 is m1 + m2/2 + m3/3 + m4/4 >= 1."""
    if Fraction(m1) + Fraction(m2, 2) + Fraction(m3, 3) + Fraction(m4, 4) >= 1:
        return 1
    if m1 + m2 + m3 + m4 == 0:
        return 2
    if m2 == 1 and m3 + m4 <= 2:
        return 3
    if m2 == 0 and 2 <= m3 + m4 <= 4:
        return 4
    if m2 == 0 and m3 + m4 == 1:
        return 5
    raise LemmaViolated(f"no case applies to counts {(m1, m2, m3, m4)}")


def lemma817_partition(instance: Instance, trace: Step1Trace, agent: int):
    """Rebuild the fractional 1/(2 n_5) partition of the leftover items for ``agent``.

    Returns (parts, cases): desired-weight bundles before completion and the
    case applied to each APS bundle.
    """
    n, n5 = trace.n, len(trace.agents5)
    v = instance.agents[agent].valuation
    share = trace.aps[agent]
    _, fp = aps(v, Fraction(1, n))
    u = HatValuation(v, cap=Fraction(10**18), scale=1 / share)
    lift = Fraction(n, n5)
    sizes = {}
    for _, s in trace.assignments:
        for e in iter_bits(s):
            sizes[e] = size(s)
    parts, cases = [], []
    for B, w in fp.support():
        counts = {j: 0 for j in (1, 2, 3, 4)}
        for e in iter_bits(B):
            if e in sizes:
                if sizes[e] > 4:
                    raise HypothesisViolated("step-1 sets have at most four items")
                counts[sizes[e]] += 1
        rest = B & trace.items5
        case = lemma817_case(counts[1], counts[2], counts[3], counts[4])
        cases.append(case)
        if case == 2:
            b1, b2 = split_min_value(B, u, Fraction(8, 17))
            parts += [(b1, w / 2 * lift), (b2, w / 2 * lift)]
        elif case in (3, 4):
            parts.append((rest, w / 2 * lift))
        elif case == 5:
            (e,) = [x for x in iter_bits(B) if x in sizes]
            clause = supporting_clause(v, B)
            for part in three_set_partition(B, clause, e):
                parts.append((part, w / 4 * lift))
    return parts, cases


def lemma817_check(instance: Instance, trace: Step1Trace) -> bool:
    """Verify that each step-2 agent has a fractional 1/(2 n_5) partition of
    the leftover items with every bundle worth 8/17 of its APS."""
    n5 = len(trace.agents5)
    if n5 == 0:
        return True
    rho = Fraction(1, 2 * n5)
    target = Fraction(8, 17)
    for i in trace.agents5:
        v = instance.agents[i].valuation
        share = trace.aps[i]
        parts, _ = lemma817_partition(instance, trace, i)
        total = sum((w for _, w in parts), ZERO)
        if total < 1:
            raise LemmaViolated(f"agent {i}: desired weights sum to {format_rat(total)} < 1")
        for bm, _ in parts:
            if v.value(bm) < target * share:
                raise LemmaViolated(f"agent {i}: bundle {items_of(bm)} below 8/17")
        for e in iter_bits(trace.items5):
            cover = sum((w for bm, w in parts if bm >> e & 1), ZERO)
            if cover > rho:
                raise LemmaViolated(f"agent {i}: item {e} covered {format_rat(cover)} > {format_rat(rho)}")
        try:
            fp = complete_fractional_partition(parts, rho, trace.items5)
        except ValueError as exc:
            raise LemmaViolated(f"agent {i}: {exc}") from exc
        check = check_fractional_partition(fp, v, trace.items5)
        if not check.valid or (check.min_value is not None and check.min_value < target * share):
            raise LemmaViolated(f"agent {i}: completed partition invalid ({check.reason})")
        aps5, _ = aps(v, rho, trace.items5)
        if aps5 < target * share:
            raise LemmaViolated(f"agent {i}: APS on leftovers {format_rat(aps5)} below 8/17")
    return True


__all__ = [
    "HatValuation",
    "AllocationResult",
    "ReplacementStep",
    "Step1Trace",
    "welfare_max",
    "apsxos_allocate",
    "split_min_value",
    "three_set_partition",
    "allocate_one_sixth",
    "allocate_equal_417",
    "lemma817_case",
    "lemma817_partition",
    "lemma817_check",
]
