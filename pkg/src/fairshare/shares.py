"""Share benchmarks: maximin share, anyprice share and maximum expectation share."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .errors import GuaranteeViolated, RelationViolated, TooLarge
from .model import (
    FractionalPartition,
    Truncated,
    Valuation,
    class_check,
    full,
    items_of,
    iter_bits,
    submasks,
    welfare_dp,
)
from .numerics import ONE, ZERO, LinearProgram, format_rat, lp_solve, rat

MMS_MAX_M = 12
MMS_MAX_N = 5
APS_MAX_M = 16
CLP_MAX_M = 12


def _universe(v: Valuation, items: int | None) -> int:
    return full(v.m) if items is None else items


# ---------------------------------------------------------------------------
# MMS


def mms(v: Valuation, n: int, items: int | None = None) -> tuple[Fraction, list[int]]:
    """Exact maximin share over n-partitions, with a witness partition.

    Branch and bound over canonical item-to-bin assignments in increasing
    item order.  Only strict improvements replace the incumbent, so the
    witness is the first optimum in that order.
    """
    if n < 1:
        raise ValueError("n must be positive")
    universe = _universe(v, items)
    order = items_of(universe)
    if len(order) > MMS_MAX_M or n > MMS_MAX_N:
        raise TooLarge(f"MMS enumeration limited to m <= {MMS_MAX_M}, n <= {MMS_MAX_N}")
    t = v.table()
    # rest[k]: items not yet placed when item order[k] is next.
    rest = [0] * (len(order) + 1)
    for k in range(len(order) - 1, -1, -1):
        rest[k] = rest[k + 1] | 1 << order[k]

    best_val = Fraction(-1)
    best_bins: list[int] = []
    bins = [0] * n

    def search(k: int, used: int) -> None:
        nonlocal best_val, best_bins
        free = rest[k]
        # Optimistic bound: every bin may still receive all unplaced items.
        bound = min(t[b | free] for b in bins)
        if bound <= best_val:
            return
        if k == len(order):
            best_val = bound
            best_bins = list(bins)
            return
        bit = 1 << order[k]
        for j in range(min(used + 1, n)):
            bins[j] |= bit
            search(k + 1, max(used, j + 1))
            bins[j] ^= bit

    search(0, 0)
    return best_val, best_bins


# ---------------------------------------------------------------------------
# APS and MES


def _partition_lp(t, universe: int, columns: list[int], b: Fraction, objective=None):
    lp = LinearProgram([t[s] for s in columns] if objective else [ZERO] * len(columns))
    lp.add([ONE] * len(columns), "=", 1)
    for e in iter_bits(universe):
        lp.add([ONE if s >> e & 1 else ZERO for s in columns], "=", b)
    return lp_solve(lp)


def _check_b(b) -> Fraction:
    b = rat(b)
    if not 0 < b <= 1:
        raise ValueError(f"entitlement must lie in (0, 1], got {b}")
    return b


def aps(v: Valuation, b, items: int | None = None) -> tuple[Fraction, FractionalPartition]:
    """Exact anyprice share with a fractional b-partition witness.

    APS is attained at one of the distinct bundle values, so the search is
    a binary search over that sorted list.  Each probe is a feasibility LP
    over the nonempty bundles worth at least the threshold.
    """
    b = _check_b(b)
    universe = _universe(v, items)
    if len(items_of(universe)) > APS_MAX_M:
        raise TooLarge(f"APS is limited to m <= {APS_MAX_M}")
    t = v.table()
    nonempty = [s for s in submasks(universe) if s]
    candidates = sorted({t[s] for s in nonempty if t[s] > 0})

    def probe(threshold):
        cols = [s for s in nonempty if t[s] >= threshold]
        res = _partition_lp(t, universe, cols, b)
        if not res.optimal:
            return None
        parts = tuple((s, w) for s, w in zip(cols, res.solution) if w)
        return FractionalPartition(parts, b)

    lo, hi = 0, len(candidates) - 1
    best = None
    while lo <= hi:
        mid = (lo + hi) // 2
        fp = probe(candidates[mid])
        if fp is None:
            hi = mid - 1
        else:
            best = (candidates[mid], fp)
            lo = mid + 1
    if best is None:
        parts = [(universe, b)] if b == 1 else [(0, 1 - b), (universe, b)]
        return ZERO, FractionalPartition(tuple(parts), b)
    return best


def mes(v: Valuation, b, items: int | None = None) -> tuple[Fraction, FractionalPartition]:
    """Maximum expectation share: best weighted average over fractional b-partitions."""
    b = _check_b(b)
    universe = _universe(v, items)
    if len(items_of(universe)) > APS_MAX_M:
        raise TooLarge(f"MES is limited to m <= {APS_MAX_M}")
    t = v.table()
    cols = list(submasks(universe))
    res = _partition_lp(t, universe, cols, b, objective=True)
    if not res.optimal:
        raise AssertionError(f"MES LP reported {res.status.value}")
    parts = tuple((s, w) for s, w in zip(cols, res.solution) if w)
    return res.value, FractionalPartition(parts, b)


def aps_via_clp(v: Valuation, n: int, items: int | None = None) -> Fraction:
    """APS at entitlement 1/n through the configuration LP on truncated copies.

    A cap C is at most the APS exactly when the LP for n copies of
    min(v, C) reaches nC.
    """
    from .exante import clp_solve

    universe = _universe(v, items)
    if len(items_of(universe)) > CLP_MAX_M:
        raise TooLarge(f"CLP-based APS is limited to m <= {CLP_MAX_M}")
    t = v.table()
    candidates = sorted({t[s] for s in submasks(universe) if t[s] > 0})
    lo, hi = 0, len(candidates) - 1
    best = ZERO
    while lo <= hi:
        mid = (lo + hi) // 2
        cap = candidates[mid]
        sol = clp_solve(valuations=[Truncated(v, cap)] * n, items=universe)
        if sol.objective == n * cap:
            best = cap
            lo = mid + 1
        else:
            hi = mid - 1
    return best


# ---------------------------------------------------------------------------
# Approximate MMS partition for subadditive valuations


def _cut_chunks(v: Valuation, bundle_mask: int, low: Fraction, high: Fraction):
    """Split a bundle into chunks worth between ``low`` and ``high``.

    Items are added one at a time.  If an item would push the open chunk
    past ``high``, that item alone is worth more than ``high - low`` and is
    cut as its own chunk.  The open chunk at the end is worth below ``low``.
    """
    chunks = []
    open_chunk = 0
    for e in iter_bits(bundle_mask):
        grown = open_chunk | 1 << e
        val = v.value(grown)
        if val > high:
            chunks.append(1 << e)
            continue
        open_chunk = grown
        if val >= low:
            chunks.append(open_chunk)
            open_chunk = 0
    return chunks, open_chunk


def approx_mms_partition_subadditive(v: Valuation, n: int, items: int | None = None) -> list[int]:
    """n disjoint bundles covering the items, each worth at least T/6n.

    T is the configuration LP value for n copies of v on the current item
    set; it is recomputed after each outright allocation of a large item.
    Exact welfare maximization over n clones stands in for rounding.
    """
    from .exante import clp_solve

    universe = _universe(v, items)
    if len(items_of(universe)) > CLP_MAX_M:
        raise TooLarge(f"approximate MMS partition is limited to m <= {CLP_MAX_M}")
    out: list[int] = []
    remaining = universe
    agents = n
    while agents > 1:
        T = clp_solve(valuations=[v] * agents, items=remaining).objective
        if T == 0:
            out.extend([remaining] + [0] * (agents - 1))
            return out
        big = T / (3 * agents)
        small = T / (6 * agents)
        top, arg = None, -1
        for e in iter_bits(remaining):
            val = v.value(1 << e)
            if val >= big and (top is None or val > top):
                top, arg = val, e
        if arg >= 0:
            out.append(1 << arg)
            remaining ^= 1 << arg
            agents -= 1
            continue

        t = v.table()
        _, bundles = welfare_dp([t] * agents, remaining)
        chunks: list[int] = []
        leftover = 0
        for bmask in bundles:
            cs, rest = _cut_chunks(v, bmask, small, big)
            chunks.extend(cs)
            leftover |= rest
        if len(chunks) < agents:
            raise GuaranteeViolated(
                f"only {len(chunks)} chunks worth {format_rat(small)} for {agents} agents"
            )
        last = leftover
        for c in chunks[agents - 1:]:
            last |= c
        produced = chunks[: agents - 1] + [last]
        for c in produced:
            if v.value(c) < small:
                raise GuaranteeViolated(
                    f"bundle {items_of(c)} worth {format_rat(v.value(c))} < T/6n = {format_rat(small)}"
                )
        out.extend(produced)
        return out
    out.append(remaining)
    return out


# ---------------------------------------------------------------------------
# Reports and relations


@dataclass(frozen=True)
class ShareReport:
    mms: Fraction | None
    aps: Fraction
    mes: Fraction
    aps_partition: FractionalPartition
    mes_partition: FractionalPartition
    mms_partition: tuple | None = None

    def to_json(self) -> dict:
        def fp(p):
            return {
                "rho": format_rat(p.rho),
                "parts": [{"bundle": list(items_of(s)), "weight": format_rat(w)} for s, w in p.parts],
            }

        return {
            "mms": format_rat(self.mms) if self.mms is not None else None,
            "mms_partition": [list(items_of(s)) for s in self.mms_partition]
            if self.mms_partition is not None
            else None,
            "aps": format_rat(self.aps),
            "mes": format_rat(self.mes),
            "aps_partition": fp(self.aps_partition),
            "mes_partition": fp(self.mes_partition),
        }


def share_report(v: Valuation, b, items: int | None = None) -> ShareReport:
    """All three shares at entitlement b; MMS only when b = 1/n and it fits."""
    b = _check_b(b)
    aps_value, aps_fp = aps(v, b, items)
    mes_value, mes_fp = mes(v, b, items)
    mms_value, mms_part = None, None
    if b.numerator == 1:
        try:
            mms_value, parts = mms(v, b.denominator, items)
            mms_part = tuple(parts)
        except TooLarge:
            pass
    return ShareReport(mms_value, aps_value, mes_value, aps_fp, mes_fp, mms_part)


def share_relations(v: Valuation, n: int) -> dict:
    """Compute MMS, APS and MES at 1/n and check the relations between them.

    Always MES >= APS >= MMS.  APS <= 5 MMS for subadditive v and
    APS <= (17/4) MMS for XOS v.  Any failure raises RelationViolated.
    """
    b = Fraction(1, n)
    mms_value, _ = mms(v, n)
    aps_value, _ = aps(v, b)
    mes_value, _ = mes(v, b)
    subadditive = class_check(v, "subadditive")
    try:
        xos = class_check(v, "xos")
    except TooLarge:
        xos = None
    failures = []
    if mes_value < aps_value:
        failures.append("MES < APS")
    if aps_value < mms_value:
        failures.append("APS < MMS")
    if subadditive and aps_value > 5 * mms_value:
        failures.append("APS > 5 MMS for a subadditive valuation")
    if xos and 4 * aps_value > 17 * mms_value:
        failures.append("APS > (17/4) MMS for an XOS valuation")
    report = {
        "n": n,
        "mms": format_rat(mms_value),
        "aps": format_rat(aps_value),
        "mes": format_rat(mes_value),
        "subadditive": subadditive,
        "xos": xos,
        "violations": failures,
    }
    if failures:
        raise RelationViolated(f"{'; '.join(failures)}: {report}")
    return report


__all__ = [
    "ShareReport",
    "mms",
    "aps",
    "mes",
    "aps_via_clp",
    "approx_mms_partition_subadditive",
    "share_report",
    "share_relations",
]
