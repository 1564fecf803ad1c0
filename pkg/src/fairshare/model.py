"""Valuations, instances, allocations and fractional partitions.

Bundles are plain ``int`` bitmasks: item ``e`` belongs to bundle ``S`` iff
``S >> e & 1``.  Valuations are immutable once built and cache their full
value table on first use (only at desk scale, ``m <= MAX_TABLE_M``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Iterator, NamedTuple, Sequence

from .errors import (
    IndexOutOfRange,
    InvalidInstance,
    InvalidValuation,
    TooLarge,
)
from .numerics import ZERO, LinearProgram, format_rat, lp_solve, rat

MAX_TABLE_M = 16
XOS_TABLE_CHECK_M = 6


# ---------------------------------------------------------------------------
# Bundles


def iter_bits(mask: int) -> Iterator[int]:
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


def items_of(mask: int) -> tuple[int, ...]:
    return tuple(iter_bits(mask))


def bundle(items: Iterable[int]) -> int:
    mask = 0
    for e in items:
        mask |= 1 << e
    return mask


def size(mask: int) -> int:
    return bin(mask).count("1")


def full(m: int) -> int:
    return (1 << m) - 1


def submasks(mask: int) -> Iterator[int]:
    """All submasks of ``mask`` in increasing numeric order, including 0."""
    sub = 0
    while True:
        yield sub
        if sub == mask:
            return
        sub = (sub - mask) & mask


def lex_key(mask: int) -> tuple[int, ...]:
    """Order bundles by their sorted item tuple."""
    return items_of(mask)


# ---------------------------------------------------------------------------
# Valuations


class Valuation:
    """A normalized monotone set function over items ``0..m-1``."""

    kind = "abstract"
    m: int

    def value(self, mask: int) -> Fraction:
        raise NotImplementedError

    def __call__(self, mask: int) -> Fraction:
        return self.value(mask)

    def _check_mask(self, mask: int) -> None:
        if mask < 0 or mask >> self.m:
            raise IndexOutOfRange(f"bundle {mask:#x} has items outside 0..{self.m - 1}")

    def table(self) -> list[Fraction]:
        """Values of all 2^m bundles, indexed by bitmask."""
        return self._table

    @cached_property
    def _table(self) -> list[Fraction]:
        if self.m > MAX_TABLE_M:
            raise TooLarge(f"value table for m={self.m} exceeds desk scale")
        return self._build_table()

    def _build_table(self) -> list[Fraction]:
        return [self.value(s) for s in range(1 << self.m)]

    def singleton(self, e: int) -> Fraction:
        return self.value(1 << e)


class Additive(Valuation):
    kind = "additive"

    def __init__(self, values: Sequence):
        self.values = tuple(rat(v) for v in values)
        self.m = len(self.values)
        if any(v < 0 for v in self.values):
            raise InvalidValuation("additive values must be non-negative")

    def value(self, mask: int) -> Fraction:
        self._check_mask(mask)
        vals = self.values
        return sum((vals[e] for e in iter_bits(mask)), ZERO)

    def _build_table(self):
        t = [ZERO] * (1 << self.m)
        for s in range(1, 1 << self.m):
            low = s & -s
            t[s] = t[s ^ low] + self.values[low.bit_length() - 1]
        return t

    def __repr__(self):
        return f"Additive({[str(v) for v in self.values]})"


class XOS(Valuation):
    """Pointwise maximum of additive clauses."""

    kind = "xos"

    def __init__(self, clauses: Sequence[Sequence], m: int | None = None):
        if not clauses:
            raise InvalidValuation("XOS clause list must be non-empty")
        self.clauses = tuple(tuple(rat(v) for v in c) for c in clauses)
        widths = {len(c) for c in self.clauses}
        if len(widths) != 1:
            raise InvalidValuation("XOS clauses must share one width")
        self.m = widths.pop() if m is None else m
        if any(v < 0 for c in self.clauses for v in c):
            raise InvalidValuation("XOS clause entries must be non-negative")
        # Sparse supports make evaluation cheap when clauses are concentrated.
        self._sparse = tuple(
            tuple((e, v) for e, v in enumerate(c) if v) for c in self.clauses
        )

    @classmethod
    def from_sparse(cls, clauses: Sequence[dict], m: int) -> "XOS":
        """Build from ``{item: value}`` maps; dense rows are made only on demand."""
        if not clauses:
            raise InvalidValuation("XOS clause list must be non-empty")
        self = cls.__new__(cls)
        self.m = m
        sparse = []
        for c in clauses:
            row = tuple(sorted((int(e), rat(v)) for e, v in c.items() if rat(v)))
            if any(v < 0 for _, v in row):
                raise InvalidValuation("XOS clause entries must be non-negative")
            if any(not 0 <= e < m for e, _ in row):
                raise IndexOutOfRange("XOS clause item outside 0..m-1")
            sparse.append(row)
        self._sparse = tuple(sparse)
        return self

    @cached_property
    def clauses(self) -> tuple:
        rows = []
        for sp in self._sparse:
            row = [ZERO] * self.m
            for e, v in sp:
                row[e] = v
            rows.append(tuple(row))
        return tuple(rows)

    @property
    def clause_count(self) -> int:
        return len(self._sparse)

    def clause_value(self, index: int, mask: int) -> Fraction:
        return sum((v for e, v in self._sparse[index] if mask >> e & 1), ZERO)

    def value(self, mask: int) -> Fraction:
        self._check_mask(mask)
        best = ZERO
        for sp in self._sparse:
            s = ZERO
            for e, v in sp:
                if mask >> e & 1:
                    s += v
            if s > best:
                best = s
        return best

    def argmax_clause(self, mask: int) -> int:
        best, arg = None, 0
        for i in range(len(self._sparse)):
            s = self.clause_value(i, mask)
            if best is None or s > best:
                best, arg = s, i
        return arg

    def _build_table(self):
        t = [ZERO] * (1 << self.m)
        for c in self.clauses:
            ct = [ZERO] * (1 << self.m)
            for s in range(1, 1 << self.m):
                low = s & -s
                ct[s] = ct[s ^ low] + c[low.bit_length() - 1]
                if ct[s] > t[s]:
                    t[s] = ct[s]
        return t

    def __repr__(self):
        return f"XOS({len(self._sparse)} clauses, m={self.m})"


class Table(Valuation):
    """Explicit value for each of the 2^m bundles; validated on load."""

    kind = "table"

    def __init__(self, values: Sequence, m: int | None = None):
        vals = [rat(v) for v in values]
        if m is None:
            m = max(len(vals).bit_length() - 1, 0)
        if len(vals) != 1 << m:
            raise InvalidValuation(f"table needs 2^{m} entries, got {len(vals)}")
        if m > MAX_TABLE_M:
            raise TooLarge(f"table valuations are limited to m <= {MAX_TABLE_M}")
        self.m = m
        self.values = tuple(vals)
        self._validate()

    def _validate(self):
        vals = self.values
        if vals[0] != 0:
            raise InvalidValuation("table valuation must satisfy v(empty) = 0")
        for s in range(1 << self.m):
            if vals[s] < 0:
                raise InvalidValuation(f"negative value at bundle {s}")
            rest = full(self.m) & ~s
            for e in iter_bits(rest):
                if vals[s | 1 << e] < vals[s]:
                    raise InvalidValuation(
                        f"not monotone: v({items_of(s)}) > v({items_of(s | 1 << e)})"
                    )

    def value(self, mask: int) -> Fraction:
        self._check_mask(mask)
        return self.values[mask]

    def _build_table(self):
        return list(self.values)

    def __repr__(self):
        return f"Table(m={self.m})"


class Truncated(Valuation):
    """``min(base(S), cap)``."""

    kind = "truncated"

    def __init__(self, base: Valuation, cap):
        self.base = base
        self.cap = rat(cap)
        self.m = base.m
        if self.cap < 0:
            raise InvalidValuation("truncation cap must be non-negative")

    def value(self, mask: int) -> Fraction:
        v = self.base.value(mask)
        return v if v < self.cap else self.cap

    def _build_table(self):
        cap = self.cap
        return [v if v < cap else cap for v in self.base.table()]

    def __repr__(self):
        return f"Truncated({self.base!r}, cap={self.cap})"


class Scaled(Valuation):
    """``factor * base(S)``; used to normalise shares."""

    kind = "scaled"

    def __init__(self, base: Valuation, factor):
        self.base = base
        self.factor = rat(factor)
        self.m = base.m

    def value(self, mask: int) -> Fraction:
        return self.factor * self.base.value(mask)

    def _build_table(self):
        f = self.factor
        return [f * v for v in self.base.table()]


# ---------------------------------------------------------------------------
# Class membership


CLASSES = ("monotone", "additive", "submodular", "xos", "subadditive")


def class_check(v: Valuation, cls: str) -> bool:
    """Exact class membership by exhaustive, definition-level testing."""
    if cls not in CLASSES:
        raise ValueError(f"unknown class {cls!r}")
    if cls == "monotone":
        if isinstance(v, (Additive, XOS)):
            return True
        return _is_monotone(v.table(), v.m)
    if cls == "xos":
        if isinstance(v, (Additive, XOS)):
            return True
        if v.m > XOS_TABLE_CHECK_M:
            raise TooLarge(f"XOS check of a table valuation needs m <= {XOS_TABLE_CHECK_M}")
        return _is_xos(v)
    if cls == "subadditive" and isinstance(v, (Additive, XOS)):
        return True
    t = v.table()
    if cls == "additive":
        return _is_additive(t, v.m)
    if cls == "submodular":
        return _is_submodular(t, v.m)
    return _is_subadditive(t, v.m)


def _is_monotone(t, m):
    for s in range(1 << m):
        for e in iter_bits(full(m) & ~s):
            if t[s | 1 << e] < t[s]:
                return False
    return t[0] == 0


def _is_additive(t, m):
    for s in range(1, 1 << m):
        if t[s] != sum((t[1 << e] for e in iter_bits(s)), ZERO):
            return False
    return True


def _is_submodular(t, m):
    # Decreasing marginals: v(S+e) + v(S+f) >= v(S+e+f) + v(S) for e, f outside S.
    for s in range(1 << m):
        out = items_of(full(m) & ~s)
        for a in range(len(out)):
            se = s | 1 << out[a]
            for b in range(a + 1, len(out)):
                sf = s | 1 << out[b]
                if t[se] + t[sf] < t[se | sf] + t[s]:
                    return False
    return True


def _is_subadditive(t, m):
    # Disjoint pairs suffice for monotone functions.
    top = full(m)
    for s in range(1, 1 << m):
        rest = top & ~s
        for r in submasks(rest):
            if r and t[s] + t[r] < t[s | r]:
                return False
    return True


def _is_xos(v: Valuation) -> bool:
    t = v.table()
    for s in range(1, 1 << v.m):
        clause = _supporting_clause_lp(t, s, v.m)
        if clause is None:
            return False
    return True


def _supporting_clause_lp(t, s: int, m: int):
    """Additive p supported on s with p(s) = v(s) and p(T) <= v(T) for T within s.

    Returns the clause as a length-m tuple, or None when none exists (v is
    then not fractionally subadditive at s).
    """
    idx = items_of(s)
    lp = LinearProgram([1] * len(idx))
    for sub in submasks(s):
        if sub:
            lp.add([1 if sub >> e & 1 else 0 for e in idx], "<=", t[sub])
    res = lp_solve(lp)
    if res.value != t[s]:
        return None
    clause = [ZERO] * m
    for e, val in zip(idx, res.solution):
        clause[e] = val
    return tuple(clause)


def supporting_clause(v: Valuation, mask: int) -> tuple:
    """An additive function p <= v with p(mask) = v(mask), zero outside mask.

    For XOS-represented valuations this is the maximizing clause (lowest
    index on ties) restricted to ``mask``.
    """
    if isinstance(v, Additive):
        return tuple(x if mask >> e & 1 else ZERO for e, x in enumerate(v.values))
    if isinstance(v, XOS):
        c = v.clauses[v.argmax_clause(mask)]
        return tuple(x if mask >> e & 1 else ZERO for e, x in enumerate(c))
    if isinstance(v, Scaled):
        return tuple(v.factor * x for x in supporting_clause(v.base, mask))
    clause = _supporting_clause_lp(v.table(), mask, v.m)
    if clause is None:
        raise InvalidValuation(f"no supporting additive clause at bundle {items_of(mask)}")
    return clause


# ---------------------------------------------------------------------------
# Oracles


def demand_query(v: Valuation, prices: Sequence, items: int | None = None) -> int:
    """Bundle maximizing v(S) - p(S).

    Ties go to the larger bundle, then to the lexicographically smallest
    sorted item tuple.
    """
    prices = [rat(p) for p in prices]
    if len(prices) != v.m:
        raise ValueError("price vector length must equal m")
    if any(p < 0 for p in prices):
        raise ValueError("prices must be non-negative")
    universe = full(v.m) if items is None else items
    t = v.table()
    best_s, best_key = 0, None
    for s in submasks(universe):
        profit = t[s] - sum((prices[e] for e in iter_bits(s)), ZERO)
        key = (profit, size(s))
        if best_key is None or key > best_key or (
            key == best_key and lex_key(s) < lex_key(best_s)
        ):
            best_s, best_key = s, key
    return best_s


def truncated_demand_query(v: Valuation, prices: Sequence, cap, items: int | None = None) -> int:
    return demand_query(Truncated(v, cap), prices, items)


# ---------------------------------------------------------------------------
# Instances, allocations, fractional partitions


@dataclass(frozen=True)
class Agent:
    valuation: Valuation
    entitlement: Fraction


@dataclass(frozen=True)
class Instance:
    m: int
    agents: tuple

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        if not self.agents:
            raise InvalidInstance("instance needs at least one agent")
        for i, a in enumerate(self.agents):
            if a.valuation.m != self.m:
                raise InvalidInstance(f"agent {i} valuation has m={a.valuation.m}, expected {self.m}")
            if a.entitlement <= 0:
                raise InvalidInstance(f"agent {i} has non-positive entitlement")
        if sum(a.entitlement for a in self.agents) != 1:
            raise InvalidInstance("entitlements must sum to exactly 1")

    @classmethod
    def build(cls, valuations: Sequence[Valuation], entitlements: Sequence | None = None):
        n = len(valuations)
        if entitlements is None:
            entitlements = [Fraction(1, n)] * n
        m = valuations[0].m
        return cls(m, tuple(Agent(v, rat(b)) for v, b in zip(valuations, entitlements)))

    @property
    def n(self) -> int:
        return len(self.agents)

    @property
    def valuations(self) -> list[Valuation]:
        return [a.valuation for a in self.agents]

    @property
    def entitlements(self) -> list[Fraction]:
        return [a.entitlement for a in self.agents]

    @property
    def equal_entitlements(self) -> bool:
        return all(a.entitlement == Fraction(1, self.n) for a in self.agents)


@dataclass(frozen=True)
class Allocation:
    bundles: tuple

    def __post_init__(self):
        object.__setattr__(self, "bundles", tuple(self.bundles))
        seen = 0
        for i, b in enumerate(self.bundles):
            if seen & b:
                raise InvalidInstance(f"bundle of agent {i} overlaps an earlier bundle")
            seen |= b

    @property
    def allocated(self) -> int:
        out = 0
        for b in self.bundles:
            out |= b
        return out

    def values(self, instance: Instance) -> list[Fraction]:
        return [a.valuation.value(b) for a, b in zip(instance.agents, self.bundles)]


@dataclass(frozen=True)
class FractionalPartition:
    parts: tuple  # of (mask, weight)
    rho: Fraction

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple((int(s), rat(w)) for s, w in self.parts))
        object.__setattr__(self, "rho", rat(self.rho))

    def support(self):
        return [(s, w) for s, w in self.parts if w > 0]


class PartitionCheck(NamedTuple):
    valid: bool
    min_value: Fraction | None
    reason: str


def check_fractional_partition(
    fp: FractionalPartition, v: Valuation, items: int | None = None
) -> PartitionCheck:
    universe = full(v.m) if items is None else items
    if any(w < 0 for _, w in fp.parts):
        return PartitionCheck(False, None, "negative weight")
    total = sum((w for _, w in fp.parts), ZERO)
    if total != 1:
        return PartitionCheck(False, None, f"weights sum to {total}, not 1")
    for s, _ in fp.parts:
        if s & ~universe:
            return PartitionCheck(False, None, f"bundle {items_of(s)} leaves the item set")
    for e in iter_bits(universe):
        cover = sum((w for s, w in fp.parts if s >> e & 1), ZERO)
        if cover != fp.rho:
            return PartitionCheck(False, None, f"item {e} covered {cover}, expected {fp.rho}")
    support = fp.support()
    min_value = min(v.value(s) for s, _ in support) if support else None
    return PartitionCheck(True, min_value, "ok")


def complete_fractional_partition(parts, rho, universe: int) -> FractionalPartition:
    """Turn a weighted family with item cover <= rho and total weight >= 1
    into an exact fractional rho-partition of ``universe``.

    Weights are scaled to sum to 1, then each under-covered item is added
    to bundles that miss it (splitting one bundle if needed).  Bundles only
    grow, so values under a monotone valuation never drop.
    """
    rho = rat(rho)
    parts = [(s, rat(w)) for s, w in parts if w > 0]
    total = sum((w for _, w in parts), ZERO)
    if total < 1:
        raise ValueError(f"total weight {total} is below 1")
    parts = [(s, w / total) for s, w in parts]
    for e in iter_bits(universe):
        bit = 1 << e
        deficit = rho - sum((w for s, w in parts if s & bit), ZERO)
        if deficit < 0:
            raise ValueError(f"item {e} is over-covered")
        out = []
        for s, w in parts:
            if deficit > 0 and not s & bit:
                if w <= deficit:
                    out.append((s | bit, w))
                    deficit -= w
                else:
                    out.append((s | bit, deficit))
                    out.append((s, w - deficit))
                    deficit = ZERO
            else:
                out.append((s, w))
        if deficit > 0:
            raise ValueError(f"cannot cover item {e} up to rho={rho}")
        parts = out
    merged: dict[int, Fraction] = {}
    for s, w in parts:
        merged[s] = merged.get(s, ZERO) + w
    return FractionalPartition(tuple(sorted(merged.items())), rho)


# ---------------------------------------------------------------------------
# JSON instance format


def valuation_to_json(v: Valuation) -> dict:
    if isinstance(v, Additive):
        return {"type": "additive", "values": [format_rat(x) for x in v.values]}
    if isinstance(v, XOS):
        return {"type": "xos", "clauses": [[format_rat(x) for x in c] for c in v.clauses]}
    if isinstance(v, Table):
        return {
            "type": "table",
            "values": {str(s): format_rat(x) for s, x in enumerate(v.values)},
        }
    # Anything else is serialized through its explicit table.
    return {"type": "table", "values": {str(s): format_rat(x) for s, x in enumerate(v.table())}}


def valuation_from_json(obj: dict, m: int) -> Valuation:
    kind = obj.get("type")
    if kind == "additive":
        vals = obj["values"]
        if len(vals) != m:
            raise InvalidInstance(f"additive valuation has {len(vals)} values, expected {m}")
        return Additive(vals)
    if kind == "xos":
        clauses = obj["clauses"]
        if any(len(c) != m for c in clauses):
            raise InvalidInstance("xos clause width differs from m")
        return XOS(clauses, m)
    if kind == "table":
        raw = obj["values"]
        if len(raw) != 1 << m:
            raise InvalidInstance(f"table valuation needs all 2^{m} entries")
        vals = [None] * (1 << m)
        for key, x in raw.items():
            s = int(key)
            if not 0 <= s < 1 << m:
                raise InvalidInstance(f"bundle key {key} out of range")
            vals[s] = rat(x)
        if any(x is None for x in vals):
            raise InvalidInstance("table valuation is missing bundles")
        return Table(vals, m)
    raise InvalidInstance(f"unknown valuation type {kind!r}")


def instance_to_json(inst: Instance) -> dict:
    return {
        "m": inst.m,
        "agents": [
            {"entitlement": format_rat(a.entitlement), "valuation": valuation_to_json(a.valuation)}
            for a in inst.agents
        ],
    }


def instance_from_json(obj: dict) -> Instance:
    try:
        m = int(obj["m"])
        agents = [
            Agent(valuation_from_json(a["valuation"], m), rat(a["entitlement"]))
            for a in obj["agents"]
        ]
    except (KeyError, TypeError, AttributeError) as exc:
        raise InvalidInstance(f"malformed instance: {exc}") from exc
    return Instance(m, tuple(agents))


def dumps_instance(inst: Instance) -> str:
    return json.dumps(instance_to_json(inst), sort_keys=True)


def loads_instance(text: str) -> Instance:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidInstance(f"instance is not valid JSON: {exc}") from exc
    return instance_from_json(obj)


# ---------------------------------------------------------------------------
# Exact welfare maximization over complete allocations


def welfare_dp(tables: Sequence[Sequence[Fraction]], universe: int) -> tuple[Fraction, tuple]:
    """Maximize sum_i t_i(A_i) over partitions of ``universe`` into one bundle per table.

    Dynamic programming over subsets, n * 3^|universe| steps.  Among
    maximizers the tuple (A_0, A_1, ...) of bundle masks is the
    lexicographically smallest.
    """
    n = len(tables)
    if n == 0:
        raise ValueError("need at least one agent")
    subs = list(submasks(universe))
    # best[i][S]: optimum for agents i..n-1 sharing S, for S within universe.
    best: list[dict[int, Fraction]] = [dict() for _ in range(n)]
    last = tables[n - 1]
    best[n - 1] = {s: last[s] for s in subs}
    for i in range(n - 2, 0, -1):
        t, nxt, cur = tables[i], best[i + 1], best[i]
        for s in subs:
            top = None
            for a in submasks(s):
                val = t[a] + nxt[s ^ a]
                if top is None or val > top:
                    top = val
            cur[s] = top
    if n > 1:
        t, nxt = tables[0], best[1]
        top = None
        for a in submasks(universe):
            val = t[a] + nxt[universe ^ a]
            if top is None or val > top:
                top = val
        best[0] = {universe: top}
    total = best[0][universe]

    bundles = []
    rest = universe
    for i in range(n - 1):
        t, nxt, target = tables[i], best[i + 1], best[i][rest]
        for a in submasks(rest):
            if t[a] + nxt[rest ^ a] == target:
                bundles.append(a)
                rest ^= a
                break
    bundles.append(rest)
    return total, tuple(bundles)
