"""Instance generators: seeded random valuations and named constructions."""

from __future__ import annotations

import random
from fractions import Fraction
from itertools import combinations

from .model import XOS, Additive, Instance, Table, submasks


def _rng(seed_or_rng) -> random.Random:
    if isinstance(seed_or_rng, random.Random):
        return seed_or_rng
    return random.Random(seed_or_rng)


def random_additive(m: int, rng, denom: int = 4, positive: bool = True) -> Additive:
    rng = _rng(rng)
    lo = 1 if positive else 0
    return Additive([Fraction(rng.randint(lo, denom), denom) for _ in range(m)])


def random_xos(m: int, rng, clauses: int | None = None, denom: int = 4) -> XOS:
    """Random clause list in which every item is positive in some clause."""
    rng = _rng(rng)
    t = clauses if clauses is not None else rng.randint(1, 3)
    rows = [[Fraction(rng.randint(0, denom), denom) for _ in range(m)] for _ in range(t)]
    for e in range(m):
        if all(r[e] == 0 for r in rows):
            rows[rng.randrange(t)][e] = Fraction(rng.randint(1, denom), denom)
    return XOS(rows, m)


def random_monotone_table(m: int, rng, denom: int = 4, top: int | None = None) -> Table:
    """Random monotone table: each bundle draws a value at least its subsets'."""
    rng = _rng(rng)
    top = denom if top is None else top
    t = [Fraction(0)] * (1 << m)
    for s in range(1, 1 << m):
        floor = max(t[s & ~(1 << e)] for e in range(m) if s >> e & 1)
        lo = int(floor * denom)
        t[s] = Fraction(rng.randint(lo, max(lo, top)), denom)
    return Table(t, m)


def subadditive_closure(values: list[Fraction], m: int) -> list[Fraction]:
    """Pointwise largest subadditive function below ``values``.

    v(S) <- min over splits S = A + B of v(A) + v(B).  Submasks are visited
    first, so a single increasing sweep reaches the fixpoint.
    """
    t = list(values)
    for s in range(1, 1 << m):
        best = t[s]
        for a in submasks(s):
            if a == 0 or a == s:
                continue
            cand = t[a] + t[s ^ a]
            if cand < best:
                best = cand
        t[s] = best
    return t


def random_subadditive(m: int, rng, denom: int = 4) -> Table:
    rng = _rng(rng)
    base = random_monotone_table(m, rng, denom)
    return Table(subadditive_closure(list(base.values), m), m)


def random_instance(cls: str, m: int, n: int, rng, equal: bool = True, denom: int = 4) -> Instance:
    """``n`` agents with valuations from ``cls`` (additive, xos, subadditive)."""
    rng = _rng(rng)
    make = {
        "additive": lambda: random_additive(m, rng, denom),
        "xos": lambda: random_xos(m, rng, denom=denom),
        "subadditive": lambda: random_subadditive(m, rng, denom),
    }[cls]
    vals = [make() for _ in range(n)]
    return Instance.build(vals, None if equal else random_entitlements(n, rng))


def random_entitlements(n: int, rng, denom: int = 12) -> list[Fraction]:
    rng = _rng(rng)
    raw = [rng.randint(1, denom) for _ in range(n)]
    total = sum(raw)
    return [Fraction(r, total) for r in raw]


def two_triangles(n: int = 3) -> XOS:
    """``n - 3`` items of value 2 plus two disjoint triangles on six vertices.

    A nonempty vertex set is worth 1, or 2 once it spans an edge.  As XOS
    clauses: one clause per large item and one per edge.
    """
    if n < 3:
        raise ValueError("construction needs n >= 3")
    large = n - 3
    m = large + 6
    clauses = []
    for e in range(large):
        c = [0] * m
        c[e] = 2
        clauses.append(c)
    verts = list(range(large, m))
    for tri in (verts[:3], verts[3:]):
        for u, w in combinations(tri, 2):
            c = [0] * m
            c[u] = c[w] = 1
            clauses.append(c)
    return XOS(clauses, m)


def two_triangle_instance(n: int = 3, agents: int | None = None) -> Instance:
    count = n if agents is None else agents
    v = two_triangles(n)
    return Instance.build([v] * count)


__all__ = [
    "random_additive",
    "random_xos",
    "random_monotone_table",
    "random_subadditive",
    "subadditive_closure",
    "random_instance",
    "random_entitlements",
    "two_triangles",
    "two_triangle_instance",
]
