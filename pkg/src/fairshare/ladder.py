"""k-ladders of valuations, the payment sum they induce, and the x/y recurrence.

A k-ladder records, for j = 1..k, the fewest items needed to reach value
(j/k) v(B) inside a bundle B.  The payment sum over a ladder equals the sum
of the y-sequence obtained from x_j = L_j, which is where the recurrence
below comes in.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .errors import DivisionByZero, HypothesisViolated, LemmaViolated, TheoremViolated, TooLarge
from .model import MAX_TABLE_M, Valuation, items_of, size, submasks
from .numerics import ONE, ZERO, format_rat, rat


@dataclass(frozen=True)
class Ladder:
    k: int
    entries: tuple  # L_1..L_k

    def __post_init__(self):
        if len(self.entries) != self.k:
            raise ValueError(f"a {self.k}-ladder needs {self.k} entries")
        if self.k and self.entries[0] < 1:
            raise ValueError("ladder entries must be at least 1")
        if any(a > b for a, b in zip(self.entries, self.entries[1:])):
            raise ValueError("ladder entries must be non-decreasing")

    def extended(self, j: int) -> int:
        """L_j with the conventions L_0 = 1 and L_{-1} = 0."""
        if j == -1:
            return 0
        if j == 0:
            return 1
        return self.entries[j - 1]

    def h(self, j: int) -> int:
        return self.extended(j) - 1


def _size_maxima(v: Valuation, B: int) -> list[Fraction]:
    """best[s] = max value of a subset of B with exactly s items."""
    best = [ZERO] * (size(B) + 1)
    use_table = v.m <= MAX_TABLE_M
    t = v.table() if use_table else None
    for s in submasks(B):
        val = t[s] if use_table else v.value(s)
        c = size(s)
        if val > best[c]:
            best[c] = val
    return best


def compute_ladder(v: Valuation, B: int, k: int) -> Ladder:
    """The k-ladder of v restricted to bundle B.

    Minimums range over nonempty sets, so L_1 >= 1 even when v(B) = 0.
    """
    if k < 1:
        raise ValueError("k must be positive")
    if not B:
        raise ValueError("ladder of an empty bundle is undefined")
    if size(B) > MAX_TABLE_M:
        raise TooLarge(f"ladders are computed exhaustively for |B| <= {MAX_TABLE_M}")
    best = _size_maxima(v, B)
    total = v.value(B)
    entries = []
    for j in range(1, k + 1):
        threshold = Fraction(j, k) * total
        entries.append(next(s for s in range(1, len(best)) if best[s] >= threshold))
    return Ladder(k, tuple(entries))


def ladder_violations(v: Valuation, B: int, k: int, ladder: Ladder | None = None) -> list[str]:
    """Failures of the two structural properties of subadditive ladders.

    (a) h(j) = L_j - 1 is superadditive;
    (b) for j <= k-1 and every S in B with |S| < L_j, some T in B - S with
        |T| <= L_{j+1} has v(T) > v(B)/k.  Vacuous when v(B) = 0.
    """
    lad = ladder if ladder is not None else compute_ladder(v, B, k)
    out = []
    for i in range(1, k + 1):
        for j in range(i, k + 1 - i):
            if lad.h(i + j) < lad.h(i) + lad.h(j):
                out.append(f"superadditivity fails at ({i}, {j}) for ladder {lad.entries}")
    total = v.value(B)
    if total == 0:
        return out
    target = total / k
    for j in range(1, k):
        small, cap = lad.extended(j), lad.extended(j + 1)
        for S in submasks(B):
            if size(S) >= small:
                continue
            found = False
            for T in submasks(B & ~S):
                if size(T) <= cap and v.value(T) > target:
                    found = True
                    break
            if not found:
                out.append(
                    f"no T of size <= {cap} worth more than {format_rat(target)} "
                    f"outside S = {items_of(S)} (j = {j})"
                )
    return out


def check_ladder_lemmas(v: Valuation, B: int, k: int, strict: bool = False) -> bool:
    problems = ladder_violations(v, B, k)
    if problems and strict:
        raise LemmaViolated("; ".join(problems))
    return not problems


def payment_bound(ladder: Ladder, b=1) -> Fraction:
    """b * sum_{j=0}^{k-1} (L_j - L_{j-1}) / L_{j+1}."""
    b = rat(b)
    total = sum(
        (
            Fraction(ladder.extended(j) - ladder.extended(j - 1), ladder.extended(j + 1))
            for j in range(ladder.k)
        ),
        ZERO,
    )
    return b * total


def choose_k(m: int, b=None) -> int:
    """Smallest k >= 2 with m <= (k-1)^(k-1), or m <= ((k-1)/(1-b))^(k-1) given b."""
    if m < 1:
        raise ValueError("m must be positive")
    slack = ONE if b is None else 1 - rat(b)
    if slack <= 0:
        return 2
    k = 2
    while m * slack ** (k - 1) > (k - 1) ** (k - 1):
        k += 1
    return k


# ---------------------------------------------------------------------------
# The x/y recurrence


def x_from_y(y: Sequence) -> tuple:
    """x_1..x_k from x_{-1} = 0, x_0 = 1 and x_i = (x_{i-1} - x_{i-2}) / y_i."""
    ys = [rat(v) for v in y]
    prev2, prev = ZERO, ONE
    out = []
    for i, yi in enumerate(ys, 1):
        if yi == 0:
            raise DivisionByZero(f"y_{i} = 0")
        cur = (prev - prev2) / yi
        out.append(cur)
        prev2, prev = prev, cur
    return tuple(out)


def x_hypothesis_failures(x: Sequence) -> list[str]:
    """Which of the three hypotheses on x_1..x_k fail (x_{-1}=0, x_0=1 implied)."""
    full_x = [ZERO, ONE] + [rat(v) for v in x]
    k = len(x)
    out = []
    if any(a > b for a, b in zip(full_x, full_x[1:])):
        out.append("not non-decreasing")
    for i in range(1, k + 1):
        for j in range(i, k + 1 - i):
            if full_x[i + j + 1] < full_x[i + 1] + full_x[j + 1] - 1:
                out.append(f"x_i - 1 not superadditive at ({i}, {j})")
    if any(v == 0 for v in full_x[2:]):
        out.append("zero entry")
    elif sum(((full_x[i] - full_x[i - 1]) / full_x[i + 1] for i in range(1, k + 1)), ZERO) >= 1:
        out.append("sum of y is not below 1")
    return out


def y_from_x(x: Sequence, strict: bool = True) -> tuple:
    """y_i = (x_{i-1} - x_{i-2}) / x_i for i = 1..k.

    With ``strict`` the hypotheses are checked first (HypothesisViolated)
    and positivity of every y_i is then asserted (LemmaViolated).
    """
    xs = [rat(v) for v in x]
    if strict:
        bad = x_hypothesis_failures(xs)
        if bad:
            raise HypothesisViolated("; ".join(bad))
    full_x = [ZERO, ONE] + xs
    ys = []
    for i in range(1, len(xs) + 1):
        if full_x[i + 1] == 0:
            raise DivisionByZero(f"x_{i} = 0")
        ys.append((full_x[i] - full_x[i - 1]) / full_x[i + 1])
    if strict and any(v <= 0 for v in ys):
        raise LemmaViolated(f"non-positive y from a sequence meeting the hypotheses: {ys}")
    return tuple(ys)


def path_sums(y: Sequence, vertices: int) -> list[Fraction]:
    """y(vertices, j) for j = 0, 1, ...: sums over paths with j edges.

    Vertices are 1..vertices with an edge i -> j iff i <= j - 2; a path's
    weight is the product of y over its vertices.
    """
    ys = [rat(v) for v in y]
    if vertices <= 0:
        return []
    # ends[v]: list indexed by length of total weight of paths ending at v.
    ends: list[list[Fraction]] = [[] for _ in range(vertices + 1)]
    longest = 0
    for v in range(1, vertices + 1):
        row = [ys[v - 1]]
        for length in range(1, (v + 1) // 2):
            acc = sum((ends[u][length - 1] for u in range(1, v - 1) if len(ends[u]) >= length), ZERO)
            row.append(ys[v - 1] * acc)
        ends[v] = row
        longest = max(longest, len(row))
    sums = [ZERO] * longest
    for v in range(1, vertices + 1):
        for length, w in enumerate(ends[v]):
            sums[length] += w
    return sums


def big_y(y: Sequence) -> Fraction:
    """Y_k = sum_j (-1)^(j+1) y(k-1, j)."""
    k = len(y)
    return sum(((-1) ** (j + 1) * s for j, s in enumerate(path_sums(y, k - 1))), ZERO)


def xk_path_formula(y: Sequence) -> Fraction:
    """x_k = (1 + Y_k) / prod(y)."""
    ys = [rat(v) for v in y]
    if len(ys) < 2:
        raise ValueError("the path formula needs k >= 2")
    prod = ONE
    for v in ys:
        prod *= v
    return (1 + big_y(ys)) / prod


def verify_appendix(y: Sequence) -> dict:
    """Check the four appendix claims on one y-sequence; raise on failure."""
    ys = [rat(v) for v in y]
    k = len(ys)
    if k < 2:
        raise HypothesisViolated("k must be at least 2")
    if any(v <= 0 for v in ys) or sum(ys, ZERO) >= 1:
        raise HypothesisViolated("need every y_i > 0 and sum y < 1")
    xk = x_from_y(ys)[-1]
    formula = xk_path_formula(ys)
    sums = path_sums(ys, k - 1)
    Yk = big_y(ys)
    bound = (k - 1) ** (k - 1)
    checks = {
        "recurrence_equals_path_formula": xk == formula,
        "path_sums_non_increasing": all(a >= b for a, b in zip(sums, sums[1:])),
        "one_plus_Y_exceeds_y_k": 1 + Yk > ys[-1],
        "x_k_exceeds_bound": xk > bound,
    }
    report = {
        "k": k,
        "x_k": format_rat(xk),
        "path_formula": format_rat(formula),
        "Y_k": format_rat(Yk),
        "bound": bound,
        "checks": checks,
    }
    failed = [name for name, ok in checks.items() if not ok]
    if failed:
        raise TheoremViolated(f"{', '.join(failed)} for y = {[format_rat(v) for v in ys]}")
    return report


def random_y(k: int, rng, denom: int = 1000) -> tuple:
    """Positive rationals y_1..y_k with sum strictly below 1."""
    rng = rng if isinstance(rng, random.Random) else random.Random(rng)
    raw = [rng.randint(1, denom) for _ in range(k + 1)]
    total = sum(raw)
    return tuple(Fraction(r, total) for r in raw[:k])


__all__ = [
    "Ladder",
    "compute_ladder",
    "ladder_violations",
    "check_ladder_lemmas",
    "payment_bound",
    "choose_k",
    "x_from_y",
    "y_from_x",
    "x_hypothesis_failures",
    "path_sums",
    "big_y",
    "xk_path_formula",
    "verify_appendix",
    "random_y",
]
