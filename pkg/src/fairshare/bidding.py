"""The bidding game, its strategies, and the adversarial XOS construction.

Budgets start at the entitlements.  Each round every agent bids at most its
remaining budget; the highest bidder wins and pays its bid per item taken.
In the plain game the winner takes exactly one item.  The game stops when no
items remain, or when a round is won at price 0 and nobody takes anything.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Sequence

from .errors import (
    IllegalBid,
    IllegalSelection,
    InvalidInstance,
    ParameterTooLarge,
    SearchSpaceTooLarge,
    StrategyFailed,
)
from .model import XOS, Additive, Allocation, Instance, Valuation, items_of, iter_bits, size, submasks
from .numerics import ZERO, format_rat, rat

MODES = ("plain", "extended")


# ---------------------------------------------------------------------------
# Game state and transcript


@dataclass(frozen=True)
class RoundRecord:
    round: int
    bids: tuple
    winner: int
    selection: int
    price: Fraction

    @property
    def payment(self) -> Fraction:
        return self.price * size(self.selection)

    def to_json(self) -> dict:
        return {
            "round": self.round,
            "bids": [format_rat(b) for b in self.bids],
            "winner": self.winner,
            "selection": str(self.selection),
            "payment": format_rat(self.payment),
        }


@dataclass
class GameState:
    instance: Instance
    mode: str
    remaining: int
    budgets: list
    holdings: list
    round: int = 0
    prices: dict = field(default_factory=dict)
    history: list = field(default_factory=list)
    seed: int = 0

    @classmethod
    def initial(cls, instance: Instance, mode: str = "extended", seed: int = 0) -> "GameState":
        return cls(
            instance=instance,
            mode=mode,
            remaining=(1 << instance.m) - 1,
            budgets=list(instance.entitlements),
            holdings=[0] * instance.n,
            seed=seed,
        )

    def active(self, agent: int) -> bool:
        """Still holding the full budget."""
        return self.budgets[agent] == self.instance.agents[agent].entitlement

    def max_items(self, agent: int, price: Fraction) -> int:
        """How many items ``agent`` can pay for at ``price`` each."""
        limit = size(self.remaining)
        if self.mode == "plain":
            limit = min(limit, 1)
        if price == 0:
            return limit
        return min(limit, int(self.budgets[agent] // price))


@dataclass(frozen=True)
class Transcript:
    rounds: tuple
    allocation: Allocation
    values: tuple
    payments: tuple

    def to_jsonl(self) -> str:
        lines = [json.dumps(r.to_json(), sort_keys=True) for r in self.rounds]
        lines.append(
            json.dumps(
                {
                    "final": True,
                    "bundles": [list(items_of(b)) for b in self.allocation.bundles],
                    "values": [format_rat(v) for v in self.values],
                    "payments": [format_rat(p) for p in self.payments],
                },
                sort_keys=True,
            )
        )
        return "\n".join(lines) + "\n"


class Strategy:
    """Bid and selection rules for one agent.

    Strategies read the shared state but must not mutate it; anything they
    need to remember has to be recoverable from the state and history.
    """

    name = "strategy"

    def bid(self, agent: int, state: GameState) -> Fraction:
        raise NotImplementedError

    def select(self, agent: int, state: GameState, price: Fraction) -> int:
        raise NotImplementedError


TieRule = Callable[[list, GameState], list]


def lowest_index(candidates: list, state: GameState) -> list:
    return sorted(candidates)


def seeded_tiebreak(seed: int) -> TieRule:
    def rule(candidates: list, state: GameState) -> list:
        order = sorted(candidates)
        random.Random(f"tie:{seed}:{state.round}").shuffle(order)
        return order

    return rule


def run_game(
    instance: Instance,
    strategies: Sequence[Strategy],
    mode: str = "extended",
    tiebreak: TieRule = lowest_index,
    seed: int = 0,
) -> Transcript:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if len(strategies) != instance.n:
        raise InvalidInstance(f"{instance.n} agents but {len(strategies)} strategies")
    state = GameState.initial(instance, mode, seed)
    while state.remaining:
        bids = []
        for i, strat in enumerate(strategies):
            b = rat(strat.bid(i, state))
            if b < 0 or b > state.budgets[i]:
                raise IllegalBid(i, f"bid {format_rat(b)} outside [0, {format_rat(state.budgets[i])}]")
            bids.append(b)
        top = max(bids)
        order = tiebreak([i for i, b in enumerate(bids) if b == top], state)
        # At price 0 every tied agent in turn may take items; otherwise only the winner.
        candidates = order if top == 0 else order[:1]
        winner, selection = None, 0
        for i in candidates:
            sel = strategies[i].select(i, state, top)
            _check_selection(state, i, sel, top)
            if sel:
                winner, selection = i, sel
                break
        if winner is None:
            if top > 0:
                raise IllegalSelection(order[0], "winner of a priced round must take an item")
            break
        record = RoundRecord(state.round, tuple(bids), winner, selection, top)
        state.budgets[winner] -= record.payment
        state.holdings[winner] |= selection
        state.remaining &= ~selection
        for e in iter_bits(selection):
            state.prices[e] = top
        state.history.append(record)
        state.round += 1
    alloc = Allocation(tuple(state.holdings))
    payments = tuple(a.entitlement - b for a, b in zip(instance.agents, state.budgets))
    return Transcript(tuple(state.history), alloc, tuple(alloc.values(instance)), payments)


def _check_selection(state: GameState, agent: int, sel: int, price: Fraction) -> None:
    if sel < 0 or sel & ~state.remaining:
        raise IllegalSelection(agent, f"selection {items_of(max(sel, 0))} is not available")
    count = size(sel)
    if state.mode == "plain" and count > 1:
        raise IllegalSelection(agent, "the plain game allows one item per round")
    if price * count > state.budgets[agent]:
        raise IllegalSelection(
            agent,
            f"{count} items at {format_rat(price)} exceed budget {format_rat(state.budgets[agent])}",
        )


# ---------------------------------------------------------------------------
# Strategies


def _top_items(v: Valuation, mask: int) -> list[int]:
    """Items of ``mask`` by decreasing singleton value, lower index first on ties."""
    return sorted(iter_bits(mask), key=lambda e: (-v.value(1 << e), e))


def smallest_acceptable(v: Valuation, remaining: int, rho: Fraction) -> int:
    """Fewest items worth at least rho; ties to higher value, then lexicographic.

    Returns 0 if no nonempty subset of ``remaining`` is acceptable.
    """
    if not remaining:
        return 0
    if v.m <= 16:
        t = v.table()
        best, best_key = 0, None
        for s in submasks(remaining):
            if s and t[s] >= rho:
                key = (size(s), -t[s], items_of(s))
                if best_key is None or key < best_key:
                    best, best_key = s, key
        return best
    clauses = _clause_rows(v)
    if clauses is None:
        raise SearchSpaceTooLarge("smallest acceptable bundle needs m <= 16 or a clause representation")
    best, best_key = 0, None
    for row in clauses:
        items = sorted(
            ((val, e) for e, val in row if remaining >> e & 1), key=lambda p: (-p[0], p[1])
        )
        acc, chosen = ZERO, 0
        for val, e in items:
            if acc >= rho and chosen:
                break
            acc += val
            chosen |= 1 << e
        if chosen and acc >= rho:
            key = (size(chosen), -acc, items_of(chosen))
            if best_key is None or key < best_key:
                best, best_key = chosen, key
    return best


def _clause_rows(v: Valuation):
    if isinstance(v, XOS):
        return v._sparse
    if isinstance(v, Additive):
        return (tuple((e, x) for e, x in enumerate(v.values) if x),)
    return None


class OneShot(Strategy):
    """Bid b / |S| for the smallest acceptable bundle S; on a win take S and stop.

    ``rho`` defaults to APS / choose_k(m, b).  After winning the agent bids 0
    and, should it ever win at price 0, takes every remaining item.
    """

    name = "one-shot"

    def __init__(self, rho=None):
        self.rho = None if rho is None else rat(rho)
        self._cache: dict = {}

    def target(self, agent: int, state: GameState) -> Fraction:
        if self.rho is not None:
            return self.rho
        key = (id(state.instance), agent)
        if key not in self._cache:
            from .ladder import choose_k
            from .shares import aps

            a = state.instance.agents[agent]
            share, _ = aps(a.valuation, a.entitlement)
            self._cache[key] = share / choose_k(state.instance.m, a.entitlement)
        return self._cache[key]

    def plan(self, agent: int, state: GameState) -> int:
        rho = self.target(agent, state)
        v = state.instance.agents[agent].valuation
        s = smallest_acceptable(v, state.remaining, rho)
        if not s and rho > 0:
            raise StrategyFailed(
                f"agent {agent}: no acceptable bundle worth {format_rat(rho)} in round {state.round}"
            )
        return s

    def bid(self, agent, state):
        if not state.active(agent):
            return ZERO
        s = self.plan(agent, state)
        return state.budgets[agent] / size(s)

    def select(self, agent, state, price):
        if state.active(agent):
            if price == 0:
                return state.remaining if state.mode == "extended" else _first(state.remaining)
            return self.plan(agent, state)
        if price == 0:
            return state.remaining if state.mode == "extended" else _first(state.remaining)
        return 0


def _first(mask: int) -> int:
    return mask & -mask


class Greedy(Strategy):
    """Bid a fixed fraction of the remaining budget; take the most valuable affordable items."""

    name = "greedy"

    def __init__(self, fraction=1):
        self.fraction = rat(fraction)

    def bid(self, agent, state):
        return self.fraction * state.budgets[agent]

    def select(self, agent, state, price):
        count = state.max_items(agent, price)
        v = state.instance.agents[agent].valuation
        chosen = 0
        for e in _top_items(v, state.remaining)[:count]:
            chosen |= 1 << e
        return chosen


class RandomStrategy(Strategy):
    """Random bids on a quarter grid of the budget and random affordable selections."""

    name = "random"

    def __init__(self, seed: int = 0):
        self.seed = seed

    def _rng(self, agent, state, tag):
        return random.Random(f"{self.seed}:{state.seed}:{state.round}:{agent}:{tag}")

    def bid(self, agent, state):
        return Fraction(self._rng(agent, state, "bid").randint(0, 4), 4) * state.budgets[agent]

    def select(self, agent, state, price):
        rng = self._rng(agent, state, "select")
        most = state.max_items(agent, price)
        if most == 0:
            return 0
        pool = list(iter_bits(state.remaining))
        count = rng.randint(1, most)
        chosen = 0
        for e in rng.sample(pool, count):
            chosen |= 1 << e
        return chosen


class Passive(Strategy):
    """Always bids 0 and never takes anything."""

    name = "passive"

    def bid(self, agent, state):
        return ZERO

    def select(self, agent, state, price):
        return 0


def parse_strategies(spec: str, n: int) -> list[Strategy]:
    """Comma-separated strategy names, e.g. ``one-shot,greedy,random:3``.

    A single name is repeated for every agent.
    """
    names = [s.strip() for s in spec.split(",") if s.strip()]
    if len(names) == 1:
        names = names * n
    if len(names) != n:
        raise ValueError(f"{len(names)} strategies for {n} agents")
    out: list[Strategy] = []
    for name in names:
        base, _, arg = name.partition(":")
        if base == "one-shot":
            out.append(OneShot(rat(arg) if arg else None))
        elif base == "greedy":
            out.append(Greedy(rat(arg) if arg else 1))
        elif base == "random":
            out.append(RandomStrategy(int(arg) if arg else 0))
        elif base == "passive":
            out.append(Passive())
        else:
            raise ValueError(f"unknown strategy {base!r}")
    return out


def remark_item(v: Valuation, b) -> tuple[int, Fraction]:
    """(s, v(e_s)) where s is the least integer with b > 1/(s+1) and e_s the
    s-th most valuable item."""
    b = rat(b)
    s = 1
    while not b > Fraction(1, s + 1):
        s += 1
    ranked = sorted((v.value(1 << e) for e in range(v.m)), reverse=True)
    return s, (ranked[s - 1] if s <= len(ranked) else ZERO)


# ---------------------------------------------------------------------------
# Adversary search


def adversary_search(
    instance: Instance,
    protagonist: int,
    strategy: Strategy,
    depth_limit: int | None = None,
    mode: str = "extended",
    exhaustive_bids: bool = False,
    refine: bool = False,
) -> Fraction:
    """Worst final value of ``protagonist`` over all opponents' play.

    All other agents are merged into one adversary holding their combined
    budget; any coalition play is available to it, so the result is a lower
    bound for every real opponent profile.  The protagonist loses ties.
    Bidding exactly the protagonist's bid weakly dominates higher bids, so
    only that bid is tried unless ``exhaustive_bids`` asks for a grid.
    """
    m = instance.m
    if m > 5:
        raise SearchSpaceTooLarge("adversary search is limited to m <= 5")
    v = instance.agents[protagonist].valuation
    others = [i for i in range(instance.n) if i != protagonist]
    stand_in = others[0] if others else None
    total_other = sum((instance.agents[i].entitlement for i in others), ZERO)

    def state_for(remaining, adv_budget, prot_budget, holding, depth):
        budgets = [ZERO] * instance.n
        budgets[protagonist] = prot_budget
        if stand_in is not None:
            budgets[stand_in] = adv_budget
        holdings = [0] * instance.n
        holdings[protagonist] = holding
        if stand_in is not None:
            holdings[stand_in] = ((1 << m) - 1) & ~remaining & ~holding
        return GameState(instance, mode, remaining, budgets, holdings, round=depth)

    def grid(p, adv_budget):
        dens = 2 if refine else 1
        points = {p}
        for j in range(1, dens * m + 1):
            for base in (adv_budget, total_other, instance.agents[protagonist].entitlement):
                q = Fraction(base) / j
                if p <= q <= adv_budget:
                    points.add(q)
        return sorted(points)

    @lru_cache(maxsize=None)
    def value(remaining, adv_budget, prot_budget, holding, depth):
        if depth_limit is not None and depth > depth_limit:
            raise SearchSpaceTooLarge(f"depth limit {depth_limit} exceeded")
        if not remaining:
            return v.value(holding)
        st = state_for(remaining, adv_budget, prot_budget, holding, depth)
        p = rat(strategy.bid(protagonist, st))
        if p < 0 or p > prot_budget:
            raise IllegalBid(protagonist, f"bid {format_rat(p)} outside budget")
        if p == 0 and others:
            # The adversary wins the tie and may end the game at once.
            return v.value(holding)
        outcomes = []
        if p > 0 or not others:
            sel = strategy.select(protagonist, st, p)
            _check_selection(st, protagonist, sel, p)
            if sel:
                outcomes.append(
                    value(remaining & ~sel, adv_budget, prot_budget - p * size(sel), holding | sel, depth + 1)
                )
            else:
                outcomes.append(v.value(holding))
        if others and adv_budget >= p:
            bids = grid(p, adv_budget) if exhaustive_bids else [p]
            for a in bids:
                for t in submasks(remaining):
                    if not t or (mode == "plain" and size(t) > 1):
                        continue
                    cost = a * size(t)
                    if cost > adv_budget:
                        continue
                    outcomes.append(value(remaining & ~t, adv_budget - cost, prot_budget, holding, depth + 1))
        return min(outcomes)

    return value((1 << m) - 1, total_other, instance.agents[protagonist].entitlement, 0, 0)


# ---------------------------------------------------------------------------
# Adversarial XOS construction


@dataclass
class NegativeConstruction:
    """Instance and opponent strategies for the XOS lower-bound construction.

    Values are in the construction's units (the top item of each bundle is
    worth 1), and bids are rescaled from budgets of k to entitlements.
    """

    k: int
    q: int
    eps: Fraction
    n_nominal: int  # agent count of the full construction; budgets are 1/n_nominal
    instance: Instance
    bundles: tuple
    tiers: tuple  # tiers[e] = j for an item of value 1/q^j
    p1: tuple
    p2: tuple
    strategies: dict  # agent -> Strategy for every agent except 0

    @property
    def aps(self) -> Fraction:
        return Fraction(self.k)

    @property
    def bound(self) -> Fraction:
        return 1 + Fraction(3 * self.k, self.q) + self.eps / 2

    @property
    def scale(self) -> Fraction:
        """Real bid per unit of scaled bid (budget k stands for 1/n)."""
        return Fraction(1, self.n_nominal * self.k)

    def item_value(self, e: int) -> Fraction:
        return Fraction(1, self.q ** self.tiers[e])

    def bundle_of(self, e: int) -> int:
        for j, b in enumerate(self.bundles):
            if b >> e & 1:
                return j
        raise ValueError(e)

    def one_shot(self) -> "OneShot":
        """One-shot protagonist aiming at APS / choose_k(m, 1/n), with the known APS."""
        from .ladder import choose_k

        b = self.instance.agents[0].entitlement
        return OneShot(Fraction(self.aps) / choose_k(self.instance.m, b))


class _P1(Strategy):
    """Bid t_r / 2, t_r the highest remaining value; take one such item."""

    name = "P1"

    def __init__(self, con: NegativeConstruction):
        self.con = con

    def _top(self, state):
        low = state.remaining & -state.remaining
        return low.bit_length() - 1

    def bid(self, agent, state):
        if not state.remaining:
            return ZERO
        price = self.con.item_value(self._top(state)) / 2 * self.con.scale
        return price if price <= state.budgets[agent] else ZERO

    def select(self, agent, state, price):
        if price == 0:
            return 0
        return 1 << self._top(state)


class _P2(Strategy):
    """Bid q * s_r on dangerous bundles, s_r the top value left in one; take that item."""

    name = "P2"

    def __init__(self, con: NegativeConstruction):
        self.con = con

    def _target(self, state):
        con = self.con
        held: dict[int, Fraction] = {}
        for e in iter_bits(state.holdings[0]):
            j = con.bundle_of(e)
            held[j] = held.get(j, ZERO) + con.item_value(e)
        best = None
        for j, val in sorted(held.items()):
            if val < con.eps / 2:
                continue
            left = state.remaining & con.bundles[j]
            if left:
                e = (left & -left).bit_length() - 1
                if best is None or e < best:
                    best = e
        return best

    def bid(self, agent, state):
        e = self._target(state)
        if e is None:
            return ZERO
        price = self.con.q * self.con.item_value(e) * self.con.scale
        return price if price <= state.budgets[agent] else ZERO

    def select(self, agent, state, price):
        e = self._target(state)
        if price == 0 or e is None:
            return 0
        return 1 << e


def gen_negative_instance(k: int, q: int, eps, p1_size: int = 2, p2_size: int = 2) -> NegativeConstruction:
    """Build the construction with n = 8kq/eps bundles and reduced opponent groups.

    Agent 0 has entitlement 1/n.  P1 (``p1_size`` agents) holds 1/2 in total
    and P2 (``p2_size`` agents) the rest, as in the full construction where
    the groups have n/2 and n/2 - 1 members.
    """
    eps = rat(eps)
    if k < 1 or q < 1 or eps <= 0:
        raise ValueError("need k, q >= 1 and eps > 0")
    if k > 3 or q > 8:
        raise ParameterTooLarge("desk scale allows k <= 3 and q <= 8")
    n = Fraction(8 * k * q) / eps
    if n.denominator != 1 or n.numerator % 2:
        raise ValueError("8kq/eps must be an even integer")
    n = n.numerator
    # Items are laid out tier by tier so that lower indices carry higher value.
    bundles = [0] * n
    tiers = []
    e = 0
    for j in range(k):
        for b in range(n):
            for _ in range(q**j):
                bundles[b] |= 1 << e
                tiers.append(j)
                e += 1
    m = e
    clauses = [
        {i: Fraction(1, q ** tiers[i]) for i in iter_bits(bundles[b])} for b in range(n)
    ]
    v = XOS.from_sparse(clauses, m)
    p1_total = Fraction(1, 2)
    p2_total = 1 - p1_total - Fraction(1, n)
    ents = [Fraction(1, n)] + [p1_total / p1_size] * p1_size + [p2_total / p2_size] * p2_size
    instance = Instance.build([v] * len(ents), ents)
    p1 = tuple(range(1, 1 + p1_size))
    p2 = tuple(range(1 + p1_size, 1 + p1_size + p2_size))
    con = NegativeConstruction(
        k, q, eps, n, instance, tuple(bundles), tuple(tiers), p1, p2, {}
    )
    for a in p1:
        con.strategies[a] = _P1(con)
    for a in p2:
        con.strategies[a] = _P2(con)
    return con


def run_negative(con: NegativeConstruction, protagonist: Strategy, seed: int = 0) -> Transcript:
    strategies = [protagonist] + [con.strategies[a] for a in range(1, con.instance.n)]
    return run_game(con.instance, strategies, "extended", lowest_index, seed)


__all__ = [
    "GameState",
    "RoundRecord",
    "Transcript",
    "Strategy",
    "OneShot",
    "Greedy",
    "RandomStrategy",
    "Passive",
    "lowest_index",
    "seeded_tiebreak",
    "run_game",
    "smallest_acceptable",
    "parse_strategies",
    "remark_item",
    "adversary_search",
    "NegativeConstruction",
    "gen_negative_instance",
    "run_negative",
]
