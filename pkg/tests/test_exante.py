import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairshare.errors import HypothesisViolated, ParameterTooLarge, TooLarge
from fairshare.exante import (
    CLPSolution,
    clp_solve,
    exante_opt,
    fiber,
    gen_vector_instance,
    mes_warm_start,
    round_solution,
    vector_mms,
    vector_ratio_bound,
    vector_welfare_cap,
)
from fairshare.generators import random_instance
from fairshare.model import Additive, Instance, full
from fairshare.shares import mes, mms
from oracles import brute_welfare, close, float_clp

F = Fraction


def test_clp_examples():
    v = Additive([1, 2, 3])
    sol = clp_solve(Instance.build([v]))
    assert sol.entries == {(0, full(3)): 1} and sol.objective == 6
    sol = clp_solve(Instance.build([Additive([2, 1]), Additive([1, 2])]))
    assert sol.objective == 4


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from(["xos", "subadditive"]))
def test_clp_against_float_solver(seed, cls):
    rng = random.Random(seed)
    inst = random_instance(cls, rng.randint(1, 4), rng.randint(1, 3), rng, equal=False)
    sol = clp_solve(inst)
    assert close(sol.objective, float_clp(inst.valuations))
    # The LP relaxes the integral problem.
    assert sol.objective >= brute_welfare(inst.valuations)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6))
def test_mes_warm_start(seed):
    rng = random.Random(seed)
    inst = random_instance("xos", rng.randint(1, 4), rng.randint(1, 3), rng, equal=False)
    warm = mes_warm_start(inst)
    assert warm.objective == sum(mes(a.valuation, a.entitlement)[0] for a in inst.agents)
    sol = clp_solve(inst, warm_start=warm)
    assert sol.objective >= warm.objective


def test_clp_size_limit():
    with pytest.raises(TooLarge):
        clp_solve(valuations=[Additive([1] * 16)] * 2)


def test_exante_single_agent():
    v = Additive([1, 2])
    _, ratio = exante_opt(Instance.build([v]))
    assert ratio == v.value(full(2)) / mes(v, 1)[0]


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from(["xos", "subadditive"]))
def test_exante_ratio_and_lottery(seed, cls):
    rng = random.Random(seed)
    inst = random_instance(cls, rng.randint(1, 5), 2, rng)
    shares = [mes(a.valuation, a.entitlement)[0] for a in inst.agents]
    if not any(shares):
        with pytest.raises(HypothesisViolated):
            exante_opt(inst, "mes")
        return
    lottery, ratio = exante_opt(inst, "mes")
    values = lottery.expected_values(inst)
    assert min(val / s for val, s in zip(values, shares) if s) == ratio
    assert ratio >= (F(1, 2) if cls == "subadditive" else F(632, 1000))


def test_vector_instances():
    for cls in ("xos", "subadditive"):
        inst = gen_vector_instance(2, cls)
        assert inst.m == 4
        for v in inst.valuations:
            assert mms(v, 2)[0] == vector_mms(2, cls) == 2
        assert brute_welfare(inst.valuations) <= vector_welfare_cap(2, cls)
        _, ratio = exante_opt(inst, "mms")
        assert ratio <= vector_ratio_bound(2, cls) == F(3, 4)
    with pytest.raises(ParameterTooLarge):
        gen_vector_instance(4, "xos")


def test_vector_fibers_n2():
    # At most one agent can hold a full fiber of its own.
    inst = gen_vector_instance(2, "subadditive")
    from oracles import all_assignments

    for bundles in all_assignments(2, list(range(4))):
        full_count = sum(
            any(b & fiber(2, i, j) == fiber(2, i, j) for j in range(2)) for i, b in enumerate(bundles)
        )
        assert full_count <= 1
    assert inst.valuations[0].value(fiber(2, 0, 1)) == 2


def test_vector_n3_closed_forms():
    assert vector_welfare_cap(3, "subadditive") == 4
    assert vector_welfare_cap(3, "xos") == F(19)
    inst = gen_vector_instance(3, "subadditive")
    assert inst.m == 27
    v = inst.valuations[0]
    assert v.value(fiber(3, 0, 2)) == 2 and v.value(1) == 1


def test_rounding_disjoint_and_deterministic():
    inst = Instance.build([Additive([1, 0]), Additive([0, 1])])
    x = CLPSolution({(0, 0b01): F(1), (1, 0b10): F(1)}, F(2))
    rep = round_solution(x, inst, "xos", seed=3, trials=50)
    for agent in rep["agents"]:
        assert agent["ratio"] == "1/1" and agent["variance"] == "0/1"
    assert round_solution(x, inst, "xos", seed=3, trials=50) == rep


def test_rounding_mes_start_additive():
    inst = Instance.build([Additive([1, 2, 3]), Additive([3, 2, 1])])
    x = mes_warm_start(inst)
    rep = round_solution(x, inst, "xos", seed=0, trials=10_000)
    for agent, a in zip(rep["agents"], inst.agents):
        share = mes(a.valuation, a.entitlement)[0]
        assert float(F(agent["empirical_mean"])) >= (1 - 1 / 2.718281828 - 0.05) * float(share)
