import random
from fractions import Fraction

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from fairshare.errors import HypothesisViolated, TheoremViolated
from fairshare.generators import random_subadditive
from fairshare.ladder import (
    Ladder,
    big_y,
    check_ladder_lemmas,
    choose_k,
    compute_ladder,
    path_sums,
    payment_bound,
    random_y,
    verify_appendix,
    x_from_y,
    x_hypothesis_failures,
    xk_path_formula,
    y_from_x,
)
from fairshare.model import Additive, full
from oracles import brute_ladder, brute_path_sums

F = Fraction


def test_compute_ladder_examples():
    assert compute_ladder(Additive([3, 3, 3]), full(3), 3).entries == (1, 2, 3)
    assert compute_ladder(Additive([6, 6, 3, 3, 1, 1, 1]), full(7), 3).entries == (2, 3, 7)
    v = Additive([2, 0, 1])
    assert compute_ladder(v, full(3), 1).entries == (2,)


def test_ladder_lemma_examples():
    assert Ladder(3, (1, 2, 3)).h(2) >= 2 * Ladder(3, (1, 2, 3)).h(1)
    assert check_ladder_lemmas(Additive([1, 1, 1]), full(3), 3)
    assert check_ladder_lemmas(Additive([5, 0, 0]), full(3), 3)


def test_payment_bound_examples():
    assert payment_bound(Ladder(3, (1, 2, 3))) == F(4, 3)
    assert payment_bound(Ladder(3, (1, 1, 1))) == 1
    assert payment_bound(Ladder(3, (1, 2, 3)), F(1, 2)) == F(2, 3)


def test_choose_k_examples():
    assert choose_k(3000) == 6
    assert choose_k(300000000) == 10
    assert choose_k(1) == 2
    # A larger entitlement only helps.
    assert choose_k(3000, F(1, 2)) <= choose_k(3000)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_ladders_of_subadditive_valuations(seed):
    rng = random.Random(seed)
    m = rng.randint(1, 6)
    k = rng.choice([2, 3, 4])
    v = random_subadditive(m, rng)
    B = full(m)
    lad = compute_ladder(v, B, k)
    assert lad.entries == brute_ladder(v, B, k)
    assert check_ladder_lemmas(v, B, k, strict=True)
    kk = choose_k(m)
    assert payment_bound(compute_ladder(v, B, kk)) >= 1


def test_recurrence_examples():
    assert x_from_y((F(1, 3), F(1, 3))) == (3, 6)
    assert x_from_y((F(1, 8),) * 4) == (8, 56, 384, 2624)
    assert y_from_x((3, 6)) == (F(1, 3), F(1, 3))
    # Out-of-hypothesis input is still computed.
    x_from_y((F(1, 2), F(1, 2), F(1, 2)))


def test_y_from_x_flags_x1_equal_one():
    assert x_hypothesis_failures((1, 2))
    with pytest.raises(HypothesisViolated):
        y_from_x((1, 2))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 8))
def test_round_trip(seed, k):
    y = random_y(k, random.Random(seed))
    x = x_from_y(y)
    assert y_from_x(x, strict=False) == y
    assume(not x_hypothesis_failures(x))
    assert x_from_y(y_from_x(x)) == x


def test_path_formula_examples():
    y1, y2 = F(1, 5), F(1, 7)
    assert big_y((y1, y2)) == -y1
    assert xk_path_formula((y1, y2)) == (1 - y1) / (y1 * y2)
    y3 = F(1, 9)
    assert xk_path_formula((y1, y2, y3)) == (1 - y1 - y2) / (y1 * y2 * y3)
    y = (F(1, 8),) * 4
    assert big_y(y) == -(y[0] + y[1] + y[2]) + y[0] * y[2]
    assert xk_path_formula(y) == 2624


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 9))
def test_path_sums_against_enumeration(seed, vertices):
    y = random_y(vertices, random.Random(seed))
    assert path_sums(y, vertices) == brute_path_sums(y, vertices)


def test_verify_appendix_examples():
    assert verify_appendix((F(1, 3), F(1, 3)))["x_k"] == "6/1"
    rep = verify_appendix((F(1, 8),) * 4)
    assert rep["x_k"] == "2624/1" and all(rep["checks"].values())
    with pytest.raises(HypothesisViolated):
        verify_appendix((F(1, 2), F(1, 2)))


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 10))
def test_appendix_claims(seed, k):
    verify_appendix(random_y(k, random.Random(seed)))


def test_theorem_violation_is_reported(monkeypatch):
    import fairshare.ladder as lad

    monkeypatch.setattr(lad, "xk_path_formula", lambda y: F(-1))
    with pytest.raises(TheoremViolated):
        lad.verify_appendix((F(1, 3), F(1, 3)))
