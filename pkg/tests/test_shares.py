import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairshare.errors import RelationViolated, TooLarge
from fairshare.exante import clp_solve
from fairshare.generators import random_additive, random_subadditive, random_xos, two_triangles
from fairshare.model import Additive, Table, check_fractional_partition, class_check, full
from fairshare.shares import (
    approx_mms_partition_subadditive,
    aps,
    aps_via_clp,
    mes,
    mms,
    share_report,
    share_relations,
)
from oracles import brute_mms, close, float_aps, float_mes

F = Fraction


def test_mms_examples():
    assert mms(Additive([1, 1, 1, 1]), 2)[0] == 2
    # Two disjoint triangles have no perfect matching.
    assert mms(two_triangles(3), 3)[0] == 1
    assert mms(Additive([3, 2, 2, 1]), 2)[0] == 4


def test_aps_examples():
    value, fp = aps(two_triangles(3), F(1, 3))
    assert value == 2
    assert check_fractional_partition(fp, two_triangles(3)).min_value >= 2
    assert aps(Additive([1]), F(1, 2))[0] == 0
    assert aps(Additive([1, 1, 1]), F(1, 3))[0] == 1


def test_mes_examples():
    assert mes(Additive([2, 4]), F(1, 2))[0] == 3
    assert mes(Additive([1]), F(1, 2))[0] == F(1, 2)
    v = two_triangles(3)
    assert mes(v, 1)[0] == v.value(full(v.m))


def test_aps_via_clp_examples():
    assert aps_via_clp(two_triangles(3), 3) == 2
    assert aps_via_clp(Additive([1, 1, 1]), 3) == 1
    assert aps_via_clp(Additive([1]), 2) == 0


def test_size_limits():
    with pytest.raises(TooLarge):
        mms(Additive([1] * 13), 2)
    with pytest.raises(TooLarge):
        aps(Additive([1] * 17), F(1, 2))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from(["xos", "subadditive", "additive"]))
def test_shares_against_oracles(seed, cls):
    rng = random.Random(seed)
    m, n = rng.randint(1, 5), rng.randint(1, 3)
    v = {"xos": random_xos, "subadditive": random_subadditive, "additive": random_additive}[cls](m, rng)
    b = F(1, n)
    mms_value, parts = mms(v, n)
    assert mms_value == brute_mms(v, n)
    assert len(parts) == n and min(v.value(p) for p in parts) == mms_value
    aps_value, aps_fp = aps(v, b)
    mes_value, mes_fp = mes(v, b)
    assert close(aps_value, float_aps(v, b))
    assert close(mes_value, float_mes(v, b))
    # Witnesses are exact partitions reaching the reported values.
    check = check_fractional_partition(aps_fp, v)
    assert check.valid and (aps_value == 0 or check.min_value >= aps_value)
    check = check_fractional_partition(mes_fp, v)
    assert check.valid
    assert sum(w * v.value(s) for s, w in mes_fp.parts) == mes_value
    assert mes_value >= aps_value >= mms_value


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_aps_via_clp_agrees(seed):
    rng = random.Random(seed)
    v = random_xos(rng.randint(1, 4), rng)
    n = rng.randint(1, 3)
    assert aps_via_clp(v, n) == aps(v, F(1, n))[0]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_unequal_entitlement_shares_oracle(seed):
    rng = random.Random(seed)
    v = random_subadditive(rng.randint(1, 4), rng)
    b = F(rng.randint(1, 11), 12)
    assert close(aps(v, b)[0], float_aps(v, b))
    assert close(mes(v, b)[0], float_mes(v, b))


def test_additive_mes_is_proportional():
    v = Additive([2, 3, 5])
    for b in (F(1, 2), F(1, 3), F(2, 7)):
        assert mes(v, b)[0] == b * 10


def test_approx_mms_partition_examples():
    # Items worth 1 reach T/3n = 2/3 and are handed out outright.
    parts = approx_mms_partition_subadditive(Additive([1, 1, 1, 1]), 2)
    assert len(parts) == 2 and sum(bin(p).count("1") for p in parts) == 4
    assert all(Additive([1, 1, 1, 1]).value(p) >= F(4, 12) for p in parts)
    v = Additive([5, 1, 1, 1])
    parts = approx_mms_partition_subadditive(v, 2)
    assert 0b0001 in parts
    assert approx_mms_partition_subadditive(v, 1) == [full(4)]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_approx_mms_partition_guarantee(seed):
    rng = random.Random(seed)
    m, n = rng.randint(1, 6), rng.randint(1, 3)
    v = random_subadditive(m, rng)
    parts = approx_mms_partition_subadditive(v, n)
    assert len(parts) == n
    covered = 0
    for p in parts:
        assert not covered & p
        covered |= p
    assert covered == full(m)
    T = clp_solve(valuations=[v] * n).objective
    # The first bundle handed out is measured against the full-instance T.
    assert max(v.value(p) for p in parts) >= T / (6 * n)
    # The output is itself an n-partition, so it cannot beat the MMS.
    assert brute_mms(v, n) >= min(v.value(p) for p in parts)


def test_share_report_and_relations():
    rep = share_report(two_triangles(3), F(1, 3))
    assert (rep.mms, rep.aps) == (1, 2)
    out = share_relations(two_triangles(3), 3)
    assert out["xos"] and out["violations"] == []
    assert Fraction(out["aps"]) / Fraction(out["mms"]) == 2


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from(["xos", "subadditive"]))
def test_relations_hold(seed, cls):
    rng = random.Random(seed)
    m, n = rng.randint(1, 6), rng.randint(2, 3)
    v = random_xos(m, rng) if cls == "xos" else random_subadditive(m, rng)
    share_relations(v, n)


def test_relations_raise_on_violation(monkeypatch):
    import fairshare.shares as sh

    monkeypatch.setattr(sh, "mms", lambda v, n: (Fraction(100), []))
    with pytest.raises(RelationViolated):
        sh.share_relations(Table([0, 1, 1, 1], 2), 2)
    assert class_check(Table([0, 1, 1, 1], 2), "subadditive")
