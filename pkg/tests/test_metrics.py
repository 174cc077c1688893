"""Aggregate metrics: exact arithmetic and order/monotonicity properties."""

import json

import pytest
from hypothesis import given, strategies as st

from morphnav.metrics import (EpisodeRecord, aggregate, collision_rate,
                              safe_episode_rate, sc, sel, success_rate)


def rec(success, steps, expert_steps, collisions):
    return EpisodeRecord(success=success, steps=steps,
                         expert_steps=expert_steps, collisions=collisions)


def test_sc_examples():
    assert sc([rec(True, 10, 10, 0)]) == 1.0
    assert sc([rec(True, 10, 10, 1)]) == 0.5
    three = [rec(True, 10, 10, 0), rec(True, 10, 10, 3), rec(False, 10, 10, 0)]
    assert sc(three) == pytest.approx((1 + 0.25 + 0) / 3)


def test_sel_examples():
    assert sel([rec(True, 10, 10, 0)]) == 1.0
    assert sel([rec(True, 20, 10, 0)]) == 0.5
    assert sel([rec(False, 10, 10, 0)]) == 0.0
    # a policy faster than the reference is not rewarded beyond 1.0
    assert sel([rec(True, 5, 10, 0)]) == 1.0


def test_aggregate_all_perfect():
    records = [rec(True, 7, 7, 0) for _ in range(5)]
    m = aggregate(records)
    assert (m.success_rate, m.sel, m.sc) == (1.0, 1.0, 1.0)
    assert m.collision_rate == 0.0 and m.safe_episode_rate == 1.0
    assert m.n == 5


def test_aggregate_all_failures():
    records = [rec(False, 9, 3, 2) for _ in range(4)]
    m = aggregate(records)
    assert (m.success_rate, m.sel, m.sc) == (0.0, 0.0, 0.0)
    assert m.safe_episode_rate == 0.0
    assert m.collision_rate == pytest.approx(2 / 9)


def test_aggregate_hand_computed_four_records():
    records = [rec(True, 10, 10, 0),   # sc 1, sel 1
               rec(True, 20, 10, 1),   # sc 1/2, sel 1/2
               rec(False, 30, 15, 3),  # fails
               rec(True, 12, 24, 0)]   # sc 1, sel 1 (faster than reference)
    m = aggregate(records)
    assert m.success_rate == pytest.approx(3 / 4)
    assert m.sc == pytest.approx((1 + 0.5 + 0 + 1) / 4)
    assert m.sel == pytest.approx((1 + 0.5 + 0 + 1) / 4)
    assert m.collision_rate == pytest.approx((0 + 1 / 20 + 3 / 30 + 0) / 4)
    assert m.safe_episode_rate == pytest.approx(2 / 4)  # two clean episodes


def test_empty_input_rejected():
    for fn in (sc, sel, success_rate, collision_rate, safe_episode_rate,
               aggregate):
        with pytest.raises(ValueError):
            fn([])


def test_record_validation():
    with pytest.raises(ValueError):
        rec(True, 0, 10, 0)
    with pytest.raises(ValueError):
        rec(True, 10, 0, 0)
    with pytest.raises(ValueError):
        rec(True, 10, 10, 11)  # more collisions than steps
    r = rec(True, 10, 9, 2)
    assert EpisodeRecord.from_dict(r.to_dict()) == r


def test_summary_serialization():
    m = aggregate([rec(True, 10, 10, 0), rec(False, 5, 5, 1)])
    d = json.loads(m.to_json())
    assert set(d) == {"n", "success_rate", "sel", "sc", "collision_rate",
                      "safe_episode_rate"}
    table = m.to_table()
    for key in ("success_rate", "sel", "sc", "collision_rate",
                "safe_episode_rate"):
        assert key in table


@st.composite
def record_lists(draw, min_size=1):
    n = draw(st.integers(min_size, 20))
    out = []
    for _ in range(n):
        steps = draw(st.integers(1, 60))
        out.append(rec(draw(st.booleans()), steps,
                       draw(st.integers(1, 60)),
                       draw(st.integers(0, steps))))
    return out


@given(record_lists())
def test_metric_bounds_and_ordering(records):
    m = aggregate(records)
    for v in (m.success_rate, m.sel, m.sc, m.collision_rate,
              m.safe_episode_rate):
        assert 0.0 <= v <= 1.0
    assert m.sc <= m.success_rate + 1e-12
    assert m.sel <= m.success_rate + 1e-12


@given(record_lists(), st.randoms())
def test_permutation_invariance(records, rand):
    m1 = aggregate(records)
    shuffled = list(records)
    rand.shuffle(shuffled)
    m2 = aggregate(shuffled)
    assert m1.n == m2.n
    assert m1.success_rate == pytest.approx(m2.success_rate)
    assert m1.sel == pytest.approx(m2.sel)
    assert m1.sc == pytest.approx(m2.sc)
    assert m1.collision_rate == pytest.approx(m2.collision_rate)


@given(record_lists())
def test_adding_failure_never_helps(records):
    m1 = aggregate(records)
    m2 = aggregate(records + [rec(False, 10, 10, 0)])
    assert m2.success_rate <= m1.success_rate + 1e-12
    assert m2.sel <= m1.sel + 1e-12
    assert m2.sc <= m1.sc + 1e-12
