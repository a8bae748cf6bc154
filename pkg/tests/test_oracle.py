import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tfo.model import cover_check, make_marketplace, mask_of
from tfo.oracle import OracleGuardError, competitive_ratio, offline_opt
from tfo.policies import POLICIES, make_policy

from _instances import brute_force_opt, random_market, random_stream, without_salaries

A = 0


def test_outsourcing_twice_beats_hiring():
    market = make_marketplace([([A], 1, 3, 0)])
    assert offline_opt(market, [1, 1]).cost == 200
    assert offline_opt(market, [1] * 5).cost == 300


def test_pathological_optimum_hires_the_cheap_worker():
    market = make_marketplace([([A], 1, 100, 0), ([A], 1.1, 2, 0)])
    sol = offline_opt(market, [1] * 200)
    assert sol.cost == 200
    assert sol.schedule[0][0] == {1}


def test_empty_stream():
    market = make_marketplace([([A], 1, 3, 0)])
    assert offline_opt(market, []).cost == 0


def test_guard():
    market = make_marketplace([([A], 1, 3, 0)] * 11)
    with pytest.raises(OracleGuardError, match="shrink"):
        offline_opt(market, [1] * 12)


@settings(max_examples=40)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_dynamic_program_matches_brute_force(n, m, T, seed):
    rng = np.random.default_rng(seed)
    market = random_market(rng, n, m)
    stream = random_stream(rng, m, T)
    assert offline_opt(market, stream).cost == brute_force_opt(market, stream)


def test_schedule_replays_to_cost_and_covers():
    rng = np.random.default_rng(21)
    for _ in range(30):
        market = random_market(rng, 5, 5)
        stream = random_stream(rng, 5, 8)
        sol = offline_opt(market, stream)
        assert sol.replay(market, stream).total == sol.cost
        for (team, out), task in zip(sol.schedule, stream):
            assert cover_check(team, out, task, market)


@settings(max_examples=40)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(1, 7), st.integers(0, 2**32 - 1))
def test_no_policy_beats_the_optimum(n, m, T, seed):
    rng = np.random.default_rng(seed)
    market = random_market(rng, n, m)
    stream = random_stream(rng, m, T)
    opt = offline_opt(market, stream).cost
    flat = without_salaries(market)
    opt_flat = offline_opt(flat, stream).cost
    for name in POLICIES:
        if name == "ski-rental":
            continue
        for mk, best in ((market, opt), (flat, opt_flat)):
            policy = make_policy(name, mk, seed=seed)
            total = policy.run(stream).total
            if policy.charge_salary():
                assert total >= best
            else:
                assert total >= opt_flat


def test_always_hire_forced_optimal_ratio_one():
    market = make_marketplace([([A], 2, 2.5, 0)])
    summary = competitive_ratio("always-hire", market, [1, 1, 1])
    assert summary.mean == summary.max == 1.0


def test_pathological_heuristic_ratio():
    market = make_marketplace([([A], 1, 100, 0), ([A], 1.1, 2, 0)])
    summary = competitive_ratio("lumpsum-heuristic", market, [1] * 200)
    assert summary.max == 100.0
    assert summary.opt == 200


def test_ratio_over_seeds():
    market = make_marketplace([([A], 1, 4, 0.5), ([A, 1], 2, 5, 1)])
    summary = competitive_ratio("tfo", market, [1, 3, 1, 2, 3] * 2, seeds=range(5))
    assert len(summary.ratios) == 5
    assert summary.max >= summary.mean >= 1.0
