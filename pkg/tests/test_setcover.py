import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tfo.model import Marketplace, Worker, cover_check, make_marketplace, mask_of
from tfo.setcover import UncoverableError, exact_cover, greedy_cover

A, B, C = 0, 1, 2


def weighted(rows):
    """Marketplace whose outsourcing fees double as cover weights."""
    return make_marketplace([(skills, w, 10 * w, 0) for skills, w in rows])


def test_greedy_example_tie_goes_to_lower_id():
    market = weighted([([A, B], 2), ([C], 1), ([A, B, C], 4)])
    sol = greedy_cover(mask_of([A, B, C]), [0, 1, 2], market.lam, market)
    assert sol.selected == (0, 1)
    assert sol.cost == 300


def test_greedy_forced_and_empty():
    market = weighted([([A], 7)])
    assert greedy_cover(mask_of([A]), [0], market.lam, market).cost == 700
    empty = greedy_cover(0, [0], market.lam, market)
    assert empty.selected == () and empty.cost == 0


def test_greedy_uncoverable_names_skill():
    market = weighted([([A], 1), ([B], 1)])
    with pytest.raises(UncoverableError) as err:
        greedy_cover(mask_of([A, B]), [0], market.lam, market)
    assert err.value.skill == B


def test_exact_examples():
    market = weighted([([A, B], 2), ([C], 1), ([A, B, C], 4)])
    assert exact_cover(mask_of([A, B, C]), [0, 1, 2], market.lam, market).cost == 300
    market = weighted([([A], 1), ([B], 1), ([A, B], 3)])
    sol = exact_cover(mask_of([A, B]), [0, 1, 2], market.lam, market)
    assert sol.selected == (0, 1) and sol.cost == 200
    market = weighted([([A], 5), ([A], 5)])
    assert exact_cover(mask_of([A]), [0, 1], market.lam, market).selected == (0,)


def test_exact_guard():
    market = weighted([([A], 1)] * 21)
    with pytest.raises(ValueError, match="guard"):
        exact_cover(mask_of([A]), range(21), market.lam, market)


def test_callable_weight():
    market = weighted([([A], 1), ([A], 2)])
    sol = greedy_cover(mask_of([A]), [0, 1], lambda r: 10 - r, market)
    assert sol.selected == (1,)


def test_ratio_ties_are_exact():
    # 3/3 and 1/1 are equal ratios; floating point must not split them
    market = weighted([([A], 1), ([A, B, C], 3)])
    sol = greedy_cover(mask_of([A, B, C]), [0, 1], market.lam, market)
    assert sol.selected[0] == 0


instances = st.integers(1, 8).flatmap(
    lambda n: st.tuples(
        st.integers(1, 10),
        st.lists(st.tuples(st.integers(1, 1023), st.integers(1, 20)), min_size=n, max_size=n),
        st.integers(1, 1023),
    )
)


def build(m, rows):
    full = (1 << m) - 1
    workers = []
    for i, (mask, w) in enumerate(rows):
        mask &= full
        workers.append(Worker(i, mask or 1, w, 10 * w, 0))
    return Marketplace(workers, m)


@given(instances)
def test_greedy_within_harmonic_bound_of_exact(inst):
    m, rows, req = inst
    market = build(m, rows)
    required = req & market.union_skills(range(market.n))
    g = greedy_cover(required, range(market.n), market.lam, market)
    e = exact_cover(required, range(market.n), market.lam, market)
    assert cover_check([], g.selected, required, market)
    assert cover_check([], e.selected, required, market)
    h_m = sum(1 / k for k in range(1, m + 1))
    assert e.cost <= g.cost <= h_m * e.cost + 1e-9


@given(instances)
def test_vectorized_greedy_matches_plain_greedy(inst):
    m, rows, req = inst
    market = build(m, rows)
    required = req & market.union_skills(range(market.n))
    plain = greedy_cover(required, market.candidates_for(required), market.lam, market)
    fast = greedy_cover(required, None, market.lam_arr, market)
    assert plain.selected == fast.selected
    assert plain.cost == fast.cost


@given(instances)
def test_greedy_picks_only_useful_workers(inst):
    m, rows, req = inst
    market = build(m, rows)
    required = req & market.union_skills(range(market.n))
    sol = greedy_cover(required, range(market.n), market.lam, market)
    covered = 0
    for r in sol.selected:
        assert market.masks[r] & required & ~covered
        covered |= market.masks[r]
    assert sol.covered == required


def test_greedy_is_deterministic():
    rng = np.random.default_rng(3)
    rows = [(int(rng.integers(1, 1024)), int(rng.integers(1, 20))) for _ in range(8)]
    market = build(10, rows)
    req = market.union_skills(range(8))
    first = greedy_cover(req, range(8), market.lam, market)
    assert all(greedy_cover(req, range(8), market.lam, market) == first for _ in range(5))
