"""Weighted set cover over workers: greedy approximation and an exact oracle."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence, Union

import numpy as np

from .model import Marketplace, iter_bits

Weight = Union[Sequence[float], Callable[[int], float]]

EXACT_LIMIT = 20


class UncoverableError(ValueError):
    """Some required skill is held by none of the candidates."""

    def __init__(self, skill: int):
        super().__init__(f"skill {skill} cannot be covered by the candidate workers")
        self.skill = skill


@dataclass(frozen=True)
class CoverSolution:
    selected: tuple[int, ...]  # in pick order for greedy, sorted for exact
    cost: float
    covered: int

    @property
    def ids(self) -> frozenset[int]:
        return frozenset(self.selected)


def _weight_fn(weight: Weight) -> Callable[[int], float]:
    if callable(weight):
        return weight
    return lambda r: weight[r]


def _check_coverable(required: int, masks: Sequence[int], candidates: Iterable[int]) -> None:
    reach = 0
    for r in candidates:
        reach |= masks[r]
    missing = required & ~reach
    if missing:
        raise UncoverableError(next(iter_bits(missing)))


def greedy_cover(
    required: int, candidates: Iterable[int] | None, weight: Weight, market: Marketplace
) -> CoverSolution:
    """Classic greedy: repeatedly take the candidate with least weight per newly covered skill.

    Ratios are compared by cross-multiplication, so integer weights give exact
    comparisons; ties go to the lowest worker id. ``candidates=None`` means every
    worker holding a required skill and takes a vectorized path that makes the
    same choices.
    """
    if not required:
        return CoverSolution((), 0, 0)
    if candidates is None:
        return _greedy_pools(required, weight, market)
    w = _weight_fn(weight)
    masks = market.masks
    live = [(r, w(r), masks[r]) for r in sorted(set(candidates)) if masks[r] & required]
    _check_coverable(required, masks, (r for r, _, _ in live))
    uncovered = required
    picked: list[int] = []
    cost = 0
    while uncovered:
        best = None
        best_w = best_g = 0
        keep = []
        for item in live:
            r, wr, mr = item
            g = (mr & uncovered).bit_count()
            if not g:
                continue
            keep.append(item)
            # wr/g < best_w/best_g; strict so the earlier (lower) id wins ties
            if best is None or wr * best_g < best_w * g:
                best, best_w, best_g = r, wr, g
        live = keep
        picked.append(best)
        cost += best_w
        uncovered &= ~masks[best]
    return CoverSolution(tuple(picked), cost, required)


def _greedy_pools(required: int, weight: Weight, market: Marketplace) -> CoverSolution:
    skills = list(iter_bits(required))
    pools = [market.pool_arrays[s] for s in skills]
    for s, pool in zip(skills, pools):
        if not len(pool):
            raise UncoverableError(s)
    if callable(weight):
        weight = [weight(r) for r in range(market.n)]
    w = np.asarray(weight)
    idx = np.concatenate(pools)
    local = np.repeat(np.arange(len(skills)), [len(p) for p in pools])
    ids, inv = np.unique(idx, return_inverse=True)
    wf = w[ids].astype(float)
    alive = np.ones(len(skills), dtype=bool)
    masks = market.masks
    uncovered = required
    picked: list[int] = []
    cost = 0
    while uncovered:
        live = alive[local]
        gains = np.bincount(inv[live], minlength=len(ids))
        with np.errstate(divide="ignore"):
            ratio = np.where(gains > 0, wf / np.maximum(gains, 1), np.inf)
        low = ratio.min()
        near = np.flatnonzero(ratio <= low * (1 + 1e-9))
        best = int(near[0])
        for j in near[1:].tolist():
            # exact tie-break on the few near-minimal ratios
            if w[ids[j]] * gains[best] < w[ids[best]] * gains[j]:
                best = j
        r = int(ids[best])
        picked.append(r)
        cost += int(w[r])
        uncovered &= ~masks[r]
        for i, s in enumerate(skills):
            if alive[i] and not uncovered >> s & 1:
                alive[i] = False
    return CoverSolution(tuple(picked), cost, required)


def exact_cover(
    required: int,
    candidates: Iterable[int],
    weight: Weight,
    market: Marketplace,
    limit: int = EXACT_LIMIT,
) -> CoverSolution:
    """Minimum-weight cover by exhaustive branching on the lowest uncovered skill.

    Every minimal cover is reachable by that branching, so the search is exact
    for positive weights. Among optimal covers the lexicographically smallest
    sorted id tuple is returned.
    """
    cands = sorted(set(candidates))
    if len(cands) > limit:
        raise ValueError(f"exact_cover: {len(cands)} candidates exceeds the guard of {limit}")
    if not required:
        return CoverSolution((), 0, 0)
    w = _weight_fn(weight)
    masks = market.masks
    _check_coverable(required, masks, cands)
    by_skill = {s: [r for r in cands if masks[r] >> s & 1] for s in iter_bits(required)}
    best: list = [None, None]  # cost, sorted ids

    def search(uncovered: int, chosen: tuple[int, ...], cost) -> None:
        if best[0] is not None and cost > best[0]:
            return
        if not uncovered:
            key = tuple(sorted(chosen))
            if best[0] is None or cost < best[0] or (cost == best[0] and key < best[1]):
                best[0], best[1] = cost, key
            return
        low = uncovered & -uncovered
        skill = low.bit_length() - 1
        for r in by_skill[skill]:
            if r in chosen:
                continue
            search(uncovered & ~masks[r], chosen + (r,), cost + w(r))

    search(required, (), 0)
    return CoverSolution(best[1], best[0], required)
