"""Exact offline optimum for tiny instances and empirical competitive ratios."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .model import CostLedger, Marketplace, Policy, Task, iter_bits
from .setcover import exact_cover

#: The dynamic program visits 2^n hired subsets in each of T periods.
STATE_BUDGET = 2**10 * 12
_INF = np.iinfo(np.int64).max // 4


class OracleGuardError(ValueError):
    pass


@dataclass(frozen=True)
class OracleSolution:
    """Optimal total (cents) and, per period, the hired team and the outsourced workers."""

    cost: int
    schedule: tuple[tuple[frozenset[int], frozenset[int]], ...]

    def replay(self, market: Marketplace, stream: Sequence[Task]) -> CostLedger:
        policy = ScheduledPolicy(market, self.schedule)
        return policy.run(stream)


class ScheduledPolicy(Policy):
    """Follows a precomputed (hired team, outsourced) schedule; used to re-price oracle answers."""

    name = "scheduled"

    def __init__(self, market: Marketplace, schedule):
        self.schedule = schedule
        super().__init__(market)

    def _step(self, task: Task):
        team, outsourced = self.schedule[self.t - 1]
        fired = [r for r in self.team.members if r not in team]
        hired = [r for r in team if r not in self.team]
        for r in fired:
            self.team.remove(r)
        for r in hired:
            self.team.add(r)
        return outsourced, hired, fired, ()


def _compact(stream: Sequence[Task]) -> tuple[list[int], dict[int, int]]:
    """Relabel the skills that occur in the stream as 0..k-1."""
    used = 0
    for task in stream:
        used |= task
    skills = list(iter_bits(used))
    return skills, {s: i for i, s in enumerate(skills)}


def _relabel(mask: int, index: dict[int, int]) -> int:
    out = 0
    for s in iter_bits(mask):
        if s in index:
            out |= 1 << index[s]
    return out


def offline_opt(market: Marketplace, stream: Sequence[Task], budget: int = STATE_BUDGET) -> OracleSolution:
    """Optimal offline cost by dynamic programming over the hired subset.

    Moving from team H to team H' in a period costs the hiring fees of H' \\ H,
    the salaries of H', and the cheapest outsourcing cover of the task skills
    H' lacks. Firing is free.
    """
    n = market.n
    T = len(stream)
    if T == 0:
        return OracleSolution(0, ())
    if (1 << n) * T > budget:
        raise OracleGuardError(
            f"oracle state space 2^{n} x {T} exceeds {budget}; shrink the marketplace or the stream"
        )
    skills, index = _compact(stream)
    k = len(skills)
    if k > 20:
        raise OracleGuardError(f"{k} distinct skills in the stream; the oracle handles at most 20")
    wmask = [_relabel(market.masks[r], index) for r in range(n)]
    subsets = np.arange(1 << n)

    def subset_sum(values: Sequence[int]) -> np.ndarray:
        out = np.zeros(1 << n, dtype=np.int64)
        for r in range(n):
            bit = 1 << r
            out[subsets & bit != 0] += values[r]
        return out

    hire_sum = subset_sum(market.hire)
    salary_sum = subset_sum(market.salary)
    lam_sum = subset_sum(market.lam)
    union = np.zeros(1 << n, dtype=np.int64)
    for r in range(n):
        union[subsets & (1 << r) != 0] |= wmask[r]

    # cheapest outsourcing of each skill mask: best exact union, then min over supersets
    out_cost = np.full(1 << k, _INF, dtype=np.int64)
    np.minimum.at(out_cost, union, lam_sum)
    for b in range(k):
        bit = 1 << b
        lo = np.arange(1 << k)
        lo = lo[lo & bit == 0]
        out_cost[lo] = np.minimum(out_cost[lo], out_cost[lo | bit])

    move = hire_sum[subsets[None, :] & ~subsets[:, None]]  # move[H, H'] = C(H' \ H)
    value = np.full(1 << n, _INF, dtype=np.int64)
    value[0] = 0
    back = []
    for task in stream:
        need = _relabel(task, index)
        rest = need & ~union
        step = salary_sum + out_cost[rest]
        total = value[:, None] + move
        prev = total.argmin(axis=0)
        value = np.minimum(total[prev, subsets] + step, _INF)
        back.append(prev)
    end = int(value.argmin())
    cost = int(value[end])
    if cost >= _INF:
        raise ValueError("stream contains a skill no worker holds")

    teams = [end]
    for prev in reversed(back[1:]):
        teams.append(int(prev[teams[-1]]))
    teams.reverse()
    schedule = []
    for task, h in zip(stream, teams):
        team = frozenset(r for r in range(n) if h >> r & 1)
        rest = task & ~market.union_skills(team)
        cands = [r for r in range(n) if r not in team]
        cover = exact_cover(rest, cands, market.lam, market, limit=max(20, n))
        schedule.append((team, frozenset(cover.selected)))
    return OracleSolution(cost, tuple(schedule))


@dataclass(frozen=True)
class RatioSummary:
    mean: float
    max: float
    ratios: tuple[float, ...]
    opt: int


def competitive_ratio(
    policy: str,
    market: Marketplace,
    stream: Sequence[Task],
    seeds: Iterable[int] = (0,),
    opt: int | None = None,
    **params,
) -> RatioSummary:
    """Policy total over the offline optimum, for each seed."""
    from .policies import make_policy

    if opt is None:
        opt = offline_opt(market, stream).cost
    if opt <= 0:
        raise ValueError("offline optimum is zero; ratio undefined")
    ratios = []
    for seed in seeds:
        p = make_policy(policy, market, seed=seed, **params)
        ratios.append(p.run(stream).total / opt)
    return RatioSummary(float(np.mean(ratios)), float(max(ratios)), tuple(ratios), opt)
