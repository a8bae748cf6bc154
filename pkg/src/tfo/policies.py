"""Baselines, ski rental, the accumulate-then-hire heuristics and TFO-Adaptive."""

from __future__ import annotations

from typing import Callable

from .model import Marketplace, Policy, Task
from .primal_dual import LumpSum, TFOPolicy
from .setcover import greedy_cover


class AlwaysOutsource(Policy):
    """Never hires; outsources a greedy minimum-fee cover of every task."""

    name = "always-outsource"

    def __init__(self, market: Marketplace):
        self._cache: dict[Task, tuple[int, ...]] = {}  # the choice depends on the task only
        super().__init__(market)

    def _step(self, task: Task):
        cached = self._cache.get(task)
        if cached is None:
            cached = greedy_cover(task, None, self.market.lam_arr, self.market).selected
            self._cache[task] = cached
        return cached, (), (), ()


class AlwaysHire(Policy):
    """Hires a greedy minimum-hiring-fee cover of whatever the team lacks; never fires."""

    name = "always-hire"

    def _step(self, task: Task):
        missing = task & ~self.team.covered(task)
        if not missing:
            return (), (), (), ()
        # holders of uncovered skills are never on the team
        cover = greedy_cover(missing, None, self.market.hire_arr, self.market)
        for r in cover.selected:
            self.team.add(r)
        return (), cover.selected, (), ()


class SkiRental(Policy):
    """Rent-or-buy for one worker and one repeated single-skill task.

    Outsources while the fees paid so far plus this one stay below the hiring
    fee; hires at the first period where they would reach it.
    """

    name = "ski-rental"

    def __init__(self, market: Marketplace):
        if market.n != 1:
            raise ValueError("ski-rental needs exactly one worker")
        super().__init__(market)

    def reset(self) -> None:
        super().reset()
        self.spent = 0

    def _step(self, task: Task):
        w = self.market.workers[0]
        if task.bit_count() > 1 or task & ~w.skills:
            raise ValueError("ski-rental needs single-skill tasks the worker can do")
        if not task or 0 in self.team:
            return (), (), (), ()
        if self.spent + w.lam >= w.hire:
            self.team.add(0)
            return (), (0,), (), ()
        self.spent += w.lam
        return (0,), (), (), ()


class TFOHeuristic(Policy):
    """Outsource greedily, accumulate the fees paid to each worker, hire once they reach a threshold.

    A hired worker stays exactly ``eta = ceil(C/sigma)`` periods and is fired at
    the start of the next one, with the accumulated fees reset to zero. The
    hiring threshold is ``C + eta * sigma``. With ``ignore_salary`` (or sigma = 0)
    workers are never fired and the threshold is ``C``.
    """

    name = "tfo-heuristic"
    ignore_salary = False

    def __init__(self, market: Marketplace):
        self._eta = [None if self.ignore_salary else w.eta() for w in market.workers]
        self._threshold = [
            w.hire if e is None else w.hire + e * w.salary for w, e in zip(market.workers, self._eta)
        ]
        super().__init__(market)

    def reset(self) -> None:
        super().reset()
        self._cover_cache: dict[int, tuple[int, ...]] = {}
        self.delta = [0] * self.market.n
        self.hire_age: dict[int, int] = {}
        self.spans: list[tuple[int, int, int]] = []  # (worker, start, end exclusive)
        self._start: dict[int, int] = {}

    def charge_salary(self) -> bool:
        return not self.ignore_salary

    def _step(self, task: Task):
        market = self.market
        team = self.team
        fired = []
        for r, age in list(self.hire_age.items()):
            if self._eta[r] is not None and age >= self._eta[r]:
                team.remove(r)
                del self.hire_age[r]
                self.delta[r] = 0
                self.spans.append((r, self._start.pop(r), self.t))
                fired.append(r)
        missing = task & ~team.covered(task)
        outsourced: tuple[int, ...] = ()
        hired = []
        if missing:
            outsourced = self._cover_cache.get(missing)
            if outsourced is None:
                outsourced = greedy_cover(missing, None, market.lam_arr, market).selected
                self._cover_cache[missing] = outsourced
            delta = self.delta
            for r in outsourced:
                delta[r] += market.lam[r]
                if delta[r] >= self._threshold[r]:
                    hired.append(r)
        for r in hired:
            team.add(r)
            self.hire_age[r] = 0
            self._start[r] = self.t
        for r in self.hire_age:
            self.hire_age[r] += 1
        # hired workers were paid this period as outsourced too
        return outsourced, hired, fired, ()

    def finish(self) -> None:
        for r, start in sorted(self._start.items()):
            self.spans.append((r, start, self.t + 1))
        self._start.clear()


class LumpSumHeuristic(TFOHeuristic):
    """Salary-free variant: hire when accumulated fees reach C, never fire."""

    name = "lumpsum-heuristic"
    ignore_salary = True


class TFOAdaptive(Policy):
    """Runs TFO, TFO-Heuristic, Always-Outsource and Always-Hire side by side and follows the cheapest.

    Every component advances on every task as an independent shadow. After the
    shadows move, the policy switches to another component when that shadow's
    cumulative cost plus the hiring fees needed to take over its team is
    strictly below the active shadow's cumulative cost. The materialized team
    always equals the active shadow's team: workers it holds and we do not are
    hired (paying C), workers we hold and it does not are fired for free.
    """

    name = "tfo-adaptive"
    component_names = ("always-outsource", "tfo", "tfo-heuristic", "always-hire")

    def __init__(
        self, market: Marketplace, seed: int = 0, hat_factor: float = 3.0, track_dual: bool = False, lazy: bool = False
    ):
        self._seed = seed
        self._hat_factor = hat_factor
        self._track_dual = track_dual
        self._lazy = lazy
        super().__init__(market)

    def reset(self) -> None:
        super().reset()
        m = self.market
        self.shadows: list[Policy] = [
            AlwaysOutsource(m),
            TFOPolicy(m, seed=self._seed, hat_factor=self._hat_factor, track_dual=self._track_dual, lazy=self._lazy),
            TFOHeuristic(m),
            AlwaysHire(m),
        ]
        self.active = 0
        self.switches: list[tuple[int, int, int]] = []  # (t, from, to)

    def _switch_cost(self, shadow: Policy, newly: frozenset[int]) -> int:
        hire = self.market.hire
        return sum(hire[r] for r in shadow.team.members if r not in self.team and r not in newly)

    def _step(self, task: Task):
        outcomes = [s.step(task) for s in self.shadows]
        active_total = self.shadows[self.active].ledger().total
        best, best_score = self.active, active_total
        for i, (s, o) in enumerate(zip(self.shadows, outcomes)):
            if i == self.active:
                continue
            score = s.ledger().total
            if score >= best_score:
                continue  # the switch cost is never negative
            score += self._switch_cost(s, o.hired)
            if score < best_score:
                best, best_score = i, score
        outcome = outcomes[best]
        if best == self.active:
            # materialized team already mirrors this shadow
            fired, hired = sorted(outcome.fired), sorted(outcome.hired)
        else:
            self.switches.append((self.t, self.active, best))
            self.active = best
            target = self.shadows[best].team.members
            fired = sorted(r for r in self.team.members if r not in target)
            hired = sorted(r for r in target if r not in self.team)
        for r in fired:
            self.team.remove(r)
        for r in hired:
            self.team.add(r)
        return outcome.outsourced, hired, fired, ()

    def finish(self) -> None:
        for s in self.shadows:
            fin = getattr(s, "finish", None)
            if fin is not None:
                fin()


POLICIES: dict[str, Callable[..., Policy]] = {
    "always-outsource": lambda m, seed=0, **kw: AlwaysOutsource(m),
    "always-hire": lambda m, seed=0, **kw: AlwaysHire(m),
    "ski-rental": lambda m, seed=0, **kw: SkiRental(m),
    "lumpsum-heuristic": lambda m, seed=0, **kw: LumpSumHeuristic(m),
    "lumpsum": lambda m, seed=0, **kw: LumpSum(
        m, seed=seed, track_dual=kw.get("track_dual", True), lazy=kw.get("lazy", False)
    ),
    "tfo-heuristic": lambda m, seed=0, **kw: TFOHeuristic(m),
    "tfo": lambda m, seed=0, **kw: TFOPolicy(
        m, seed=seed, hat_factor=kw.get("hat_factor", 3.0), track_dual=kw.get("track_dual", True), lazy=kw.get("lazy", False)
    ),
    "tfo-adaptive": lambda m, seed=0, **kw: TFOAdaptive(
        m, seed=seed, hat_factor=kw.get("hat_factor", 3.0), lazy=kw.get("lazy", False)
    ),
}

RANDOMIZED = frozenset({"lumpsum", "tfo", "tfo-adaptive"})


def make_policy(name: str, market: Marketplace, seed: int = 0, **params) -> Policy:
    try:
        factory = POLICIES[name]
    except KeyError:
        raise ValueError(f"unknown policy {name!r}; choose from {', '.join(POLICIES)}") from None
    return factory(market, seed=seed, **params)
