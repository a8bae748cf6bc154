"""Domain types: workers, marketplaces, tasks, step outcomes and cost ledgers.

Money is held as integer cents everywhere outside the fractional primal-dual
state, so ledger totals are exact. Skill sets (of workers and of tasks) are
Python ints used as bitsets over the dense skill index ``0..m-1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from typing import Iterable, Iterator, Sequence

import numpy as np

CENTS = 100

#: A task is the bitset of the skills it requires.
Task = int


class MarketplaceError(ValueError):
    """Raised when a marketplace cannot be built or is rejected by validation."""


class CoverageError(AssertionError):
    """A policy produced a team that does not cover its task."""


def iter_bits(mask: int) -> Iterator[int]:
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


def mask_of(skills: Iterable[int]) -> int:
    mask = 0
    for s in skills:
        if s < 0:
            raise ValueError(f"negative skill id {s}")
        mask |= 1 << s
    return mask


def skills_of(mask: int) -> list[int]:
    return list(iter_bits(mask))


def to_cents(value: str | int | float | Decimal) -> int:
    """Parse a currency amount into integer cents, refusing sub-cent precision."""
    try:
        d = Decimal(str(value).strip())
    except InvalidOperation as exc:
        raise ValueError(f"not a number: {value!r}") from exc
    cents = d * CENTS
    if cents != cents.to_integral_value():
        raise ValueError(f"{value!r} has sub-cent precision")
    return int(cents)


def format_cents(cents: int) -> str:
    sign = "-" if cents < 0 else ""
    whole, frac = divmod(abs(cents), CENTS)
    return f"{sign}{whole}.{frac:02d}"


@dataclass(frozen=True, slots=True)
class Worker:
    """One worker: skill bitset plus outsourcing fee, hiring fee and salary in cents."""

    id: int
    skills: int
    lam: int
    hire: int
    salary: int

    def eta(self) -> int | None:
        """Hiring-interval length ceil(C/sigma); ``None`` means unbounded (sigma = 0)."""
        if self.salary == 0:
            return None
        return -(-self.hire // self.salary)


class Marketplace:
    """Immutable worker pool with the skill -> worker index.

    ``pools[l]`` lists, in increasing id order, every worker possessing skill ``l``.
    ``lam``, ``hire`` and ``salary`` are integer-cent tuples indexed by worker id
    (``*_arr`` are numpy copies); ``masks`` holds each worker's skill bitset.
    """

    def __init__(
        self,
        workers: Sequence[Worker],
        m: int,
        skill_names: Sequence[str] | None = None,
        worker_names: Sequence[str] | None = None,
    ):
        workers = tuple(workers)
        for i, w in enumerate(workers):
            if w.id != i:
                raise MarketplaceError(f"worker ids must be dense 0..n-1, got {w.id} at {i}")
            if w.skills >> m:
                raise MarketplaceError(f"worker {i} has a skill id >= m={m}")
        if skill_names is not None and len(skill_names) != m:
            raise MarketplaceError("skill_names must have length m")
        self.workers = workers
        self.m = m
        self.n = len(workers)
        self.skill_names = tuple(skill_names) if skill_names is not None else None
        self.worker_names = tuple(worker_names) if worker_names is not None else None
        pools: list[list[int]] = [[] for _ in range(m)]
        for w in workers:
            for s in iter_bits(w.skills):
                pools[s].append(w.id)
        self.pools = tuple(tuple(p) for p in pools)
        self.pool_arrays = tuple(np.asarray(p, dtype=np.int64) for p in pools)
        self.masks = tuple(w.skills for w in workers)
        self.lam = tuple(w.lam for w in workers)
        self.hire = tuple(w.hire for w in workers)
        self.salary = tuple(w.salary for w in workers)
        self.lam_arr = np.array(self.lam, dtype=np.int64)
        self.hire_arr = np.array(self.hire, dtype=np.int64)
        self.salary_arr = np.array(self.salary, dtype=np.int64)
        self.all_skills = (1 << m) - 1

    def __len__(self) -> int:
        return self.n

    def __repr__(self) -> str:
        return f"Marketplace(n={self.n}, m={self.m})"

    def candidates_for(self, required: int) -> list[int]:
        """Workers holding at least one skill of ``required``, sorted by id."""
        seen: set[int] = set()
        for s in iter_bits(required):
            seen.update(self.pools[s])
        return sorted(seen)

    def union_skills(self, ids: Iterable[int]) -> int:
        mask = 0
        for r in ids:
            mask |= self.masks[r]
        return mask

    def with_costs(self, lam: Sequence[int], hire: Sequence[int], salary: Sequence[int]) -> "Marketplace":
        """Same skills, new per-worker costs (cents)."""
        workers = [
            Worker(w.id, w.skills, int(lam[i]), int(hire[i]), int(salary[i]))
            for i, w in enumerate(self.workers)
        ]
        return Marketplace(workers, self.m, self.skill_names, self.worker_names)

    def mean_skills_per_worker(self) -> float:
        return sum(mask.bit_count() for mask in self.masks) / max(self.n, 1)


def make_marketplace(rows: Iterable[tuple[Iterable[int], float | int | str, float | int | str, float | int | str]], m: int | None = None) -> Marketplace:
    """Build a marketplace from ``(skills, lambda, C, sigma)`` rows given in currency units."""
    workers = []
    top = -1
    for i, (skills, lam, hire, salary) in enumerate(rows):
        mask = mask_of(skills)
        top = max(top, mask.bit_length() - 1)
        workers.append(Worker(i, mask, to_cents(lam), to_cents(hire), to_cents(salary)))
    return Marketplace(workers, m if m is not None else top + 1)


# --- validation -------------------------------------------------------------

SALARY_NOT_BELOW_OUTSOURCE = "salary_not_below_outsource"
OUTSOURCE_NOT_BELOW_HIRE_PLUS_SALARY = "outsource_not_below_hire_plus_salary"
SALARY_EXCEEDS_HIRE = "salary_exceeds_hire"
ASSUMPTION_CODES = (
    SALARY_NOT_BELOW_OUTSOURCE,
    OUTSOURCE_NOT_BELOW_HIRE_PLUS_SALARY,
    SALARY_EXCEEDS_HIRE,
)


@dataclass
class ValidationReport:
    """Outcome of :func:`validate_marketplace`.

    ``violations`` maps worker id to the list of failed checks. Assumption
    violations (the three cost inequalities) can be downgraded with ``force``;
    structural errors (no workers, empty skill set, non-positive fees, empty
    pools) cannot.
    """

    violations: dict[int, list[str]] = field(default_factory=dict)
    empty_pools: list[int] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)
    force: bool = False

    @property
    def structural_ok(self) -> bool:
        if self.errors or self.empty_pools:
            return False
        return all(code in ASSUMPTION_CODES for codes in self.violations.values() for code in codes)

    @property
    def accepted(self) -> bool:
        if not self.structural_ok:
            return False
        return self.force or not self.violations

    def warnings(self) -> list[str]:
        if not self.force:
            return []
        return [f"worker {r}: {code}" for r, codes in sorted(self.violations.items()) for code in codes]

    def messages(self) -> list[str]:
        out = list(self.errors)
        out += [f"skill {s} has no worker" for s in self.empty_pools]
        out += [f"worker {r}: {code}" for r, codes in sorted(self.violations.items()) for code in codes]
        return out

    def raise_if_rejected(self) -> None:
        if not self.accepted:
            raise MarketplaceError("marketplace rejected: " + "; ".join(self.messages()))


def check_worker(w: Worker) -> list[str]:
    codes = []
    if w.skills == 0:
        codes.append("empty_skills")
    if w.lam <= 0:
        codes.append("nonpositive_outsource")
    if w.hire <= 0:
        codes.append("nonpositive_hire")
    if w.salary < 0:
        codes.append("negative_salary")
    if not w.salary < w.lam:
        codes.append(SALARY_NOT_BELOW_OUTSOURCE)
    if not w.lam < w.hire + w.salary:
        codes.append(OUTSOURCE_NOT_BELOW_HIRE_PLUS_SALARY)
    if not w.salary <= w.hire:
        codes.append(SALARY_EXCEEDS_HIRE)
    return codes


def validate_marketplace(market: Marketplace, force: bool = False) -> ValidationReport:
    report = ValidationReport(force=force)
    if market.n == 0:
        report.errors.append("empty worker list")
    if market.m == 0:
        report.errors.append("empty skill universe")
    for w in market.workers:
        codes = check_worker(w)
        if codes:
            report.violations[w.id] = codes
    report.empty_pools = [s for s, pool in enumerate(market.pools) if not pool]
    return report


def cover_check(hired: Iterable[int], outsourced: Iterable[int], task: Task, market: Marketplace) -> bool:
    team = market.union_skills(hired) | market.union_skills(outsourced)
    return task & ~team == 0


# --- hired team bookkeeping -------------------------------------------------


class Team:
    """Set of hired workers with per-skill counts, so coverage queries are O(|task|)."""

    __slots__ = ("market", "members", "counts", "salary")

    def __init__(self, market: Marketplace):
        self.market = market
        self.members: set[int] = set()
        self.counts = [0] * market.m
        self.salary = 0

    def add(self, r: int) -> None:
        if r in self.members:
            return
        self.members.add(r)
        self.salary += self.market.workers[r].salary
        counts = self.counts
        for s in iter_bits(self.market.masks[r]):
            counts[s] += 1

    def remove(self, r: int) -> None:
        self.members.remove(r)
        self.salary -= self.market.workers[r].salary
        counts = self.counts
        for s in iter_bits(self.market.masks[r]):
            counts[s] -= 1

    def covered(self, task: Task) -> int:
        """The part of ``task`` already covered by hired workers."""
        counts = self.counts
        out = 0
        for s in iter_bits(task):
            if counts[s]:
                out |= 1 << s
        return out

    def __contains__(self, r: int) -> bool:
        return r in self.members

    def __len__(self) -> int:
        return len(self.members)


# --- outcomes and ledgers ---------------------------------------------------


@dataclass(frozen=True, slots=True)
class StepCost:
    outsourcing: int = 0
    hiring: int = 0
    salary: int = 0

    @property
    def total(self) -> int:
        return self.outsourcing + self.hiring + self.salary


@dataclass(frozen=True, slots=True)
class StepOutcome:
    """What a policy did in period ``t`` (1-based).

    ``hired`` are the workers hired this period, ``fired`` those let go at the
    start of it, ``outsourced`` the non-hired workers paid for this task.
    ``team`` is the full hired set while the task runs (after hires/fires); it
    is only filled in when the policy keeps its outcomes.
    """

    t: int
    outsourced: frozenset[int]
    hired: frozenset[int]
    fired: frozenset[int]
    cost: StepCost
    team: frozenset[int] = frozenset()


class CostLedger:
    """Cumulative hiring/salary/outsourcing totals plus per-period trajectories."""

    def __init__(self) -> None:
        self.outsourcing = 0
        self.hiring = 0
        self.salary = 0
        self.trajectory: list[int] = []
        self.outsourcing_trajectory: list[int] = []
        self.hiring_trajectory: list[int] = []
        self.salary_trajectory: list[int] = []

    @property
    def total(self) -> int:
        return self.outsourcing + self.hiring + self.salary

    def record(self, cost: StepCost) -> None:
        self.outsourcing += cost.outsourcing
        self.hiring += cost.hiring
        self.salary += cost.salary
        self.trajectory.append(self.total)
        self.outsourcing_trajectory.append(self.outsourcing)
        self.hiring_trajectory.append(self.hiring)
        self.salary_trajectory.append(self.salary)

    def __len__(self) -> int:
        return len(self.trajectory)

    def __repr__(self) -> str:
        return (
            f"CostLedger(total={format_cents(self.total)}, outsourcing={format_cents(self.outsourcing)}, "
            f"hiring={format_cents(self.hiring)}, salary={format_cents(self.salary)}, T={len(self)})"
        )

    @classmethod
    def replay(cls, outcomes: Iterable[StepOutcome]) -> "CostLedger":
        ledger = cls()
        for o in outcomes:
            ledger.record(o.cost)
        return ledger


class Policy:
    """Base class for online policies.

    Subclasses implement :meth:`_step`, returning ``(outsourced, hired, fired,
    salary_payers)`` for the current period. The base class prices the decision,
    checks coverage and records it in the ledger.
    """

    name = "policy"
    check_coverage = True

    def __init__(self, market: Marketplace):
        self.market = market
        self.keep_outcomes = False
        self.reset()

    def reset(self) -> None:
        self.t = 0
        self.team = Team(self.market)
        self._ledger = CostLedger()
        self.outcomes: list[StepOutcome] = []

    def ledger(self) -> CostLedger:
        return self._ledger

    @property
    def hired(self) -> frozenset[int]:
        return frozenset(self.team.members)

    def _step(self, task: Task) -> tuple[Iterable[int], Iterable[int], Iterable[int], Iterable[int]]:
        raise NotImplementedError

    def charge_salary(self) -> bool:
        return True

    def step(self, task: Task) -> StepOutcome:
        self.t += 1
        outsourced, hired, fired, _ = self._step(task)
        market = self.market
        outsourced = frozenset(outsourced)
        hired = frozenset(hired)
        fired = frozenset(fired)
        if self.check_coverage:
            skills = market.union_skills(outsourced)
            if task & ~skills and task & ~(self.team.covered(task) | skills):
                raise CoverageError(f"{self.name}: task at t={self.t} not covered")
        workers = market.workers
        cost = StepCost(
            outsourcing=sum(workers[r].lam for r in outsourced),
            hiring=sum(workers[r].hire for r in hired),
            salary=self.team.salary if self.charge_salary() else 0,
        )
        team = frozenset(self.team.members) if self.keep_outcomes else frozenset()
        outcome = StepOutcome(self.t, outsourced, hired, fired, cost, team)
        self._ledger.record(cost)
        if self.keep_outcomes:
            self.outcomes.append(outcome)
        return outcome

    def run(self, stream: Iterable[Task]) -> CostLedger:
        for task in stream:
            self.step(task)
        return self._ledger
