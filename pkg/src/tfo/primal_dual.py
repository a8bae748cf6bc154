"""Online primal-dual policies: LumpSum (no salaries) and TFO (via fixed-length hiring intervals).

Both keep a fractional hire level ``x[r]`` per worker that persists across
tasks and a fractional outsource level ``f[r]`` that lives for one task. For
every skill of the task not covered by the hired team, the levels of the
skill's pool are raised multiplicatively until the pool's covering constraint
reaches 1; the increase of the hire levels and the outsource levels are then
rounded into integral hire/outsource decisions, and a deterministic fallback
covers whatever the rounding missed.

Fees enter the fractional updates in currency units (cents / 100): the update
``x <- x (1 + 1/h) + 1/(n h)`` is not scale free.

With ``lazy=True`` the rounded marks are thinned to a greedy cover of the
task, and hire marks left out are kept as virtual hires that a later task
needing their skills can claim (see :meth:`PrimalDual._lazy_select`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import CENTS, Marketplace, Policy, Task, iter_bits
from .setcover import greedy_cover

LUMPSUM = "lumpsum"
TFO = "tfo"


@dataclass(frozen=True)
class PDParams:
    mode: str = TFO
    hat_factor: float = 3.0  # TFO hire weight is hat_factor * C
    seed: int = 0
    track_dual: bool = True
    lazy: bool = False

    def __post_init__(self):
        if self.mode not in (LUMPSUM, TFO):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.hat_factor <= 0:
            raise ValueError("hat_factor must be positive")


def _clamped_ceil(value: float) -> int:
    # guard against ln() round-off pushing an exact integer just above itself
    return max(1, math.ceil(value - 1e-12))


def rho1(m: int, c_max: float) -> int:
    """Rounding repetitions for LumpSum: ceil(ln m + ln C_max), at least 1."""
    if m < 1:
        raise ValueError("rho1 needs m >= 1")
    if c_max <= 0:
        raise ValueError("rho1 needs a positive C_max")
    return _clamped_ceil(math.log(m) + math.log(c_max))


def rho2(m: int, lam_max: float, T: int) -> int:
    """Rounding repetitions for TFO at period T: ceil(ln m + ln lambda_max + 2 ln T), at least 1."""
    if m < 1 or T < 1 or lam_max <= 0:
        raise ValueError("rho2 needs m >= 1, T >= 1, lambda_max > 0")
    return _clamped_ceil(math.log(m) + math.log(lam_max) + 2 * math.log(T))


class FractionalState:
    """Fractional hire levels ``x`` (persistent) and outsource levels ``f`` (per task)."""

    def __init__(self, n: int):
        self.n = n
        self.x = np.zeros(n)
        self.f = np.zeros(n)
        self.dual_sum = 0  # one unit per while-iteration per skill
        self._touched: np.ndarray | None = None

    def new_task(self, touched: np.ndarray | None = None) -> None:
        if self._touched is not None:
            self.f[self._touched] = 0.0
        self._touched = touched


def raise_until_covered(state: FractionalState, pool: np.ndarray, hire_w: np.ndarray, out_w: np.ndarray) -> int:
    """Run the multiplicative raise for one skill; returns the number of iterations.

    One iteration maps ``x -> x(1+1/h) + 1/(nh)`` and ``f -> f(1+1/lam) + 1/(n lam)``
    for every pool member. The map is affine with fixed point ``-1/n``, so after
    ``k`` iterations ``x_k = (x_0 + 1/n)(1+1/h)^k - 1/n``. The smallest ``k`` that
    lifts the pool sum to 1 is found from this closed form instead of looping.
    """
    x0 = state.x[pool]
    f0 = state.f[pool]
    if x0.sum() + f0.sum() >= 1.0:
        return 0
    inv_n = 1.0 / state.n
    coef = np.concatenate([x0 + inv_n, f0 + inv_n])
    rate = np.log1p(1.0 / np.concatenate([hire_w[pool], out_w[pool]]))
    target = 1.0 + 2 * len(pool) * inv_n

    def total(k: float) -> float:
        return float(coef @ np.exp(k * rate))

    # Every term alone reaching the target bounds the answer from above.
    k = float(np.min(np.log(target / coef) / rate))
    # Newton on log(total) (convex in k) from the right converges monotonically.
    for _ in range(50):
        terms = coef * np.exp(k * rate)
        s = terms.sum()
        g = math.log(s / target)
        if g <= 1e-13:
            break
        step = g / float(terms @ rate / s)
        k -= step
        if step < 1e-9:
            break
    k_int = max(1, math.ceil(k - 1e-9))
    while total(k_int) < target:
        k_int += 1
    while k_int > 1 and total(k_int - 1) >= target:
        k_int -= 1

    half = len(pool)
    grown = coef * np.exp(k_int * rate) - inv_n
    state.x[pool] = np.maximum(grown[:half], x0)
    state.f[pool] = np.maximum(grown[half:], f0)
    state.dual_sum += k_int
    return k_int


def randomized_round(
    deltas: np.ndarray,
    f_tilde: np.ndarray,
    candidates: np.ndarray,
    rho: int,
    rng: np.random.Generator,
) -> tuple[frozenset[int], frozenset[int]]:
    """Round fractional increments into hire / outsource marks.

    Each of ``rho`` repetitions marks candidate ``r`` hired with probability
    ``min(deltas[r], 1)`` and, independently, outsourced with probability
    ``min(f_tilde[r], 1)``. Only whether a worker was ever marked matters, so the
    ``rho`` trials are drawn as one Bernoulli with success ``1 - (1-p)^rho``.
    A worker marked for both is hired only.
    """
    if len(candidates) == 0:
        return frozenset(), frozenset()
    p_hire = 1.0 - (1.0 - np.clip(deltas, 0.0, 1.0)) ** rho
    p_out = 1.0 - (1.0 - np.clip(f_tilde, 0.0, 1.0)) ** rho
    u = rng.random((2, len(candidates)))
    hired = frozenset(candidates[u[0] < p_hire].tolist())
    outsourced = frozenset(candidates[u[1] < p_out].tolist()) - hired
    return hired, outsourced


class DualTracker:
    """Running dual objective and the worst violation of the dual constraints.

    Hire rows sum a worker's dual units over a window of ``eta`` periods
    (unbounded when ``eta`` is None or negative), against ``hire_rhs``; outsource
    rows compare one task's units against ``out_rhs``. Dividing the dual sum by
    the worst violation (when > 1) gives a feasible dual, hence a lower bound on
    the LP, and ``divisor`` converts that into a bound on the integral optimum.
    """

    def __init__(self, hire_rhs: np.ndarray, out_rhs: np.ndarray, eta: np.ndarray | None = None, divisor: float = 1.0):
        self.hire_rhs = hire_rhs
        self.out_rhs = out_rhs
        self.eta = eta
        self.divisor = divisor
        self.window = np.zeros(len(hire_rhs))
        self.expiry: dict[int, list[tuple[np.ndarray, np.ndarray]]] = {}
        self.dual_sum = 0
        self.violation = 0.0

    def advance(self, t: int) -> None:
        for idx, amt in self.expiry.pop(t, ()):
            self.window[idx] -= amt

    def add(self, t: int, idx: np.ndarray, amt: np.ndarray) -> None:
        """Record ``amt[i]`` dual units against worker ``idx[i]`` for period ``t`` (idx unique)."""
        self.window[idx] += amt
        worst = max(float((self.window[idx] / self.hire_rhs[idx]).max()), float((amt / self.out_rhs[idx]).max()))
        if worst > self.violation:
            self.violation = worst
        if self.eta is not None:
            eta = self.eta[idx]
            finite = eta > 0
            if finite.any():
                ends = t + eta[finite]
                fidx, famt = idx[finite], amt[finite]
                for end in np.unique(ends).tolist():
                    sel = ends == end
                    self.expiry.setdefault(end, []).append((fidx[sel], famt[sel]))

    def add_sum(self, units: int) -> None:
        self.dual_sum += units

    def bound(self) -> float:
        """Certified lower bound on the offline optimum, in currency units."""
        return self.dual_sum / max(self.violation, 1.0) / self.divisor


@dataclass(frozen=True)
class Interval:
    worker: int
    start: int
    end: int  # exclusive

    @property
    def length(self) -> int:
        return self.end - self.start


@dataclass
class IntervalRegistry:
    """Hiring intervals: at most one active per worker, committed on expiry or at stream end."""

    active: dict[int, tuple[int, int | None]] = field(default_factory=dict)
    history: list[Interval] = field(default_factory=list)
    _by_expiry: dict[int, list[int]] = field(default_factory=dict)

    def open(self, r: int, t: int, eta: int | None) -> None:
        if r in self.active:
            raise ValueError(f"worker {r} already has an active interval")
        expiry = None if eta is None else t + eta
        self.active[r] = (t, expiry)
        if expiry is not None:
            self._by_expiry.setdefault(expiry, []).append(r)

    def expire(self, t: int) -> list[int]:
        """Close and return the workers whose interval ends right before period ``t``."""
        out = []
        for r in self._by_expiry.pop(t, ()):
            start, _ = self.active.pop(r)
            self.history.append(Interval(r, start, t))
            out.append(r)
        return out

    def finish(self, last_period: int) -> None:
        """Truncate every still-active interval at the end of the stream."""
        for r, (start, _) in sorted(self.active.items()):
            self.history.append(Interval(r, start, last_period + 1))
        self.active.clear()
        self._by_expiry.clear()


def alt_to_tfo(registry: IntervalRegistry) -> dict[int, list[int]]:
    """Per-period hired indicator: worker -> sorted periods t with g_rt = 1."""
    g: dict[int, set[int]] = {}
    for iv in registry.history:
        g.setdefault(iv.worker, set()).update(range(iv.start, iv.end))
    return {r: sorted(ts) for r, ts in sorted(g.items())}


def interval_costs(registry: IntervalRegistry, market: Marketplace, hat_factor: float = 3.0) -> tuple[int, float]:
    """Hiring+salary cost of the committed intervals as TFO pays it (cents), and as the interval LP prices it."""
    tfo = 0
    alt = 0.0
    for iv in registry.history:
        tfo += market.hire[iv.worker] + iv.length * market.salary[iv.worker]
        alt += hat_factor * market.hire[iv.worker]
    return tfo, alt


def _eta_array(market: Marketplace) -> np.ndarray:
    eta = [w.eta() for w in market.workers]
    return np.array([-1 if e is None else e for e in eta], dtype=np.int64)


class PrimalDual(Policy):
    """Shared pipeline of LumpSum and TFO; ``params.mode`` picks the variant."""

    def __init__(
        self,
        market: Marketplace,
        seed: int = 0,
        hat_factor: float = 3.0,
        track_dual: bool = True,
        mode: str = TFO,
        lazy: bool = False,
    ):
        self.params = PDParams(mode=mode, hat_factor=hat_factor, seed=seed, track_dual=track_dual, lazy=lazy)
        n, m = market.n, market.m
        self._lam_w = market.lam_arr / CENTS
        if mode == LUMPSUM:
            self._hire_w = market.hire_arr / CENTS
            self._rho = rho1(m, max(1.0, float(self._hire_w.max())))
        else:
            self._hire_w = hat_factor * market.hire_arr / CENTS
            self._lam_max = float(self._lam_w.max())
        self._eta = _eta_array(market)
        self._n = n
        super().__init__(market)

    @property
    def mode(self) -> str:
        return self.params.mode

    def reset(self) -> None:
        super().reset()
        self.rng = np.random.Generator(np.random.PCG64(self.params.seed))
        self.state = FractionalState(self._n)
        self.registry = IntervalRegistry()
        self.virtual: dict[int, tuple[int, int | None]] = {}  # lazy mode: worker -> (start, expiry)
        self._virtual_expiry: dict[int, list[int]] = {}
        self.dual: DualTracker | None = None
        if self.params.track_dual:
            if self.mode == LUMPSUM:
                self.dual = DualTracker(self._hire_w, self._lam_w)
            else:
                self.dual = DualTracker(self._hire_w, self._lam_w, self._eta, self.params.hat_factor)

    def charge_salary(self) -> bool:
        return self.mode == TFO

    def rho(self, t: int) -> int:
        if self.mode == LUMPSUM:
            return self._rho
        return rho2(self.market.m, self._lam_max, t)

    def dual_bound(self) -> float:
        return self.dual.bound() if self.dual is not None else float("nan")

    def finish(self) -> None:
        """Commit still-open hiring intervals, truncated at the last period seen."""
        self.registry.finish(self.t)

    def _step(self, task: Task):
        t = self.t
        market = self.market
        team = self.team
        state = self.state
        fired: list[int] = []
        if self.mode == TFO:
            for r in self.registry.expire(t):
                team.remove(r)
                state.x[r] = 0.0
                fired.append(r)
        if self.dual is not None:
            self.dual.advance(t)

        covered = team.covered(task)
        free = task & ~covered
        auto: list[int] = []
        if self.params.lazy:
            for r in self._virtual_expiry.pop(t, ()):
                if r in self.virtual and self.virtual[r][1] == t:
                    del self.virtual[r]
            if free and self.virtual:
                auto = self._claim_virtual(free, t)
                covered = team.covered(task)
                free = task & ~covered
        if not free:
            state.new_task()
            return (), auto, [r for r in fired if r not in auto], ()
        skills = list(iter_bits(free))
        pools = [market.pool_arrays[s] for s in skills]
        cand = pools[0] if len(pools) == 1 else np.unique(np.concatenate(pools))
        x_before = state.x[cand]
        state.new_task(cand)
        iters = [raise_until_covered(state, pool, self._hire_w, self._lam_w) for pool in pools]
        if self.dual is not None:
            self._record_dual(t, pools, iters)
        deltas = state.x[cand] - x_before
        hired, outsourced = randomized_round(deltas, state.f[cand], cand, self.rho(t), self.rng)
        if self.params.lazy:
            hired, outsourced = self._lazy_select(free, hired, outsourced, t)

        reach = covered | market.union_skills(hired) | market.union_skills(outsourced)
        hired = set(hired)
        outsourced = set(outsourced)
        left = free & ~reach
        if left:
            # whatever rounding missed: a greedy cover by hiring (LumpSum) or outsourcing (TFO)
            if self.mode == LUMPSUM:
                hired.update(greedy_cover(left, None, market.hire_arr, market).selected)
            else:
                outsourced.update(greedy_cover(left, None, market.lam_arr, market).selected)
        for r in sorted(hired):
            self._open(r, t)
        hired.update(auto)
        # an expired worker hired again in the same period simply renews
        fired = [r for r in fired if r not in hired]
        return outsourced - hired, hired, fired, ()

    def _open(self, r: int, t: int) -> None:
        self.team.add(r)
        eta = int(self._eta[r]) if self.mode == TFO else -1
        self.registry.open(r, t, None if eta < 0 else eta)

    def _claim_virtual(self, free: int, t: int) -> list[int]:
        """Hire, per still-uncovered skill, the cheapest virtually hired worker holding it."""
        hire = self.market.hire
        masks = self.market.masks
        out = []
        for s in iter_bits(free):
            if not free >> s & 1:
                continue
            holders = [r for r in self.virtual if masks[r] >> s & 1]
            if holders:
                r = min(holders, key=lambda q: (hire[q], q))
                del self.virtual[r]
                self._open(r, t)
                out.append(r)
                free &= ~masks[r]
        return out

    def _lazy_select(self, free: int, hired, outsourced, t: int):
        """Keep a greedy cover of the marked workers (hire marks weighted by C, the rest by lambda).

        Hire marks left out of the cover become virtual hires for eta periods:
        a later period that needs one of their skills hires them, opening a
        fresh interval.
        """
        market = self.market
        marked = sorted(hired | outsourced)
        need = free & market.union_skills(marked)
        chosen: tuple[int, ...] = ()
        if need:
            hire, lam = market.hire, market.lam
            chosen = greedy_cover(need, marked, lambda r: hire[r] if r in hired else lam[r], market).selected
        keep_h = frozenset(r for r in chosen if r in hired)
        keep_o = frozenset(r for r in chosen if r not in hired)
        for r in hired - keep_h:
            eta = int(self._eta[r]) if self.mode == TFO else -1
            expiry = None if eta < 0 else t + eta
            self.virtual[r] = (t, expiry)
            if expiry is not None:
                self._virtual_expiry.setdefault(expiry, []).append(r)
        return keep_h, keep_o

    def _record_dual(self, t: int, pools: list[np.ndarray], iters: list[int]) -> None:
        live = [(p, k) for p, k in zip(pools, iters) if k]
        if not live:
            return
        self.dual.add_sum(sum(k for _, k in live))
        if len(live) == 1:
            pool, k = live[0]
            self.dual.add(t, pool, np.full(len(pool), float(k)))
            return
        idx = np.concatenate([p for p, _ in live])
        amt = np.concatenate([np.full(len(p), float(k)) for p, k in live])
        uniq, inv = np.unique(idx, return_inverse=True)
        self.dual.add(t, uniq, np.bincount(inv, weights=amt))


class LumpSum(PrimalDual):
    """Primal-dual algorithm for the salary-free setting: hires are permanent and salaries ignored."""

    name = "lumpsum"

    def __init__(self, market: Marketplace, seed: int = 0, track_dual: bool = True, lazy: bool = False):
        super().__init__(market, seed=seed, track_dual=track_dual, mode=LUMPSUM, lazy=lazy)


class TFOPolicy(PrimalDual):
    """Primal-dual algorithm with salaries: every hire lasts exactly eta_r periods."""

    name = "tfo"

    def __init__(
        self, market: Marketplace, seed: int = 0, hat_factor: float = 3.0, track_dual: bool = True, lazy: bool = False
    ):
        super().__init__(market, seed=seed, hat_factor=hat_factor, track_dual=track_dual, mode=TFO, lazy=lazy)


def dual_lower_bound(policy: PrimalDual) -> float:
    """Certified lower bound (currency units) on the offline optimum of the prefix seen so far."""
    if policy.dual is None:
        raise ValueError("dual tracking was disabled for this run")
    return policy.dual.bound()
