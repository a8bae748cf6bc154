"""Marketplace ingestion, synthetic marketplaces and coherent task streams.

File formats (tab separated, ``#`` comments and blank lines ignored)::

    marketplace   worker_id <TAB> lambda <TAB> C <TAB> sigma <TAB> skill,skill,...
    task pool     task_id <TAB> skill,skill,...
    stream        t <TAB> skill,skill,...

Fees are decimal currency amounts with at most two decimals.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

from .model import (
    Marketplace,
    Task,
    Worker,
    format_cents,
    iter_bits,
    to_cents,
    validate_marketplace,
)


class ParseError(ValueError):
    def __init__(self, path, line: int, msg: str):
        super().__init__(f"{path}:{line}: {msg}")
        self.line = line


# --- distributions ------------------------------------------------------------

_DIST_RE = re.compile(r"^\s*(\w+)\s*\(([^)]*)\)\s*$")


@dataclass(frozen=True)
class Dist:
    """Small distribution description: ``constant(v)``, ``uniform(a,b)``, ``poisson(mean)``, ``zipf(s)``.

    ``poisson(mean)`` is shifted to be at least 1 (``1 + Poisson(mean - 1)``),
    which is what skill counts need. ``zipf(s)`` is only meaningful as a
    popularity law over ranks, see :meth:`weights`.
    """

    kind: str
    params: tuple[float, ...]

    @classmethod
    def parse(cls, text: "str | Dist | float | int") -> "Dist":
        if isinstance(text, Dist):
            return text
        if isinstance(text, (int, float)):
            return cls("constant", (float(text),))
        match = _DIST_RE.match(text)
        if not match:
            return cls("constant", (float(text),))
        kind = match.group(1).lower()
        params = tuple(float(p) for p in match.group(2).split(",") if p.strip())
        arity = {"constant": 1, "uniform": 2, "poisson": 1, "zipf": 1}
        if kind not in arity or len(params) != arity[kind]:
            raise ValueError(f"bad distribution {text!r}")
        return cls(kind, params)

    def __str__(self) -> str:
        return f"{self.kind}({','.join(f'{p:g}' for p in self.params)})"

    @property
    def mean(self) -> float:
        if self.kind == "uniform":
            return (self.params[0] + self.params[1]) / 2
        return self.params[0]

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "constant":
            return np.full(size, self.params[0])
        if self.kind == "uniform":
            return rng.uniform(self.params[0], self.params[1], size)
        if self.kind == "poisson":
            return 1 + rng.poisson(max(self.params[0] - 1.0, 0.0), size)
        raise ValueError(f"{self.kind} cannot be sampled directly")

    def weights(self, k: int) -> np.ndarray:
        """Normalized popularity over ``k`` ranks (uniform unless zipf)."""
        if self.kind == "zipf":
            w = 1.0 / np.arange(1, k + 1) ** self.params[0]
        else:
            w = np.ones(k)
        return w / w.sum()


# --- marketplace generation ----------------------------------------------------


@dataclass
class MarketplaceConfig:
    n: int
    m: int
    skills_per_worker: float | str | Dist = "poisson(1.45)"
    skill_popularity: str | Dist = "zipf(1.0)"
    lambda_dist: str | Dist = "uniform(10,50)"
    hiring_factor: float = 4.0
    salary_ratio: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.skills_per_worker, (int, float)):
            self.skills_per_worker = Dist("poisson", (float(self.skills_per_worker),))
        self.skills_per_worker = Dist.parse(self.skills_per_worker)
        self.skill_popularity = Dist.parse(self.skill_popularity)
        self.lambda_dist = Dist.parse(self.lambda_dist)
        if self.n < 1 or self.m < 1:
            raise ValueError("need n >= 1 and m >= 1")
        if self.hiring_factor < 1:
            raise ValueError("hiring_factor must be >= 1")
        if self.salary_ratio < 0 or self.salary_ratio > 0.25:
            raise ValueError("salary_ratio must lie in [0, 1/4]")


#: Marketplace-scale presets: workers, skills, mean skills per worker, distinct tasks, mean skills
#: per task. The popularity exponent is tuned so the mean pairwise Jaccard similarity of the task
#: pool lands near the published one (0.045 Freelancer, 0.018 Guru).
PRESETS = {
    "freelancer": dict(
        n=1211, m=175, skills_per_worker=1.45, tasks=600, skills_per_task=2.86, exclude=0.0, popularity="zipf(0.85)"
    ),
    "guru": dict(
        n=6119, m=1639, skills_per_worker=13.07, tasks=2939, skills_per_task=5.24, exclude=0.0, popularity="zipf(0.85)"
    ),
    "upwork": dict(
        n=18000, m=2335, skills_per_worker=6.29, tasks=50000, skills_per_task=41.88, exclude=0.1, popularity="zipf(0.85)"
    ),
}


def preset_config(name: str, **overrides) -> MarketplaceConfig:
    p = PRESETS[name]
    kw = dict(n=p["n"], m=p["m"], skills_per_worker=p["skills_per_worker"], skill_popularity=p["popularity"])
    kw.update(overrides)
    return MarketplaceConfig(**kw)


def price(market: Marketplace, hiring_factor: float, salary_ratio: float) -> Marketplace:
    """Reprice a marketplace: C = alpha * lambda, sigma = beta * lambda (rounded to cents)."""
    lam = market.lam
    hire = [max(1, round(hiring_factor * x)) for x in lam]
    salary = [round(salary_ratio * x) for x in lam]
    return market.with_costs(lam, hire, salary)


def generate_marketplace(cfg: MarketplaceConfig, rng: np.random.Generator | None = None) -> Marketplace:
    """Workers with popularity-skewed skill sets and fees derived from lambda.

    Skill counts follow ``cfg.skills_per_worker``; skills are drawn without
    replacement with probability following ``cfg.skill_popularity`` over a
    random ranking of the skills. Skills nobody drew are then handed to random
    workers so every pool is non-empty.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    n, m = cfg.n, cfg.m
    counts = np.clip(np.rint(cfg.skills_per_worker.sample(rng, n)).astype(int), 1, m)
    ranking = rng.permutation(m)
    popularity = np.empty(m)
    popularity[ranking] = cfg.skill_popularity.weights(m)
    masks = []
    for c in counts:
        picks = rng.choice(m, size=int(c), replace=False, p=popularity)
        mask = 0
        for s in picks.tolist():
            mask |= 1 << s
        masks.append(mask)
    held = 0
    for mask in masks:
        held |= mask
    for s in range(m):
        if not held >> s & 1:
            r = int(rng.integers(n))
            masks[r] |= 1 << s
    lam_units = cfg.lambda_dist.sample(rng, n)
    lam = [max(1, int(round(x * 100))) for x in lam_units]
    workers = [Worker(i, masks[i], lam[i], 1, 0) for i in range(n)]
    base = Marketplace(workers, m, [f"s{s}" for s in range(m)], [f"w{i}" for i in range(n)])
    return price(base, cfg.hiring_factor, cfg.salary_ratio)


# --- task pools ---------------------------------------------------------------


@dataclass
class TaskPool:
    """Distinct tasks plus the marketplace that is meant to serve them."""

    tasks: tuple[Task, ...]
    market: Marketplace
    _neighbors: list[np.ndarray] | None = field(default=None, repr=False)
    _floor: float | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.tasks)

    def mean_skills(self) -> float:
        return sum(t.bit_count() for t in self.tasks) / max(len(self.tasks), 1)

    def neighbors(self, floor: float = 0.5) -> list[np.ndarray]:
        """For every task, the other pool tasks with Jaccard similarity >= ``floor``."""
        if self._neighbors is None or self._floor != floor:
            self._neighbors = similarity_neighbors(self.tasks, self.market.m, floor)
            self._floor = floor
        return self._neighbors


def jaccard(a: int, b: int) -> float:
    union = (a | b).bit_count()
    if union == 0:
        return 1.0
    return (a & b).bit_count() / union


def _incidence(tasks: Sequence[Task], m: int) -> sparse.csr_matrix:
    rows, cols = [], []
    for i, t in enumerate(tasks):
        for s in iter_bits(t):
            rows.append(i)
            cols.append(s)
    data = np.ones(len(rows), dtype=np.int32)
    return sparse.csr_matrix((data, (rows, cols)), shape=(len(tasks), m))


def similarity_neighbors(tasks: Sequence[Task], m: int, floor: float = 0.5) -> list[np.ndarray]:
    """Pairs sharing a skill come from the sparse product ``A A^T``; only those can reach ``floor > 0``."""
    if not tasks:
        return []
    a = _incidence(tasks, m)
    sizes = np.asarray(a.sum(axis=1)).ravel()
    inter = (a @ a.T).tocoo()
    i, j, v = inter.row, inter.col, inter.data.astype(float)
    union = sizes[i] + sizes[j] - v
    keep = (i != j) & (v >= floor * union - 1e-12)
    i, j = i[keep], j[keep]
    order = np.lexsort((j, i))
    i, j = i[order], j[order]
    bounds = np.searchsorted(i, np.arange(len(tasks) + 1))
    return [j[bounds[k]:bounds[k + 1]] for k in range(len(tasks))]


def _safe_exclusion(market: Marketplace, fraction: float, rng: np.random.Generator) -> list[int]:
    """Pick about ``fraction`` of the workers whose removal leaves every skill held by someone."""
    target = int(round(fraction * market.n))
    left = [len(p) for p in market.pools]
    out = []
    for r in rng.permutation(market.n).tolist():
        if len(out) >= target:
            break
        skills = list(iter_bits(market.masks[r]))
        if all(left[s] > 1 for s in skills):
            for s in skills:
                left[s] -= 1
            out.append(r)
    return sorted(out)


def _subset(market: Marketplace, ids: Sequence[int]) -> Marketplace:
    workers = [Worker(i, market.masks[r], market.lam[r], market.hire[r], market.salary[r]) for i, r in enumerate(ids)]
    names = [market.worker_names[r] for r in ids] if market.worker_names else None
    return Marketplace(workers, market.m, market.skill_names, names)


def generate_task_pool(
    market: Marketplace,
    count: int,
    skills_per_task: float | None = None,
    rng: np.random.Generator | None = None,
    subset_size: int | None = None,
    exclude_fraction: float = 0.0,
    max_draws: int | None = None,
) -> TaskPool:
    """Tasks built as the union of the skills of a few sampled workers.

    With ``subset_size`` the number of workers per task is fixed. Otherwise the
    size is chosen to hit ``skills_per_task`` on average: a mix of the two
    subset sizes whose expected union brackets the target, estimated from
    samples. When one worker already holds more skills than the target, a task
    is a random subset of a single worker's skills instead.

    ``exclude_fraction`` removes that share of workers from the serving
    marketplace and draws tasks only from them; removal never orphans a skill.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    if exclude_fraction > 0:
        excluded = _safe_exclusion(market, exclude_fraction, rng)
        keep = sorted(set(range(market.n)) - set(excluded))
        source_masks = [market.masks[r] for r in excluded]
        serving = _subset(market, keep)
    else:
        source_masks = list(market.masks)
        serving = market
    if not source_masks:
        raise ValueError("no workers to draw tasks from")
    src = len(source_masks)

    def union_of(k: int) -> int:
        mask = 0
        for r in rng.choice(src, size=min(k, src), replace=False).tolist():
            mask |= source_masks[r]
        return mask

    def thin(mask: int, size: int) -> int:
        bits = list(iter_bits(mask))
        if size >= len(bits):
            return mask
        out = 0
        for s in rng.choice(bits, size=size, replace=False).tolist():
            out |= 1 << s
        return out

    mode = "fixed"
    k_lo = k_hi = subset_size or 1
    q = 0.0
    if subset_size is None:
        if skills_per_task is None:
            raise ValueError("give skills_per_task or subset_size")
        mean1 = float(np.mean([source_masks[r].bit_count() for r in range(src)]))
        if mean1 >= skills_per_task:
            mode = "thin"
        else:
            prev_k, prev_u = 1, mean1
            k = 1
            while True:
                k += 1
                u = float(np.mean([union_of(k).bit_count() for _ in range(300)]))
                if u >= skills_per_task or k >= src:
                    break
                prev_k, prev_u = k, u
            k_lo, k_hi = prev_k, k
            q = 0.0 if u <= prev_u else min(1.0, max(0.0, (skills_per_task - prev_u) / (u - prev_u)))
            mode = "mix"

    seen: dict[int, None] = {}
    draws = max_draws if max_draws is not None else 50 * count + 1000
    for _ in range(draws):
        if len(seen) >= count:
            break
        if mode == "thin":
            base = source_masks[int(rng.integers(src))]
            size = int(1 + rng.poisson(max(skills_per_task - 1.0, 0.0)))
            task = thin(base, max(1, size))
        elif mode == "mix":
            task = union_of(k_hi if rng.random() < q else k_lo)
        else:
            task = union_of(k_lo)
        if task:
            seen.setdefault(task, None)
    return TaskPool(tuple(seen), serving)


# --- streams ------------------------------------------------------------------


@dataclass(frozen=True)
class StreamConfig:
    p: float = 100.0
    length: int = 10_000
    similarity_floor: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("coherence parameter p must be >= 1")
        if self.length < 1:
            raise ValueError("stream length must be >= 1")


@dataclass
class TaskStream:
    """Generated tasks plus, per period, the pool index of the pivot and whether a new pivot was drawn."""

    tasks: list[Task]
    pivots: np.ndarray
    switches: np.ndarray
    pool_index: np.ndarray

    def __len__(self) -> int:
        return len(self.tasks)

    def __iter__(self):
        return iter(self.tasks)

    def run_lengths(self) -> np.ndarray:
        starts = np.flatnonzero(self.switches)
        return np.diff(np.append(starts, len(self.tasks)))


def generate_stream(pool: TaskPool, cfg: StreamConfig, rng: np.random.Generator | None = None) -> TaskStream:
    """Coherent stream: with probability 1/p draw a fresh pivot, else a task similar to the pivot.

    A pivot without similar tasks is re-emitted itself. Three uniforms are drawn
    per period up front, so a longer stream extends a shorter one with the same seed.
    """
    if not len(pool):
        raise ValueError("empty task pool")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    size = len(pool)
    nbrs = pool.neighbors(cfg.similarity_floor)
    u = rng.random((cfg.length, 3))
    switch_p = 1.0 / cfg.p
    tasks: list[Task] = []
    pivots = np.empty(cfg.length, dtype=np.int64)
    switches = np.zeros(cfg.length, dtype=bool)
    index = np.empty(cfg.length, dtype=np.int64)
    pivot = -1
    for t in range(cfg.length):
        if t == 0 or u[t, 0] < switch_p:
            pivot = min(int(u[t, 1] * size), size - 1)
            switches[t] = True
            pick = pivot
        else:
            nb = nbrs[pivot]
            pick = pivot if len(nb) == 0 else int(nb[min(int(u[t, 2] * len(nb)), len(nb) - 1)])
        pivots[t] = pivot
        index[t] = pick
        tasks.append(pool.tasks[pick])
    return TaskStream(tasks, pivots, switches, index)


# --- files --------------------------------------------------------------------


def _rows(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            yield lineno, line.split("\t")


def _skill_list(path, lineno: int, text: str) -> list[str]:
    skills = [s.strip() for s in text.split(",") if s.strip()]
    if not skills:
        raise ParseError(path, lineno, "empty skill list")
    return skills


def load_marketplace(path, force: bool = False) -> Marketplace:
    """Parse a marketplace file, intern skills in order of first appearance and validate."""
    names: list[str] = []
    parsed = []
    seen_ids: set[str] = set()
    skill_ids: dict[str, int] = {}
    for lineno, cols in _rows(path):
        if len(cols) != 5:
            raise ParseError(path, lineno, f"expected 5 tab-separated fields, got {len(cols)}")
        wid = cols[0].strip()
        if wid in seen_ids:
            raise ParseError(path, lineno, f"duplicate worker id {wid!r}")
        seen_ids.add(wid)
        try:
            lam, hire, sal = (to_cents(c) for c in cols[1:4])
        except ValueError as exc:
            raise ParseError(path, lineno, str(exc)) from None
        mask = 0
        for s in _skill_list(path, lineno, cols[4]):
            mask |= 1 << skill_ids.setdefault(s, len(skill_ids))
        names.append(wid)
        parsed.append((mask, lam, hire, sal))
    workers = [Worker(i, *row) for i, row in enumerate(parsed)]
    skill_names = sorted(skill_ids, key=skill_ids.get)
    market = Marketplace(workers, len(skill_names), skill_names, names)
    validate_marketplace(market, force=force).raise_if_rejected()
    return market


def save_marketplace(market: Marketplace, path) -> None:
    skill = market.skill_names or [f"s{s}" for s in range(market.m)]
    names = market.worker_names or [f"w{r}" for r in range(market.n)]
    with open(path, "w", encoding="utf-8") as fh:
        for w in market.workers:
            skills = ",".join(skill[s] for s in iter_bits(w.skills))
            fh.write(f"{names[w.id]}\t{format_cents(w.lam)}\t{format_cents(w.hire)}\t{format_cents(w.salary)}\t{skills}\n")


def _skill_index(market: Marketplace) -> dict[str, int]:
    names = market.skill_names or [f"s{s}" for s in range(market.m)]
    return {name: i for i, name in enumerate(names)}


def _load_tasks(path, market: Marketplace, what: str) -> list[tuple[str, Task]]:
    index = _skill_index(market)
    out = []
    for lineno, cols in _rows(path):
        if len(cols) != 2:
            raise ParseError(path, lineno, f"expected {what}<TAB>skills")
        mask = 0
        for s in _skill_list(path, lineno, cols[1]):
            if s not in index:
                raise ParseError(path, lineno, f"skill {s!r} is held by no worker")
            mask |= 1 << index[s]
        out.append((cols[0].strip(), mask))
    return out


def load_task_pool(path, market: Marketplace) -> TaskPool:
    seen: dict[str, None] = {}
    tasks: dict[Task, None] = {}
    for tid, mask in _load_tasks(path, market, "task_id"):
        if tid in seen:
            raise ValueError(f"{path}: duplicate task id {tid!r}")
        seen[tid] = None
        tasks.setdefault(mask, None)
    return TaskPool(tuple(tasks), market)


def save_task_pool(pool: TaskPool, path) -> None:
    _write_tasks(pool.tasks, pool.market, path, lambda i: f"task{i}")


def load_stream(path, market: Marketplace) -> list[Task]:
    return [mask for _, mask in _load_tasks(path, market, "t")]


def save_stream(tasks: Iterable[Task], market: Marketplace, path) -> None:
    _write_tasks(list(tasks), market, path, lambda i: str(i + 1))


def _write_tasks(tasks: Sequence[Task], market: Marketplace, path, label) -> None:
    names = market.skill_names or [f"s{s}" for s in range(market.m)]
    with open(path, "w", encoding="utf-8") as fh:
        for i, t in enumerate(tasks):
            fh.write(f"{label(i)}\t{','.join(names[s] for s in iter_bits(t))}\n")


def mean_pivot_run(stream: TaskStream) -> float:
    runs = stream.run_lengths()
    return float(runs.mean()) if len(runs) else math.nan
