"""Experiment orchestration: sweeps over (p, salary ratio, hiring factor), many streams, many policies.

All policies at a sweep point consume the same streams. Streams depend only
on (master seed, p, stream index), so the salary and hiring sweeps are paired
comparisons as well. Every (sweep point, stream, policy) cell gets its own
derived seed; ``tfo-adaptive`` reuses the ``tfo`` seed so its TFO shadow
matches the standalone TFO run of the same cell.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .model import CENTS, Marketplace, validate_marketplace
from .policies import POLICIES, make_policy
from .seeding import derive_seed
from .workload import (
    PRESETS,
    MarketplaceConfig,
    StreamConfig,
    TaskPool,
    generate_marketplace,
    generate_stream,
    generate_task_pool,
    load_marketplace,
    load_task_pool,
    price,
)

log = logging.getLogger(__name__)

PRIMAL_DUAL = frozenset({"lumpsum", "tfo"})

#: Primal-dual settings used for experiments: lazy hiring and a cautious interval weight of 15 C.
PRACTICAL = {"lazy": True, "hat_factor": 15.0}

TRAJECTORY_COLUMNS = (
    "p", "salary_ratio", "hiring_factor", "t", "policy",
    "mean_cumulative_cost", "mean_outsourcing", "mean_hiring", "mean_salary", "dual_lower_bound",
)
HEATMAP_COLUMNS = ("p", "salary_ratio", "hiring_factor", "policy_a", "policy_b", "mean_ratio")
SUMMARY_COLUMNS = (
    "p", "salary_ratio", "hiring_factor", "policy", "stream", "stream_seed", "policy_seed",
    "total", "outsourcing", "hiring", "salary", "dual_lower_bound", "error",
)
RUNTIME_COLUMNS = ("p", "salary_ratio", "hiring_factor", "policy", "stream", "seconds")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """Everything a run needs; loadable from a JSON object with the same keys.

    ``market`` is either ``{"file": path}`` (costs taken from the file unless a
    hiring factor or salary ratio is swept) or a generator description: ``{"preset":
    name}`` and/or ``MarketplaceConfig`` fields. ``tasks`` is ``{"file": path}``
    or ``{"count", "skills_per_task", "subset_size", "exclude_fraction"}``;
    preset values fill in whatever is missing.
    """

    market: dict[str, Any] = field(default_factory=lambda: {"preset": "freelancer"})
    tasks: dict[str, Any] = field(default_factory=dict)
    policies: list[str] = field(default_factory=lambda: ["always-outsource", "tfo"])
    streams: int = 100
    length: int = 10_000
    p: list[float] = field(default_factory=lambda: [100.0])
    salary_ratio: list[float | None] = field(default_factory=lambda: [0.1])
    hiring_factor: list[float | None] = field(default_factory=lambda: [4.0])
    similarity_floor: float = 0.5
    seed: int = 0
    policy_params: dict[str, Any] = field(default_factory=lambda: dict(PRACTICAL))
    heatmap_pairs: list[list[str]] | None = None
    track_dual: bool = True
    out: str | None = None
    jobs: int = 1

    def __post_init__(self):
        for name in self.policies:
            if name not in POLICIES:
                raise ConfigError(f"unknown policy {name!r}")
        if self.streams < 1 or self.length < 1:
            raise ConfigError("streams and length must be >= 1")
        for key in ("p", "salary_ratio", "hiring_factor"):
            value = getattr(self, key)
            if not isinstance(value, list):
                setattr(self, key, [value])
        if any(p < 1 for p in self.p):
            raise ConfigError("p must be >= 1")
        if self.heatmap_pairs is None:
            base = "always-outsource"
            self.heatmap_pairs = [[a, base] for a in self.policies if a != base] if base in self.policies else []
        for a, b in self.heatmap_pairs:
            if a not in self.policies or b not in self.policies:
                raise ConfigError(f"heatmap pair {a}/{b} needs both policies in the run")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(extra))}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        cfg = cls.from_dict(data)
        base = Path(path).parent
        for section in (cfg.market, cfg.tasks):
            if "file" in section and not Path(section["file"]).is_absolute():
                section["file"] = str(base / section["file"])
        return cfg

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class SweepPoint:
    index: int
    p: float
    salary_ratio: float | None
    hiring_factor: float | None

    def key(self) -> tuple:
        return (self.p, _num(self.salary_ratio), _num(self.hiring_factor))


def _num(x):
    return "" if x is None else x


@dataclass
class PolicyResult:
    """Aggregates for one policy at one sweep point."""

    totals: list[int] = field(default_factory=list)  # per stream, cents; -1 when the cell failed
    parts: list[tuple[int, int, int]] = field(default_factory=list)
    duals: list[float] = field(default_factory=list)
    seeds: list[int] = field(default_factory=list)
    runtimes: list[float] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)
    sum_traj: np.ndarray | None = None  # (4, T): total, outsourcing, hiring, salary, summed over streams
    sum_dual: np.ndarray | None = None
    ok: int = 0

    def mean_trajectory(self) -> np.ndarray:
        return self.sum_traj / max(self.ok, 1) / CENTS

    def mean_dual(self) -> np.ndarray | None:
        if self.sum_dual is None:
            return None
        return self.sum_dual / max(self.ok, 1)

    def errors_by_stream(self, i: int) -> str:
        prefix = f"stream {i}:"
        return " | ".join(e[len(prefix):].strip() for e in self.errors if e.startswith(prefix))


@dataclass
class PointResult:
    point: SweepPoint
    stream_seeds: list[int]
    policies: dict[str, PolicyResult]


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    points: list[PointResult]

    def mean_total(self, policy: str, point: int = 0) -> float:
        res = self.points[point].policies[policy]
        good = [t for t in res.totals if t >= 0]
        return float(np.mean(good)) / CENTS if good else math.nan

    def mean_ratio(self, a: str, b: str, point: int = 0) -> float:
        ra, rb = self.points[point].policies[a], self.points[point].policies[b]
        ratios = [x / y for x, y in zip(ra.totals, rb.totals) if x >= 0 and y > 0]
        return float(np.mean(ratios)) if ratios else math.nan

    def errors(self) -> list[str]:
        return [e for pr in self.points for r in pr.policies.values() for e in r.errors]

    def tables(self) -> dict[str, list[tuple]]:
        """Rows of every CSV file, as typed Python values."""
        traj, heat, summ, runs = [], [], [], []
        for pr in self.points:
            key = pr.point.key()
            for name, res in pr.policies.items():
                if res.ok:
                    mt = res.mean_trajectory()
                    md = res.mean_dual()
                    for t in range(mt.shape[1]):
                        dual = float(md[t]) if md is not None else ""
                        traj.append(key + (t + 1, name, *(float(v) for v in mt[:, t]), dual))
                for i, total in enumerate(res.totals):
                    o, h, s = res.parts[i]
                    dual = res.duals[i]
                    summ.append(
                        key
                        + (name, i, pr.stream_seeds[i], res.seeds[i])
                        + ((total / CENTS, o / CENTS, h / CENTS, s / CENTS) if total >= 0 else ("", "", "", ""))
                        + ("" if math.isnan(dual) else dual, res.errors_by_stream(i))
                    )
                    runs.append(key + (name, i, res.runtimes[i]))
            for a, b in self.config.heatmap_pairs:
                heat.append(key + (a, b, self.mean_ratio(a, b, pr.point.index)))
        return {"trajectory": traj, "heatmap": heat, "summary": summ, "runtimes": runs}


# --- inputs -------------------------------------------------------------------


def build_inputs(cfg: ExperimentConfig) -> tuple[Marketplace, TaskPool]:
    """The base marketplace (before any sweep repricing) and the task pool."""
    source = dict(cfg.market)
    task_source = dict(cfg.tasks)
    if "file" in source:
        market = load_marketplace(source["file"], force=bool(source.get("force", False)))
        preset = {}
    else:
        preset = dict(PRESETS.get(source.pop("preset", None) or "", {}))
        gen = {
            "n": preset.get("n"),
            "m": preset.get("m"),
            "skills_per_worker": preset.get("skills_per_worker"),
        }
        if "popularity" in preset:
            gen["skill_popularity"] = preset["popularity"]
        gen = {k: v for k, v in gen.items() if v is not None}
        gen.update(source)
        gen.setdefault("seed", derive_seed(cfg.seed, "market") & 0xFFFFFFFF)
        try:
            mcfg = MarketplaceConfig(**gen)
        except TypeError as exc:
            raise ConfigError(f"market: {exc}") from None
        market = generate_marketplace(mcfg)
    if "file" in task_source:
        pool = load_task_pool(task_source["file"], market)
    else:
        count = task_source.get("count", preset.get("tasks"))
        if count is None:
            raise ConfigError("tasks: give a file, a count, or use a preset marketplace")
        subset = task_source.get("subset_size")
        per_task = task_source.get("skills_per_task", None if subset else preset.get("skills_per_task"))
        pool = generate_task_pool(
            market,
            int(count),
            per_task,
            np.random.default_rng(derive_seed(cfg.seed, "tasks")),
            subset_size=subset,
            exclude_fraction=float(task_source.get("exclude_fraction", preset.get("exclude", 0.0))),
        )
    if not len(pool):
        raise ConfigError("empty task pool")
    return pool.market, pool


def sweep_points(cfg: ExperimentConfig) -> list[SweepPoint]:
    pts = []
    for p in cfg.p:
        for beta in cfg.salary_ratio:
            for alpha in cfg.hiring_factor:
                pts.append(SweepPoint(len(pts), float(p), beta, alpha))
    return pts


def point_market(base: Marketplace, point: SweepPoint) -> Marketplace:
    if point.hiring_factor is None and point.salary_ratio is None:
        return base
    if point.hiring_factor is None or point.salary_ratio is None:
        raise ConfigError("sweep both hiring_factor and salary_ratio, or neither (null) to keep file costs")
    market = price(base, point.hiring_factor, point.salary_ratio)
    validate_marketplace(market).raise_if_rejected()
    return market


def policy_seed(master: int, point: SweepPoint, stream: int, policy: str) -> int:
    name = "tfo" if policy == "tfo-adaptive" else policy
    return derive_seed(master, "policy", point.index, stream, name)


def stream_seed(master: int, p: float, stream: int) -> int:
    return derive_seed(master, "stream", int(round(p * 1000)), stream)


# --- running ------------------------------------------------------------------


@dataclass
class CellResult:
    policy: str
    seed: int
    total: int
    parts: tuple[int, int, int]
    dual: float
    seconds: float
    traj: np.ndarray | None
    dual_traj: np.ndarray | None
    error: str = ""


def run_cell(market: Marketplace, tasks, policy: str, seed: int, params: dict, track_dual: bool) -> CellResult:
    """One policy on one stream. Errors are captured, not raised."""
    kw = dict(params)
    if policy in PRIMAL_DUAL:
        kw["track_dual"] = track_dual
    start = time.perf_counter()
    try:
        pol = make_policy(policy, market, seed=seed, **kw)
        T = len(tasks)
        traj = np.empty((4, T), dtype=np.int64)
        dual = getattr(pol, "dual", None) if policy in PRIMAL_DUAL else None
        dual_traj = np.empty(T) if dual is not None else None
        ledger = pol.ledger()
        for t, task in enumerate(tasks):
            pol.step(task)
            traj[0, t] = ledger.total
            traj[1, t] = ledger.outsourcing
            traj[2, t] = ledger.hiring
            traj[3, t] = ledger.salary
            if dual_traj is not None:
                dual_traj[t] = dual.bound()
        fin = getattr(pol, "finish", None)
        if fin is not None:
            fin()
    except Exception as exc:  # one failing cell must not sink the sweep
        log.warning("%s failed: %s", policy, exc)
        return CellResult(policy, seed, -1, (0, 0, 0), math.nan, time.perf_counter() - start, None, None,
                          f"{type(exc).__name__}: {exc}")
    seconds = time.perf_counter() - start
    d = float(dual_traj[-1]) if dual_traj is not None and len(dual_traj) else math.nan
    return CellResult(policy, seed, ledger.total, (ledger.outsourcing, ledger.hiring, ledger.salary), d, seconds,
                      traj, dual_traj)


def _run_stream(args) -> tuple[int, int, list[CellResult]]:
    market, pool, cfg, point, i = args
    s_seed = stream_seed(cfg.seed, point.p, i)
    stream = generate_stream(
        pool, StreamConfig(p=point.p, length=cfg.length, similarity_floor=cfg.similarity_floor),
        np.random.default_rng(s_seed),
    )
    cells = [
        run_cell(market, stream.tasks, name, policy_seed(cfg.seed, point, i, name), cfg.policy_params, cfg.track_dual)
        for name in cfg.policies
    ]
    return i, s_seed, cells


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> ExperimentReport:
    """Run every sweep point; aggregation is in stream order, so ``jobs`` does not change results."""
    base, pool = build_inputs(cfg)
    points = []
    for point in sweep_points(cfg):
        market = point_market(base, point)
        pool_here = TaskPool(pool.tasks, market, pool._neighbors, pool._floor)
        jobs = [(market, pool_here, cfg, point, i) for i in range(cfg.streams)]
        pool_here.neighbors(cfg.similarity_floor)  # build once before fanning out
        if cfg.jobs > 1:
            with ProcessPoolExecutor(max_workers=cfg.jobs) as ex:
                done = list(ex.map(_run_stream, jobs))
        else:
            done = [_run_stream(j) for j in jobs]
        pool._neighbors, pool._floor = pool_here._neighbors, pool_here._floor
        done.sort(key=lambda x: x[0])
        results = {name: PolicyResult() for name in cfg.policies}
        seeds = []
        for i, s_seed, cells in done:
            seeds.append(s_seed)
            for cell in cells:
                res = results[cell.policy]
                res.totals.append(cell.total)
                res.parts.append(cell.parts)
                res.duals.append(cell.dual)
                res.seeds.append(cell.seed)
                res.runtimes.append(cell.seconds)
                if cell.error:
                    res.errors.append(f"stream {i}: {cell.error}")
                    continue
                res.ok += 1
                res.sum_traj = cell.traj.copy() if res.sum_traj is None else res.sum_traj + cell.traj
                if cell.dual_traj is not None:
                    res.sum_dual = cell.dual_traj.copy() if res.sum_dual is None else res.sum_dual + cell.dual_traj
        points.append(PointResult(point, seeds, results))
        log.info("point %s done", point)
    report = ExperimentReport(cfg, points)
    if write and cfg.out:
        emit_csv(report, cfg.out)
    return report


# --- CSV ----------------------------------------------------------------------


def _cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit_csv(report: ExperimentReport | None, out_dir) -> dict[str, Path]:
    """Write trajectory, heatmap, summary and runtimes CSVs; returns name -> path.

    Runtimes live in their own file so the other three are byte-identical
    across runs with the same configuration.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tables = report.tables() if report is not None else {"trajectory": [], "heatmap": [], "summary": [], "runtimes": []}
    columns = {
        "trajectory": TRAJECTORY_COLUMNS,
        "heatmap": HEATMAP_COLUMNS,
        "summary": SUMMARY_COLUMNS,
        "runtimes": RUNTIME_COLUMNS,
    }
    manifest = {}
    for name, cols in columns.items():
        path = out / f"{name}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for row in tables[name]:
                w.writerow([_cell(v) for v in row])
        manifest[name] = path
    if report is not None:
        with open(out / "config.json", "w", encoding="utf-8") as fh:
            json.dump(report.config.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        manifest["config"] = out / "config.json"
    return manifest


_INT_COLUMNS = {"t", "stream", "stream_seed", "policy_seed"}
_STR_COLUMNS = {"policy", "policy_a", "policy_b", "error"}


def _parse(col: str, text: str):
    if col in _STR_COLUMNS or text == "":
        return text
    if col in _INT_COLUMNS:
        return int(text)
    return float(text)


def load_report(out_dir) -> dict[str, list[tuple]]:
    """Read the CSVs back into the row form of :meth:`ExperimentReport.tables`."""
    out = Path(out_dir)
    tables = {}
    for name in ("trajectory", "heatmap", "summary", "runtimes"):
        with open(out / f"{name}.csv", newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            tables[name] = [tuple(_parse(c, v) for c, v in zip(header, row)) for row in reader]
    return tables
