"""Experiment harness: batch-run solvers over generated scene suites and
aggregate success rates, timing percentiles, and push counts into CSV rows
plus a text summary table."""
from __future__ import annotations

import csv
import io
import statistics
from dataclasses import dataclass, field
from typing import Callable, Iterable, TextIO

from .scene import generate_scene
from .solver import Algorithm, Plan, SolverConfig, solve

CSV_HEADER = "level,seed,algorithm,success,planning_time_s,sim_time_s,pushes,cbs_calls"

DESK_SCENES_PER_LEVEL = 50
DESK_TIMEOUT_S = 60.0
PAPER_SCENES_PER_LEVEL = 100
PAPER_TIMEOUT_S = 120.0


@dataclass(frozen=True)
class BenchmarkSpec:
    levels: tuple[int, ...] = (1, 2, 3)
    scenes_per_level: int = DESK_SCENES_PER_LEVEL
    algorithms: tuple[Algorithm, ...] = (
        Algorithm.ITERATIVE,
        Algorithm.SINGLE_MAPF,
        Algorithm.NGR_RECURSIVE,
    )
    timeout_s: float = DESK_TIMEOUT_S
    base_seed: int = 0

    def __post_init__(self) -> None:
        if self.scenes_per_level <= 0:
            raise ValueError("scenes_per_level must be > 0")

    @staticmethod
    def paper_scale(base_seed: int = 0) -> "BenchmarkSpec":
        return BenchmarkSpec(
            scenes_per_level=PAPER_SCENES_PER_LEVEL,
            timeout_s=PAPER_TIMEOUT_S,
            base_seed=base_seed,
        )


@dataclass(frozen=True)
class ResultRow:
    level: int
    seed: int
    algorithm: Algorithm
    success: bool
    planning_time_s: float
    sim_time_s: float
    pushes: int
    cbs_calls: int

    def __post_init__(self) -> None:
        if self.sim_time_s > self.planning_time_s + 1e-9:
            raise ValueError("sim time cannot exceed total planning time")

    def csv_values(self) -> list[str]:
        return [
            str(self.level),
            str(self.seed),
            self.algorithm.value,
            "true" if self.success else "false",
            f"{self.planning_time_s:.4f}",
            f"{self.sim_time_s:.4f}",
            str(self.pushes),
            str(self.cbs_calls),
        ]


def row_from_plan(level: int, seed: int, algorithm: Algorithm, plan: Plan) -> ResultRow:
    return ResultRow(
        level=level,
        seed=seed,
        algorithm=algorithm,
        success=plan.stats.success,
        planning_time_s=plan.stats.planning_time,
        sim_time_s=min(plan.stats.sim_time, plan.stats.planning_time),
        pushes=plan.stats.pushes_executed,
        cbs_calls=plan.stats.cbs_calls,
    )


@dataclass
class SummaryCell:
    level: int
    algorithm: Algorithm
    runs: int
    successes: int
    planning_times: list[float]  # successful runs only
    sim_times: list[float]
    mean_pushes: float | None

    @property
    def success_rate(self) -> float:
        return 100.0 * self.successes / self.runs if self.runs else 0.0


def summarize(rows: Iterable[ResultRow]) -> list[SummaryCell]:
    """Success %, min/median/max times over successful runs, and mean pushes
    per (level, algorithm)."""
    groups: dict[tuple[int, Algorithm], list[ResultRow]] = {}
    for r in rows:
        groups.setdefault((r.level, r.algorithm), []).append(r)
    cells = []
    for (level, alg) in sorted(groups, key=lambda k: (k[0], k[1].value)):
        rs = groups[(level, alg)]
        ok = [r for r in rs if r.success]
        cells.append(
            SummaryCell(
                level=level,
                algorithm=alg,
                runs=len(rs),
                successes=len(ok),
                planning_times=[r.planning_time_s for r in ok],
                sim_times=[r.sim_time_s for r in ok],
                mean_pushes=statistics.mean([r.pushes for r in ok]) if ok else None,
            )
        )
    return cells


def _mmm(values: list[float]) -> str:
    if not values:
        return "-"
    return f"{min(values):.1f}/{statistics.median(values):.1f}/{max(values):.1f}"


def format_summary(cells: list[SummaryCell]) -> str:
    lines = [
        f"{'level':>5} {'algorithm':>14} {'n':>4} {'success%':>9} "
        f"{'plan s (min/med/max)':>22} {'sim s (min/med/max)':>22} {'mean pushes':>12}"
    ]
    for c in cells:
        pushes = f"{c.mean_pushes:.2f}" if c.mean_pushes is not None else "-"
        lines.append(
            f"{c.level:>5} {c.algorithm.value:>14} {c.runs:>4} {c.success_rate:>8.1f}% "
            f"{_mmm(c.planning_times):>22} {_mmm(c.sim_times):>22} {pushes:>12}"
        )
    return "\n".join(lines)


def run_benchmark(
    spec: BenchmarkSpec,
    csv_out: TextIO | None = None,
    progress: Callable[[ResultRow], None] | None = None,
) -> tuple[list[ResultRow], list[SummaryCell]]:
    """Run every (level, scene, algorithm) combination in deterministic
    order. Rows are streamed to csv_out as they complete so an interrupted
    run keeps its partial results."""
    writer = None
    if csv_out is not None:
        writer = csv.writer(csv_out, lineterminator="\n")
        writer.writerow(CSV_HEADER.split(","))
        csv_out.flush()
    rows: list[ResultRow] = []
    for level in spec.levels:
        for i in range(spec.scenes_per_level):
            seed = spec.base_seed + i
            scene = generate_scene(level, seed)
            for alg in spec.algorithms:
                cfg = SolverConfig(timeout_s=spec.timeout_s, algorithm=alg, seed=seed)
                plan = solve(scene, cfg)
                row = row_from_plan(level, seed, alg, plan)
                rows.append(row)
                if writer is not None:
                    writer.writerow(row.csv_values())
                    csv_out.flush()
                if progress is not None:
                    progress(row)
    return rows, summarize(rows)


def rows_to_csv(rows: Iterable[ResultRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER.split(","))
    for r in rows:
        writer.writerow(r.csv_values())
    return buf.getvalue()
