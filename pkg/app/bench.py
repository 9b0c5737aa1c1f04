"""Experiment reports: per-bucket tables, edge-count sweeps and convergence curves."""

from __future__ import annotations

import csv
import io
import logging
from collections.abc import Callable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from app.dag import DagGraph
from app.inference import ensemble_best, ensemble_trace
from app.milp import MilpError, build_milp, order_from_solution, solve_relaxation
from app.policy import ModelParams
from app.simulator import TETRIS, PriorityRule, makespan
from app.trainer import ConvergenceRow

logger = logging.getLogger(__name__)

ProgressCallback = Callable[[str, int, str], None]

# Buckets larger than this report no LP-order value.
LP_MAX_DAGS = 20
AVERAGE_LABEL = "average"


class ConvergenceLogError(ValueError):
    pass


@dataclass(slots=True)
class BenchRow:
    dags: str
    rule: str
    base: float
    learned: float
    reduce_pct: float
    tetris: float | None = None
    lp_order: float | None = None

    def as_dict(self) -> dict:
        return {
            "dags": self.dags,
            "rule": self.rule,
            "base": self.base,
            "learned": self.learned,
            "reduce_pct": self.reduce_pct,
            "tetris": self.tetris,
            "lp_order": self.lp_order,
        }


@dataclass(slots=True)
class SweepResult:
    rule: str
    max_edges: int
    # bucket -> one row per instance, column m = makespan after m added edges
    makespans: dict[int, np.ndarray] = field(default_factory=dict)

    def reduction(self, bucket: int, edges: int) -> float:
        table = self.makespans[bucket]
        return reduction_pct(float(table[:, 0].mean()), float(table[:, edges].mean()))

    def ensemble_reduction(self, bucket: int) -> float:
        """Best bucket-level reduction over 1..max_edges, or 0 when none helps."""
        return max([0.0, *(self.reduction(bucket, m) for m in range(1, self.max_edges + 1))])

    def ensemble_per_instance_reduction(self, bucket: int) -> float:
        """Reduction when every instance keeps its own best edge count."""
        table = self.makespans[bucket]
        return reduction_pct(float(table[:, 0].mean()), float(table.min(axis=1).mean()))


def reduction_pct(base: float, learned: float) -> float:
    if base == 0:
        return 0.0
    return (base - learned) / base * 100.0


def lp_order_makespan(g: DagGraph) -> float:
    model = build_milp(g, transitive=False)
    rule = order_from_solution(solve_relaxation(model), g)
    return makespan(g, rule)


def _bucket_rows(
    size: int,
    graphs: Sequence[DagGraph],
    rules: Sequence[str],
    params: ModelParams | None,
    max_edges: int,
    beam: int,
    lp_column: bool,
) -> list[BenchRow]:
    tetris = float(np.mean([makespan(g, TETRIS) for g in graphs]))
    lp_order = None
    if lp_column and size <= LP_MAX_DAGS:
        try:
            lp_order = float(np.mean([lp_order_makespan(g) for g in graphs]))
        except MilpError as exc:
            logger.warning("LP-order column skipped for bucket %d: %s", size, exc)
    rows = []
    for name in rules:
        rule = PriorityRule.named(name)
        base_spans = [makespan(g, rule) for g in graphs]
        if params is None or max_edges == 0:
            learned_spans = base_spans
        else:
            learned_spans = [
                ensemble_best(g, rule, max_edges, beam, params).makespan for g in graphs
            ]
        base = float(np.mean(base_spans))
        learned = float(np.mean(learned_spans))
        rows.append(
            BenchRow(
                dags=str(size),
                rule=name,
                base=base,
                learned=learned,
                reduce_pct=reduction_pct(base, learned),
                tetris=tetris,
                lp_order=lp_order,
            )
        )
        logger.info("bucket %d %s: base %.4f learned %.4f", size, name, base, learned)
    return rows


def _mean_optional(values: list[float | None]) -> float | None:
    present = [v for v in values if v is not None]
    return float(np.mean(present)) if present else None


def average_rows(rows: Sequence[BenchRow]) -> list[BenchRow]:
    """Unweighted column means over the bucket rows of each rule."""
    result = []
    for rule in dict.fromkeys(row.rule for row in rows):
        group = [row for row in rows if row.rule == rule and row.dags != AVERAGE_LABEL]
        result.append(
            BenchRow(
                dags=AVERAGE_LABEL,
                rule=rule,
                base=float(np.mean([row.base for row in group])),
                learned=float(np.mean([row.learned for row in group])),
                reduce_pct=float(np.mean([row.reduce_pct for row in group])),
                tetris=_mean_optional([row.tetris for row in group]),
                lp_order=_mean_optional([row.lp_order for row in group]),
            )
        )
    return result


def run_table(
    buckets: Mapping[int, Sequence[DagGraph]],
    rules: Sequence[str] = ("sjf", "cp"),
    params: ModelParams | None = None,
    max_edges: int = 5,
    beam: int = 10,
    lp_column: bool = True,
    workers: int = 1,
    progress: ProgressCallback | None = None,
) -> list[BenchRow]:
    """Bucket rows for every rule followed by one average row per rule.

    Without ``params`` the learned column repeats the baseline.
    """
    sizes = sorted(buckets)

    def run(size: int) -> list[BenchRow]:
        return _bucket_rows(size, buckets[size], rules, params, max_edges, beam, lp_column)

    per_bucket: dict[int, list[BenchRow]] = {}
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        for done, (size, rows) in enumerate(zip(sizes, pool.map(run, sizes)), start=1):
            per_bucket[size] = rows
            if progress is not None:
                progress("bench", int(100 * done / max(1, len(sizes))), f"Bucket {size} done")

    rows = [row for name in rules for size in sizes for row in per_bucket[size] if row.rule == name]
    return rows + average_rows(rows)


def sweep_edges(
    buckets: Mapping[int, Sequence[DagGraph]],
    params: ModelParams,
    rule: str = "sjf",
    max_edges: int = 5,
    beam: int = 10,
) -> SweepResult:
    """Makespan of every instance after 0..``max_edges`` beam-selected edges."""
    priority = PriorityRule.named(rule)
    result = SweepResult(rule=rule, max_edges=max_edges)
    for size in sorted(buckets):
        table = []
        for g in buckets[size]:
            spans = [span for _, span, _ in ensemble_trace(g, priority, max_edges, beam, params)]
            # Fewer legal edges than max_edges: later columns keep the last graph.
            spans += [spans[-1]] * (max_edges + 1 - len(spans))
            table.append(spans)
        result.makespans[size] = np.asarray(table, dtype=np.float64).reshape(-1, max_edges + 1)
    return result


def sweep_rows(result: SweepResult) -> list[dict]:
    rows = []
    for size in sorted(result.makespans):
        row: dict = {"dags": size}
        for m in range(1, result.max_edges + 1):
            row[f"edges_{m}"] = result.reduction(size, m)
        row["ensemble"] = result.ensemble_reduction(size)
        row["ensemble_per_instance"] = result.ensemble_per_instance_reduction(size)
        rows.append(row)
    return rows


def write_training_log(path: Path, log: Sequence[ConvergenceRow]) -> None:
    buckets = sorted({bucket for row in log for bucket in row.makespans})
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["iteration"] + [f"dags_{b}" for b in buckets])
        for row in log:
            writer.writerow([row.iteration] + [repr(row.makespans[b]) for b in buckets])


def read_training_log(text: str) -> list[ConvergenceRow]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ConvergenceLogError("Training log is empty") from None
    if not header or header[0] != "iteration":
        raise ConvergenceLogError("Training log must start with an 'iteration' column")
    buckets = []
    for column in header[1:]:
        if not column.startswith("dags_") or not column.removeprefix("dags_").isdigit():
            raise ConvergenceLogError(f"Unexpected column '{column}'")
        buckets.append(int(column.removeprefix("dags_")))

    rows = []
    for number, record in enumerate(reader, start=2):
        if not record:
            continue
        if len(record) != len(header):
            raise ConvergenceLogError(f"line {number}: expected {len(header)} fields")
        try:
            iteration = int(record[0])
            values = [float(item) for item in record[1:]]
        except ValueError:
            raise ConvergenceLogError(f"line {number}: non-numeric field") from None
        rows.append(ConvergenceRow(iteration=iteration, makespans=dict(zip(buckets, values))))
    return rows


def smooth(values: Sequence[float], window: int) -> list[float]:
    """Trailing moving average; the first points average what is available."""
    if window < 1:
        raise ValueError("window must be >= 1")
    cumulative = np.concatenate([[0.0], np.cumsum(np.asarray(values, dtype=np.float64))])
    result = []
    for k in range(len(values)):
        lo = max(0, k + 1 - window)
        result.append(float((cumulative[k + 1] - cumulative[lo]) / (k + 1 - lo)))
    return result


def convergence_report(
    log: Sequence[ConvergenceRow], window: int = 10
) -> dict[int, list[tuple[int, float]]]:
    iterations = [row.iteration for row in log]
    buckets = sorted({bucket for row in log for bucket in row.makespans})
    report = {}
    for bucket in buckets:
        series = [row.makespans[bucket] for row in log]
        report[bucket] = list(zip(iterations, smooth(series, window)))
    return report


def _fmt(value: float | None) -> str:
    return "-" if value is None else f"{value:.2f}"


def format_table(rows: Sequence[BenchRow]) -> str:
    header = ["DAGs", "Rule", "Time", "Learn", "Reduce %", "Tetris", "LP-order"]
    body = [
        [row.dags, row.rule, _fmt(row.base), _fmt(row.learned), _fmt(row.reduce_pct), _fmt(row.tetris), _fmt(row.lp_order)]
        for row in rows
    ]
    widths = [max(len(line[i]) for line in [header, *body]) for i in range(len(header))]
    lines = ["  ".join(cell.rjust(width) for cell, width in zip(line, widths)) for line in [header, *body]]
    return "\n".join(lines) + "\n"


def write_csv(path: Path, rows: Sequence[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not rows:
        path.write_text("", encoding="utf-8")
        return
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=list(rows[0]))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: "" if v is None else v for k, v in row.items()})
