"""Stage 3: cross-run statistics per experiment and cross-experiment
summary tables."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    CsvParseError,
    LengthMismatch,
    MissingOutput,
    NoSuccessfulRuns,
    ShapeMismatch,
    UnknownColumn,
)
from .executor import OK, OUTCOMES_NAME, RunOutcome, read_outcomes
from .model import BatchManifest, DirectoryLayout, write_text_atomic

log = logging.getLogger(__name__)

CI95_Z = 1.96
STAT_NAMES = ("mean", "stddev", "min", "max", "ci95")
REDUCERS = ("final_row", "mean_over_time", "max_over_time")


@dataclass
class RunResultTensor:
    output_name: str
    data: np.ndarray  # rows x columns x runs
    column_names: list[str]

    @property
    def run_count(self) -> int:
        return self.data.shape[2]


@dataclass
class StatsBundle:
    column_names: list[str]
    mean: np.ndarray
    stddev: np.ndarray
    min: np.ndarray
    max: np.ndarray
    ci95_half: np.ndarray
    run_count: int

    def matrices(self) -> dict[str, np.ndarray]:
        return {
            "mean": self.mean,
            "stddev": self.stddev,
            "min": self.min,
            "max": self.max,
            "ci95": self.ci95_half,
        }


@dataclass(frozen=True)
class Reducer:
    kind: str
    column: str

    def __post_init__(self) -> None:
        if self.kind not in REDUCERS:
            raise ValueError(f"unknown reducer {self.kind!r}; expected one of {', '.join(REDUCERS)}")

    @classmethod
    def parse(cls, text: str) -> "Reducer":
        kind, sep, column = text.partition(":")
        if not sep or not column:
            raise ValueError(f"reducer {text!r} must look like <kind>:<column>")
        return cls(kind, column)

    def __str__(self) -> str:
        return f"{self.kind}:{self.column}"


@dataclass
class BatchSummaryTable:
    labels: list[str]
    scalars: list[int | None]
    values: list[float]
    spreads: list[float]
    reducer_name: str
    column: str

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def numeric(self) -> bool:
        return all(s is not None for s in self.scalars)


# ---------------------------------------------------------------------------
# CSV I/O


def fmt(x: float) -> str:
    s = format(float(x) + 0.0, ".9g")
    return "0" if s == "-0" else s


def read_numeric_csv(path) -> tuple[list[str], np.ndarray]:
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise MissingOutput(f"cannot read {path}: {exc}") from exc
    if not rows or not rows[0]:
        raise CsvParseError(f"{path}: no header")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if r]
    try:
        values = [[float(cell) for cell in r] for r in body]
    except ValueError as exc:
        raise CsvParseError(f"{path}: {exc}") from None
    for i, r in enumerate(values, start=2):
        if len(r) != len(header):
            raise CsvParseError(f"{path}: line {i} has {len(r)} fields, header has {len(header)}")
    return header, np.array(values, dtype=float).reshape(len(values), len(header))


def write_numeric_csv(path, header: Sequence[str], matrix: np.ndarray) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(fmt(x) for x in row) for row in matrix)
    write_text_atomic(Path(path), "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# loading and per-cell statistics


def _experiment_outcomes(exp_output_dir: Path) -> list[RunOutcome]:
    path = exp_output_dir.parent / OUTCOMES_NAME
    if not path.is_file():
        raise MissingOutput(f"{path} not found; has stage 2 run?")
    return [o for o in read_outcomes(path) if Path(o.stdout_path).parent.parent == exp_output_dir]


def load_run_outputs(
    exp_output_dir,
    expected: Sequence[str],
    outcomes: Sequence[RunOutcome] | None = None,
    min_successful: int = 1,
) -> dict[str, RunResultTensor]:
    """Stack each expected CSV across the experiment's successful runs.

    Runs whose status is not ``ok`` are skipped with a warning.
    """
    exp_output_dir = Path(exp_output_dir)
    if outcomes is None:
        outcomes = _experiment_outcomes(exp_output_dir)
    ok_runs = []
    for o in outcomes:
        if o.status == OK:
            ok_runs.append(Path(o.stdout_path).parent)
        else:
            log.warning("excluding run %s/%d: %s", exp_output_dir.name, o.run_index, o.status)
    if len(ok_runs) < max(1, min_successful):
        raise NoSuccessfulRuns(
            f"{exp_output_dir}: {len(ok_runs)} successful runs, need {max(1, min_successful)}"
        )

    tensors = {}
    for name in expected:
        header = None
        mats = []
        for run_dir in ok_runs:
            path = run_dir / name
            if not path.is_file():
                raise MissingOutput(f"run {run_dir} did not produce {name}")
            cols, mat = read_numeric_csv(path)
            if header is None:
                header = cols
            elif cols != header or mat.shape != mats[0].shape:
                raise ShapeMismatch(
                    f"{path}: shape {mat.shape} {cols} differs from "
                    f"{mats[0].shape} {header} of {ok_runs[0] / name}"
                )
            mats.append(mat)
        tensors[name] = RunResultTensor(name, np.stack(mats, axis=2), header)
    return tensors


def compute_cell_stats(t: RunResultTensor) -> StatsBundle:
    data = t.data
    k = data.shape[2]
    mean = data.mean(axis=2)
    lo = data.min(axis=2)
    hi = data.max(axis=2)
    # float summation can push the mean of identical values one ulp outside [min, max]
    mean = np.clip(mean, lo, hi)
    std = data.std(axis=2, ddof=1) if k > 1 else np.zeros_like(mean)
    return StatsBundle(
        column_names=list(t.column_names),
        mean=mean,
        stddev=std,
        min=lo,
        max=hi,
        ci95_half=CI95_Z * std / math.sqrt(k),
        run_count=k,
    )


def write_stats_bundle(bundle: StatsBundle, out_dir, output_name: str) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = Path(output_name).stem
    written = []
    for stat, matrix in bundle.matrices().items():
        path = out_dir / f"{stem}.{stat}.csv"
        write_numeric_csv(path, bundle.column_names, matrix)
        written.append(path)
    return written


def read_stats_bundle(stat_dir, output_name: str) -> StatsBundle:
    stem = Path(output_name).stem
    mats = {}
    header: list[str] = []
    for stat in STAT_NAMES:
        header, mats[stat] = read_numeric_csv(Path(stat_dir) / f"{stem}.{stat}.csv")
    return StatsBundle(
        header, mats["mean"], mats["stddev"], mats["min"], mats["max"], mats["ci95"], 0
    )


# ---------------------------------------------------------------------------
# reduction and collation


def reduce_experiment(bundle: StatsBundle, r: Reducer) -> tuple[float, float]:
    try:
        col = bundle.column_names.index(r.column)
    except ValueError:
        raise UnknownColumn(
            f"column {r.column!r} not in {', '.join(bundle.column_names)}"
        ) from None
    mean = bundle.mean[:, col]
    std = bundle.stddev[:, col]
    if r.kind == "final_row":
        return float(mean[-1]), float(std[-1])
    if r.kind == "mean_over_time":
        return float(mean.mean()), float(std.mean())
    row = int(np.argmax(mean))
    return float(mean[row]), float(std[row])


def summary_filename(r: Reducer) -> str:
    return f"summary-{r.kind}-{r.column}.csv"


def collate_batch(
    manifest: BatchManifest,
    per_exp: Sequence[tuple[float, float]],
    reducer: Reducer,
    layout: DirectoryLayout | None = None,
) -> BatchSummaryTable:
    if len(per_exp) != len(manifest.experiments):
        raise LengthMismatch(
            f"{len(per_exp)} summaries for {len(manifest.experiments)} experiments"
        )
    exps = sorted(manifest.experiments, key=lambda e: e.index)
    table = BatchSummaryTable(
        labels=[e.criteria_value.label for e in exps],
        scalars=[e.criteria_value.scalar for e in exps],
        values=[float(v) for v, _ in per_exp],
        spreads=[float(s) for _, s in per_exp],
        reducer_name=reducer.kind,
        column=reducer.column,
    )
    if layout is not None:
        layout.statistics_root.mkdir(parents=True, exist_ok=True)
        write_summary_csv(table, layout.statistics_root / summary_filename(reducer))
    return table


def write_summary_csv(table: BatchSummaryTable, path) -> None:
    lines = ["criteria,value,spread"]
    lines.extend(
        f"{label},{fmt(v)},{fmt(s)}"
        for label, v, s in zip(table.labels, table.values, table.spreads)
    )
    write_text_atomic(Path(path), "\n".join(lines) + "\n")


def read_summary_csv(path) -> BatchSummaryTable:
    """Load a summary table; labels that are all integers become scalars."""
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if r]
    except OSError as exc:
        raise MissingOutput(f"cannot read {path}: {exc}") from exc
    if not rows or rows[0] != ["criteria", "value", "spread"]:
        raise CsvParseError(f"{path}: expected header criteria,value,spread")
    labels, values, spreads = [], [], []
    try:
        for r in rows[1:]:
            labels.append(r[0])
            values.append(float(r[1]))
            spreads.append(float(r[2]))
    except (ValueError, IndexError) as exc:
        raise CsvParseError(f"{path}: {exc}") from None
    numeric = all(label.lstrip("-").isdigit() for label in labels)
    scalars = [int(label) if numeric else None for label in labels]
    stem = path.stem.split("-", 2)
    kind, column = (stem[1], stem[2]) if len(stem) == 3 and stem[0] == "summary" else ("", "")
    return BatchSummaryTable(labels, scalars, values, spreads, kind, column)
