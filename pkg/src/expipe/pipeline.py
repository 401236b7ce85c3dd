"""Stage orchestration: prerequisite gating and idempotent execution of
stages 1-5 for one configuration."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

from .comparison import ComparisonSet, compare_batches, comparison_filename
from .deliverables import PlotSpec, Series, imagize_csv, render_linegraph, render_summary_linegraph
from .errors import PipelineError, PrerequisiteMissing
from .executor import (
    OUTCOMES_NAME,
    collect_cluster_outcomes,
    execute_local,
    make_exec_plan,
    render_pbs_script,
    render_slurm_script,
    submit,
    write_outcomes,
)
from .generator import GenerationRequest, generate_batch
from .model import BatchManifest, DirectoryLayout, layout_for, read_manifest, write_text_atomic
from .platform import PlatformDef, resolve_platform
from .project import ProjectConfig
from .query import ResearchQuery, bind_variable
from .stats import (
    Reducer,
    collate_batch,
    compute_cell_stats,
    load_run_outputs,
    read_stats_bundle,
    read_summary_csv,
    reduce_experiment,
    summary_filename,
    write_stats_bundle,
)

log = logging.getLogger(__name__)

STAGE_NAMES = {
    1: "generate",
    2: "execute",
    3: "statistics",
    4: "deliverables",
    5: "compare",
}
CLUSTER_SCRIPTS = {"slurm": ("job.slurm.sh", "sbatch"), "pbs": ("job.pbs.sh", "qsub")}


@dataclass
class PipelineConfig:
    stages: tuple[int, ...]
    batch_root: Path | None
    query: ResearchQuery | None = None
    template_path: Path | None = None
    n_runs: int = 4
    base_seed: int = 0
    platform_name: str = "mockplat"
    exec_env: str = "local"
    parallelism: int = 1
    project: ProjectConfig = field(default_factory=ProjectConfig)
    reducer: Reducer | None = None
    compare: list[tuple[str, Path]] = field(default_factory=list)
    compare_out: Path | None = None
    dry_run: bool = False
    report_json: Path | None = None

    @property
    def layout(self) -> DirectoryLayout:
        return layout_for(self.batch_root)


@dataclass
class StageResult:
    stage: int
    status: str
    seconds: float = 0.0
    artifacts: int = 0
    error: str | None = None


@dataclass
class PipelineReport:
    stages: list[StageResult]

    @property
    def ok(self) -> bool:
        return all(s.status != "failed" for s in self.stages)

    def as_dict(self) -> dict:
        return {
            "ok": self.ok,
            "stages": [
                {
                    "stage": s.stage,
                    "name": STAGE_NAMES[s.stage],
                    "status": s.status,
                    "seconds": round(s.seconds, 3),
                    "artifacts": s.artifacts,
                    "error": s.error,
                }
                for s in self.stages
            ],
        }

    def format(self) -> str:
        lines = []
        for s in self.stages:
            line = f"stage {s.stage} ({STAGE_NAMES[s.stage]}): {s.status}"
            if s.status == "ok":
                line += f" [{s.artifacts} artifacts, {s.seconds:.2f}s]"
            if s.error:
                line += f": {s.error}"
            lines.append(line)
        return "\n".join(lines)


def _require(stage: int, path: Path, what: str) -> None:
    if not path.exists():
        raise PrerequisiteMissing(stage, f"{what} ({path})")


def _platform(cfg: PipelineConfig, manifest: BatchManifest | None = None) -> PlatformDef:
    name = manifest.platform_name if manifest is not None else cfg.platform_name
    return resolve_platform(name, cfg.project.platforms_dir)


def _manifest(cfg: PipelineConfig, stage: int) -> BatchManifest:
    _require(stage, cfg.layout.manifest_path, "manifest.json from stage 1")
    return read_manifest(cfg.layout.manifest_path)


# ---------------------------------------------------------------------------
# stages; each returns the number of artifacts it wrote


def stage_generate(cfg: PipelineConfig) -> int:
    if cfg.query is None or cfg.template_path is None:
        raise PipelineError("stage 1 needs --batch-criteria and a template")
    bound = bind_variable(cfg.query, cfg.project.variables)
    req = GenerationRequest(
        template_path=cfg.template_path,
        bound=bound,
        runs_per_experiment=cfg.n_runs,
        base_seed=cfg.base_seed,
        layout=cfg.layout,
        batch_transforms=cfg.project.batch_transforms,
        platform_name=cfg.platform_name,
    )
    manifest = generate_batch(req)
    return len(manifest.experiments) * manifest.runs_per_experiment + 1


def stage_execute(cfg: PipelineConfig) -> int:
    layout = cfg.layout
    manifest = _manifest(cfg, 2)
    plan = make_exec_plan(manifest, _platform(cfg, manifest))
    layout.exp_output_root.mkdir(parents=True, exist_ok=True)

    if cfg.exec_env == "local" and cfg.dry_run:
        for t in plan:
            log.info("dry run: %s", " ".join(t.command))
        return 0
    if cfg.exec_env == "local":
        outcomes = execute_local(plan, cfg.parallelism, cfg.project.env_passthrough)
        write_outcomes(outcomes, layout)
        failed = [o for o in outcomes if o.status != "ok"]
        for o in failed:
            log.warning("run %d/%d %s (exit %d), see %s", o.exp_index, o.run_index, o.status, o.exit_code, o.stderr_path)
        log.info("%d/%d runs ok", len(outcomes) - len(failed), len(outcomes))
        return len(outcomes) + 1

    script_name, submitter = CLUSTER_SCRIPTS[cfg.exec_env]
    render = render_slurm_script if cfg.exec_env == "slurm" else render_pbs_script
    script = layout.exp_output_root / script_name
    write_text_atomic(script, render(plan, cfg.project.cluster, layout))
    (layout.exp_output_root / "cluster-logs").mkdir(exist_ok=True)
    result = submit(script, submitter, cfg.dry_run)
    if result.dry_run:
        log.info("dry run; would execute: %s", " ".join(result.command))
    else:
        log.info("submitted job %s", result.job_id)
    return 1


def _default_reducer(cfg: PipelineConfig, platform: PlatformDef, header_of) -> Reducer:
    if cfg.reducer is not None:
        return cfg.reducer
    if not platform.expected_outputs:
        raise PipelineError("platform declares no expected outputs; pass --reducer")
    header = header_of(platform.expected_outputs[0])
    return Reducer("final_row", header[-1])


def stage_statistics(cfg: PipelineConfig) -> int:
    layout = cfg.layout
    manifest = _manifest(cfg, 3)
    platform = _platform(cfg, manifest)
    outcomes_path = layout.exp_output_root / OUTCOMES_NAME
    if not outcomes_path.exists():
        scripts = [layout.exp_output_root / s for s, _ in CLUSTER_SCRIPTS.values()]
        if not any(s.exists() for s in scripts):
            raise PrerequisiteMissing(3, f"{OUTCOMES_NAME} from stage 2 ({outcomes_path})")
        # cluster runs leave exit-code files instead of an outcomes record
        write_outcomes(collect_cluster_outcomes(make_exec_plan(manifest, platform)), layout)

    written = 0
    bundles = []
    for exp in manifest.experiments:
        out_dir = layout.exp_output_dir(exp.index, exp.criteria_value.label)
        tensors = load_run_outputs(out_dir, platform.expected_outputs)
        stat_dir = layout.statistics_dir(exp.index, exp.criteria_value.label)
        exp_bundles = {}
        for name, tensor in tensors.items():
            bundle = compute_cell_stats(tensor)
            written += len(write_stats_bundle(bundle, stat_dir, name))
            exp_bundles[name] = bundle
        bundles.append(exp_bundles)

    reducer = _default_reducer(cfg, platform, lambda name: bundles[0][name].column_names)
    source = next(
        (n for n in platform.expected_outputs if reducer.column in bundles[0][n].column_names),
        platform.expected_outputs[0],
    )
    per_exp = [reduce_experiment(b[source], reducer) for b in bundles]
    collate_batch(manifest, per_exp, reducer, layout)
    return written + 1


def _summary_path(cfg: PipelineConfig, stats_root: Path, stage: int) -> Path:
    if cfg.reducer is not None:
        path = stats_root / summary_filename(cfg.reducer)
        _require(stage, path, "summary CSV from stage 3")
        return path
    found = sorted(stats_root.glob("summary-*.csv")) if stats_root.is_dir() else []
    if not found:
        raise PrerequisiteMissing(stage, f"summary CSV from stage 3 under {stats_root}")
    if len(found) > 1:
        raise PipelineError(f"several summaries under {stats_root}; choose one with --reducer")
    return found[0]


def stage_deliverables(cfg: PipelineConfig) -> int:
    layout = cfg.layout
    manifest = _manifest(cfg, 4)
    summary_path = _summary_path(cfg, layout.statistics_root, 4)
    table = read_summary_csv(summary_path)
    reducer = Reducer(table.reducer_name, table.column)
    platform = _platform(cfg, manifest)
    written = 0

    for exp in manifest.experiments:
        stat_dir = layout.statistics_dir(exp.index, exp.criteria_value.label)
        out_dir = layout.deliverables_root / exp.dirname
        out_dir.mkdir(parents=True, exist_ok=True)
        for name in platform.expected_outputs:
            _require(4, stat_dir / f"{Path(name).stem}.mean.csv", "statistics CSVs from stage 3")
            bundle = read_stats_bundle(stat_dir, name)
            if reducer.column not in bundle.column_names:
                continue
            col = bundle.column_names.index(reducer.column)
            xs = bundle.mean[:, 0] if bundle.column_names[0] != reducer.column else range(len(bundle.mean))
            spec = PlotSpec(
                title=f"{manifest.variable_name} = {exp.criteria_value.label}",
                x_label=bundle.column_names[0],
                y_label=reducer.column,
                series=[
                    Series(
                        "mean +/- stddev",
                        [float(x) for x in xs],
                        [float(v) for v in bundle.mean[:, col]],
                        [float(v) for v in bundle.stddev[:, col]],
                    )
                ],
                show_band=True,
            )
            svg = render_linegraph(spec)
            write_text_atomic(out_dir / f"{Path(name).stem}-{reducer.column}.svg", svg)
            written += 1
        for output, column in cfg.project.imagize:
            frames = imagize_csv(
                stat_dir / f"{Path(output).stem}.mean.csv",
                column,
                out_dir / "frames" / f"{Path(output).stem}-{column}",
                fps=cfg.project.fps,
                stitch_template=cfg.project.stitch_command,
            )
            written += len(frames.frames) + 1

    svg = render_summary_linegraph(
        table,
        title=f"{manifest.query_text}: {reducer.kind} of {reducer.column}",
        x_label=manifest.variable_name,
        y_label=reducer.column,
    )
    write_text_atomic(layout.deliverables_root / f"{summary_path.stem}.svg", svg)
    return written + 1


def stage_compare(cfg: PipelineConfig) -> int:
    if len(cfg.compare) < 2:
        raise PrerequisiteMissing(5, "at least two --compare label=path inputs")
    entries = []
    for label, path in cfg.compare:
        path = Path(path)
        if path.is_dir():
            stats_root = layout_for(path).statistics_root
            path = _summary_path(cfg, stats_root, 5)
        _require(5, path, f"summary CSV for {label!r}")
        entries.append((label, read_summary_csv(path)))
    table = entries[0][1]
    svg = compare_batches(
        ComparisonSet(entries),
        title=f"{table.reducer_name} of {table.column}",
        x_label="criteria",
        y_label=table.column,
    )
    out_dir = cfg.compare_out or (cfg.layout.deliverables_root if cfg.batch_root else Path.cwd())
    out_dir.mkdir(parents=True, exist_ok=True)
    write_text_atomic(out_dir / comparison_filename(table.column, table.reducer_name), svg)
    return 1


STAGES = {
    1: stage_generate,
    2: stage_execute,
    3: stage_statistics,
    4: stage_deliverables,
    5: stage_compare,
}


def run_pipeline(cfg: PipelineConfig) -> PipelineReport:
    """Run the requested stages in ascending order. The first failure marks
    the remaining requested stages as skipped."""
    results = []
    failed = False
    for stage in sorted(set(cfg.stages)):
        if failed:
            results.append(StageResult(stage, "skipped"))
            continue
        log.info("stage %d (%s)", stage, STAGE_NAMES[stage])
        start = time.monotonic()
        try:
            count = STAGES[stage](cfg)
        except (PipelineError, OSError) as exc:
            log.error("stage %d failed: %s", stage, exc)
            results.append(StageResult(stage, "failed", time.monotonic() - start, 0, str(exc)))
            failed = True
            continue
        results.append(StageResult(stage, "ok", time.monotonic() - start, count))
    return PipelineReport(results)
