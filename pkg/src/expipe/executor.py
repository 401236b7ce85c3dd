"""Stage 2: build an execution plan from a batch manifest and either run it
locally or compile it into a SLURM/PBS array-job script."""

from __future__ import annotations

import json
import os
import re
import shlex
import shutil
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .errors import (
    EmptyPlan,
    MissingInput,
    ParseError,
    PipelineError,
    SchemaError,
    SubmitFailed,
    SubmitterNotFound,
)
from .model import BatchManifest, DirectoryLayout, canonical_json, write_text_atomic
from .platform import PlatformDef, render_launch_command

OUTCOMES_NAME = "exec-outcomes.json"
STDOUT_NAME = "stdout.txt"
STDERR_NAME = "stderr.txt"
EXIT_CODE_NAME = "exit-code"

OK, FAILED, TIMEOUT = "ok", "failed", "timeout"


@dataclass(frozen=True)
class RunTask:
    exp_index: int
    run_index: int
    command: tuple[str, ...]
    working_dir: Path
    output_dir: Path
    timeout_seconds: int


@dataclass(frozen=True)
class RunOutcome:
    exp_index: int
    run_index: int
    exit_code: int
    duration_seconds: float
    stdout_path: Path
    stderr_path: Path
    status: str


@dataclass(frozen=True)
class ClusterOptions:
    job_name: str = "expipe"
    time_limit: str = "01:00:00"
    tasks_per_node: int = 1
    account: str | None = None
    extra_directives: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        if not re.match(r"^\d+:\d{2}:\d{2}$", self.time_limit):
            raise ValueError(f"time limit {self.time_limit!r} is not HH:MM:SS")
        if self.tasks_per_node < 1:
            raise ValueError("tasks_per_node must be positive")
        if not re.match(r"^[A-Za-z0-9_.\-]+$", self.job_name):
            raise ValueError(f"job name {self.job_name!r} has unsupported characters")


@dataclass(frozen=True)
class SubmissionResult:
    command: tuple[str, ...]
    job_id: str | None
    dry_run: bool
    stdout: str = ""


def make_exec_plan(manifest: BatchManifest, platform: PlatformDef) -> list[RunTask]:
    missing = [run.input_path for _, run in manifest.iter_runs() if not Path(run.input_path).is_file()]
    if missing:
        raise MissingInput(missing)
    tasks = []
    for exp, run in manifest.iter_runs():
        command = render_launch_command(platform, run, run_id=f"{exp.dirname}.run-{run.run_index:04d}")
        tasks.append(
            RunTask(
                exp_index=exp.index,
                run_index=run.run_index,
                command=tuple(command),
                working_dir=Path(run.output_dir),
                output_dir=Path(run.output_dir),
                timeout_seconds=platform.timeout_seconds,
            )
        )
    tasks.sort(key=lambda t: (t.exp_index, t.run_index))
    return tasks


# ---------------------------------------------------------------------------
# local execution


def _child_env(passthrough: Sequence[str] | None) -> dict | None:
    if passthrough is None:
        return None
    return {k: os.environ[k] for k in passthrough if k in os.environ}


def _run_one(task: RunTask, env: dict | None) -> RunOutcome:
    out = Path(task.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    Path(task.working_dir).mkdir(parents=True, exist_ok=True)
    stdout_path = out / STDOUT_NAME
    stderr_path = out / STDERR_NAME
    start = time.monotonic()
    with open(stdout_path, "wb") as so, open(stderr_path, "wb") as se:
        try:
            proc = subprocess.run(
                list(task.command),
                cwd=task.working_dir,
                stdout=so,
                stderr=se,
                stdin=subprocess.DEVNULL,
                env=env,
                timeout=task.timeout_seconds,
            )
            code = proc.returncode
            status = OK if code == 0 else FAILED
        except subprocess.TimeoutExpired:
            code, status = -9, TIMEOUT
        except OSError as exc:
            se.write(f"spawn failed: {exc}\n".encode())
            code, status = -1, FAILED
    return RunOutcome(
        task.exp_index,
        task.run_index,
        code,
        time.monotonic() - start,
        stdout_path,
        stderr_path,
        status,
    )


def execute_local(
    plan: Sequence[RunTask],
    parallelism: int,
    env_passthrough: Sequence[str] | None = None,
) -> list[RunOutcome]:
    """Run every task with at most ``parallelism`` live child processes.

    Outcomes come back in plan order. A task that fails, times out or
    cannot be spawned is recorded as such and never stops the others.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    env = _child_env(env_passthrough)
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(lambda t: _run_one(t, env), plan))


def outcomes_to_json(outcomes: Sequence[RunOutcome]) -> str:
    # durations are left out: the file must be byte-stable across re-runs
    return canonical_json(
        {
            "outcomes": [
                {
                    "exp_index": o.exp_index,
                    "run_index": o.run_index,
                    "exit_code": o.exit_code,
                    "status": o.status,
                    "stdout_path": str(o.stdout_path),
                    "stderr_path": str(o.stderr_path),
                }
                for o in outcomes
            ]
        }
    )


def write_outcomes(outcomes: Sequence[RunOutcome], layout: DirectoryLayout) -> Path:
    layout.exp_output_root.mkdir(parents=True, exist_ok=True)
    path = layout.exp_output_root / OUTCOMES_NAME
    write_text_atomic(path, outcomes_to_json(outcomes))
    return path


def read_outcomes(path) -> list[RunOutcome]:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None
    try:
        return [
            RunOutcome(
                int(d["exp_index"]),
                int(d["run_index"]),
                int(d["exit_code"]),
                0.0,
                Path(d["stdout_path"]),
                Path(d["stderr_path"]),
                str(d["status"]),
            )
            for d in data["outcomes"]
        ]
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"{path}: malformed outcomes: {exc}") from None


def collect_cluster_outcomes(plan: Sequence[RunTask]) -> list[RunOutcome]:
    """Rebuild outcomes from the ``exit-code`` files cluster jobs leave in
    each run directory. Runs without one count as failed."""
    outcomes = []
    for t in plan:
        out = Path(t.output_dir)
        try:
            code = int((out / EXIT_CODE_NAME).read_text().strip())
        except (OSError, ValueError):
            code = -1
        outcomes.append(
            RunOutcome(
                t.exp_index,
                t.run_index,
                code,
                0.0,
                out / STDOUT_NAME,
                out / STDERR_NAME,
                OK if code == 0 else FAILED,
            )
        )
    return outcomes


# ---------------------------------------------------------------------------
# cluster scripts


def _dispatch(plan: Sequence[RunTask], index_var: str) -> list[str]:
    lines = [f'case "${{{index_var}}}" in']
    for i, t in enumerate(plan):
        out = shlex.quote(str(t.output_dir))
        lines += [
            f"  {i})",
            f"    mkdir -p {out}",
            f"    cd {shlex.quote(str(t.working_dir))} || exit 1",
            f"    {shlex.join(t.command)} > {out}/{STDOUT_NAME} 2> {out}/{STDERR_NAME}",
            "    status=$?",
            f"    echo \"$status\" > {out}/{EXIT_CODE_NAME}",
            '    exit "$status"',
            "    ;;",
        ]
    lines += [
        "  *)",
        f'    echo "no task for array index ${{{index_var}}}" >&2',
        "    exit 2",
        "    ;;",
        "esac",
    ]
    return lines


def _directive(prefix: str, text: str) -> str:
    return text if text.startswith("#") else f"{prefix} {text}"


def render_slurm_script(
    plan: Sequence[RunTask], opts: ClusterOptions, layout: DirectoryLayout
) -> str:
    if not plan:
        raise EmptyPlan("cannot render a job script for an empty plan")
    logs = layout.exp_output_root / "cluster-logs"
    lines = [
        "#!/bin/bash",
        f"#SBATCH --job-name={opts.job_name}",
        f"#SBATCH --time={opts.time_limit}",
        f"#SBATCH --array=0-{len(plan) - 1}",
        f"#SBATCH --ntasks-per-node={opts.tasks_per_node}",
        f"#SBATCH --output={logs}/%A_%a.out",
        f"#SBATCH --error={logs}/%A_%a.err",
    ]
    if opts.account:
        lines.append(f"#SBATCH --account={opts.account}")
    lines += [_directive("#SBATCH", d) for d in opts.extra_directives]
    lines += ["", *_dispatch(plan, "SLURM_ARRAY_TASK_ID")]
    return "\n".join(lines) + "\n"


def render_pbs_script(
    plan: Sequence[RunTask], opts: ClusterOptions, layout: DirectoryLayout
) -> str:
    if not plan:
        raise EmptyPlan("cannot render a job script for an empty plan")
    logs = layout.exp_output_root / "cluster-logs"
    lines = [
        "#!/bin/bash",
        f"#PBS -N {opts.job_name}",
        f"#PBS -l walltime={opts.time_limit}",
        f"#PBS -J 0-{len(plan) - 1}",
        f"#PBS -l select=1:ncpus={opts.tasks_per_node}",
        f"#PBS -o {logs}/",
        f"#PBS -e {logs}/",
    ]
    if opts.account:
        lines.append(f"#PBS -A {opts.account}")
    lines += [_directive("#PBS", d) for d in opts.extra_directives]
    lines += ["", *_dispatch(plan, "PBS_ARRAY_INDEX")]
    return "\n".join(lines) + "\n"


def submit(script_path, submitter: str, dry_run: bool) -> SubmissionResult:
    command = (submitter, str(script_path))
    if not Path(script_path).is_file():
        raise PipelineError(f"job script {script_path} does not exist")
    if dry_run:
        return SubmissionResult(command, None, True)
    if shutil.which(submitter) is None:
        raise SubmitterNotFound(f"submitter {submitter!r} not found on PATH")
    try:
        proc = subprocess.run(list(command), capture_output=True, text=True)
    except OSError as exc:
        raise SubmitterNotFound(f"cannot run {submitter!r}: {exc}") from exc
    if proc.returncode != 0:
        raise SubmitFailed(
            f"{submitter} exited with status {proc.returncode}", proc.stderr
        )
    m = re.search(r"\d+", proc.stdout)
    return SubmissionResult(command, m.group(0) if m else None, False, proc.stdout)
