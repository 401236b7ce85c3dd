"""Command-line driver.

Exit codes: 0 when every requested stage succeeded, 1 when a stage failed,
2 on a usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import re
import sys
from pathlib import Path

from .errors import PipelineError, UsageError
from .model import U64_MAX
from .pipeline import PipelineConfig, run_pipeline
from .platform import MOCK_PLATFORM, mockplat_main
from .project import ProjectConfig, demo_project_path, demo_template_path, load_project
from .query import parse_query
from .stats import Reducer

log = logging.getLogger("expipe")

EPILOG = """\
batch criteria grammar:
  <name>.Log<N>          1, 2, 4, ..., N        (N a power of two)
  <name>.Linear<N>.C<K>  N/K, 2N/K, ..., N      (K divides N)
  <name>.Set{a,b,...}    the listed labels, in order
  e.g. population_size.Log8 sweeps population_size over 1, 2, 4, 8.

XML paths in project manifests: /tag/tag[@attr='value']/tag[n]

stages: 1 generate, 2 execute, 3 statistics, 4 deliverables, 5 compare.
The built-in platform runs as `expipe mockplat --input X --output-dir D`.
"""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(message)


def _build_parser() -> argparse.ArgumentParser:
    p = _Parser(
        prog="expipe",
        description="Generate, run, aggregate and plot batch experiments.",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("--pipeline", default="1,2,3,4", help="stages to run, e.g. 1,2,3 or 1-4 (default 1-4)")
    p.add_argument("--template", type=Path, help="template XML (default: built-in demo for mockplat)")
    p.add_argument("--batch-criteria", help="research query, e.g. population_size.Log8")
    p.add_argument("--n-runs", type=int, default=4, help="runs per experiment (default 4)")
    p.add_argument("--seed", type=int, default=0, help="base seed, 0..2^64-1 (default 0)")
    p.add_argument("--platform", default=MOCK_PLATFORM, help="platform name or manifest path")
    p.add_argument("--exec-env", choices=("local", "slurm", "pbs"), default="local")
    p.add_argument("--parallelism", type=int, default=os.cpu_count() or 1)
    p.add_argument("--batch-root", type=Path, help="batch directory (default expipe-output/<criteria>)")
    p.add_argument("--project", type=Path, help="project manifest TOML")
    p.add_argument("--reducer", help="<final_row|mean_over_time|max_over_time>:<column>")
    p.add_argument("--compare", action="append", default=[], metavar="LABEL=PATH",
                   help="batch root or summary CSV to compare (repeatable)")
    p.add_argument("--compare-out", type=Path, help="directory for the comparison graph")
    p.add_argument("--dry-run", action="store_true", help="render but do not run or submit")
    p.add_argument("--report-json", type=Path, help="write the stage report as JSON here")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _parse_stages(text: str) -> tuple[int, ...]:
    stages: set[int] = set()
    for part in text.split(","):
        part = part.strip()
        m = re.fullmatch(r"([1-5])(?:-([1-5]))?", part)
        if not m:
            raise UsageError(f"--pipeline: bad stage list {text!r}")
        lo = int(m.group(1))
        hi = int(m.group(2) or lo)
        if hi < lo:
            raise UsageError(f"--pipeline: bad range {part!r}")
        stages.update(range(lo, hi + 1))
    return tuple(sorted(stages))


def _sanitize(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.\-]+", "_", text).strip("_")


def parse_cli(argv: list[str]) -> PipelineConfig:
    """Validate everything up front; nothing touches the filesystem except
    reading the project manifest."""
    args = _build_parser().parse_args(argv)
    stages = _parse_stages(args.pipeline)
    if args.n_runs < 1:
        raise UsageError("--n-runs must be >= 1")
    if args.parallelism < 1:
        raise UsageError("--parallelism must be >= 1")
    if not 0 <= args.seed <= U64_MAX:
        raise UsageError("--seed must be in 0..2^64-1")

    query = parse_query(args.batch_criteria) if args.batch_criteria else None
    if 1 in stages and query is None:
        raise UsageError("--batch-criteria is required for stage 1")

    try:
        if args.project is not None:
            if not args.project.is_file():
                raise UsageError(f"--project: {args.project} not found")
            project = load_project(args.project)
        elif args.platform == MOCK_PLATFORM:
            project = load_project(demo_project_path())
        else:
            project = ProjectConfig()
    except PipelineError as exc:
        if isinstance(exc, UsageError):
            raise
        raise UsageError(f"--project: {exc}") from None

    template = args.template or project.template
    if template is None and args.platform == MOCK_PLATFORM:
        template = demo_template_path()
    if 1 in stages:
        if template is None:
            raise UsageError("--template is required for stage 1")
        if not Path(template).is_file():
            raise UsageError(f"--template: {template} not found")

    reducer = None
    if args.reducer:
        try:
            reducer = Reducer.parse(args.reducer)
        except ValueError as exc:
            raise UsageError(f"--reducer: {exc}") from None

    compare = []
    for item in args.compare:
        label, sep, path = item.partition("=")
        if not sep or not label or not path:
            raise UsageError(f"--compare expects LABEL=PATH, got {item!r}")
        compare.append((label, Path(path)))

    batch_root = args.batch_root
    if batch_root is None and any(s <= 4 for s in stages):
        if query is None:
            raise UsageError("--batch-root is required without --batch-criteria")
        batch_root = Path("expipe-output") / _sanitize(str(query))

    return PipelineConfig(
        stages=stages,
        batch_root=Path(batch_root).absolute() if batch_root is not None else None,
        query=query,
        template_path=Path(template).absolute() if template is not None else None,
        n_runs=args.n_runs,
        base_seed=args.seed,
        platform_name=args.platform,
        exec_env=args.exec_env,
        parallelism=args.parallelism,
        project=project,
        reducer=reducer,
        compare=compare,
        compare_out=args.compare_out,
        dry_run=args.dry_run,
        report_json=args.report_json,
    )


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] == MOCK_PLATFORM:
        return mockplat_main(argv[1:])
    verbose = "-v" in argv or "--verbose" in argv
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = parse_cli(argv)
    except PipelineError as exc:
        print(f"expipe: error: {exc}", file=sys.stderr)
        return 2
    report = run_pipeline(cfg)
    print(report.format())
    if cfg.report_json is not None:
        cfg.report_json.write_text(json.dumps(report.as_dict(), indent=2) + "\n", encoding="utf-8")
    return 0 if report.ok else 1
