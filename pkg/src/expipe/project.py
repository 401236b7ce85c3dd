"""Project manifest (TOML): variable definitions and stage defaults.

Schema, all keys optional::

    template = "template.xml"              # relative to this file
    platforms_dir = "platforms"            # <name>.toml platform manifests
    env_passthrough = ["PATH", "HOME"]     # child environment for local runs
    batch_transforms = [ {op = "set_attr", path = "/experiment/controller",
                          attr = "rate", value = "0.1"} ]

    [variables.<name>]
    transforms = [ {op = "set_attr", path = "...", attr = "...", value = "{value}"} ]
    [variables.<name>.cases]
    <label> = [ {op = "add_child", parent = "...", tag = "...", attrs = {...}},
                {op = "remove", path = "..."} ]

    [cluster]
    job_name = "expipe"
    time_limit = "01:00:00"
    tasks_per_node = 1
    account = "proj123"
    extra_directives = ["--mem=2G"]

    [deliverables]
    imagize = ["blocks-collected.csv:cumulative_blocks"]
    fps = 10
    stitch_command = ["ffmpeg", "-i", "{frames_dir}/frame-%06d.svg", "{output}"]
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import SchemaError, TransformError
from .executor import ClusterOptions
from .platform import _load_toml
from .query import VariableDefinition
from .xmldoc import Transform, transform_from_dict


@dataclass
class ProjectConfig:
    path: Path | None = None
    variables: dict[str, VariableDefinition] = field(default_factory=dict)
    batch_transforms: tuple[Transform, ...] = ()
    template: Path | None = None
    platforms_dir: Path | None = None
    env_passthrough: tuple[str, ...] | None = None
    cluster: ClusterOptions = field(default_factory=ClusterOptions)
    imagize: tuple[tuple[str, str], ...] = ()
    fps: int = 10
    stitch_command: tuple[str, ...] | None = None


def demo_template_path() -> Path:
    return Path(str(resources.files("expipe") / "data" / "demo-template.xml"))


def demo_project_path() -> Path:
    return Path(str(resources.files("expipe") / "data" / "demo-project.toml"))


def _transforms(items, where: str) -> tuple[Transform, ...]:
    if not isinstance(items, list):
        raise SchemaError(f"{where} must be a list of transform tables")
    try:
        return tuple(transform_from_dict(d) for d in items)
    except TransformError as exc:
        raise SchemaError(f"{where}: {exc}") from None


def _variable(name: str, table: dict) -> VariableDefinition:
    templates = _transforms(table.get("transforms", []), f"variables.{name}.transforms")
    cases = None
    if "cases" in table:
        cases = {
            str(label): _transforms(items, f"variables.{name}.cases.{label}")
            for label, items in table["cases"].items()
        }
    try:
        return VariableDefinition(name, templates, cases)
    except Exception as exc:
        raise SchemaError(str(exc)) from None


def load_project(path) -> ProjectConfig:
    path = Path(path)
    data = _load_toml(path)
    base = path.parent

    def rel(key: str) -> Path | None:
        return (base / data[key]) if key in data else None

    variables = {
        name: _variable(name, table) for name, table in data.get("variables", {}).items()
    }
    cluster_table = dict(data.get("cluster", {}))
    if "extra_directives" in cluster_table:
        cluster_table["extra_directives"] = tuple(cluster_table["extra_directives"])
    try:
        cluster = ClusterOptions(**cluster_table)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{path}: [cluster]: {exc}") from None

    deliv = data.get("deliverables", {})
    imagize = []
    for item in deliv.get("imagize", []):
        output, sep, column = str(item).partition(":")
        if not sep:
            raise SchemaError(f"{path}: imagize entries look like <output.csv>:<column>")
        imagize.append((output, column))
    stitch = deliv.get("stitch_command")
    env = data.get("env_passthrough")
    return ProjectConfig(
        path=path,
        variables=variables,
        batch_transforms=_transforms(data.get("batch_transforms", []), "batch_transforms"),
        template=rel("template"),
        platforms_dir=rel("platforms_dir"),
        env_passthrough=tuple(env) if env is not None else None,
        cluster=cluster,
        imagize=tuple(imagize),
        fps=int(deliv.get("fps", 10)),
        stitch_command=tuple(stitch) if stitch else None,
    )
