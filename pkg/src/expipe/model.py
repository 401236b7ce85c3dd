"""Batch -> experiment -> run data model, directory layout and the
``manifest.json`` file every stage after generation consumes."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

from .errors import ArtifactIOError, InvalidPath, InvariantError, ParseError, SchemaError
from .xmldoc import Transform, transform_from_dict, transform_to_dict

MANIFEST_NAME = "manifest.json"
_LABEL_RE = re.compile(r"^[A-Za-z0-9_-]+$")
U64_MAX = (1 << 64) - 1


@dataclass(frozen=True)
class CriteriaValue:
    label: str
    scalar: int | None = None

    def __post_init__(self) -> None:
        if not _LABEL_RE.match(self.label):
            raise InvariantError(f"criteria label {self.label!r} must match [A-Za-z0-9_-]+")


@dataclass(frozen=True)
class RunSpec:
    run_index: int
    seed: int
    input_path: Path
    output_dir: Path


@dataclass(frozen=True)
class ExperimentSpec:
    index: int
    criteria_value: CriteriaValue
    transforms: tuple[Transform, ...]
    runs: tuple[RunSpec, ...]

    @property
    def dirname(self) -> str:
        return experiment_dirname(self.index, self.criteria_value.label)


@dataclass(frozen=True)
class BatchManifest:
    query_text: str
    variable_name: str
    values: tuple[CriteriaValue, ...]
    template_path: Path
    runs_per_experiment: int
    base_seed: int
    platform_name: str
    experiments: tuple[ExperimentSpec, ...]

    def validate(self) -> "BatchManifest":
        if self.runs_per_experiment < 1:
            raise InvariantError("runs_per_experiment must be >= 1")
        if len(self.experiments) != len(self.values):
            raise InvariantError(
                f"{len(self.experiments)} experiments for {len(self.values)} criteria values"
            )
        if [e.index for e in self.experiments] != list(range(len(self.values))):
            raise InvariantError("experiment indices must be 0..n-1 in order")
        seeds = set()
        for exp in self.experiments:
            if len(exp.runs) != self.runs_per_experiment:
                raise InvariantError(
                    f"experiment {exp.index} has {len(exp.runs)} runs, "
                    f"expected {self.runs_per_experiment}"
                )
            for run in exp.runs:
                if not 0 <= run.seed <= U64_MAX:
                    raise InvariantError(f"seed {run.seed} outside u64 range")
                seeds.add(run.seed)
        if len(seeds) != len(self.experiments) * self.runs_per_experiment:
            raise InvariantError("run seeds within a batch must be pairwise distinct")
        if not 0 <= self.base_seed <= U64_MAX:
            raise InvariantError("base_seed outside u64 range")
        return self

    def iter_runs(self):
        for exp in self.experiments:
            for run in exp.runs:
                yield exp, run


def experiment_dirname(index: int, label: str) -> str:
    return f"exp-{index:04d}-{label}"


def run_basename(run_index: int) -> str:
    return f"run-{run_index:04d}"


@dataclass(frozen=True)
class DirectoryLayout:
    batch_root: Path
    exp_input_root: Path
    exp_output_root: Path
    statistics_root: Path
    deliverables_root: Path

    def exp_input_dir(self, index: int, label: str) -> Path:
        return self.exp_input_root / experiment_dirname(index, label)

    def exp_output_dir(self, index: int, label: str) -> Path:
        return self.exp_output_root / experiment_dirname(index, label)

    def statistics_dir(self, index: int, label: str) -> Path:
        return self.statistics_root / experiment_dirname(index, label)

    @property
    def manifest_path(self) -> Path:
        return self.batch_root / MANIFEST_NAME


def layout_for(batch_root) -> DirectoryLayout:
    """Pure: computes paths only, never touches the filesystem."""
    if batch_root is None or str(batch_root) == "":
        raise InvalidPath("batch root must be a nonempty path")
    root = Path(batch_root)
    return DirectoryLayout(
        batch_root=root,
        exp_input_root=root / "exp-inputs",
        exp_output_root=root / "exp-outputs",
        statistics_root=root / "statistics",
        deliverables_root=root / "deliverables",
    )


# ---------------------------------------------------------------------------
# canonical JSON


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_text_atomic(path: Path, text: str) -> None:
    """Write UTF-8 text (LF endings) via a sibling temp file and rename."""
    path = Path(path)
    data = text.encode("utf-8")
    try:
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_bytes(data)
        tmp.replace(path)
    except OSError as exc:
        raise ArtifactIOError(f"cannot write {path}: {exc}") from exc


def _value_to_dict(v: CriteriaValue) -> dict:
    return {"label": v.label, "scalar": v.scalar}


def manifest_to_dict(m: BatchManifest) -> dict:
    return {
        "query_text": m.query_text,
        "variable_name": m.variable_name,
        "values": [_value_to_dict(v) for v in m.values],
        "template_path": str(m.template_path),
        "runs_per_experiment": m.runs_per_experiment,
        "base_seed": str(m.base_seed),
        "platform_name": m.platform_name,
        "experiments": [
            {
                "index": e.index,
                "criteria_value": _value_to_dict(e.criteria_value),
                "transforms": [transform_to_dict(t) for t in e.transforms],
                "runs": [
                    {
                        "run_index": r.run_index,
                        "seed": str(r.seed),
                        "input_path": str(r.input_path),
                        "output_dir": str(r.output_dir),
                    }
                    for r in e.runs
                ],
            }
            for e in m.experiments
        ],
    }


def _value_from_dict(d) -> CriteriaValue:
    scalar = d["scalar"]
    if scalar is not None and not isinstance(scalar, int):
        raise SchemaError(f"criteria scalar must be an integer or null, got {scalar!r}")
    return CriteriaValue(d["label"], scalar)


def _seed(text) -> int:
    if not isinstance(text, str) or not text.isdigit():
        raise SchemaError(f"seeds are decimal strings, got {text!r}")
    return int(text)


def manifest_from_dict(d: dict) -> BatchManifest:
    try:
        m = BatchManifest(
            query_text=d["query_text"],
            variable_name=d["variable_name"],
            values=tuple(_value_from_dict(v) for v in d["values"]),
            template_path=Path(d["template_path"]),
            runs_per_experiment=int(d["runs_per_experiment"]),
            base_seed=_seed(d["base_seed"]),
            platform_name=d["platform_name"],
            experiments=tuple(
                ExperimentSpec(
                    index=int(e["index"]),
                    criteria_value=_value_from_dict(e["criteria_value"]),
                    transforms=tuple(transform_from_dict(t) for t in e["transforms"]),
                    runs=tuple(
                        RunSpec(
                            run_index=int(r["run_index"]),
                            seed=_seed(r["seed"]),
                            input_path=Path(r["input_path"]),
                            output_dir=Path(r["output_dir"]),
                        )
                        for r in e["runs"]
                    ),
                )
                for e in d["experiments"]
            ),
        )
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"manifest field missing or malformed: {exc}") from None
    return m.validate()


def write_manifest(manifest: BatchManifest, layout: DirectoryLayout) -> Path:
    path = layout.manifest_path
    write_text_atomic(path, canonical_json(manifest_to_dict(manifest)))
    return path


def read_manifest(path) -> BatchManifest:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ArtifactIOError(f"cannot read {path}: {exc}") from exc
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None
    if not isinstance(data, dict):
        raise SchemaError(f"{path}: top level must be an object")
    return manifest_from_dict(data)
