"""Stage 1: expand a bound variable and a template into the on-disk batch."""

from __future__ import annotations

import shutil
from dataclasses import dataclass
from pathlib import Path

from .errors import ArtifactIOError, TransformError
from .model import (
    BatchManifest,
    DirectoryLayout,
    ExperimentSpec,
    RunSpec,
    run_basename,
    write_manifest,
    write_text_atomic,
)
from .platform import MASK64, mix64
from .query import BoundVariable
from .xmldoc import (
    SetAttr,
    Step,
    Transform,
    XmlDoc,
    XmlPath,
    apply_transforms,
    parse_xml,
    serialize_xml,
)

SEED_ATTR = "seed"
_EXP_STRIDE = 0x9E3779B97F4A7C15
_RUN_STRIDE = 0xBF58476D1CE4E5B9


def run_seed(base_seed: int, exp_index: int, run_index: int) -> int:
    x = base_seed ^ ((exp_index * _EXP_STRIDE) & MASK64) ^ ((run_index * _RUN_STRIDE) & MASK64)
    return mix64(x)


@dataclass(frozen=True)
class GenerationRequest:
    template_path: Path
    bound: BoundVariable
    runs_per_experiment: int
    base_seed: int
    layout: DirectoryLayout
    batch_transforms: tuple[Transform, ...] = ()
    platform_name: str = "mockplat"

    def __post_init__(self) -> None:
        if self.runs_per_experiment < 1:
            raise ValueError("runs_per_experiment must be >= 1")


def _load_template(path: Path) -> XmlDoc:
    try:
        return parse_xml(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ArtifactIOError(f"cannot read template {path}: {exc}") from exc


def generate_batch(req: GenerationRequest) -> BatchManifest:
    """Write ``exp-inputs/exp-<i>-<label>/run-<r>.xml`` for every
    experiment and run, then ``manifest.json``.

    Transforms apply in order: batch-uniform, per-value, then the run seed
    on the root element. Later ones may overwrite earlier ones.
    """
    layout = req.layout
    template = _load_template(req.template_path)
    seed_path = XmlPath((Step(template.root.tag),))

    try:
        baseline = apply_transforms(template, req.batch_transforms)
    except TransformError as exc:
        raise TransformError(f"batch transform failed: {exc}", exc.path) from exc

    docs = []
    for index, (value, transforms) in enumerate(req.bound.per_value_transforms):
        try:
            docs.append(apply_transforms(baseline, transforms))
        except TransformError as exc:
            raise TransformError(
                f"experiment {index} ({value.label}): {exc}", exc.path
            ) from exc

    # always a full rewrite; stale experiments from an earlier query must not linger
    try:
        if layout.exp_input_root.exists():
            shutil.rmtree(layout.exp_input_root)
    except OSError as exc:
        raise ArtifactIOError(f"cannot clear {layout.exp_input_root}: {exc}") from exc

    experiments = []
    for index, ((value, transforms), doc) in enumerate(
        zip(req.bound.per_value_transforms, docs)
    ):
        in_dir = layout.exp_input_dir(index, value.label)
        out_dir = layout.exp_output_dir(index, value.label)
        try:
            in_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ArtifactIOError(f"cannot create {in_dir}: {exc}") from exc
        runs = []
        for r in range(req.runs_per_experiment):
            seed = run_seed(req.base_seed, index, r)
            run_doc = apply_transforms(doc, [SetAttr(seed_path, SEED_ATTR, str(seed))])
            input_path = in_dir / f"{run_basename(r)}.xml"
            write_text_atomic(input_path, serialize_xml(run_doc))
            runs.append(RunSpec(r, seed, input_path, out_dir / run_basename(r)))
        experiments.append(ExperimentSpec(index, value, tuple(transforms), tuple(runs)))

    manifest = BatchManifest(
        query_text=str(req.bound.query),
        variable_name=req.bound.query.variable_name,
        values=tuple(req.bound.values),
        template_path=Path(req.template_path),
        runs_per_experiment=req.runs_per_experiment,
        base_seed=req.base_seed,
        platform_name=req.platform_name,
        experiments=tuple(experiments),
    ).validate()
    write_manifest(manifest, layout)
    return manifest
