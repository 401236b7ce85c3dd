import json
import os
from pathlib import Path

import pytest
from hypothesis import given, strategies as st

from expipe.errors import ArtifactIOError, InvalidPath, InvariantError, ParseError, SchemaError
from expipe.model import (
    BatchManifest,
    CriteriaValue,
    ExperimentSpec,
    RunSpec,
    experiment_dirname,
    layout_for,
    manifest_to_dict,
    read_manifest,
    write_manifest,
)
from expipe.xmldoc import SetAttr


def test_layout_paths():
    layout = layout_for("/tmp/b")
    assert layout.exp_input_root == Path("/tmp/b/exp-inputs")
    assert layout.exp_output_root == Path("/tmp/b/exp-outputs")
    assert layout.statistics_root == Path("/tmp/b/statistics")
    assert layout.deliverables_root == Path("/tmp/b/deliverables")
    paths = [layout.batch_root, layout.exp_input_root, layout.exp_output_root,
             layout.statistics_root, layout.deliverables_root]
    assert len(set(paths)) == 5
    assert all(p == layout.batch_root or layout.batch_root in p.parents for p in paths)


def test_layout_is_pure(tmp_path):
    root = tmp_path / "not-there"
    assert layout_for(root) == layout_for(root)
    assert not root.exists()


def test_layout_empty_path():
    with pytest.raises(InvalidPath):
        layout_for("")


def test_experiment_dirname():
    # indices are zero-padded so lexicographic listing keeps experiment order
    assert experiment_dirname(3, "8") == "exp-0003-8"
    assert layout_for("/b").exp_input_dir(3, "8") == Path("/b/exp-inputs/exp-0003-8")


@given(st.tuples(st.integers(0, 9999), st.from_regex(r"[A-Za-z0-9_-]{1,8}", fullmatch=True)),
       st.tuples(st.integers(0, 9999), st.from_regex(r"[A-Za-z0-9_-]{1,8}", fullmatch=True)))
def test_dirname_injective(a, b):
    if a != b:
        assert experiment_dirname(*a) != experiment_dirname(*b)


def test_label_invariant():
    with pytest.raises(InvariantError):
        CriteriaValue("a b")
    with pytest.raises(InvariantError):
        CriteriaValue("")


def make_manifest(root: Path, n_exp: int = 4, n_runs: int = 2) -> BatchManifest:
    layout = layout_for(root)
    values = tuple(CriteriaValue(str(2**i), 2**i) for i in range(n_exp))
    exps = []
    seed = 1 << 63
    for i, v in enumerate(values):
        runs = []
        for r in range(n_runs):
            seed += 1
            runs.append(RunSpec(r, seed, layout.exp_input_dir(i, v.label) / f"run-{r:04d}.xml",
                                layout.exp_output_dir(i, v.label) / f"run-{r:04d}"))
        exps.append(ExperimentSpec(i, v, (SetAttr("/e/p", "size", v.label),), tuple(runs)))
    return BatchManifest("population_size.Log8", "population_size", values, Path("/t.xml"),
                         n_runs, (1 << 64) - 1, "mockplat", tuple(exps)).validate()


def test_round_trip_and_determinism(tmp_path):
    m = make_manifest(tmp_path)
    layout = layout_for(tmp_path)
    path = write_manifest(m, layout)
    first = path.read_bytes()
    write_manifest(m, layout)
    assert path.read_bytes() == first
    assert read_manifest(path) == m
    data = json.loads(first)
    assert len(data["experiments"]) == 4
    assert data["base_seed"] == str((1 << 64) - 1)
    assert b"\r" not in first
    assert list(data) == sorted(data)


@given(st.integers(1, 5), st.integers(1, 4))
def test_round_trip_property(n_exp, n_runs):
    import tempfile

    with tempfile.TemporaryDirectory() as d:
        m = make_manifest(Path(d), n_exp, n_runs)
        assert read_manifest(write_manifest(m, layout_for(d))) == m


def test_invariant_violation_on_read(tmp_path):
    d = manifest_to_dict(make_manifest(tmp_path))
    d["experiments"].pop()
    (tmp_path / "manifest.json").write_text(json.dumps(d))
    with pytest.raises(InvariantError):
        read_manifest(tmp_path / "manifest.json")


def test_duplicate_seeds_rejected(tmp_path):
    d = manifest_to_dict(make_manifest(tmp_path))
    d["experiments"][1]["runs"][0]["seed"] = d["experiments"][0]["runs"][0]["seed"]
    (tmp_path / "manifest.json").write_text(json.dumps(d))
    with pytest.raises(InvariantError):
        read_manifest(tmp_path)


def test_truncated_and_missing_fields(tmp_path):
    path = write_manifest(make_manifest(tmp_path), layout_for(tmp_path))
    text = path.read_text()
    path.write_text(text[: len(text) // 2])
    with pytest.raises(ParseError):
        read_manifest(path)
    d = manifest_to_dict(make_manifest(tmp_path))
    del d["platform_name"]
    path.write_text(json.dumps(d))
    with pytest.raises(SchemaError):
        read_manifest(path)


@pytest.mark.skipif(os.geteuid() == 0, reason="root ignores directory permissions")
def test_unwritable_directory(tmp_path):
    tmp_path.chmod(0o500)
    try:
        with pytest.raises(ArtifactIOError):
            write_manifest(make_manifest(tmp_path), layout_for(tmp_path))
    finally:
        tmp_path.chmod(0o700)


def test_missing_directory_is_io_error(tmp_path):
    with pytest.raises(ArtifactIOError):
        write_manifest(make_manifest(tmp_path), layout_for(tmp_path / "nope" / "deeper"))
