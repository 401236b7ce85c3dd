import difflib

import pytest

from expipe.errors import TransformError
from expipe.generator import GenerationRequest, generate_batch, run_seed
from expipe.model import layout_for, read_manifest
from expipe.query import bind_variable, parse_query
from expipe.xmldoc import SetAttr, parse_xml, resolve_path

from gen_splitmix64 import splitmix64_stream
from helpers import tree_hashes


def test_run_seed_origin_is_mix_of_zero():
    assert run_seed(0, 0, 0) == 0xE220A8397B1DCDAF
    assert run_seed(0, 0, 0) == splitmix64_stream(0, 1)[0]


def test_run_seed_grid_distinct_and_deterministic():
    seeds = [run_seed(42, e, r) for e in range(4) for r in range(5)]
    assert len(set(seeds)) == 20
    assert seeds == [run_seed(42, e, r) for e in range(4) for r in range(5)]


def test_run_seed_formula_against_oracle():
    mask = (1 << 64) - 1
    for base, e, r in [(42, 3, 4), (mask, 1, 0), (7, 0, 9)]:
        x = base ^ ((e * 0x9E3779B97F4A7C15) & mask) ^ ((r * 0xBF58476D1CE4E5B9) & mask)
        assert run_seed(base, e, r) == splitmix64_stream(x, 1)[0]


def _request(tmp_path, template, project, query="population_size.Log8", runs=5, seed=42, batch=()):
    bound = bind_variable(parse_query(query), project.variables)
    return GenerationRequest(template, bound, runs, seed, layout_for(tmp_path / "batch"), tuple(batch))


def test_log8_tree(tmp_path, demo_template, demo_project):
    m = generate_batch(_request(tmp_path, demo_template, demo_project))
    inputs = sorted((tmp_path / "batch" / "exp-inputs").rglob("*.xml"))
    assert len(inputs) == 20
    assert sorted({p.parent.name for p in inputs}) == ["exp-0000-1", "exp-0001-2", "exp-0002-4", "exp-0003-8"]
    assert read_manifest(tmp_path / "batch" / "manifest.json") == m
    doc = parse_xml((tmp_path / "batch/exp-inputs/exp-0003-8/run-0002.xml").read_text())
    (ref,) = resolve_path(doc, "/experiment/population")
    assert doc.node(ref).get("size") == "8"
    assert doc.root.get("seed") == str(run_seed(42, 3, 2))


def test_minimal_batch(tmp_path, demo_template, demo_project):
    generate_batch(_request(tmp_path, demo_template, demo_project, "population_size.Log1", runs=1))
    assert len(list((tmp_path / "batch" / "exp-inputs").rglob("*.xml"))) == 1


def test_regeneration_is_byte_identical(tmp_path, demo_template, demo_project):
    req = _request(tmp_path, demo_template, demo_project)
    generate_batch(req)
    first = tree_hashes(tmp_path / "batch")
    generate_batch(req)
    assert tree_hashes(tmp_path / "batch") == first


def test_stale_experiments_removed(tmp_path, demo_template, demo_project):
    generate_batch(_request(tmp_path, demo_template, demo_project))
    generate_batch(_request(tmp_path, demo_template, demo_project, "population_size.Log2"))
    assert sorted(p.name for p in (tmp_path / "batch" / "exp-inputs").iterdir()) == ["exp-0000-1", "exp-0001-2"]


def test_runs_differ_only_in_seed(tmp_path, demo_template, demo_project):
    generate_batch(_request(tmp_path, demo_template, demo_project))
    d = tmp_path / "batch/exp-inputs/exp-0002-4"
    a = (d / "run-0000.xml").read_text().splitlines()
    b = (d / "run-0003.xml").read_text().splitlines()
    changed = [i for i, (x, y) in enumerate(zip(a, b)) if x != y]
    assert len(a) == len(b) and len(changed) == 1
    assert a[changed[0]].startswith("<experiment ") and "seed=" in a[changed[0]]


def test_experiments_differ_by_value_transform(tmp_path, demo_template, demo_project):
    generate_batch(_request(tmp_path, demo_template, demo_project))
    a = (tmp_path / "batch/exp-inputs/exp-0000-1/run-0000.xml").read_text().splitlines()
    b = (tmp_path / "batch/exp-inputs/exp-0001-2/run-0000.xml").read_text().splitlines()
    changed = [(x.strip(), y.strip()) for x, y in zip(a, b) if x != y]
    # the population size and the root seed
    assert len(changed) == 2
    assert ('<population size="1"/>', '<population size="2"/>') in changed


def test_batch_transforms_then_value_precedence(tmp_path, demo_template, demo_project):
    batch = [SetAttr("/experiment/controller", "rate", "0.1"),
             SetAttr("/experiment/population", "size", "999")]
    generate_batch(_request(tmp_path, demo_template, demo_project, batch=batch))
    text = (tmp_path / "batch/exp-inputs/exp-0001-2/run-0000.xml").read_text()
    assert 'rate="0.1"' in text
    assert 'size="2"' in text and "999" not in text


def test_set_criteria_with_cases(tmp_path, demo_template, demo_project):
    generate_batch(_request(tmp_path, demo_template, demo_project, "arena.Set{small,large}", runs=2))
    text = (tmp_path / "batch/exp-inputs/exp-0001-large/run-0001.xml").read_text()
    assert '<arena shape="rectangle" size="40"/>' in text


def test_transform_error_names_experiment(tmp_path, demo_template, demo_project):
    from expipe.query import VariableDefinition

    demo_project.variables["bad"] = VariableDefinition("bad", case_transforms={
        "ok": (), "broken": (SetAttr("/experiment/missing", "x", "1"),)})
    with pytest.raises(TransformError, match="experiment 1"):
        generate_batch(_request(tmp_path, demo_template, demo_project, "bad.Set{ok,broken}"))
    assert not (tmp_path / "batch" / "manifest.json").exists()
