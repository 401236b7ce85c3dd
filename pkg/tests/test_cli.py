import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from expipe.cli import main, parse_cli
from expipe.errors import NotPowerOfTwo, UsageError
from expipe.pipeline import PipelineConfig, run_pipeline
from expipe.query import Log
from expipe.stats import Reducer

from helpers import tree_hashes


def test_parse_defaults(tmp_path):
    cfg = parse_cli(["--batch-criteria", "population_size.Log8", "--batch-root", str(tmp_path)])
    assert cfg.query.range == Log(8)
    assert cfg.stages == (1, 2, 3, 4)
    assert (cfg.n_runs, cfg.base_seed, cfg.platform_name, cfg.exec_env) == (4, 0, "mockplat", "local")
    assert cfg.parallelism == (os.cpu_count() or 1)
    assert cfg.template_path.name == "demo-template.xml"


def test_parse_flags(tmp_path):
    cfg = parse_cli(["--pipeline", "1-3,5", "--batch-criteria", "population_size.Log2", "--n-runs", "7",
                     "--seed", str(2**64 - 1), "--reducer", "max_over_time:cumulative_blocks",
                     "--compare", "a=/x", "--compare", "b=/y", "--dry-run", "--batch-root", str(tmp_path)])
    assert cfg.stages == (1, 2, 3, 5)
    assert cfg.reducer == Reducer("max_over_time", "cumulative_blocks")
    assert cfg.compare == [("a", Path("/x")), ("b", Path("/y"))]
    assert cfg.dry_run and cfg.base_seed == 2**64 - 1


@pytest.mark.parametrize(
    "argv",
    [
        ["--batch-criteria", "p.Log8", "--n-runs", "0"],
        ["--batch-criteria", "p.Log8", "--parallelism", "0"],
        ["--batch-criteria", "p.Log8", "--seed", "-1"],
        ["--batch-criteria", "p.Log8", "--pipeline", "6"],
        ["--batch-criteria", "p.Log8", "--exec-env", "cloud"],
        ["--batch-criteria", "p.Log8", "--reducer", "median:x"],
        ["--batch-criteria", "p.Log8", "--compare", "nolabel"],
        ["--batch-criteria", "p.Log8", "--template", "/does/not/exist.xml"],
        ["--pipeline", "1"],
        ["--bogus"],
    ],
)
def test_usage_errors(argv, tmp_path):
    with pytest.raises(UsageError):
        parse_cli(argv + ["--batch-root", str(tmp_path)])


def test_dsl_errors_surface_verbatim(tmp_path):
    with pytest.raises(NotPowerOfTwo):
        parse_cli(["--batch-criteria", "p.Log6", "--batch-root", str(tmp_path)])


def test_stage3_parses_but_fails_at_run_time(tmp_path):
    cfg = parse_cli(["--pipeline", "3", "--batch-root", str(tmp_path / "empty")])
    report = run_pipeline(cfg)
    assert [(s.stage, s.status) for s in report.stages] == [(3, "failed")]
    assert "stage 3: prerequisite missing" in report.stages[0].error
    assert not report.ok


def test_main_exit_codes(tmp_path, capsys):
    assert main(["--n-runs", "0", "--batch-criteria", "p.Log2", "--batch-root", str(tmp_path)]) == 2
    assert main(["--pipeline", "2", "--batch-root", str(tmp_path / "none")]) == 1
    assert "failed" in capsys.readouterr().out


def test_failed_stage_skips_rest(tmp_path):
    report = run_pipeline(parse_cli(["--pipeline", "2-4", "--batch-root", str(tmp_path)]))
    assert [s.status for s in report.stages] == ["failed", "skipped", "skipped"]


def test_full_run_report_and_monotonic_stages(tmp_path):
    root = tmp_path / "batch"
    base = ["--batch-criteria", "population_size.Log2", "--n-runs", "2", "--seed", "3",
            "--batch-root", str(root), "--parallelism", "2"]
    subtree = {1: ("exp-inputs", "manifest.json"), 2: ("exp-outputs",), 3: ("statistics",), 4: ("deliverables",)}
    before = {}
    for stage in (1, 2, 3, 4):
        report_path = tmp_path / f"r{stage}.json"
        assert main(base + ["--pipeline", str(stage), "--report-json", str(report_path)]) == 0
        after = tree_hashes(root)
        changed = {k for k in after if before.get(k) != after[k]}
        assert changed and all(k.startswith(subtree[stage]) for k in changed), (stage, changed)
        before = after
        report = json.loads(report_path.read_text())
        assert report["ok"] and report["stages"][0]["status"] == "ok"


def test_custom_platform_and_project(tmp_path):
    """A user platform manifest driving a python script, with a project
    file providing the template, variable and batch-uniform transform."""
    proj = tmp_path / "proj"
    (proj / "platforms").mkdir(parents=True)
    (proj / "sim.py").write_text(
        "import sys, pathlib, xml.etree.ElementTree as ET\n"
        "inp, out = sys.argv[1], pathlib.Path(sys.argv[2])\n"
        "n = int(ET.parse(inp).find('knob').get('n'))\n"
        "(out / 'res.csv').write_text('t,val\\n' + ''.join(f'{t},{t * n}\\n' for t in range(3)))\n"
    )
    (proj / "platforms" / "pysim.toml").write_text(
        f'name = "pysim"\nlaunch = ["{sys.executable}", "{proj / "sim.py"}", "{{input}}", "{{output_dir}}"]\n'
        'expected_outputs = ["res.csv"]\ntimeout = 30\n'
    )
    (proj / "t.xml").write_text('<cfg><knob n="0"/><misc/></cfg>')
    (proj / "project.toml").write_text(
        'template = "t.xml"\nplatforms_dir = "platforms"\n'
        'batch_transforms = [{op = "remove", path = "/cfg/misc"}]\n'
        '[variables.n]\ntransforms = [{op = "set_attr", path = "/cfg/knob", attr = "n", value = "{value}"}]\n'
    )
    root = tmp_path / "batch"
    rc = main(["--project", str(proj / "project.toml"), "--platform", "pysim", "--batch-criteria", "n.Linear6.C3",
               "--n-runs", "2", "--batch-root", str(root), "--reducer", "final_row:val"])
    assert rc == 0
    assert (root / "statistics" / "summary-final_row-val.csv").read_text() == (
        "criteria,value,spread\n2,4,0\n4,8,0\n6,12,0\n")
    assert "<misc" not in (root / "exp-inputs" / "exp-0000-2" / "run-0000.xml").read_text()


def test_slurm_dry_run_and_cluster_collection(tmp_path):
    root = tmp_path / "batch"
    base = ["--batch-criteria", "population_size.Log2", "--n-runs", "2", "--batch-root", str(root)]
    assert main(base + ["--pipeline", "1,2", "--exec-env", "slurm", "--dry-run"]) == 0
    script = root / "exp-outputs" / "job.slurm.sh"
    assert "#SBATCH --array=0-3" in script.read_text()
    # emulate the cluster by running every array task locally
    for i in range(4):
        subprocess.run(["bash", str(script)], env={**os.environ, "SLURM_ARRAY_TASK_ID": str(i)}, check=True)
    assert main(base + ["--pipeline", "3,4"]) == 0
    outcomes = json.loads((root / "exp-outputs" / "exec-outcomes.json").read_text())["outcomes"]
    assert [o["status"] for o in outcomes] == ["ok"] * 4


def test_pbs_dry_run(tmp_path):
    root = tmp_path / "batch"
    assert main(["--batch-criteria", "population_size.Log4", "--n-runs", "1", "--batch-root", str(root),
                 "--pipeline", "1,2", "--exec-env", "pbs", "--dry-run"]) == 0
    assert "#PBS -J 0-2" in (root / "exp-outputs" / "job.pbs.sh").read_text()


def test_stage5_needs_two_inputs(tmp_path):
    report = run_pipeline(parse_cli(["--pipeline", "5", "--compare", f"a={tmp_path}"]))
    assert report.stages[0].status == "failed"


def test_python_dash_m_entry(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "expipe", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "Log<N>" in proc.stdout
