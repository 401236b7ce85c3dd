import hashlib
from pathlib import Path


def tree_hashes(root: Path) -> dict[str, str]:
    return {
        str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(Path(root).rglob("*"))
        if p.is_file()
    }


def demo_plan():
    """Fixed 20-task plan (4 experiments x 5 runs) used for script goldens."""
    from expipe.executor import RunTask
    from expipe.model import experiment_dirname, layout_for

    layout = layout_for("/scratch/demo")
    tasks = []
    for e, label in enumerate(["1", "2", "4", "8"]):
        for r in range(5):
            out = layout.exp_output_dir(e, label) / f"run-{r:04d}"
            inp = layout.exp_input_root / experiment_dirname(e, label) / f"run-{r:04d}.xml"
            tasks.append(RunTask(e, r, ("argos3", "-c", str(inp), "--log-dir", str(out)), out, out, 3600))
    return tasks, layout


def demo_cluster_options(env: str):
    from expipe.executor import ClusterOptions

    extra = ("--mem=1G",) if env == "slurm" else ("-m abe",)
    return ClusterOptions(job_name="demo", time_limit="02:00:00", tasks_per_node=2,
                          account="proj42", extra_directives=extra)
