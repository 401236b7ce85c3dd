"""Platforms: declarative launch-command manifests and the built-in
``mockplat`` simulator.

A platform manifest is a TOML file::

    name = "argos"
    launch = ["argos3", "-c", "{input}"]
    expected_outputs = ["blocks-collected.csv"]
    timeout = 3600

Supported placeholders are ``{input}``, ``{output_dir}``, ``{seed}`` and
``{run_id}``. Commands are argv lists and never pass through a shell.

This module must stay importable without numpy: every mock run is a fresh
interpreter and startup cost dominates.
"""

from __future__ import annotations

import re
import sys
from dataclasses import dataclass
from pathlib import Path

from .errors import (
    ArtifactIOError,
    MissingPlaceholder,
    ParseError,
    PlatformError,
    ReservedName,
    SchemaError,
    UnknownPlaceholder,
)
from .xmldoc import XmlDoc, parse_xml, resolve_path

MOCK_PLATFORM = "mockplat"
DEFAULT_TIMEOUT = 3600
PLACEHOLDERS = ("input", "output_dir", "seed", "run_id")
SELF_INVOCATION = (sys.executable, "-m", "expipe")
MOCK_OUTPUT = "blocks-collected.csv"

_TOKEN_RE = re.compile(r"\{([^{}]*)\}")
MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class PlatformDef:
    name: str
    launch_template: tuple[str, ...]
    expected_outputs: tuple[str, ...] = ()
    timeout_seconds: int = DEFAULT_TIMEOUT

    def __post_init__(self) -> None:
        if not self.launch_template:
            raise PlatformError(f"platform {self.name!r}: launch template is empty")
        if not any("{input}" in part for part in self.launch_template):
            raise MissingPlaceholder(
                f"platform {self.name!r}: launch template never references {{input}}"
            )
        for part in self.launch_template:
            _check_tokens(part)
        if self.timeout_seconds < 1:
            raise PlatformError(f"platform {self.name!r}: timeout must be positive")


def _check_tokens(part: str) -> None:
    for token in _TOKEN_RE.findall(part):
        if token not in PLACEHOLDERS:
            raise UnknownPlaceholder(
                f"unknown placeholder {{{token}}} in {part!r}; "
                f"supported: {', '.join('{' + p + '}' for p in PLACEHOLDERS)}"
            )


def mock_platform() -> PlatformDef:
    return PlatformDef(
        name=MOCK_PLATFORM,
        launch_template=SELF_INVOCATION
        + (MOCK_PLATFORM, "--input", "{input}", "--output-dir", "{output_dir}"),
        expected_outputs=(MOCK_OUTPUT,),
    )


def _load_toml(path: Path) -> dict:
    try:
        import tomllib
    except ModuleNotFoundError:  # python < 3.11
        import tomli as tomllib
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ArtifactIOError(f"cannot read {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None


def load_platform_manifest(path) -> PlatformDef:
    data = _load_toml(Path(path))
    try:
        name = str(data["name"])
        launch = tuple(str(a) for a in data["launch"])
    except KeyError as exc:
        raise SchemaError(f"{path}: missing key {exc.args[0]!r}") from None
    if name == MOCK_PLATFORM:
        raise ReservedName(f"{path}: platform name {MOCK_PLATFORM!r} is built in")
    return PlatformDef(
        name=name,
        launch_template=launch,
        expected_outputs=tuple(str(o) for o in data.get("expected_outputs", ())),
        timeout_seconds=int(data.get("timeout", DEFAULT_TIMEOUT)),
    )


def resolve_platform(name: str, platforms_dir: Path | None = None) -> PlatformDef:
    """Look up a platform by name (built-in, ``<platforms_dir>/<name>.toml``)
    or by direct path to a manifest."""
    if name == MOCK_PLATFORM:
        return mock_platform()
    candidate = Path(name)
    if candidate.suffix == ".toml" and candidate.is_file():
        return load_platform_manifest(candidate)
    if platforms_dir is not None and (Path(platforms_dir) / f"{name}.toml").is_file():
        return load_platform_manifest(Path(platforms_dir) / f"{name}.toml")
    raise PlatformError(f"unknown platform {name!r}")


def default_run_id(run) -> str:
    p = Path(run.input_path)
    return f"{p.parent.name}.{p.stem}"


def render_launch_command(pdef: PlatformDef, run, run_id: str | None = None) -> list[str]:
    values = {
        "input": str(run.input_path),
        "output_dir": str(run.output_dir),
        "seed": str(run.seed),
        "run_id": run_id if run_id is not None else default_run_id(run),
    }

    def sub(m: re.Match) -> str:
        token = m.group(1)
        if token not in values:
            raise UnknownPlaceholder(f"unknown placeholder {{{token}}}")
        return values[token]

    return [_TOKEN_RE.sub(sub, part) for part in pdef.launch_template]


# ---------------------------------------------------------------------------
# splitmix64

GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def splitmix64_next(state: int) -> tuple[int, int]:
    """Advance a splitmix64 state; returns ``(new_state, output)``."""
    state = (state + GOLDEN_GAMMA) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def mix64(x: int) -> int:
    """One splitmix64 step from state ``x``; ``mix64(0) == 0xE220A8397B1DCDAF``."""
    return splitmix64_next(x & MASK64)[1]


class SplitMix64:
    def __init__(self, seed: int) -> None:
        self.state = seed & MASK64

    def next(self) -> int:
        self.state, out = splitmix64_next(self.state)
        return out

    def unit(self) -> float:
        """Uniform double in [0, 1) from the top 53 bits."""
        return (self.next() >> 11) * 2.0**-53


# ---------------------------------------------------------------------------
# mock platform


@dataclass(frozen=True)
class MockWorldConfig:
    population_size: int
    duration_ticks: int
    collect_rate: float
    seed: int

    def __post_init__(self) -> None:
        if self.population_size < 1 or self.duration_ticks < 1:
            raise PlatformError("mock world needs population size and duration >= 1")
        if not 0.0 <= self.collect_rate <= 1.0:
            raise PlatformError(f"collect rate {self.collect_rate} outside [0, 1]")

    @classmethod
    def from_doc(cls, doc: XmlDoc) -> "MockWorldConfig":
        def read(path: str, attr: str) -> str:
            refs = resolve_path(doc, path)
            value = doc.node(refs[0]).get(attr) if len(refs) == 1 else None
            if value is None:
                raise PlatformError(f"mock input lacks a unique {path}@{attr}")
            return value

        try:
            return cls(
                population_size=int(read("/experiment/population", "size")),
                duration_ticks=int(read("/experiment/duration", "ticks")),
                collect_rate=float(read("/experiment/controller", "rate")),
                seed=int(read("/experiment", "seed")),
            )
        except ValueError as exc:
            raise PlatformError(f"bad mock input value: {exc}") from None


def mock_rows(config: MockWorldConfig) -> list[tuple[int, int]]:
    rng = SplitMix64(config.seed)
    p = config.collect_rate
    total = 0
    rows = []
    for tick in range(config.duration_ticks):
        for _ in range(config.population_size):
            if rng.unit() < p:
                total += 1
        rows.append((tick, total))
    return rows


def mockplat_simulate(config: MockWorldConfig, output_dir) -> list[Path]:
    out = Path(output_dir)
    lines = ["tick,cumulative_blocks"]
    lines.extend(f"{tick},{total}" for tick, total in mock_rows(config))
    path = out / MOCK_OUTPUT
    try:
        path.write_bytes(("\n".join(lines) + "\n").encode("ascii"))
    except OSError as exc:
        raise ArtifactIOError(f"cannot write {path}: {exc}") from exc
    return [path]


def mockplat_main(argv: list[str]) -> int:
    """Entry point for ``expipe mockplat --input X --output-dir D``."""
    import argparse

    parser = argparse.ArgumentParser(prog="expipe mockplat")
    parser.add_argument("--input", required=True)
    parser.add_argument("--output-dir", required=True)
    args = parser.parse_args(argv)
    try:
        doc = parse_xml(Path(args.input).read_text(encoding="utf-8"))
        config = MockWorldConfig.from_doc(doc)
        Path(args.output_dir).mkdir(parents=True, exist_ok=True)
        mockplat_simulate(config, args.output_dir)
    except (OSError, PlatformError, ValueError) as exc:
        print(f"mockplat: {exc}", file=sys.stderr)
        return 1
    return 0
