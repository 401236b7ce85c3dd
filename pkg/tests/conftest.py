from __future__ import annotations

import sys
from pathlib import Path

import pytest

from expipe.project import demo_project_path, demo_template_path, load_project

FIXTURES = Path(__file__).parent / "fixtures"
sys.path.insert(0, str(FIXTURES))


@pytest.fixture
def demo_template() -> Path:
    return demo_template_path()


@pytest.fixture
def demo_project():
    return load_project(demo_project_path())


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES
