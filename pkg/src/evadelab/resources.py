"""Access to data files bundled with the package."""

from __future__ import annotations

from importlib import resources
from pathlib import Path


def _data_root() -> Path:
    return Path(str(resources.files("evadelab") / "data"))


def fixture_docs_dir() -> Path:
    """Directory of the bundled miniature documentation corpus."""
    return _data_root() / "docs"


def scenarios_dir() -> Path:
    """Directory of the bundled scripted-backend scenario files."""
    return _data_root() / "scenarios"
