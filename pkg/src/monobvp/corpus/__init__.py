"""Built-in problem files."""

import json
from importlib import resources
from pathlib import Path

from ..problem import ProblemSpec


def _root():
    return resources.files(__name__)


def corpus_list() -> list:
    """Catalog entries: name, file, note, expected CLI exit code, known lambda1."""
    return json.loads((_root() / "catalog.json").read_text())


def corpus_names() -> list:
    return [entry["name"] for entry in corpus_list()]


def corpus_path(name: str) -> Path:
    for entry in corpus_list():
        if entry["name"] == name:
            return Path(str(_root() / entry["file"]))
    raise KeyError(f"no corpus problem named {name!r}")


def load(name: str, mesh_size: int = None) -> ProblemSpec:
    spec = ProblemSpec.from_json(corpus_path(name))
    return spec if mesh_size is None else spec.with_mesh(mesh_size)
