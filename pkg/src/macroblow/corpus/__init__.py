"""Reconstructed example programs shipped with the package."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from ..sexpr import parse

FILES = (
    "with-bad.lisp", "with-good.lisp", "with-triple.lisp", "recording.lisp",
    "recording-v2.lisp", "recording-broken.lisp", "recording-progv.lisp",
    "not-refactorable.lisp",
)


def corpus_dir() -> Path:
    return Path(str(resources.files(__name__)))


def path(name: str) -> Path:
    return corpus_dir() / name


def read(name: str) -> str:
    return path(name).read_text(encoding="utf-8")


def forms(name: str) -> list:
    return [f for f, _ in parse(read(name), name)]
