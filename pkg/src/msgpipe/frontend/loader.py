from __future__ import annotations

from pathlib import Path
from typing import Iterable, List, Union

from . import ast as A
from .lexer import MoveSyntaxError
from .parser import merge_spec_unit, parse_units


class SourceError(Exception):
    """A parse failure tied to a file."""

    def __init__(self, path: Path, err: MoveSyntaxError):
        super().__init__(f"{path}:{err.span.line}:{err.span.col}: error: {err.message}")
        self.path = path
        self.error = err


def move_files(paths: Iterable[Union[str, Path]]) -> List[Path]:
    out: List[Path] = []
    for p in map(Path, paths):
        if p.is_dir():
            out.extend(sorted(p.rglob("*.move")))
        else:
            out.append(p)
    return out


def load_workspace(paths: Iterable[Union[str, Path]]) -> List[A.SourceModule]:
    """Parse every ``.move`` file under ``paths``.

    Spec units (``spec addr::m { ... }``) may live in any file; they are merged
    into the module they name after all files are read.
    """
    modules: List[A.SourceModule] = []
    units = []
    for f in move_files(paths):
        try:
            ms, us = parse_units(f.read_text(encoding="utf-8"))
        except MoveSyntaxError as e:
            raise SourceError(f, e) from e
        modules.extend(ms)
        units.extend((f, u) for u in us)
    for f, u in units:
        idx = [i for i, m in enumerate(modules)
               if m.name == u.name and (m.address == u.address or u.address is None)]
        if not idx:
            idx = [i for i, m in enumerate(modules) if m.name == u.name]
        if len(idx) != 1:
            raise SourceError(f, MoveSyntaxError(u.span, f"spec unit for unknown module '{u.name}'"))
        try:
            modules[idx[0]] = A.number_nodes(merge_spec_unit(modules[idx[0]], u))
        except MoveSyntaxError as e:
            raise SourceError(f, e) from e
    return modules
