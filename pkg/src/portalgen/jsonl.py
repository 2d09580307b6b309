"""JSON Lines reading/writing shared by the corpus, prompt, and annotation stores.

A file may start with a provenance header: a single JSON object whose only
key is ``"provenance"``. Readers skip such lines; writers emit one when a
provenance dict is supplied.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Iterable, Iterator


class JsonLinesError(ValueError):
    """A line in a JSON Lines file is malformed. Carries the 1-based line number."""

    def __init__(self, path: Path, lineno: int, reason: str):
        super().__init__(f"{path}:{lineno}: {reason}")
        self.path = path
        self.lineno = lineno
        self.reason = reason


def is_provenance(obj: Any) -> bool:
    return isinstance(obj, dict) and set(obj) == {"provenance"}


def read_records(path: str | Path) -> Iterator[tuple[int, dict]]:
    """Yield (lineno, record) for each data line, skipping blanks and provenance."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    with path.open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            try:
                obj = json.loads(stripped)
            except json.JSONDecodeError as exc:
                raise JsonLinesError(path, lineno, f"invalid JSON ({exc.msg})") from exc
            if is_provenance(obj):
                continue
            if not isinstance(obj, dict):
                raise JsonLinesError(path, lineno, "record is not a JSON object")
            yield lineno, obj


def dump_record(obj: dict) -> str:
    """Serialize one record deterministically (insertion order, no ASCII escaping)."""
    return json.dumps(obj, ensure_ascii=False)


def write_records(path: str | Path, records: Iterable[dict], provenance: dict | None = None) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as f:
        if provenance is not None:
            f.write(dump_record({"provenance": provenance}) + "\n")
        for rec in records:
            f.write(dump_record(rec) + "\n")


def append_record(path: str | Path, record: dict) -> None:
    with Path(path).open("a", encoding="utf-8") as f:
        f.write(dump_record(record) + "\n")
