"""Messages, prompt records, corpora, and grounding packs, with JSON Lines persistence.

Corpus files are UTF-8 JSON Lines: one object per line with required string
fields ``id`` and ``text`` and an optional ``source_tag`` (default "unknown").
Grounding-pack files use required string fields ``prompt`` and ``message``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from . import jsonl
from .jsonl import JsonLinesError

DEFAULT_SOURCE_TAG = "unknown"

# Marker appended to every in-context exemplar so generations can be cut to a
# single message. Exemplar texts must never contain it.
DEFAULT_SENTINEL = "### End Of Message ###"

# Test-set length filter bounds used throughout evaluation (inclusive).
LENGTH_FILTER_MIN = 500
LENGTH_FILTER_MAX = 1500


@dataclass(frozen=True)
class Message:
    """One patient message. ``char_len`` counts Unicode scalar values."""

    id: str
    text: str
    source_tag: str = DEFAULT_SOURCE_TAG

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError(f"message {self.id!r}: text is empty after trimming")

    @property
    def char_len(self) -> int:
        return len(self.text)


@dataclass(frozen=True)
class PromptRecord:
    """A patient-message prompt, optionally tied to the ICD-9 code it came from."""

    id: str
    icd9_code: str
    prompt_text: str

    def __post_init__(self):
        if not self.prompt_text.strip():
            raise ValueError(f"prompt {self.id!r}: prompt_text is empty after trimming")


@dataclass(frozen=True)
class Corpus:
    name: str
    messages: tuple[Message, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "messages", tuple(self.messages))
        seen: set[str] = set()
        for m in self.messages:
            if m.id in seen:
                raise ValueError(f"corpus {self.name!r}: duplicate message id {m.id!r}")
            seen.add(m.id)

    def __len__(self) -> int:
        return len(self.messages)


@dataclass(frozen=True)
class GroundingPack:
    """De-identified (prompt, message) exemplar pairs for grounded generation."""

    exemplars: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "exemplars", tuple((p, m) for p, m in self.exemplars))

    def __len__(self) -> int:
        return len(self.exemplars)


def load_corpus(path: str | Path, name: str | None = None) -> Corpus:
    """Read a corpus file; message order follows file order."""
    path = Path(path)
    messages = []
    seen: set[str] = set()
    for lineno, rec in jsonl.read_records(path):
        for key in ("id", "text"):
            if key not in rec:
                raise JsonLinesError(path, lineno, f"missing required field {key!r}")
            if not isinstance(rec[key], str):
                raise JsonLinesError(path, lineno, f"field {key!r} is not a string")
        if rec["id"] in seen:
            raise JsonLinesError(path, lineno, f"duplicate id {rec['id']!r}")
        seen.add(rec["id"])
        try:
            msg = Message(id=rec["id"], text=rec["text"], source_tag=rec.get("source_tag", DEFAULT_SOURCE_TAG))
        except ValueError as exc:
            raise JsonLinesError(path, lineno, str(exc)) from exc
        messages.append(msg)
    return Corpus(name=name if name is not None else path.stem, messages=messages)


def save_corpus(corpus: Corpus, path: str | Path, provenance: dict | None = None) -> None:
    """Write one record per line in corpus order; field order is fixed."""
    records = ({"id": m.id, "text": m.text, "source_tag": m.source_tag} for m in corpus.messages)
    jsonl.write_records(path, records, provenance=provenance)


def filter_by_length(corpus: Corpus, min_chars: int, max_chars: int) -> Corpus:
    """Keep messages with min_chars <= char_len <= max_chars (both inclusive)."""
    if min_chars < 0 or min_chars > max_chars:
        raise ValueError(f"invalid length bounds: ({min_chars}, {max_chars})")
    kept = [m for m in corpus.messages if min_chars <= m.char_len <= max_chars]
    return Corpus(name=corpus.name, messages=kept)


def load_grounding_pack(path: str | Path) -> GroundingPack:
    path = Path(path)
    pairs = []
    for lineno, rec in jsonl.read_records(path):
        for key in ("prompt", "message"):
            if key not in rec or not isinstance(rec[key], str):
                raise JsonLinesError(path, lineno, f"missing or non-string field {key!r}")
        pairs.append((rec["prompt"], rec["message"]))
    return GroundingPack(pairs)


def save_grounding_pack(pack: GroundingPack, path: str | Path) -> None:
    jsonl.write_records(path, ({"prompt": p, "message": m} for p, m in pack.exemplars))


def validate_grounding_pack(
    pack: GroundingPack,
    expected_size: int = 10,
    sentinel: str = DEFAULT_SENTINEL,
) -> list[str]:
    """Return violation descriptions; an empty list means the pack is valid."""
    violations = []
    if len(pack.exemplars) != expected_size:
        violations.append(f"expected {expected_size} exemplars, found {len(pack.exemplars)}")
    for i, (prompt, message) in enumerate(pack.exemplars):
        if not prompt.strip():
            violations.append(f"exemplar {i}: empty prompt text")
        if not message.strip():
            violations.append(f"exemplar {i}: empty message text")
        if sentinel in prompt:
            violations.append(f"exemplar {i}: prompt contains the sentinel {sentinel!r}")
        if sentinel in message:
            violations.append(f"exemplar {i}: message contains the sentinel {sentinel!r}")
    return violations
