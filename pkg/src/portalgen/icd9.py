"""ICD-9 code database parsing, chapter binning, and chapter-weighted sampling.

Database files are UTF-8 text with one ``code<TAB>description`` entry per
line; blank lines and lines starting with ``#`` are ignored. Codes are either
numeric (3-digit root, optional 1-2 decimal digits) or supplementary E/V
codes. Chapters bin codes by numeric root range; E and V codes go to their
supplementary chapters by prefix.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import jsonl

CODE_PATTERN = re.compile(r"^(?:\d{3}|E\d{3}|V\d{2})(?:\.\d{1,2})?$")

WEIGHT_SUM_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Icd9Code:
    code: str
    description: str

    def __post_init__(self):
        if not CODE_PATTERN.match(self.code):
            raise ValueError(f"malformed ICD-9 code: {self.code!r}")
        if not self.description.strip():
            raise ValueError(f"code {self.code}: empty description")

    @property
    def root(self) -> int:
        """Numeric root: leading 3 digits, or the digits after an E/V prefix."""
        head = self.code.split(".", 1)[0]
        return int(head[1:]) if head[0] in "EV" else int(head)

    @property
    def prefix(self) -> str | None:
        return self.code[0] if self.code[0] in "EV" else None


@dataclass(frozen=True)
class Chapter:
    id: int
    lo: int
    hi: int
    title: str
    supplementary_prefix: str | None = None

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"chapter {self.id}: lo {self.lo} > hi {self.hi}")
        if self.supplementary_prefix not in (None, "E", "V"):
            raise ValueError(f"chapter {self.id}: bad prefix {self.supplementary_prefix!r}")

    def contains(self, code: Icd9Code) -> bool:
        if self.supplementary_prefix is not None:
            return code.prefix == self.supplementary_prefix
        return code.prefix is None and self.lo <= code.root <= self.hi


# The 17 standard numeric ICD-9-CM chapters plus E/V supplementary bins.
DEFAULT_CHAPTERS: tuple[Chapter, ...] = (
    Chapter(1, 1, 139, "Infectious and parasitic diseases"),
    Chapter(2, 140, 239, "Neoplasms"),
    Chapter(3, 240, 279, "Endocrine, nutritional and metabolic diseases, and immunity disorders"),
    Chapter(4, 280, 289, "Diseases of the blood and blood-forming organs"),
    Chapter(5, 290, 319, "Mental disorders"),
    Chapter(6, 320, 389, "Diseases of the nervous system and sense organs"),
    Chapter(7, 390, 459, "Diseases of the circulatory system"),
    Chapter(8, 460, 519, "Diseases of the respiratory system"),
    Chapter(9, 520, 579, "Diseases of the digestive system"),
    Chapter(10, 580, 629, "Diseases of the genitourinary system"),
    Chapter(11, 630, 679, "Complications of pregnancy, childbirth, and the puerperium"),
    Chapter(12, 680, 709, "Diseases of the skin and subcutaneous tissue"),
    Chapter(13, 710, 739, "Diseases of the musculoskeletal system and connective tissue"),
    Chapter(14, 740, 759, "Congenital anomalies"),
    Chapter(15, 760, 779, "Certain conditions originating in the perinatal period"),
    Chapter(16, 780, 799, "Symptoms, signs, and ill-defined conditions"),
    Chapter(17, 800, 999, "Injury and poisoning"),
    Chapter(18, 0, 999, "External causes of injury and poisoning", supplementary_prefix="E"),
    Chapter(19, 0, 99, "Supplementary classification of factors influencing health status", supplementary_prefix="V"),
)


@dataclass(frozen=True)
class ChapterHistogram:
    """Normalized sampling weights over chapter ids."""

    weights: Mapping[int, float]

    def __post_init__(self):
        object.__setattr__(self, "weights", dict(self.weights))
        if any(w < 0 for w in self.weights.values()):
            raise ValueError("histogram weights must be non-negative")
        total = sum(self.weights.values())
        if abs(total - 1.0) > WEIGHT_SUM_TOLERANCE:
            raise ValueError(f"histogram weights sum to {total}, expected 1")


class Icd9ParseError(ValueError):
    def __init__(self, path: Path, lineno: int, reason: str):
        super().__init__(f"{path}:{lineno}: {reason}")
        self.lineno = lineno


def parse_icd9_db(path: str | Path) -> list[Icd9Code]:
    """Parse a code database, keeping file order. Raises on any malformed line."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    codes = []
    with path.open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            code_str, sep, desc = stripped.partition("\t")
            if not sep:
                raise Icd9ParseError(path, lineno, "expected code<TAB>description")
            try:
                codes.append(Icd9Code(code=code_str.strip(), description=desc.strip()))
            except ValueError as exc:
                raise Icd9ParseError(path, lineno, str(exc)) from exc
    if not codes:
        raise Icd9ParseError(path, 0, "database contains no codes")
    return codes


def chapter_of(code: Icd9Code, chapters: Sequence[Chapter] = DEFAULT_CHAPTERS) -> Chapter:
    for chapter in chapters:
        if chapter.contains(code):
            return chapter
    raise ValueError(f"code {code.code} falls outside all chapters")


def load_chapters(path: str | Path) -> list[Chapter]:
    """Chapter table override: JSON Lines with id, lo, hi, title, optional prefix."""
    chapters = []
    for lineno, rec in jsonl.read_records(path):
        chapters.append(
            Chapter(
                id=int(rec["id"]),
                lo=int(rec["lo"]),
                hi=int(rec["hi"]),
                title=str(rec["title"]),
                supplementary_prefix=rec.get("prefix"),
            )
        )
    if not chapters:
        raise ValueError(f"{path}: empty chapter table")
    return chapters


def build_histogram(chapter_counts: Mapping[int, int]) -> ChapterHistogram:
    """Normalize raw chapter counts into sampling weights."""
    if any(c < 0 for c in chapter_counts.values()):
        raise ValueError("chapter counts must be non-negative")
    total = sum(chapter_counts.values())
    if total <= 0:
        raise ValueError("at least one chapter count must be positive")
    return ChapterHistogram({cid: count / total for cid, count in chapter_counts.items()})


def uniform_histogram(chapters: Sequence[Chapter] = DEFAULT_CHAPTERS) -> ChapterHistogram:
    return build_histogram({c.id: 1 for c in chapters})


def load_histogram(path: str | Path) -> ChapterHistogram:
    """Histogram file: a JSON object of chapter id -> count."""
    with Path(path).open("r", encoding="utf-8") as f:
        raw = json.load(f)
    return build_histogram({int(cid): int(count) for cid, count in raw.items()})


def group_by_chapter(db: Iterable[Icd9Code], chapters: Sequence[Chapter]) -> dict[int, list[Icd9Code]]:
    groups: dict[int, list[Icd9Code]] = {c.id: [] for c in chapters}
    for code in db:
        groups[chapter_of(code, chapters).id].append(code)
    return groups


def sample_codes(
    db: Sequence[Icd9Code],
    chapters: Sequence[Chapter],
    hist: ChapterHistogram,
    n: int,
    seed: int,
) -> list[Icd9Code]:
    """Draw n codes with replacement: chapter by histogram weight, then uniform in chapter.

    Deterministic for a given seed (PCG64 generator).
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    known_ids = {c.id for c in chapters}
    unknown = set(hist.weights) - known_ids
    if unknown:
        raise ValueError(f"histogram references unknown chapter ids: {sorted(unknown)}")
    groups = group_by_chapter(db, chapters)
    positive = sorted(cid for cid, w in hist.weights.items() if w > 0)
    for cid in positive:
        if not groups[cid]:
            raise ValueError(f"chapter {cid} has positive weight but no codes in the database")
    if n == 0:
        return []
    weights = np.array([hist.weights[cid] for cid in positive], dtype=float)
    weights = weights / weights.sum()
    rng = np.random.Generator(np.random.PCG64(seed))
    chapter_picks = rng.choice(len(positive), size=n, p=weights)
    sampled = []
    for pick in chapter_picks:
        codes = groups[positive[pick]]
        sampled.append(codes[rng.integers(0, len(codes))])
    return sampled
