"""Walkthrough: parse an ICD-9 database, bin codes into chapters, sample by weight.

Runs fully offline against the bundled demo database.
"""

from collections import Counter
from importlib import resources

from portalgen.icd9 import (
    DEFAULT_CHAPTERS,
    build_histogram,
    chapter_of,
    parse_icd9_db,
    sample_codes,
    uniform_histogram,
)

db_path = resources.files("portalgen") / "data" / "icd9_demo.tsv"
db = parse_icd9_db(db_path)
print(f"parsed {len(db)} codes, e.g. {db[24].code}: {db[24].description}")

chapter = chapter_of(db[24])
print(f"code {db[24].code} falls in chapter {chapter.id} ({chapter.lo}-{chapter.hi}): {chapter.title}")

# A histogram shaped like a plausible caseload: mostly respiratory (8),
# circulatory (7), and symptom codes (16), a thin tail elsewhere.
counts = {c.id: 1 for c in DEFAULT_CHAPTERS}
counts[8] = 30
counts[7] = 20
counts[16] = 15
hist = build_histogram(counts)
print(f"\nchapter 8 weight: {hist.weights[8]:.3f}, chapter 1 weight: {hist.weights[1]:.3f}")

sampled = sample_codes(db, DEFAULT_CHAPTERS, hist, n=500, seed=7)
by_chapter = Counter(chapter_of(c).id for c in sampled)
print("\nsampled 500 codes; top chapters by draw count:")
for cid, n in by_chapter.most_common(5):
    title = next(c.title for c in DEFAULT_CHAPTERS if c.id == cid)
    print(f"  chapter {cid:2d}  {n:3d} draws  {title}")

# The same seed always reproduces the same draw sequence.
again = sample_codes(db, DEFAULT_CHAPTERS, hist, n=500, seed=7)
print(f"\nrerun with the same seed is identical: {[c.code for c in again] == [c.code for c in sampled]}")

uniform = uniform_histogram()
print(f"uniform default histogram covers {len(uniform.weights)} chapters")
