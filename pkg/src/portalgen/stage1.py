"""Stage 1: turn ICD-9 code descriptions into patient-message prompts.

A few-shot instruction prompt (k=4 by default) asks the model to extrapolate
a code description into a realistic situation behind a patient message. Raw
model output is cleaned of continuation artifacts before use.
"""

from __future__ import annotations

import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from . import jsonl
from .corpus import PromptRecord
from .icd9 import Icd9Code
from .llm import FINISH_ERROR, BatchFailure, LlmError

STAGE1_INSTRUCTION = (
    "Given an ICD9 code for a given patient, write a short description of a message "
    "that a patient might send to their doctor which may or may not be related to the "
    "code. Here are examples."
)

CODE_MARKER = "Example Code:"
DESCRIPTION_MARKER = "Example Message Description:"

DEFAULT_EXEMPLARS: tuple[tuple[str, str], ...] = (
    (
        "Shoulder joint replacement",
        "Patient heard a snap while trying to lift heavy boxes after shoulder surgery, "
        "and is experiencing pain.",
    ),
    (
        "Diabetes mellitus without mention of complication, type II",
        "Patient noticed their morning blood sugar readings creeping up over the past two "
        "weeks and wants to know whether their medication dose should change.",
    ),
    (
        "Migraine, unspecified",
        "Patient has been getting headaches almost daily since starting a new job and asks "
        "whether the prescription from last year is still safe to use.",
    ),
    (
        "Asthma, unspecified",
        "Patient's inhaler is nearly empty and their wheezing has worsened with the cold "
        "weather, so they are requesting a refill and advice on managing symptoms.",
    ),
)


@dataclass(frozen=True)
class Stage1Template:
    instruction: str = STAGE1_INSTRUCTION
    exemplars: tuple[tuple[str, str], ...] = DEFAULT_EXEMPLARS
    k: int = 4

    def __post_init__(self):
        object.__setattr__(self, "exemplars", tuple((c, p) for c, p in self.exemplars))
        if self.k < 0:
            raise ValueError("k must be non-negative")
        for i, (code_desc, prompt) in enumerate(self.exemplars):
            if not code_desc.strip() or not prompt.strip():
                raise ValueError(f"exemplar {i}: empty text")


def load_stage1_template(path: str | Path) -> Stage1Template:
    """Template override file: JSON with instruction, exemplars [{code, prompt}], k."""
    with Path(path).open("r", encoding="utf-8") as f:
        raw = json.load(f)
    return Stage1Template(
        instruction=raw.get("instruction", STAGE1_INSTRUCTION),
        exemplars=tuple((e["code"], e["prompt"]) for e in raw.get("exemplars", [])) or DEFAULT_EXEMPLARS,
        k=int(raw.get("k", 4)),
    )


def build_stage1_prompt(template: Stage1Template, code_description: str) -> str:
    """Instruction, k exemplar blocks, then the target description as the cue."""
    if not code_description.strip():
        raise ValueError("empty code description")
    if len(template.exemplars) < template.k:
        raise ValueError(
            f"template has {len(template.exemplars)} exemplars but k={template.k}"
        )
    blocks = [template.instruction]
    for code_desc, prompt in template.exemplars[: template.k]:
        blocks.append(f"{CODE_MARKER} {code_desc}\n{DESCRIPTION_MARKER} {prompt}")
    blocks.append(f"{CODE_MARKER} {code_description}\n{DESCRIPTION_MARKER}")
    return "\n\n".join(blocks)


def parse_stage1_output(raw: str) -> str:
    """Trim the model output down to the single-paragraph prompt it should contain.

    Keeps lines up to the first blank line or continuation artifact (a line
    starting with another exemplar marker), then flattens to one paragraph.
    """
    kept: list[str] = []
    for line in raw.strip().splitlines():
        stripped = line.strip()
        if not stripped:
            break
        if stripped.startswith(CODE_MARKER) or stripped.startswith(DESCRIPTION_MARKER):
            break
        kept.append(stripped)
    text = " ".join(kept)
    # Markers can also appear mid-line when the model runs on without a newline.
    for marker in (CODE_MARKER, DESCRIPTION_MARKER):
        idx = text.find(marker)
        if idx >= 0:
            text = text[:idx]
    text = re.sub(r"\s+", " ", text).strip()
    if not text:
        raise ValueError("no prompt text left after cleaning model output")
    return text


def generate_prompts(
    codes: list[Icd9Code],
    template: Stage1Template,
    client,
) -> tuple[list[PromptRecord], list[BatchFailure]]:
    """One PromptRecord per code, in input order; failed items are reported, not fatal."""
    if not codes:
        raise ValueError("no codes to generate prompts for")

    def run_one(item: tuple[int, Icd9Code]) -> PromptRecord | BatchFailure:
        index, code = item
        item_id = f"p{index:04d}"
        try:
            completion = client.complete(build_stage1_prompt(template, code.description))
            if completion.finish_reason == FINISH_ERROR:
                return BatchFailure(item_id, "provider returned an error completion")
            return PromptRecord(
                id=item_id, icd9_code=code.code, prompt_text=parse_stage1_output(completion.text)
            )
        except (LlmError, ValueError) as exc:
            return BatchFailure(item_id, str(exc))

    max_workers = max(1, getattr(client, "max_parallel", 1))
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        results = list(pool.map(run_one, enumerate(codes)))

    records = [r for r in results if isinstance(r, PromptRecord)]
    failures = [r for r in results if isinstance(r, BatchFailure)]
    if not records:
        raise LlmError(f"all {len(codes)} prompt generations failed")
    return records, failures


def load_prompt_records(path: str | Path) -> list[PromptRecord]:
    records = []
    seen: set[str] = set()
    for lineno, rec in jsonl.read_records(path):
        for key in ("id", "prompt"):
            if key not in rec or not isinstance(rec[key], str):
                raise jsonl.JsonLinesError(Path(path), lineno, f"missing or non-string field {key!r}")
        if rec["id"] in seen:
            raise jsonl.JsonLinesError(Path(path), lineno, f"duplicate id {rec['id']!r}")
        seen.add(rec["id"])
        records.append(
            PromptRecord(id=rec["id"], icd9_code=rec.get("icd9_code", ""), prompt_text=rec["prompt"])
        )
    return records


def save_prompt_records(records: list[PromptRecord], path: str | Path, provenance: dict | None = None) -> None:
    rows = ({"id": r.id, "icd9_code": r.icd9_code, "prompt": r.prompt_text} for r in records)
    jsonl.write_records(path, rows, provenance=provenance)
