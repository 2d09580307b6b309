"""Stage 2: grounded 10-shot generation of patient messages, plus the zero-shot baseline.

Grounded prompts embed the grounding pack's (prompt, message) exemplars in a
seed-determined order, each terminated by the sentinel; generations are cut at
the first sentinel so one prompt yields one message. Zero-shot prompts share
the exact same instruction and rules text.
"""

from __future__ import annotations

import json
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .corpus import (
    DEFAULT_SENTINEL,
    Corpus,
    GroundingPack,
    Message,
    PromptRecord,
    validate_grounding_pack,
)
from .llm import FINISH_ERROR, BatchFailure, LlmError

PROMPT_PLACEHOLDER = "[prompt]"

STAGE2_INSTRUCTION = """Pretend you are a medical patient. Write a message to your doctor using the prompt:

### Rules ###

- Assume the doctor you are messaging has been your physician for years. It is permissible to speak informally when appropriate.

- Do not restate the prompt in the message.

- You may add additional health context (e.g. symptoms or medications) to the message as needed.

Prompt: [prompt]

Patient Message:"""


@dataclass(frozen=True)
class Stage2Template:
    instruction: str = STAGE2_INSTRUCTION
    sentinel: str = DEFAULT_SENTINEL

    def __post_init__(self):
        if not self.sentinel:
            raise ValueError("sentinel must be non-empty")
        if PROMPT_PLACEHOLDER not in self.instruction:
            raise ValueError(f"instruction must contain the {PROMPT_PLACEHOLDER!r} placeholder")


def load_stage2_template(path: str | Path) -> Stage2Template:
    """Template override file: JSON with instruction and sentinel."""
    with Path(path).open("r", encoding="utf-8") as f:
        raw = json.load(f)
    return Stage2Template(
        instruction=raw.get("instruction", STAGE2_INSTRUCTION),
        sentinel=raw.get("sentinel", DEFAULT_SENTINEL),
    )


def _instruction_header(template: Stage2Template) -> str:
    """Everything before the target-prompt line of the instruction."""
    lines = template.instruction.split("\n")
    for i, line in enumerate(lines):
        if PROMPT_PLACEHOLDER in line:
            return "\n".join(lines[:i]).rstrip()
    raise ValueError("instruction has no placeholder line")  # unreachable, checked at init


def build_zeroshot_prompt(template: Stage2Template, target_prompt: str) -> str:
    if not target_prompt.strip():
        raise ValueError("empty target prompt")
    return template.instruction.replace(PROMPT_PLACEHOLDER, target_prompt)


def build_grounded_prompt(
    template: Stage2Template,
    pack: GroundingPack,
    target_prompt: str,
    seed: int,
) -> str:
    """Instruction header, shuffled exemplar blocks, then the target cue.

    Exemplars are permuted jointly, so every (prompt, message) pairing survives
    the shuffle; the output contains exactly one sentinel per exemplar.
    """
    if not target_prompt.strip():
        raise ValueError("empty target prompt")
    violations = validate_grounding_pack(
        pack, expected_size=len(pack.exemplars), sentinel=template.sentinel
    )
    if not pack.exemplars:
        violations.append("pack has no exemplars")
    if violations:
        raise ValueError("invalid grounding pack: " + "; ".join(violations))
    if template.sentinel in target_prompt:
        raise ValueError("target prompt contains the sentinel")

    order = list(range(len(pack.exemplars)))
    random.Random(seed).shuffle(order)
    blocks = []
    for idx in order:
        prompt, message = pack.exemplars[idx]
        blocks.append(f"Prompt: {prompt}\nPatient Message: {message}\n{template.sentinel}")
    parts = [_instruction_header(template)]
    parts.extend(blocks)
    parts.append(f"Prompt: {target_prompt}\nPatient Message:")
    return "\n\n".join(parts)


def truncate_at_sentinel(raw: str, sentinel: str = DEFAULT_SENTINEL) -> str:
    """Cut at the first sentinel occurrence (if any) and trim."""
    idx = raw.find(sentinel)
    text = (raw if idx < 0 else raw[:idx]).strip()
    if not text:
        raise ValueError("message is empty after sentinel truncation")
    return text


def generate_messages(
    prompts: list[PromptRecord],
    template: Stage2Template,
    pack: GroundingPack | None,
    client,
    base_seed: int,
    source_tag: str = "portalgen",
) -> tuple[Corpus, list[BatchFailure]]:
    """One Message per prompt (grounded if a pack is given), in input order.

    The per-item shuffle seed is base_seed XOR the item index, so results do
    not depend on dispatch order. Failed items are reported, not fatal.
    """
    if not prompts:
        raise ValueError("no prompts to generate messages for")
    if pack is not None:
        violations = validate_grounding_pack(
            pack, expected_size=len(pack.exemplars), sentinel=template.sentinel
        )
        if not pack.exemplars:
            violations.append("pack has no exemplars")
        if violations:
            raise ValueError("invalid grounding pack: " + "; ".join(violations))

    def run_one(item: tuple[int, PromptRecord]) -> Message | BatchFailure:
        index, record = item
        try:
            if pack is not None:
                built = build_grounded_prompt(template, pack, record.prompt_text, base_seed ^ index)
            else:
                built = build_zeroshot_prompt(template, record.prompt_text)
            completion = client.complete(built, stop=template.sentinel)
            if completion.finish_reason == FINISH_ERROR:
                return BatchFailure(record.id, "provider returned an error completion")
            text = truncate_at_sentinel(completion.text, template.sentinel)
            return Message(id=record.id, text=text, source_tag=source_tag)
        except (LlmError, ValueError) as exc:
            return BatchFailure(record.id, str(exc))

    max_workers = max(1, getattr(client, "max_parallel", 1))
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        results = list(pool.map(run_one, enumerate(prompts)))

    messages = [r for r in results if isinstance(r, Message)]
    failures = [r for r in results if isinstance(r, BatchFailure)]
    if not messages:
        raise LlmError(f"all {len(prompts)} message generations failed")
    return Corpus(name=source_tag, messages=messages), failures
