"""Stage 1: few-shot prompt construction, output cleaning, batch generation."""

from __future__ import annotations

import random
import time

import pytest

from portalgen.icd9 import Icd9Code
from portalgen.llm import Completion, LlmError, MockClient, mock_complete
from portalgen.stage1 import (
    CODE_MARKER,
    DESCRIPTION_MARKER,
    DEFAULT_EXEMPLARS,
    Stage1Template,
    build_stage1_prompt,
    generate_prompts,
    load_prompt_records,
    parse_stage1_output,
    save_prompt_records,
)


def test_default_prompt_has_four_exemplars_and_cue():
    prompt = build_stage1_prompt(Stage1Template(), "Tonsillitis, acute")
    assert prompt.endswith(f"{CODE_MARKER} Tonsillitis, acute\n{DESCRIPTION_MARKER}")
    assert prompt.count(CODE_MARKER) == 5  # 4 exemplars + the target cue
    assert prompt.count(DESCRIPTION_MARKER) == 5
    assert prompt.count("Tonsillitis, acute") == 1


def test_shoulder_exemplar_appears_verbatim():
    prompt = build_stage1_prompt(Stage1Template(), "Tonsillitis, acute")
    assert "Example Code: Shoulder joint replacement" in prompt
    assert (
        "Patient heard a snap while trying to lift heavy boxes after shoulder surgery, "
        "and is experiencing pain." in prompt
    )


def test_zero_shot_template_is_instruction_plus_cue():
    template = Stage1Template(k=0)
    prompt = build_stage1_prompt(template, "Headache")
    assert prompt == f"{template.instruction}\n\n{CODE_MARKER} Headache\n{DESCRIPTION_MARKER}"


def test_prompt_is_deterministic():
    template = Stage1Template()
    assert build_stage1_prompt(template, "Lumbago") == build_stage1_prompt(template, "Lumbago")


def test_build_rejects_empty_description():
    with pytest.raises(ValueError):
        build_stage1_prompt(Stage1Template(), "  ")


def test_build_rejects_too_few_exemplars():
    template = Stage1Template(exemplars=DEFAULT_EXEMPLARS[:2], k=4)
    with pytest.raises(ValueError, match="exemplars"):
        build_stage1_prompt(template, "Headache")


def test_parse_truncates_at_continuation_artifact():
    raw = "  Patient is experiencing swelling and stiffness...\n\nExample Code: X"
    assert parse_stage1_output(raw) == "Patient is experiencing swelling and stiffness..."


def test_parse_is_identity_on_clean_input():
    assert parse_stage1_output("abc") == "abc"


def test_parse_rejects_whitespace_only():
    with pytest.raises(ValueError):
        parse_stage1_output("\n\n")


def test_parse_flattens_multi_line_paragraph():
    assert parse_stage1_output("line one\nline two\n\nignored") == "line one line two"


def test_parse_strips_marker_mid_line():
    assert parse_stage1_output("keep this Example Code: drop this") == "keep this"


def test_parse_is_idempotent():
    rng = random.Random(4)
    samples = [mock_complete(f"p{i}", 9).text for i in range(20)]
    samples += ["abc", "a\nb\n\nc", "x Example Message Description: y"]
    for raw in samples:
        once = parse_stage1_output(raw)
        assert parse_stage1_output(once) == once


def test_parse_output_never_contains_markers():
    for i in range(50):
        cleaned = parse_stage1_output(mock_complete(f"p{i}", 2).text + "\nExample Code: junk")
        assert CODE_MARKER not in cleaned
        assert DESCRIPTION_MARKER not in cleaned


def _codes(n: int) -> list[Icd9Code]:
    return [Icd9Code(f"{(100 + i) % 1000:03d}", f"Condition number {i}") for i in range(n)]


def test_generate_three_records_with_mock():
    records, failures = generate_prompts(_codes(3), Stage1Template(), MockClient(1))
    assert len(records) == 3
    assert failures == []
    assert all(r.prompt_text for r in records)
    assert [r.icd9_code for r in records] == ["100", "101", "102"]


def test_generate_thousand_records_with_mock():
    records, failures = generate_prompts(_codes(1000), Stage1Template(), MockClient(1))
    assert len(records) == 1000
    assert failures == []


class FlakyClient:
    """Fails on selected 0-based item indexes; otherwise delegates to the mock."""

    max_parallel = 1

    def __init__(self, fail_on: set[int]):
        self.fail_on = fail_on
        self.calls = 0

    def complete(self, prompt: str, stop: str | None = None) -> Completion:
        index = self.calls
        self.calls += 1
        if index in self.fail_on:
            raise LlmError("scripted failure")
        return mock_complete(prompt, 42)


def test_generate_reports_per_item_failures():
    records, failures = generate_prompts(_codes(3), Stage1Template(), FlakyClient({1}))
    assert len(records) == 2
    assert [r.icd9_code for r in records] == ["100", "102"]
    assert len(failures) == 1
    assert failures[0].item_id == "p0001"
    assert "scripted failure" in failures[0].error


def test_generate_raises_when_all_items_fail():
    with pytest.raises(LlmError, match="all 2"):
        generate_prompts(_codes(2), Stage1Template(), FlakyClient({0, 1}))


class JitterClient:
    """Finishes items in scrambled order to exercise order preservation."""

    max_parallel = 4

    def complete(self, prompt: str, stop: str | None = None) -> Completion:
        time.sleep(random.Random(prompt).random() * 0.02)
        return mock_complete(prompt, 11)


def test_generate_preserves_input_order_under_concurrency():
    codes = _codes(20)
    records, _ = generate_prompts(codes, Stage1Template(), JitterClient())
    assert [r.icd9_code for r in records] == [c.code for c in codes]
    assert [r.id for r in records] == [f"p{i:04d}" for i in range(20)]


def test_prompt_records_round_trip(tmp_path):
    records, _ = generate_prompts(_codes(5), Stage1Template(), MockClient(3))
    path = tmp_path / "prompts.jsonl"
    save_prompt_records(records, path, provenance={"command": "stage1", "seed": 3})
    assert load_prompt_records(path) == records
