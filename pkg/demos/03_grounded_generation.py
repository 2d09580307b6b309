"""Walkthrough: stage 2 grounds generation in 10 real exemplars, then truncates
each output at the sentinel so one prompt yields exactly one message."""

from importlib import resources

from portalgen.corpus import DEFAULT_SENTINEL, PromptRecord, load_grounding_pack, validate_grounding_pack
from portalgen.llm import MockClient
from portalgen.stage2 import (
    Stage2Template,
    build_grounded_prompt,
    build_zeroshot_prompt,
    generate_messages,
    truncate_at_sentinel,
)

pack = load_grounding_pack(resources.files("portalgen") / "data" / "grounding_pack.jsonl")
violations = validate_grounding_pack(pack, expected_size=10)
print(f"grounding pack: {len(pack.exemplars)} exemplars, violations: {violations or 'none'}")

template = Stage2Template()
target = "Patient is experiencing a diabetic coma and is unsure of what steps to take to regain control."

zeroshot = build_zeroshot_prompt(template, target)
print(f"\nzero-shot prompt: {len(zeroshot)} chars, {zeroshot.count(DEFAULT_SENTINEL)} sentinels")

grounded = build_grounded_prompt(template, pack, target, seed=3)
print(f"grounded prompt:  {len(grounded)} chars, {grounded.count(DEFAULT_SENTINEL)} sentinels")
print("\n=== grounded prompt tail ===")
print(grounded[-400:])

# Exemplar order is reshuffled per seed, pairing kept intact.
reshuffled = build_grounded_prompt(template, pack, target, seed=4)
print(f"\nseed 3 and seed 4 produce different exemplar orders: {grounded != reshuffled}")

print("\n=== sentinel truncation ===")
raw = f"Hi Dr,\n\nQuick question about my dose.\n\nThanks,\n{DEFAULT_SENTINEL}\nPrompt: runaway continuation"
print(repr(truncate_at_sentinel(raw, DEFAULT_SENTINEL)))

prompts = [
    PromptRecord("p0000", "250.00", target),
    PromptRecord("p0001", "463", "Patient has a persistent sore throat and wants to know about testing."),
]
corpus, failures = generate_messages(prompts, template, pack, MockClient(seed=9), base_seed=2024)
print(f"\n=== generated {len(corpus.messages)} grounded messages ({len(failures)} failures) ===")
for m in corpus.messages:
    print(f"--- {m.id} ({m.source_tag}) ---")
    print(m.text)
