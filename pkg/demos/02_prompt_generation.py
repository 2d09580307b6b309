"""Walkthrough: stage 1 turns code descriptions into patient-message prompts.

Uses the offline mock provider; swap in an HttpClient pointed at any
OpenAI-compatible endpoint for real generation.
"""

from portalgen.icd9 import Icd9Code
from portalgen.llm import MockClient
from portalgen.stage1 import (
    Stage1Template,
    build_stage1_prompt,
    generate_prompts,
    parse_stage1_output,
)

template = Stage1Template()  # instruction + 4 built-in exemplar pairs
prompt = build_stage1_prompt(template, "Tonsillitis, acute")
print("=== built few-shot prompt (k=4) ===")
print(prompt)

print("\n=== cleaning raw model output ===")
raw = "  Patient is experiencing swelling and stiffness in their knee...\n\nExample Code: 401.9"
print(f"raw:     {raw!r}")
print(f"cleaned: {parse_stage1_output(raw)!r}")

codes = [
    Icd9Code("463", "Tonsillitis, acute"),
    Icd9Code("401.9", "Unspecified essential hypertension"),
    Icd9Code("845.00", "Sprain of ankle, unspecified site"),
]
records, failures = generate_prompts(codes, template, MockClient(seed=42))
print(f"\n=== batch generation: {len(records)} prompts, {len(failures)} failures ===")
for r in records:
    print(f"  [{r.icd9_code}] {r.prompt_text}")
