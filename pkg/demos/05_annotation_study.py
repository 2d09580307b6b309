"""Walkthrough: the blind ranking study, end to end in-process.

Builds blinded tasks for three systems, simulates two annotators, and pools
their rankings into per-system means. To run the same thing over HTTP with
the browser UI:

    portalgen annotate build --prompts prompts.jsonl --system a=a.jsonl ... --seed 7 --out tasks.json
    portalgen annotate serve --tasks tasks.json --log submissions.jsonl --static frontend/dist
    portalgen annotate summary --tasks tasks.json --log submissions.jsonl
"""

import random
import tempfile
from pathlib import Path

from portalgen.annotation import AnnotationStore, Submission, create_tasks
from portalgen.corpus import Corpus, Message, PromptRecord
from portalgen.llm import mock_complete

prompts = [PromptRecord(f"p{i:04d}", "", f"study prompt {i}") for i in range(10)]
systems = {
    name: Corpus(name, [Message(f"{name}-{i}", mock_complete(f"{name} {i}", seed).text) for i in range(10)])
    for seed, name in enumerate(("candidate_x", "candidate_y", "candidate_z"))
}

tasks = create_tasks(prompts, systems, n_tasks=10, seed=99)
print(f"built {len(tasks)} tasks; each shows {len(tasks[0].outputs)} blinded outputs")
print(f"labels shown to annotators: {[o.label for o in tasks[0].outputs]}")
print(f"server-side blinding of task 0: {dict(tasks[0].blinding)}  (never sent to clients)")

log = Path(tempfile.mkdtemp()) / "submissions.jsonl"
store = AnnotationStore(tasks, log)

rng = random.Random(5)
for task in tasks:
    for annotator in ("annotator-1", "annotator-2"):
        ranks = [1, 2, 3]
        rng.shuffle(ranks)
        store.record_submission(Submission(task.task_id, annotator, dict(zip("ABC", ranks))))

summary = store.summary()
print(f"\n{summary.submission_count} submissions pooled; mean rank per system (1 = best):")
for system, mean in summary.mean_rank.items():
    print(f"  {system:<12} {mean:.2f}")
print(f"\nsanity: means sum to n(n+1)/2 = {sum(summary.mean_rank.values()):.2f}")
print(f"append-only log written to {log}")
