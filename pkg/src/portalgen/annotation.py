"""Blind ranking study backend: task building, submission log, mean ranks, HTTP API.

Tasks pair one output per system under blinded letter labels; the label-to-
system mapping stays server-side and never appears in an API response.
Submissions go to an append-only JSON Lines log where the latest submission
per (task, annotator) wins.
"""

from __future__ import annotations

import hashlib
import json
import random
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from fastapi import FastAPI, HTTPException, Query
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from . import jsonl
from .corpus import Corpus, PromptRecord

LABELS = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"


@dataclass(frozen=True)
class BlindedOutput:
    label: str
    text: str


@dataclass(frozen=True)
class RankingTask:
    task_id: str
    prompt_text: str
    outputs: tuple[BlindedOutput, ...]
    blinding: Mapping[str, str]  # label -> system name; server-side only

    def __post_init__(self):
        object.__setattr__(self, "outputs", tuple(self.outputs))
        object.__setattr__(self, "blinding", dict(self.blinding))
        labels = [o.label for o in self.outputs]
        if len(set(labels)) != len(labels):
            raise ValueError(f"task {self.task_id}: duplicate labels")
        if set(self.blinding) != set(labels):
            raise ValueError(f"task {self.task_id}: blinding does not cover all labels")


@dataclass(frozen=True)
class Submission:
    task_id: str
    annotator_id: str
    ranks: Mapping[str, int]  # label -> rank, 1=best
    submitted_at: str = ""

    def __post_init__(self):
        object.__setattr__(self, "ranks", dict(self.ranks))


@dataclass(frozen=True)
class RankSummary:
    mean_rank: Mapping[str, float]  # system -> mean rank
    submission_count: int


def create_tasks(
    prompts: Sequence[PromptRecord],
    systems: Mapping[str, Corpus],
    n_tasks: int,
    seed: int,
) -> list[RankingTask]:
    """Sample n_tasks prompts without replacement and blind one output per system.

    System corpora are aligned with the prompt list by index. Deterministic
    for a given seed.
    """
    if len(systems) < 2:
        raise ValueError("ranking needs at least 2 systems")
    if n_tasks > len(prompts):
        raise ValueError(f"requested {n_tasks} tasks but only {len(prompts)} prompts are available")
    if len(systems) > len(LABELS):
        raise ValueError("too many systems to label")
    rng = random.Random(seed)
    selected = rng.sample(range(len(prompts)), n_tasks)
    system_names = sorted(systems)
    labels = LABELS[: len(system_names)]
    tasks = []
    for prompt_index in selected:
        for name in system_names:
            if prompt_index >= len(systems[name].messages):
                raise ValueError(f"system {name!r} has no output for prompt index {prompt_index}")
        assignment = list(system_names)
        rng.shuffle(assignment)
        blinding = dict(zip(labels, assignment))
        outputs = tuple(
            BlindedOutput(label=label, text=systems[blinding[label]].messages[prompt_index].text)
            for label in labels
        )
        tasks.append(
            RankingTask(
                task_id=f"task-{prompt_index:04d}",
                prompt_text=prompts[prompt_index].prompt_text,
                outputs=outputs,
                blinding=blinding,
            )
        )
    return tasks


def save_tasks(tasks: Sequence[RankingTask], path: str | Path, provenance: dict | None = None) -> None:
    doc: dict = {}
    if provenance is not None:
        doc["provenance"] = provenance
    doc["tasks"] = [
        {
            "task_id": t.task_id,
            "prompt_text": t.prompt_text,
            "outputs": [{"label": o.label, "text": o.text} for o in t.outputs],
            "blinding": dict(t.blinding),
        }
        for t in tasks
    ]
    Path(path).write_text(json.dumps(doc, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")


def load_tasks(path: str | Path) -> list[RankingTask]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return [
        RankingTask(
            task_id=t["task_id"],
            prompt_text=t["prompt_text"],
            outputs=tuple(BlindedOutput(label=o["label"], text=o["text"]) for o in t["outputs"]),
            blinding=t["blinding"],
        )
        for t in doc["tasks"]
    ]


def _validate_submission(sub: Submission, task: RankingTask) -> None:
    labels = {o.label for o in task.outputs}
    if set(sub.ranks) != labels:
        raise ValueError(f"ranks must cover exactly the labels {sorted(labels)}")
    if sorted(sub.ranks.values()) != list(range(1, len(labels) + 1)):
        raise ValueError(f"ranks must form a permutation of 1..{len(labels)}")


def mean_ranks(
    submissions: Iterable[Submission],
    blinding: Mapping[str, Mapping[str, str]],
) -> RankSummary:
    """Pooled per-system mean rank over effective submissions, after un-blinding.

    ``blinding`` maps task_id -> (label -> system). Only the latest submission
    per (task, annotator) counts.
    """
    effective: dict[tuple[str, str], Submission] = {}
    for sub in submissions:
        effective[(sub.task_id, sub.annotator_id)] = sub
    if not effective:
        raise ValueError("no submissions recorded")
    totals: dict[str, int] = {}
    counts: dict[str, int] = {}
    for sub in effective.values():
        task_blinding = blinding[sub.task_id]
        for label, rank in sub.ranks.items():
            system = task_blinding[label]
            totals[system] = totals.get(system, 0) + rank
            counts[system] = counts.get(system, 0) + 1
    means = {system: totals[system] / counts[system] for system in sorted(totals)}
    return RankSummary(mean_rank=means, submission_count=len(effective))


class AnnotationStore:
    """Tasks plus an append-only submission log; writes are serialized."""

    def __init__(self, tasks: Sequence[RankingTask], log_path: str | Path):
        self.tasks = {t.task_id: t for t in tasks}
        self.log_path = Path(log_path)
        self._write_lock = threading.Lock()

    def record_submission(self, sub: Submission) -> None:
        task = self.tasks.get(sub.task_id)
        if task is None:
            raise KeyError(f"unknown task {sub.task_id!r}")
        _validate_submission(sub, task)
        record = {
            "task_id": sub.task_id,
            "annotator_id": sub.annotator_id,
            "ranks": dict(sub.ranks),
            "submitted_at": sub.submitted_at or datetime.now(timezone.utc).isoformat(),
        }
        with self._write_lock:
            jsonl.append_record(self.log_path, record)

    def submissions(self) -> list[Submission]:
        if not self.log_path.exists():
            return []
        subs = []
        for _, rec in jsonl.read_records(self.log_path):
            subs.append(
                Submission(
                    task_id=rec["task_id"],
                    annotator_id=rec["annotator_id"],
                    ranks={str(k): int(v) for k, v in rec["ranks"].items()},
                    submitted_at=rec.get("submitted_at", ""),
                )
            )
        return subs

    def summary(self) -> RankSummary:
        return mean_ranks(self.submissions(), {tid: t.blinding for tid, t in self.tasks.items()})


def _display_order(task: RankingTask, annotator_id: str, seed: int) -> list[BlindedOutput]:
    """Per-(task, annotator) seeded permutation of the outputs, against position bias."""
    digest = hashlib.blake2b(
        f"{task.task_id}:{annotator_id}:{seed}".encode("utf-8"), digest_size=8
    ).digest()
    outputs = list(task.outputs)
    random.Random(int.from_bytes(digest, "big")).shuffle(outputs)
    return outputs


class SubmissionIn(BaseModel):
    task_id: str
    annotator_id: str
    ranks: dict[str, int]


def create_app(
    store: AnnotationStore,
    static_dir: str | Path | None = None,
    display_seed: int = 0,
) -> FastAPI:
    app = FastAPI(title="portalgen annotation")

    @app.get("/api/tasks")
    def get_tasks(annotator: str = Query(...)):
        payload = []
        for task_id in sorted(store.tasks):
            task = store.tasks[task_id]
            payload.append(
                {
                    "task_id": task.task_id,
                    "prompt_text": task.prompt_text,
                    "outputs": [
                        {"label": o.label, "text": o.text}
                        for o in _display_order(task, annotator, display_seed)
                    ],
                }
            )
        return payload

    @app.post("/api/submissions")
    def post_submission(body: SubmissionIn):
        sub = Submission(task_id=body.task_id, annotator_id=body.annotator_id, ranks=body.ranks)
        try:
            store.record_submission(sub)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return {"status": "ok"}

    @app.get("/api/summary")
    def get_summary():
        try:
            summary = store.summary()
        except ValueError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        return {"mean_ranks": dict(summary.mean_rank), "submission_count": summary.submission_count}

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
