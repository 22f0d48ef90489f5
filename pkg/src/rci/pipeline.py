"""Rejection-sampling synthesis of supervised fine-tuning trajectories:
sample rollouts per question under varied head prompts, keep only the ones the
verifier rewards, cap per task, and export JSONL records."""
from __future__ import annotations

import fcntl
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .grpo import reward
from .llm_client import ChatMessage, ClientError
from .rollout import HEAD_PROMPT, RolloutConfig, Transcript, conversation_messages, run_rollout
from .sandbox import SandboxError
from .tasks import lookup

log = logging.getLogger(__name__)

FORCED_CODE_SUFFIX = "\nYou must use at least one code block before answering."
DEFAULT_PROMPT_VARIANTS = (HEAD_PROMPT, HEAD_PROMPT + FORCED_CODE_SUFFIX)


@dataclass(frozen=True)
class SynthesisPlan:
    tasks: tuple[str, ...]
    samples_per_question: int
    questions_per_task: int = 50
    cap_per_task: int = 70
    temperature: float = 1.0
    prompt_variants: tuple[str, ...] = DEFAULT_PROMPT_VARIANTS
    base_seed: int = 0
    max_code_calls: int = 5
    exec_timeout: float = 60.0
    max_model_turns: int = 12
    difficulty: dict[str, dict[str, Any]] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "tasks", tuple(self.tasks))
        object.__setattr__(self, "prompt_variants", tuple(self.prompt_variants))
        if not self.tasks:
            raise ValueError("plan needs at least one task")
        if self.samples_per_question < 1:
            raise ValueError("samples_per_question must be positive")
        if self.questions_per_task < 1:
            raise ValueError("questions_per_task must be positive")
        if self.cap_per_task < 1:
            raise ValueError("cap_per_task must be >= 1")
        if not self.prompt_variants:
            raise ValueError("plan needs at least one prompt variant")

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "SynthesisPlan":
        known = {
            "tasks",
            "samples_per_question",
            "questions_per_task",
            "cap_per_task",
            "temperature",
            "prompt_variants",
            "base_seed",
            "max_code_calls",
            "exec_timeout",
            "max_model_turns",
            "difficulty",
        }
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown plan fields: {sorted(unknown)}")
        kwargs = dict(obj)
        if "tasks" in kwargs:
            kwargs["tasks"] = tuple(kwargs["tasks"])
        if "prompt_variants" in kwargs:
            kwargs["prompt_variants"] = tuple(kwargs["prompt_variants"])
        return cls(**kwargs)


@dataclass(frozen=True)
class SftRecord:
    task_name: str
    question: str
    prompt_variant_id: int
    messages: tuple[ChatMessage, ...]
    final_answer: str
    code_calls: int
    seed: int  # instance seed, kept so records can be re-verified

    def to_json(self) -> dict[str, Any]:
        return {
            "task": self.task_name,
            "seed": self.seed,
            "question": self.question,
            "prompt_variant_id": self.prompt_variant_id,
            "messages": [{"role": m.role, "content": m.content} for m in self.messages],
            "final_answer": self.final_answer,
            "code_calls": self.code_calls,
        }

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "SftRecord":
        return cls(
            task_name=obj["task"],
            question=obj["question"],
            prompt_variant_id=obj["prompt_variant_id"],
            messages=tuple(ChatMessage(m["role"], m["content"]) for m in obj["messages"]),
            final_answer=obj["final_answer"],
            code_calls=obj["code_calls"],
            seed=obj["seed"],
        )


def inline_messages(record: SftRecord) -> str:
    """Re-inline tool-role execution outputs into one single-sequence text.

    Lossless with respect to the rollout text: assistant and tool contents are
    concatenated in order, which is exactly the segment order of the source
    transcript.
    """
    return "".join(
        m.content for m in record.messages if m.role in ("assistant", "tool")
    )


def record_from_transcript(
    transcript: Transcript, variant_id: int, seed: int, cfg: RolloutConfig
) -> SftRecord:
    messages = conversation_messages(transcript, cfg)
    return SftRecord(
        task_name=transcript.task_name,
        question=transcript.question,
        prompt_variant_id=variant_id,
        messages=tuple(messages),
        final_answer=transcript.final_answer or "",
        code_calls=transcript.code_calls,
        seed=seed,
    )


@dataclass
class SynthesisReport:
    per_task: dict[str, dict[str, Any]] = field(default_factory=dict)
    total_sampled: int = 0
    total_correct: int = 0
    total_emitted: int = 0
    infrastructure_errors: int = 0

    def task_row(self, name: str) -> dict[str, Any]:
        return self.per_task.setdefault(
            name,
            {"sampled": 0, "correct": 0, "emitted": 0, "errors": 0, "acceptance_rate": 0.0},
        )

    def finalize(self) -> None:
        for row in self.per_task.values():
            row["acceptance_rate"] = row["correct"] / row["sampled"] if row["sampled"] else 0.0
            row["no_valid_trajectories"] = row["correct"] == 0

    def to_json(self) -> dict[str, Any]:
        return {
            "per_task": self.per_task,
            "total_sampled": self.total_sampled,
            "total_correct": self.total_correct,
            "total_emitted": self.total_emitted,
            "infrastructure_errors": self.infrastructure_errors,
        }


class _Cursor:
    """Advisory-locked on-disk set of completed (task, seed, sample) keys."""

    def __init__(self, path: Path):
        self.path = path
        self.done: set[str] = set()
        if path.exists():
            with open(path, "r", encoding="utf-8") as fh:
                self.done = set(json.load(fh).get("done", []))

    @staticmethod
    def key(task: str, seed: int, sample: int) -> str:
        return f"{task}|{seed}|{sample}"

    def mark(self, key: str) -> None:
        self.done.add(key)
        tmp = self.path.with_suffix(".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            fcntl.flock(fh, fcntl.LOCK_EX)
            json.dump({"done": sorted(self.done)}, fh)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, self.path)


def synthesize(
    plan: SynthesisPlan,
    client: Any,
    sandbox: Callable,
    out_dir: str | Path,
    *,
    client_factory: Callable[[], Any] | None = None,
) -> tuple[list[SftRecord], SynthesisReport]:
    """Run the rejection-sampling loop and append accepted records to
    ``out_dir/sft.jsonl``.

    Only reward-1 transcripts are kept, at most ``cap_per_task`` per task in
    generation order. Completed samples are tracked in ``out_dir/cursor.json``
    so re-running the same plan emits no duplicates. Client or sandbox
    infrastructure failures are logged, counted in the report, and skipped.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cursor = _Cursor(out_dir / "cursor.json")
    records_path = out_dir / "sft.jsonl"
    report = SynthesisReport()
    records: list[SftRecord] = []
    emitted_per_task: dict[str, int] = {}
    for line in _iter_jsonl(records_path):
        emitted_per_task[line["task"]] = emitted_per_task.get(line["task"], 0) + 1

    for task_name in plan.tasks:
        task = lookup(task_name)  # fails fast on unknown tasks
        row = report.task_row(task_name)
        difficulty = plan.difficulty.get(task_name)
        for q_index in range(plan.questions_per_task):
            seed = plan.base_seed + q_index
            instance = task.generate(seed, difficulty)
            for sample in range(plan.samples_per_question):
                key = _Cursor.key(task_name, seed, sample)
                if key in cursor.done:
                    continue
                variant_id = sample % len(plan.prompt_variants)
                cfg = RolloutConfig(
                    max_code_calls=plan.max_code_calls,
                    exec_timeout=plan.exec_timeout,
                    temperature=plan.temperature,
                    max_model_turns=plan.max_model_turns,
                    head_prompt=plan.prompt_variants[variant_id],
                )
                rollout_client = client_factory() if client_factory is not None else client
                try:
                    transcript = run_rollout(instance, rollout_client, sandbox, cfg)
                except (ClientError, SandboxError) as exc:
                    log.warning("sample %s failed: %s", key, exc)
                    row["errors"] += 1
                    report.infrastructure_errors += 1
                    cursor.mark(key)
                    continue
                row["sampled"] += 1
                report.total_sampled += 1
                if transcript.termination in ("generation_error", "execution_error_terminal"):
                    row["errors"] += 1
                    report.infrastructure_errors += 1
                    cursor.mark(key)
                    continue
                score = reward(instance, transcript)
                if score == 1.0:
                    row["correct"] += 1
                    report.total_correct += 1
                    if emitted_per_task.get(task_name, 0) < plan.cap_per_task:
                        record = record_from_transcript(transcript, variant_id, seed, cfg)
                        _append_jsonl(records_path, record.to_json())
                        records.append(record)
                        emitted_per_task[task_name] = emitted_per_task.get(task_name, 0) + 1
                        row["emitted"] += 1
                        report.total_emitted += 1
                cursor.mark(key)
    report.finalize()
    return records, report


def _iter_jsonl(path: Path):
    if not path.exists():
        return
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)


def _append_jsonl(path: Path, obj: dict[str, Any]) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fcntl.flock(fh, fcntl.LOCK_EX)
        fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def _record_fingerprint(obj: dict[str, Any]) -> str:
    model_text = "".join(
        m["content"] for m in obj["messages"] if m["role"] == "assistant"
    )
    digest = hashlib.sha256()
    digest.update(obj["question"].encode("utf-8"))
    digest.update(b"\x00")
    digest.update(model_text.encode("utf-8"))
    return digest.hexdigest()


def dedup(records: list[SftRecord]) -> list[SftRecord]:
    """Drop records whose (question, concatenated model text) repeats."""
    seen: set[str] = set()
    kept: list[SftRecord] = []
    for record in records:
        fp = _record_fingerprint(record.to_json())
        if fp in seen:
            continue
        seen.add(fp)
        kept.append(record)
    return kept


@dataclass(frozen=True)
class SplitVerdict:
    ok: bool
    violations: tuple[str, ...] = ()


def question_hash(question: str) -> str:
    return hashlib.sha256(question.encode("utf-8")).hexdigest()


def split_check(
    train_tasks: list[str],
    test_tasks: list[str],
    records: list[SftRecord] | None = None,
    heldout_questions: list[str] | None = None,
) -> SplitVerdict:
    """Verify train/test task names are disjoint and, when records and a
    held-out question set are supplied, that no exported question leaks."""
    violations: list[str] = []
    shared = sorted(set(train_tasks) & set(test_tasks))
    for name in shared:
        violations.append(f"task {name!r} appears in both splits")
    if records and heldout_questions:
        heldout = {question_hash(q) for q in heldout_questions}
        for record in records:
            if question_hash(record.question) in heldout:
                violations.append(
                    f"question of task {record.task_name!r} (seed {record.seed}) "
                    "appears in the held-out set"
                )
    return SplitVerdict(ok=not violations, violations=tuple(violations))
