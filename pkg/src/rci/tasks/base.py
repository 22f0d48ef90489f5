"""Core task types: instances, verdicts, and the generator/verifier contract."""
from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import Any


@dataclass(frozen=True)
class TaskInstance:
    """One generated question with hidden ground truth.

    ``ground_truth`` is an opaque JSON-able value; the question text never
    includes it for search/constructive tasks.
    """

    task_name: str
    question: str
    ground_truth: Any
    difficulty: dict[str, Any] = field(default_factory=dict)
    seed: int = 0

    def to_json(self) -> dict[str, Any]:
        return {
            "task": self.task_name,
            "seed": self.seed,
            "difficulty": self.difficulty,
            "question": self.question,
            "ground_truth": self.ground_truth,
        }

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "TaskInstance":
        return cls(
            task_name=obj["task"],
            question=obj["question"],
            ground_truth=obj["ground_truth"],
            difficulty=obj.get("difficulty", {}),
            seed=obj.get("seed", 0),
        )


@dataclass(frozen=True)
class Verdict:
    correct: bool
    reason: str = ""


def instance_rng(task_name: str, seed: int, difficulty: dict[str, Any]) -> random.Random:
    """Deterministic per-instance RNG.

    Seeded from a string so results are stable across processes (string seeds
    hash via sha512 inside ``random``, unaffected by PYTHONHASHSEED).
    """
    key = f"{task_name}|{seed}|{json.dumps(difficulty, sort_keys=True)}"
    return random.Random(key)


class Task:
    """A procedural task: seeded generator plus rule-based verifier.

    Subclasses set ``name``, ``answer_kind`` and ``default_difficulty`` and
    implement ``_generate``, ``verify``, ``solve`` and (optionally) a
    task-aware ``perturb`` used by the rejection properties.
    """

    name: str = ""
    answer_kind: str = "string"
    default_difficulty: dict[str, Any] = {}

    def generate(self, seed: int, difficulty: dict[str, Any] | None = None) -> TaskInstance:
        diff = dict(self.default_difficulty)
        if difficulty:
            diff.update(difficulty)
        rng = instance_rng(self.name, seed, diff)
        question, ground_truth = self._generate(rng, diff)
        return TaskInstance(
            task_name=self.name,
            question=question,
            ground_truth=ground_truth,
            difficulty=diff,
            seed=seed,
        )

    def _generate(self, rng: random.Random, diff: dict[str, Any]) -> tuple[str, Any]:
        raise NotImplementedError

    def verify(self, instance: TaskInstance, answer: str) -> Verdict:
        raise NotImplementedError

    def solve(self, instance: TaskInstance) -> str:
        """Return a reference answer the verifier must accept."""
        raise NotImplementedError

    def perturb(self, instance: TaskInstance, answer: str, rng: random.Random) -> str:
        """Return a corrupted variant of ``answer`` the verifier must reject."""
        raise NotImplementedError
