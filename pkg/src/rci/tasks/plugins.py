"""External task plugins: generator/verifier subprocess commands speaking JSON.

Contract:
  generator command: stdin {"seed": int, "difficulty": {...}} -> stdout TaskInstance JSON
  verifier command:  stdin {"instance": {...}, "answer": str} -> stdout Verdict JSON, exit 0
"""
from __future__ import annotations

import json
import shlex
import subprocess
from dataclasses import dataclass, field
from typing import Any

from .base import Task, TaskInstance, Verdict


class PluginError(RuntimeError):
    pass


@dataclass(frozen=True)
class PluginDescriptor:
    name: str
    generator_cmd: str
    verifier_cmd: str
    default_difficulty: dict[str, Any] = field(default_factory=dict)
    timeout: float = 60.0

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "PluginDescriptor":
        return cls(
            name=obj["name"],
            generator_cmd=obj["generator_cmd"],
            verifier_cmd=obj["verifier_cmd"],
            default_difficulty=obj.get("default_difficulty", {}),
            timeout=obj.get("timeout", 60.0),
        )


def _run_json(cmd: str, payload: dict[str, Any], timeout: float) -> dict[str, Any]:
    proc = subprocess.run(
        shlex.split(cmd),
        input=json.dumps(payload),
        capture_output=True,
        text=True,
        timeout=timeout,
    )
    if proc.returncode != 0:
        raise PluginError(f"plugin command {cmd!r} exited {proc.returncode}: {proc.stderr.strip()}")
    try:
        return json.loads(proc.stdout)
    except json.JSONDecodeError as exc:
        raise PluginError(f"plugin command {cmd!r} emitted invalid JSON: {exc}") from exc


class PluginTask(Task):
    """Task backed by external generator/verifier commands."""

    def __init__(self, descriptor: PluginDescriptor):
        self.descriptor = descriptor
        self.name = descriptor.name
        self.default_difficulty = dict(descriptor.default_difficulty)

    def generate(self, seed: int, difficulty: dict[str, Any] | None = None) -> TaskInstance:
        diff = dict(self.default_difficulty)
        if difficulty:
            diff.update(difficulty)
        obj = _run_json(
            self.descriptor.generator_cmd,
            {"seed": seed, "difficulty": diff},
            self.descriptor.timeout,
        )
        instance = TaskInstance.from_json(obj)
        if instance.task_name != self.name:
            raise PluginError(
                f"plugin generator returned task {instance.task_name!r}, expected {self.name!r}"
            )
        return instance

    def verify(self, instance: TaskInstance, answer: str) -> Verdict:
        obj = _run_json(
            self.descriptor.verifier_cmd,
            {"instance": instance.to_json(), "answer": answer},
            self.descriptor.timeout,
        )
        return Verdict(correct=bool(obj["correct"]), reason=obj.get("reason", ""))

    def solve(self, instance: TaskInstance) -> str:
        raise PluginError(f"plugin task {self.name!r} has no reference solver")

    def perturb(self, instance: TaskInstance, answer: str, rng) -> str:
        raise PluginError(f"plugin task {self.name!r} has no perturbation rule")
