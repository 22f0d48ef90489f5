"""Masked GRPO objective numerics over recorded trajectories.

Computes scalar objective values only: group-relative advantages, the clipped
importance-weighted surrogate, and a per-token KL penalty, all restricted to
model-generated tokens. Execution-injected tokens (mask 0) contribute exactly
zero everywhere. No parameters are updated here.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from .rollout import Transcript
from .tasks import TaskInstance, lookup


@dataclass(frozen=True)
class GrpoConfig:
    group_size: int = 5
    clip_eps: float = 0.2
    kl_coeff: float = 0.001
    advantage_eps: float = 1e-8

    def __post_init__(self):
        if self.group_size < 2:
            raise ValueError("group_size must be >= 2")
        if self.clip_eps <= 0:
            raise ValueError("clip_eps must be positive")
        if self.kl_coeff < 0:
            raise ValueError("kl_coeff must be non-negative")
        if self.advantage_eps <= 0:
            raise ValueError("advantage_eps must be positive")


@dataclass(frozen=True)
class ScoredTrajectory:
    """Per-token logprobs under the policy, reference, and sampling models,
    with a model-token mask (1) vs execution-token mask (0) and the outcome
    reward."""

    token_logprobs_policy: tuple[float, ...]
    token_logprobs_ref: tuple[float, ...]
    token_logprobs_old: tuple[float, ...]
    mask: tuple[int, ...]
    reward: float
    group: str | None = None
    execution_positions: tuple[int, ...] | None = None  # audit hint for leak checks

    def __post_init__(self):
        for name in ("token_logprobs_policy", "token_logprobs_ref", "token_logprobs_old", "mask"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        n = len(self.token_logprobs_policy)
        if n < 1:
            raise ValueError("trajectory must contain at least one token")
        if not (len(self.token_logprobs_ref) == len(self.token_logprobs_old) == len(self.mask) == n):
            raise ValueError("logprob and mask lists must all have the same length")
        for name in ("token_logprobs_policy", "token_logprobs_ref", "token_logprobs_old"):
            values = getattr(self, name)
            arr = np.asarray(values, dtype=float)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
            if np.any(arr > 0.0):
                raise ValueError(f"{name} contains positive logprobs")
        if any(m not in (0, 1) for m in self.mask):
            raise ValueError("mask entries must be 0 or 1")
        if not any(self.mask):
            raise ValueError("at least one token must be model-generated (mask 1)")
        if self.execution_positions is not None:
            object.__setattr__(self, "execution_positions", tuple(self.execution_positions))
            if any(not 0 <= p < n for p in self.execution_positions):
                raise ValueError("execution_positions out of range")

    def to_json(self) -> dict[str, Any]:
        obj: dict[str, Any] = {
            "token_logprobs_policy": list(self.token_logprobs_policy),
            "token_logprobs_ref": list(self.token_logprobs_ref),
            "token_logprobs_old": list(self.token_logprobs_old),
            "mask": list(self.mask),
            "reward": self.reward,
        }
        if self.group is not None:
            obj["group"] = self.group
        if self.execution_positions is not None:
            obj["execution_positions"] = list(self.execution_positions)
        return obj

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "ScoredTrajectory":
        positions = obj.get("execution_positions")
        return cls(
            token_logprobs_policy=tuple(obj["token_logprobs_policy"]),
            token_logprobs_ref=tuple(obj["token_logprobs_ref"]),
            token_logprobs_old=tuple(obj["token_logprobs_old"]),
            mask=tuple(obj["mask"]),
            reward=float(obj["reward"]),
            group=obj.get("group"),
            execution_positions=tuple(positions) if positions is not None else None,
        )


def group_advantages(rewards: Iterable[float], cfg: GrpoConfig) -> np.ndarray:
    """Reward-standardized advantages: (r - mean) / (population std + eps).

    Uniform reward groups come out as all zeros. The advantage is constant
    across every token of its trajectory (outcome reward, no shaping).
    """
    arr = np.asarray(list(rewards), dtype=float)
    if arr.shape != (cfg.group_size,):
        raise ValueError(f"expected {cfg.group_size} rewards, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("rewards contain non-finite values")
    centered = arr - arr.mean()
    return centered / (arr.std() + cfg.advantage_eps)


def surrogate_terms(traj: ScoredTrajectory, advantage: float, cfg: GrpoConfig) -> np.ndarray:
    """Per-masked-token clipped surrogate terms, in transcript order."""
    mask = np.asarray(traj.mask, dtype=bool)
    policy = np.asarray(traj.token_logprobs_policy, dtype=float)[mask]
    old = np.asarray(traj.token_logprobs_old, dtype=float)[mask]
    ratio = np.exp(policy - old)
    clipped = np.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps)
    return np.minimum(ratio * advantage, clipped * advantage)


def masked_surrogate(traj: ScoredTrajectory, advantage: float, cfg: GrpoConfig) -> float:
    """Token-mean clipped surrogate over model-generated tokens only."""
    terms = surrogate_terms(traj, advantage, cfg)
    return float(terms.sum() / terms.size)


def kl_terms(traj: ScoredTrajectory, cfg: GrpoConfig) -> np.ndarray:
    """Per-masked-token k3 KL estimates exp(d) - d - 1 with d = ref - policy;
    non-negative for every token and zero iff policy equals ref.

    Evaluated as expm1(d) - d so tiny divergences cannot round negative.
    """
    mask = np.asarray(traj.mask, dtype=bool)
    policy = np.asarray(traj.token_logprobs_policy, dtype=float)[mask]
    ref = np.asarray(traj.token_logprobs_ref, dtype=float)[mask]
    delta = ref - policy
    return np.expm1(delta) - delta


def masked_kl(traj: ScoredTrajectory, cfg: GrpoConfig) -> float:
    terms = kl_terms(traj, cfg)
    return float(terms.sum() / terms.size)


def grpo_objective(group: list[ScoredTrajectory], cfg: GrpoConfig) -> float:
    """Group objective: mean token-normalized surrogate minus the KL penalty."""
    if len(group) != cfg.group_size:
        raise ValueError(f"expected a group of {cfg.group_size} trajectories, got {len(group)}")
    advantages = group_advantages([t.reward for t in group], cfg)
    surrogate = sum(masked_surrogate(t, a, cfg) for t, a in zip(group, advantages)) / len(group)
    kl = sum(masked_kl(t, cfg) for t in group) / len(group)
    return float(surrogate - cfg.kl_coeff * kl)


def reward(instance: TaskInstance, transcript: Transcript) -> float:
    """Outcome-only binary reward: 1 iff the rollout answered and the task
    verifier accepts the normalized answer. No format shaping."""
    if transcript.termination != "answered" or transcript.final_answer is None:
        return 0.0
    task = lookup(instance.task_name)
    verdict = task.verify(instance, transcript.final_answer)
    return 1.0 if verdict.correct else 0.0


def load_score_file(path: str | Path, cfg: GrpoConfig) -> list[list[ScoredTrajectory]]:
    """Read a trajectory score JSONL file and assemble groups.

    Lines carrying a "group" key are grouped by its value (order preserved);
    otherwise consecutive chunks of ``cfg.group_size`` form the groups.
    """
    trajectories: list[ScoredTrajectory] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                trajectories.append(ScoredTrajectory.from_json(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise ValueError(f"{path}:{line_no}: bad trajectory record: {exc}") from exc
    if not trajectories:
        return []
    if any(t.group is not None for t in trajectories):
        order: list[str] = []
        by_group: dict[str, list[ScoredTrajectory]] = {}
        for t in trajectories:
            key = t.group if t.group is not None else ""
            if key not in by_group:
                by_group[key] = []
                order.append(key)
            by_group[key].append(t)
        return [by_group[key] for key in order]
    size = cfg.group_size
    if len(trajectories) % size != 0:
        raise ValueError(
            f"{len(trajectories)} ungrouped trajectories do not divide into groups of {size}"
        )
    return [trajectories[i : i + size] for i in range(0, len(trajectories), size)]
