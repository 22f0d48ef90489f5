"""Seed-reproducible task generators with rule-based verifiers.

Twelve built-ins span logic, spatial, order, optimization, search, and math
styles of reasoning; everything else can be attached through the plugin
interface in :mod:`rci.tasks.plugins`.
"""
from __future__ import annotations

from .arithmetic import ChainSumTask, CountBitsTask, CountdownTask, Game24Task, GcdTask
from .base import Task, TaskInstance, Verdict
from .boards import EightQueensTask, MatrixRotationTask
from .normalize import normalize_answer
from .plugins import PluginDescriptor, PluginError, PluginTask
from .words import (
    LettersTask,
    NumberSortingTask,
    ObjectCountingTask,
    SpellBackwardTask,
    StringInsertionTask,
)

BUILTIN_TASKS: tuple[Task, ...] = (
    Game24Task(),
    EightQueensTask(),
    LettersTask(),
    GcdTask(),
    CountBitsTask(),
    ChainSumTask(),
    NumberSortingTask(),
    SpellBackwardTask(),
    MatrixRotationTask(),
    ObjectCountingTask(),
    StringInsertionTask(),
    CountdownTask(),
)

_REGISTRY: dict[str, Task] = {task.name: task for task in BUILTIN_TASKS}


class UnknownTaskError(KeyError):
    def __init__(self, name: str, known: list[str]):
        super().__init__(name)
        self.task_name = name
        self.known = known

    def __str__(self) -> str:
        return f"unknown task {self.task_name!r}; known tasks: {', '.join(self.known)}"


def task_names() -> list[str]:
    return sorted(_REGISTRY)


def lookup(name: str) -> Task:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise UnknownTaskError(name, task_names()) from None


def register_plugin(descriptor: PluginDescriptor) -> None:
    _REGISTRY[descriptor.name] = PluginTask(descriptor)


def unregister(name: str) -> None:
    """Drop a registered plugin (built-ins cannot be removed)."""
    task = _REGISTRY.get(name)
    if isinstance(task, PluginTask):
        del _REGISTRY[name]


__all__ = [
    "BUILTIN_TASKS",
    "PluginDescriptor",
    "PluginError",
    "PluginTask",
    "Task",
    "TaskInstance",
    "UnknownTaskError",
    "Verdict",
    "lookup",
    "normalize_answer",
    "register_plugin",
    "task_names",
    "unregister",
]
