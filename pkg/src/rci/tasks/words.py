"""String and list tasks: letter counting, reversal, pattern insertion,
category counting, and number sorting."""
from __future__ import annotations

import random
import string
from typing import Any

from .base import Task, TaskInstance, Verdict
from .normalize import normalize_answer


class LettersTask(Task):
    """Count occurrences of a letter in a word and report 1-indexed positions."""

    name = "letters"
    answer_kind = "letters_count"
    default_difficulty = {"min_len": 8, "max_len": 15}

    def _generate(self, rng: random.Random, diff: dict[str, Any]) -> tuple[str, Any]:
        length = rng.randint(diff["min_len"], diff["max_len"])
        word = "".join(rng.choice(string.ascii_lowercase) for _ in range(length))
        if rng.random() < 0.8:
            target = rng.choice(word)
        else:
            target = rng.choice(string.ascii_lowercase)
        positions = [i + 1 for i, ch in enumerate(word) if ch == target]
        question = (
            f"How many times does the letter '{target}' appear in the word "
            f"'{word}', and at which 1-indexed positions? Answer in the form "
            "'count: p1,p2,...' (if the letter does not appear, answer '0:')."
        )
        return question, {"count": len(positions), "positions": positions}

    @staticmethod
    def _parse(answer: str) -> tuple[int, list[int]] | None:
        head, sep, tail = answer.partition(":")
        count_text = normalize_answer(head, "integer")
        try:
            count = int(count_text)
        except ValueError:
            return None
        positions_text = normalize_answer(tail, "integer_list") if sep else ""
        if not positions_text:
            return count, []
        try:
            positions = [int(p) for p in positions_text.split(",")]
        except ValueError:
            return None
        return count, positions

    def verify(self, instance: TaskInstance, answer: str) -> Verdict:
        parsed = self._parse(answer)
        if parsed is None:
            return Verdict(False, "parse: expected 'count: p1,p2,...'")
        count, positions = parsed
        gt = instance.ground_truth
        if count != gt["count"]:
            return Verdict(False, f"count {count} != {gt['count']}")
        if positions != gt["positions"]:
            return Verdict(False, f"positions {positions} != {gt['positions']}")
        return Verdict(True)

    def solve(self, instance: TaskInstance) -> str:
        gt = instance.ground_truth
        return f"{gt['count']}: {','.join(str(p) for p in gt['positions'])}"

    def perturb(self, instance: TaskInstance, answer: str, rng: random.Random) -> str:
        count, positions = self._parse(answer)  # reference answers always parse
        if positions and rng.random() < 0.5:
            idx = rng.randrange(len(positions))
            positions = list(positions)
            positions[idx] += rng.choice([-1, 1])
        else:
            count += rng.choice([1, 2]) if count == 0 else rng.choice([-1, 1])
        return f"{count}: {','.join(str(p) for p in positions)}"


class SpellBackwardTask(Task):
    name = "spell_backward"
    answer_kind = "string"
    default_difficulty = {"min_len": 5, "max_len": 12}

    def _generate(self, rng: random.Random, diff: dict[str, Any]) -> tuple[str, Any]:
        length = rng.randint(diff["min_len"], diff["max_len"])
        word = "".join(rng.choice(string.ascii_lowercase) for _ in range(length))
        question = f"Spell the word '{word}' backward. Answer with the reversed string."
        return question, word[::-1]

    def verify(self, instance: TaskInstance, answer: str) -> Verdict:
        got = normalize_answer(answer, "string")
        if got == instance.ground_truth:
            return Verdict(True)
        return Verdict(False, f"expected {instance.ground_truth!r}, got {got!r}")

    def solve(self, instance: TaskInstance) -> str:
        return instance.ground_truth

    def perturb(self, instance: TaskInstance, answer: str, rng: random.Random) -> str:
        word = normalize_answer(answer, "string")
        idx = rng.randrange(len(word))
        alternatives = [c for c in string.ascii_lowercase if c != word[idx]]
        return word[:idx] + rng.choice(alternatives) + word[idx + 1 :]


_INSERTION_PATTERNS = ["ABCD", "BCDE", "CDEA", "DEAB", "EABC"]


def apply_insertions(text: str) -> str:
    """Insert each matched pattern's first character right after the match.

    Matches are found on the original string (overlaps included) and all
    insertions apply simultaneously.
    """
    inserts: dict[int, str] = {}
    for pattern in _INSERTION_PATTERNS:
        start = text.find(pattern)
        while start != -1:
            inserts[start + len(pattern) - 1] = pattern[0]
            start = text.find(pattern, start + 1)
    out = []
    for i, ch in enumerate(text):
        out.append(ch)
        if i in inserts:
            out.append(inserts[i])
    return "".join(out)


class StringInsertionTask(Task):
    name = "string_insertion"
    answer_kind = "string"
    default_difficulty = {"min_len": 10, "max_len": 20, "planted": 2}

    def _generate(self, rng: random.Random, diff: dict[str, Any]) -> tuple[str, Any]:
        alphabet = "ABCDE"
        chunks = [rng.choice(alphabet) for _ in range(rng.randint(diff["min_len"], diff["max_len"]))]
        for _ in range(diff["planted"]):
            pos = rng.randrange(len(chunks) + 1)
            chunks.insert(pos, rng.choice(_INSERTION_PATTERNS))
        source = "".join(chunks)
        rules = ", ".join(f"{p} -> insert {p[0]} after it" for p in _INSERTION_PATTERNS)
        question = (
            "Transform the string below by scanning it from left to right: for "
            "every occurrence of each pattern, insert the pattern's first "
            f"character immediately after that occurrence ({rules}). All "
            "insertions are applied simultaneously on the original string, and "
            f"overlapping occurrences all count. String: {source}. "
            "Answer with the transformed string."
        )
        return question, apply_insertions(source).casefold()

    def verify(self, instance: TaskInstance, answer: str) -> Verdict:
        got = normalize_answer(answer, "string")
        if got == instance.ground_truth:
            return Verdict(True)
        return Verdict(False, f"expected {instance.ground_truth!r}, got {got!r}")

    def solve(self, instance: TaskInstance) -> str:
        return instance.ground_truth.upper()

    def perturb(self, instance: TaskInstance, answer: str, rng: random.Random) -> str:
        word = normalize_answer(answer, "string")
        idx = rng.randrange(len(word))
        alternatives = [c for c in "abcde" if c != word[idx]]
        return word[:idx] + rng.choice(alternatives) + word[idx + 1 :]


_CATEGORIES: dict[str, list[str]] = {
    "fruits": ["apple", "banana", "orange", "pear", "plum", "grape", "mango", "lemon"],
    "animals": ["dog", "cat", "rabbit", "horse", "goat", "duck", "chicken", "cow"],
    "vehicles": ["car", "bicycle", "truck", "scooter", "van", "sled"],
    "musical instruments": ["violin", "trumpet", "piano", "drum", "flute", "guitar"],
    "vegetables": ["carrot", "onion", "pepper", "cucumber", "turnip", "leek"],
    "items of furniture": ["chair", "table", "sofa", "bed", "stool", "desk"],
}


def _with_article(count: int, item: str) -> str:
    if count == 1:
        article = "an" if item[0] in "aeiou" else "a"
        return f"{article} {item}"
    return f"{count} {item}s"


class ObjectCountingTask(Task):
    name = "object_counting"
    answer_kind = "integer"
    default_difficulty = {"min_items": 4, "max_items": 9, "max_count": 5}

    def _generate(self, rng: random.Random, diff: dict[str, Any]) -> tuple[str, Any]:
        n_items = rng.randint(diff["min_items"], diff["max_items"])
        names = rng.sample(sorted(_CATEGORIES), k=3)
        items: list[tuple[str, str, int]] = []
        used: set[str] = set()
        for _ in range(n_items):
            category = rng.choice(names)
            candidates = [w for w in _CATEGORIES[category] if w not in used]
            if not candidates:
                continue
            word = rng.choice(candidates)
            used.add(word)
            items.append((category, word, rng.randint(1, diff["max_count"])))
        query = rng.choice(sorted({c for c, _, _ in items}))
        total = sum(n for c, _, n in items if c == query)
        listing = ", ".join(_with_article(n, w) for _, w, n in items)
        question = (
            f"I have {listing}. How many {query} do I have in total? "
            "Answer with a single integer."
        )
        return question, str(total)

    def verify(self, instance: TaskInstance, answer: str) -> Verdict:
        got = normalize_answer(answer, "integer")
        if got == instance.ground_truth:
            return Verdict(True)
        return Verdict(False, f"expected {instance.ground_truth}, got {got!r}")

    def solve(self, instance: TaskInstance) -> str:
        return instance.ground_truth

    def perturb(self, instance: TaskInstance, answer: str, rng: random.Random) -> str:
        value = int(normalize_answer(answer, "integer"))
        return str(max(0, value + rng.choice([-1, 1, 2])))


class NumberSortingTask(Task):
    name = "number_sorting"
    answer_kind = "integer_list"
    default_difficulty = {"min_len": 5, "max_len": 12, "min_value": -999, "max_value": 999}

    def _generate(self, rng: random.Random, diff: dict[str, Any]) -> tuple[str, Any]:
        length = rng.randint(diff["min_len"], diff["max_len"])
        values = [rng.randint(diff["min_value"], diff["max_value"]) for _ in range(length)]
        descending = rng.random() < 0.5
        order = "descending" if descending else "ascending"
        truth = sorted(values, reverse=descending)
        question = (
            f"Sort these numbers in {order} order: "
            f"{', '.join(str(v) for v in values)}. "
            "Answer with the sorted numbers as a comma-separated list."
        )
        return question, ",".join(str(v) for v in truth)

    def verify(self, instance: TaskInstance, answer: str) -> Verdict:
        got = normalize_answer(answer, "integer_list")
        if got == instance.ground_truth:
            return Verdict(True)
        return Verdict(False, f"expected {instance.ground_truth}, got {got!r}")

    def solve(self, instance: TaskInstance) -> str:
        return instance.ground_truth

    def perturb(self, instance: TaskInstance, answer: str, rng: random.Random) -> str:
        values = [int(v) for v in normalize_answer(answer, "integer_list").split(",")]
        distinct_pairs = [
            (i, j)
            for i in range(len(values))
            for j in range(i + 1, len(values))
            if values[i] != values[j]
        ]
        if distinct_pairs and rng.random() < 0.5:
            i, j = rng.choice(distinct_pairs)
            values[i], values[j] = values[j], values[i]
        else:
            values[rng.randrange(len(values))] += rng.choice([-1, 1])
        return ",".join(str(v) for v in values)
