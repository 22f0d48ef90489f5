"""Arithmetic-flavored tasks: chained sums, gcd, popcount, and the
expression-construction puzzles (24-style and arbitrary-target countdown)."""
from __future__ import annotations

import ast
import math
import random
import re
from collections import Counter
from fractions import Fraction
from typing import Any

from .base import Task, TaskInstance, Verdict
from .normalize import normalize_answer

_VALUE_TOL = 1e-6


# --- expression checking shared by the construction puzzles ---

class _ExprError(Exception):
    pass


def _eval_node(node: ast.expr, literals: list[int]) -> Fraction:
    if isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, int):
            raise _ExprError("non-integer literal")
        literals.append(node.value)
        return Fraction(node.value)
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        val = _eval_node(node.operand, literals)
        return -val if isinstance(node.op, ast.USub) else val
    if isinstance(node, ast.BinOp):
        left = _eval_node(node.left, literals)
        right = _eval_node(node.right, literals)
        if isinstance(node.op, ast.Add):
            return left + right
        if isinstance(node.op, ast.Sub):
            return left - right
        if isinstance(node.op, ast.Mult):
            return left * right
        if isinstance(node.op, ast.Div):
            if right == 0:
                raise _ExprError("division by zero")
            return left / right
        raise _ExprError(f"operator {type(node.op).__name__} not allowed")
    raise _ExprError(f"syntax element {type(node).__name__} not allowed")


def evaluate_arithmetic(expr: str) -> tuple[Fraction, list[int]]:
    """Evaluate +,-,*,/ over integer literals; returns (value, literals used)."""
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise _ExprError(str(exc)) from exc
    literals: list[int] = []
    value = _eval_node(tree.body, literals)
    return value, literals


def check_expression(answer: str, numbers: list[int], target: int) -> Verdict:
    """Accept an expression that uses each given number exactly once and hits
    the target within 1e-6. Tolerates a trailing '= target' in the answer."""
    norm = normalize_answer(answer, "expression")
    if not norm:
        return Verdict(False, "parse: empty answer")
    candidates = [p for p in norm.split("=") if p] or [norm]
    reason = "parse: not an arithmetic expression"
    for cand in candidates:
        try:
            value, literals = evaluate_arithmetic(cand)
        except _ExprError as exc:
            reason = f"parse: {exc}"
            continue
        if Counter(literals) != Counter(numbers):
            reason = f"numbers used {sorted(literals)} != given {sorted(numbers)}"
            continue
        if abs(float(value) - target) <= _VALUE_TOL:
            return Verdict(True, f"evaluates to {target}")
        reason = f"evaluates to {float(value):g}, expected {target}"
    return Verdict(False, reason)


def _combine(a: float, ea: str, b: float, eb: str) -> list[tuple[float, str]]:
    out = [
        (a + b, f"({ea}+{eb})"),
        (a * b, f"({ea}*{eb})"),
        (a - b, f"({ea}-{eb})"),
        (b - a, f"({eb}-{ea})"),
    ]
    if abs(b) > 1e-12:
        out.append((a / b, f"({ea}/{eb})"))
    if abs(a) > 1e-12:
        out.append((b / a, f"({eb}/{ea})"))
    return out


def _search_expression(items: list[tuple[float, str]], target: float) -> str | None:
    if len(items) == 1:
        val, expr = items[0]
        return expr if abs(val - target) <= _VALUE_TOL else None
    for i in range(len(items)):
        for j in range(i + 1, len(items)):
            rest = [items[k] for k in range(len(items)) if k != i and k != j]
            a, ea = items[i]
            b, eb = items[j]
            for cand in _combine(a, ea, b, eb):
                found = _search_expression(rest + [cand], target)
                if found is not None:
                    return found
    return None


def solve_expression_target(numbers: list[int], target: int) -> str | None:
    expr = _search_expression([(float(n), str(n)) for n in numbers], float(target))
    if expr is None:
        return None
    return expr[1:-1] if expr.startswith("(") and expr.endswith(")") else expr


def _perturb_expression(answer: str, rng: random.Random) -> str:
    """Bump one numeric literal; the multiset constraint then always fails."""
    tokens = list(re.finditer(r"\d+", answer))
    if not tokens:
        return answer + "+1"
    m = rng.choice(tokens)
    bumped = str(int(m.group()) + rng.choice([1, 2, 3]))
    return answer[: m.start()] + bumped + answer[m.end() :]


class Game24Task(Task):
    name = "game24"
    answer_kind = "expression"
    default_difficulty = {"min_value": 1, "max_value": 13}

    def _generate(self, rng: random.Random, diff: dict[str, Any]) -> tuple[str, Any]:
        lo, hi = diff["min_value"], diff["max_value"]
        while True:
            numbers = sorted(rng.randint(lo, hi) for _ in range(4))
            solution = solve_expression_target(numbers, 24)
            if solution is not None:
                break
        question = (
            f"Using each of the numbers {numbers[0]}, {numbers[1]}, {numbers[2]}, "
            f"and {numbers[3]} exactly once, write an arithmetic expression that "
            "evaluates to 24. You may use +, -, *, / and parentheses. "
            "Answer with the expression only."
        )
        return question, {"numbers": numbers, "target": 24, "solution": solution}

    def verify(self, instance: TaskInstance, answer: str) -> Verdict:
        gt = instance.ground_truth
        return check_expression(answer, gt["numbers"], gt["target"])

    def solve(self, instance: TaskInstance) -> str:
        return instance.ground_truth["solution"]

    def perturb(self, instance: TaskInstance, answer: str, rng: random.Random) -> str:
        return _perturb_expression(answer, rng)


class CountdownTask(Task):
    name = "countdown"
    answer_kind = "expression"
    default_difficulty = {"min_pool": 4, "max_pool": 6, "max_value": 9}

    def _generate(self, rng: random.Random, diff: dict[str, Any]) -> tuple[str, Any]:
        pool_size = rng.randint(diff["min_pool"], diff["max_pool"])
        for _ in range(50):
            numbers = [rng.randint(1, diff["max_value"]) for _ in range(pool_size)]
            target, solution = self._build(rng, numbers)
            if 10 <= target <= 9999:
                break
        numbers_text = ", ".join(str(n) for n in sorted(numbers))
        question = (
            f"Using each of the numbers {numbers_text} exactly once, write an "
            f"arithmetic expression that evaluates to {target}. You may use "
            "+, -, *, / and parentheses. Answer with the expression only."
        )
        return question, {
            "numbers": sorted(numbers),
            "target": target,
            "solution": solution,
        }

    @staticmethod
    def _build(rng: random.Random, numbers: list[int]) -> tuple[int, str]:
        # Combine random pairs bottom-up so the target is reachable by
        # construction and the built expression doubles as the reference answer.
        items: list[tuple[int, str]] = [(n, str(n)) for n in numbers]
        while len(items) > 1:
            i, j = rng.sample(range(len(items)), 2)
            a, ea = items[i]
            b, eb = items[j]
            ops = ["+", "*", "-", "/"]
            rng.shuffle(ops)
            combined: tuple[int, str] | None = None
            for op in ops:
                if op == "+":
                    combined = (a + b, f"({ea}+{eb})")
                elif op == "*" and a * b <= 9999:
                    combined = (a * b, f"({ea}*{eb})")
                elif op == "-" and a != b:
                    hi, ehi, lo, elo = (a, ea, b, eb) if a > b else (b, eb, a, ea)
                    combined = (hi - lo, f"({ehi}-{elo})")
                elif op == "/":
                    hi, ehi, lo, elo = (a, ea, b, eb) if a >= b else (b, eb, a, ea)
                    if lo > 1 and hi % lo == 0:
                        combined = (hi // lo, f"({ehi}/{elo})")
                if combined is not None:
                    break
            if combined is None:
                combined = (a + b, f"({ea}+{eb})")
            items = [items[k] for k in range(len(items)) if k != i and k != j]
            items.append(combined)
        value, expr = items[0]
        if expr.startswith("(") and expr.endswith(")"):
            expr = expr[1:-1]
        return value, expr

    def verify(self, instance: TaskInstance, answer: str) -> Verdict:
        gt = instance.ground_truth
        return check_expression(answer, gt["numbers"], gt["target"])

    def solve(self, instance: TaskInstance) -> str:
        return instance.ground_truth["solution"]

    def perturb(self, instance: TaskInstance, answer: str, rng: random.Random) -> str:
        return _perturb_expression(answer, rng)


class ChainSumTask(Task):
    name = "chain_sum"
    answer_kind = "integer"
    default_difficulty = {"min_terms": 3, "max_terms": 12, "max_value": 999}

    def _generate(self, rng: random.Random, diff: dict[str, Any]) -> tuple[str, Any]:
        n_terms = rng.randint(diff["min_terms"], diff["max_terms"])
        total = rng.randint(0, diff["max_value"])
        text = str(total)
        for _ in range(n_terms - 1):
            op = rng.choice(["+", "-"])
            value = rng.randint(0, diff["max_value"])
            total = total + value if op == "+" else total - value
            text += f" {op} {value}"
        question = f"Compute {text}. Answer with a single integer."
        return question, str(total)

    def verify(self, instance: TaskInstance, answer: str) -> Verdict:
        got = normalize_answer(answer, "integer")
        if got == instance.ground_truth:
            return Verdict(True)
        return Verdict(False, f"expected {instance.ground_truth}, got {got!r}")

    def solve(self, instance: TaskInstance) -> str:
        return instance.ground_truth

    def perturb(self, instance: TaskInstance, answer: str, rng: random.Random) -> str:
        return str(int(normalize_answer(answer, "integer")) + rng.choice([-10, -1, 1, 10]))


class GcdTask(Task):
    name = "gcd"
    answer_kind = "integer"
    default_difficulty = {"count": 2, "max_base": 40, "max_multiplier": 50}

    def _generate(self, rng: random.Random, diff: dict[str, Any]) -> tuple[str, Any]:
        base = rng.randint(2, diff["max_base"])
        values = [base * rng.randint(2, diff["max_multiplier"]) for _ in range(diff["count"])]
        truth = str(math.gcd(*values))
        listing = " and ".join(str(v) for v in values) if len(values) == 2 else ", ".join(str(v) for v in values)
        question = f"Compute the greatest common divisor of {listing}. Answer with a single integer."
        return question, truth

    def verify(self, instance: TaskInstance, answer: str) -> Verdict:
        got = normalize_answer(answer, "integer")
        if got == instance.ground_truth:
            return Verdict(True)
        return Verdict(False, f"expected {instance.ground_truth}, got {got!r}")

    def solve(self, instance: TaskInstance) -> str:
        return instance.ground_truth

    def perturb(self, instance: TaskInstance, answer: str, rng: random.Random) -> str:
        value = int(normalize_answer(answer, "integer"))
        return str(max(1, value + rng.choice([-2, -1, 1, 2])))


class CountBitsTask(Task):
    name = "count_bits"
    answer_kind = "integer"
    default_difficulty = {"bits": 64}

    def _generate(self, rng: random.Random, diff: dict[str, Any]) -> tuple[str, Any]:
        bits = diff["bits"]
        n = rng.getrandbits(bits) | (1 << (bits - 1))
        question = (
            f"How many 1 bits are in the binary representation of {n}? "
            "Answer with a single integer."
        )
        return question, str(bin(n).count("1"))

    def verify(self, instance: TaskInstance, answer: str) -> Verdict:
        got = normalize_answer(answer, "integer")
        if got == instance.ground_truth:
            return Verdict(True)
        return Verdict(False, f"expected {instance.ground_truth}, got {got!r}")

    def solve(self, instance: TaskInstance) -> str:
        return instance.ground_truth

    def perturb(self, instance: TaskInstance, answer: str, rng: random.Random) -> str:
        return str(int(normalize_answer(answer, "integer")) + rng.choice([-1, 1]))
