"""Grid tasks: square-matrix rotation and queen placement with obstacles."""
from __future__ import annotations

import random
import string
from typing import Any

from .base import Task, TaskInstance, Verdict
from .normalize import normalize_answer

_CELL_ALPHABET = string.ascii_lowercase + string.digits


def rotate_clockwise(grid: list[list[str]], quarter_turns: int) -> list[list[str]]:
    for _ in range(quarter_turns % 4):
        grid = [list(row) for row in zip(*grid[::-1])]
    return grid


def _grid_text(grid: list[list[str]]) -> str:
    return ";".join(",".join(row) for row in grid)


class MatrixRotationTask(Task):
    name = "matrix_rotation"
    answer_kind = "grid"
    default_difficulty = {"min_size": 2, "max_size": 5}

    def _generate(self, rng: random.Random, diff: dict[str, Any]) -> tuple[str, Any]:
        size = rng.randint(diff["min_size"], diff["max_size"])
        grid = [[rng.choice(_CELL_ALPHABET) for _ in range(size)] for _ in range(size)]
        degrees = rng.choice([90, 180, 270])
        rotated = rotate_clockwise(grid, degrees // 90)
        rows = "\n".join(" ".join(row) for row in grid)
        question = (
            f"Rotate the following {size}x{size} grid of characters {degrees} "
            f"degrees clockwise:\n{rows}\n"
            "Answer with the rotated grid, one row per line, cells separated by spaces."
        )
        return question, _grid_text(rotated)

    def verify(self, instance: TaskInstance, answer: str) -> Verdict:
        got = normalize_answer(answer, "grid")
        if got == instance.ground_truth:
            return Verdict(True)
        return Verdict(False, f"expected {instance.ground_truth!r}, got {got!r}")

    def solve(self, instance: TaskInstance) -> str:
        return instance.ground_truth.replace(";", "\n").replace(",", " ")

    def perturb(self, instance: TaskInstance, answer: str, rng: random.Random) -> str:
        canon = normalize_answer(answer, "grid")
        cells = canon.replace(";", ",").split(",")
        idx = rng.randrange(len(cells))
        alternatives = [c for c in _CELL_ALPHABET if c != cells[idx]]
        cells[idx] = rng.choice(alternatives)
        rows = canon.split(";")
        width = len(rows[0].split(","))
        out_rows = [",".join(cells[r * width : (r + 1) * width]) for r in range(len(rows))]
        return ";".join(out_rows)


def _attacks(a: tuple[int, int], b: tuple[int, int]) -> bool:
    return (
        a[0] == b[0]
        or a[1] == b[1]
        or a[0] - a[1] == b[0] - b[1]
        or a[0] + a[1] == b[0] + b[1]
    )


def _solve_queens(n: int, rng: random.Random) -> list[int]:
    """Columns by row for one n-queens solution, found by randomized backtracking."""
    cols: list[int] = []
    diag1: set[int] = set()
    diag2: set[int] = set()
    used: set[int] = set()

    def place(row: int) -> bool:
        if row == n:
            return True
        order = list(range(n))
        rng.shuffle(order)
        for col in order:
            if col in used or (row - col) in diag1 or (row + col) in diag2:
                continue
            used.add(col)
            diag1.add(row - col)
            diag2.add(row + col)
            cols.append(col)
            if place(row + 1):
                return True
            cols.pop()
            used.remove(col)
            diag1.remove(row - col)
            diag2.remove(row + col)
        return False

    if not place(0):
        raise RuntimeError(f"no {n}-queens solution found")  # n >= 4 always solvable
    return cols


class EightQueensTask(Task):
    """Complete a partially filled queens board while avoiding obstacle cells."""

    name = "eight_queens"
    answer_kind = "queen_positions"
    default_difficulty = {"board_size": 8, "prefilled": 3, "obstacles": 3}

    def _generate(self, rng: random.Random, diff: dict[str, Any]) -> tuple[str, Any]:
        n = diff["board_size"]
        cols = _solve_queens(n, rng)
        solution = [(row, col) for row, col in enumerate(cols)]
        prefilled_rows = sorted(rng.sample(range(n), k=diff["prefilled"]))
        prefilled = [solution[r] for r in prefilled_rows]
        missing = [cell for cell in solution if cell not in prefilled]
        free_cells = [
            (r, c) for r in range(n) for c in range(n) if (r, c) not in solution
        ]
        obstacles = sorted(rng.sample(free_cells, k=min(diff["obstacles"], len(free_cells))))
        pre_text = ", ".join(f"({r},{c})" for r, c in prefilled)
        obs_text = ", ".join(f"({r},{c})" for r, c in obstacles) or "none"
        question = (
            f"On a {n}x{n} board, {len(prefilled)} queens are already placed at "
            f"(row,col), 0-indexed: {pre_text}. Obstacle cells that cannot hold "
            f"a queen: {obs_text}. Place {len(missing)} more queens so that all "
            f"{n} queens are mutually non-attacking (no shared row, column, or "
            "diagonal) and no queen stands on an obstacle. Do not move the "
            "existing queens. Answer with the positions you add as "
            "space-separated row,col pairs, e.g. '0,3 1,6'."
        )
        truth = {
            "board_size": n,
            "prefilled": [list(c) for c in prefilled],
            "obstacles": [list(c) for c in obstacles],
            "solution_added": [list(c) for c in missing],
        }
        return question, truth

    @staticmethod
    def _parse_positions(answer: str, board_size: int, expected: int) -> list[tuple[int, int]] | None:
        text = answer.strip()
        for ch in "[](){}'\"":
            text = text.replace(ch, " ")
        tokens = [t for t in text.replace(";", " ").split() if t]
        pairs: list[tuple[int, int]] = []
        if tokens and all("," in t for t in tokens):
            for token in tokens:
                parts = [p for p in token.split(",") if p]
                if len(parts) != 2:
                    return None
                try:
                    pairs.append((int(parts[0]), int(parts[1])))
                except ValueError:
                    return None
            return pairs
        # fall back to a flat integer list: columns-by-row for a full board,
        # or consecutive row,col pairs
        flat = normalize_answer(answer, "integer_list")
        if not flat:
            return None
        try:
            values = [int(v) for v in flat.split(",")]
        except ValueError:
            return None
        if len(values) == board_size and expected == board_size:
            return [(row, col) for row, col in enumerate(values)]
        if len(values) == 2 * expected:
            return list(zip(values[0::2], values[1::2]))
        return None

    def verify(self, instance: TaskInstance, answer: str) -> Verdict:
        gt = instance.ground_truth
        n = gt["board_size"]
        prefilled = [tuple(c) for c in gt["prefilled"]]
        obstacles = {tuple(c) for c in gt["obstacles"]}
        added = self._parse_positions(answer, n, n - len(prefilled))
        if added is None:
            return Verdict(False, "parse: expected row,col pairs")
        queens = prefilled + added
        if len(queens) != n or len(set(queens)) != n:
            return Verdict(False, f"expected {n} distinct queens, got {len(set(queens))}")
        for r, c in added:
            if not (0 <= r < n and 0 <= c < n):
                return Verdict(False, f"({r},{c}) is off the board")
            if (r, c) in obstacles:
                return Verdict(False, f"({r},{c}) is an obstacle cell")
            if (r, c) in prefilled:
                return Verdict(False, f"({r},{c}) duplicates a pre-placed queen")
        for i in range(n):
            for j in range(i + 1, n):
                if _attacks(queens[i], queens[j]):
                    return Verdict(False, f"queens {queens[i]} and {queens[j]} attack each other")
        return Verdict(True)

    def solve(self, instance: TaskInstance) -> str:
        return " ".join(f"{r},{c}" for r, c in instance.ground_truth["solution_added"])

    def perturb(self, instance: TaskInstance, answer: str, rng: random.Random) -> str:
        gt = instance.ground_truth
        n = gt["board_size"]
        added = self._parse_positions(answer, n, n - len(gt["prefilled"]))
        idx = rng.randrange(len(added))
        while True:
            cell = (rng.randrange(n), rng.randrange(n))
            if cell != added[idx]:
                break
        moved = list(added)
        moved[idx] = cell
        return " ".join(f"{r},{c}" for r, c in moved)
