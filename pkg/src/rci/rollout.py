"""Multi-turn rollout state machine: alternate model generation with sandboxed
code execution until a final answer or the call budget runs out."""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Any, Callable

from .llm_client import ChatMessage, ClientError, GenerationRequest, GenerationResult
from .sandbox import ExecutionResult, SandboxError
from .tasks import TaskInstance

log = logging.getLogger(__name__)

HEAD_PROMPT = (
    "The User asks a question, and you solve it. You first generate the "
    "reasoning and thinking process and then provide the User with the final "
    "answer. During the thinking process, **you can generate python code** for "
    "efficient searching, optimization, and computing with the format of "
    "starting the python block with ``` python. **A code query must involve "
    "only a single script that uses 'print' function for the output.**. Once "
    "the code script is complete, stop the generation. Then, the code "
    "interpreter platform will execute the code and return the execution "
    "output and error. Once you feel you are ready for the final answer, "
    "directly return the answer with the format <<<answer content>>> at the "
    "end of your response. Otherwise, you can continue your reasoning process "
    "and possibly generate more code query to solve the problem."
)

BUDGET_NOTICE = (
    "Code budget exhausted. Provide the final answer now in <<<...>>> format."
)

EXECUTION_PREFIX = "Code Execution Results:\n"
TRUNCATION_MARKER = "\n[output truncated]"

TERMINATIONS = (
    "answered",
    "budget_exhausted",
    "generation_error",
    "execution_error_terminal",
    "length_limit",
)

_FENCE_OPEN = re.compile(r"^```[ \t]*python[ \t]*$", re.IGNORECASE)
_FENCE_CLOSE = re.compile(r"^```[ \t]*$")


@dataclass(frozen=True)
class Segment:
    kind: str  # "model" | "execution"
    text: str
    index: int

    def __post_init__(self):
        if self.kind not in ("model", "execution"):
            raise ValueError(f"segment kind must be 'model' or 'execution', got {self.kind!r}")


@dataclass(frozen=True)
class Transcript:
    task_name: str
    question: str
    system_prompt: str
    segments: tuple[Segment, ...]
    final_answer: str | None
    termination: str
    code_calls: int
    model_turns: int

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if self.termination not in TERMINATIONS:
            raise ValueError(f"unknown termination {self.termination!r}")
        if (self.final_answer is not None) != (self.termination == "answered"):
            raise ValueError("final_answer must be present iff termination is 'answered'")
        if self.code_calls != sum(1 for s in self.segments if s.kind == "execution"):
            raise ValueError("code_calls must equal the execution segment count")
        if self.model_turns != sum(1 for s in self.segments if s.kind == "model"):
            raise ValueError("model_turns must equal the model segment count")
        for i, segment in enumerate(self.segments):
            if segment.index != i:
                raise ValueError("segment indices must be contiguous from 0")
            if segment.kind == "execution" and (i == 0 or self.segments[i - 1].kind != "model"):
                raise ValueError("an execution segment must follow a model segment")

    def to_json(self) -> dict[str, Any]:
        return {
            "task": self.task_name,
            "question": self.question,
            "system_prompt": self.system_prompt,
            "segments": [{"kind": s.kind, "text": s.text} for s in self.segments],
            "final_answer": self.final_answer,
            "termination": self.termination,
            "code_calls": self.code_calls,
            "model_turns": self.model_turns,
        }

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "Transcript":
        return cls(
            task_name=obj["task"],
            question=obj["question"],
            system_prompt=obj.get("system_prompt", HEAD_PROMPT),
            segments=tuple(
                Segment(kind=s["kind"], text=s["text"], index=i)
                for i, s in enumerate(obj["segments"])
            ),
            final_answer=obj["final_answer"],
            termination=obj["termination"],
            code_calls=obj["code_calls"],
            model_turns=obj["model_turns"],
        )


@dataclass(frozen=True)
class RolloutConfig:
    max_code_calls: int = 5
    exec_timeout: float = 60.0
    temperature: float = 0.6  # 1.0 for synthesis/RL sampling, 0.6 for evaluation
    max_model_turns: int = 12
    head_prompt: str = HEAD_PROMPT
    max_tokens: int = 2048

    def __post_init__(self):
        if self.max_code_calls < 1:
            raise ValueError("max_code_calls must be >= 1")
        if self.exec_timeout <= 0:
            raise ValueError("exec_timeout must be positive")
        if self.max_model_turns <= self.max_code_calls:
            raise ValueError("max_model_turns must exceed max_code_calls")


def extract_code_block(segment_text: str) -> str | None:
    """Contents of the first complete ``` python fenced block, or None.

    An unterminated opener does not count; blocks after the first are ignored
    (the prompt allows a single script) with a logged warning.
    """
    lines = segment_text.split("\n")
    blocks: list[str] = []
    body: list[str] | None = None
    for line in lines:
        if body is None:
            if _FENCE_OPEN.match(line):
                body = []
        elif _FENCE_CLOSE.match(line):
            blocks.append("".join(f"{b}\n" for b in body))
            body = None
        else:
            body.append(line)
    if not blocks:
        return None
    if len(blocks) > 1:
        log.warning("segment contains %d code blocks; executing only the first", len(blocks))
    return blocks[0]


def extract_final_answer(segment_text: str) -> str | None:
    """Contents between the last '<<<' that still closes with '>>>'."""
    text = segment_text
    while True:
        start = text.rfind("<<<")
        if start == -1:
            return None
        end = text.find(">>>", start + 3)
        if end != -1:
            return text[start + 3 : end]
        text = text[:start]


@dataclass(frozen=True)
class Action:
    kind: str  # "execute" | "finish" | "continue" | "abort"
    code: str | None = None
    answer: str | None = None
    termination: str | None = None
    budget_notice: bool = False


def step(code_calls: int, model_turns: int, gen: GenerationResult, cfg: RolloutConfig) -> Action:
    """Decide what follows the freshly generated segment.

    Answer extraction wins over code when both appear; code only executes
    while the call budget lasts, otherwise the caller appends a budget notice
    and generation continues.
    """
    answer = extract_final_answer(gen.text)
    if answer is not None:
        return Action(kind="finish", answer=answer)
    if model_turns >= cfg.max_model_turns:
        return Action(kind="abort", termination="budget_exhausted")
    code = extract_code_block(gen.text)
    if code is not None:
        if code_calls < cfg.max_code_calls:
            return Action(kind="execute", code=code)
        return Action(kind="continue", budget_notice=True)
    if gen.finish_reason == "length":
        return Action(kind="abort", termination="length_limit")
    return Action(kind="continue")


def _format_seconds(value: float) -> str:
    return f"{value:g}"


def render_execution(result: ExecutionResult, timeout: float) -> str:
    """Bit-exact injection text for an execution result."""
    if result.timed_out:
        return (
            f"{EXECUTION_PREFIX}Error: execution timed out after "
            f"{_format_seconds(timeout)} seconds"
        )
    if result.exit_code != 0:
        return f"{EXECUTION_PREFIX}Error:\n{result.stderr}"
    text = f"{EXECUTION_PREFIX}{result.stdout}"
    if result.truncated:
        text += TRUNCATION_MARKER
    return text


def run_rollout(
    task: TaskInstance,
    client: Any,
    sandbox: Callable[[str, float], ExecutionResult],
    cfg: RolloutConfig | None = None,
) -> Transcript:
    """Drive one question to termination.

    Script failures are injected back as error text and the model continues;
    only sandbox infrastructure failures and unrecoverable client errors
    terminate the rollout early.
    """
    if not task.question:
        raise ValueError("task question must be non-empty")
    cfg = cfg or RolloutConfig()
    conversation: list[ChatMessage] = [
        ChatMessage("system", cfg.head_prompt),
        ChatMessage("user", task.question),
    ]
    segments: list[Segment] = []
    code_calls = 0
    model_turns = 0
    final_answer: str | None = None
    termination: str | None = None
    notice_sent = False

    while termination is None:
        request = GenerationRequest(
            messages=tuple(conversation),
            temperature=cfg.temperature,
            max_tokens=cfg.max_tokens,
        )
        try:
            gen = client.generate(request)
        except ClientError as exc:
            log.warning("generation failed on %s: %s", task.task_name, exc)
            termination = "generation_error"
            break
        segments.append(Segment(kind="model", text=gen.text, index=len(segments)))
        model_turns += 1
        conversation.append(ChatMessage("assistant", gen.text))

        action = step(code_calls, model_turns, gen, cfg)
        if action.kind == "finish":
            final_answer = action.answer
            termination = "answered"
        elif action.kind == "abort":
            termination = action.termination
        elif action.kind == "execute":
            try:
                result = sandbox(action.code, cfg.exec_timeout)
            except SandboxError as exc:
                log.error("sandbox infrastructure failure: %s", exc)
                termination = "execution_error_terminal"
                break
            injection = render_execution(result, cfg.exec_timeout)
            segments.append(Segment(kind="execution", text=injection, index=len(segments)))
            code_calls += 1
            conversation.append(ChatMessage("tool", injection))
        else:  # continue_generation
            if action.budget_notice and not notice_sent:
                conversation.append(ChatMessage("user", BUDGET_NOTICE))
                notice_sent = True

    return Transcript(
        task_name=task.task_name,
        question=task.question,
        system_prompt=cfg.head_prompt,
        segments=tuple(segments),
        final_answer=final_answer,
        termination=termination,
        code_calls=code_calls,
        model_turns=model_turns,
    )


def conversation_messages(transcript: Transcript, cfg: RolloutConfig | None = None) -> list[ChatMessage]:
    """Reconstruct the exact message sequence the client saw, including the
    deterministic budget notice position."""
    cfg = cfg or RolloutConfig()
    messages = [
        ChatMessage("system", transcript.system_prompt),
        ChatMessage("user", transcript.question),
    ]
    notice_sent = False
    segments = transcript.segments
    for i, segment in enumerate(segments):
        if segment.kind == "model":
            messages.append(ChatMessage("assistant", segment.text))
            followed_by_execution = i + 1 < len(segments) and segments[i + 1].kind == "execution"
            if (
                not notice_sent
                and not followed_by_execution
                and extract_final_answer(segment.text) is None
                and extract_code_block(segment.text) is not None
            ):
                messages.append(ChatMessage("user", BUDGET_NOTICE))
                notice_sent = True
        else:
            messages.append(ChatMessage("tool", segment.text))
    return messages
