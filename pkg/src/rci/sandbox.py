"""Run untrusted scripts in isolated child processes with wall-clock timeouts,
process-group cleanup, output capping, and bounded parallelism."""
from __future__ import annotations

import logging
import os
import shlex
import shutil
import signal
import subprocess
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

log = logging.getLogger(__name__)

DEFAULT_STDOUT_LIMIT = 65536
DEFAULT_ENV_ALLOWLIST = ("PATH", "HOME", "LANG")
TRUNCATION_MARKER = "\n[output truncated]"


class SandboxError(Exception):
    """Sandbox infrastructure failure (cannot spawn, cannot create workdir);
    distinct from any misbehavior of the script itself."""


@dataclass(frozen=True)
class ExecutionRequest:
    code: str
    timeout: float = 60.0
    interpreter: str | None = None  # command template, e.g. "python3 {script_path}"
    stdout_limit: int = DEFAULT_STDOUT_LIMIT
    env_allowlist: tuple[str, ...] = DEFAULT_ENV_ALLOWLIST
    cpu_seconds: int | None = None  # forwarded to shim-mode templates
    mem_bytes: int | None = None

    def __post_init__(self):
        if not self.code:
            raise ValueError("code must be non-empty")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.stdout_limit <= 0:
            raise ValueError("stdout_limit must be positive")


@dataclass(frozen=True)
class ExecutionResult:
    stdout: str
    stderr: str
    exit_code: int
    timed_out: bool
    wall_ms: int
    truncated: bool
    pgid: int = -1  # process group id, for post-mortem leak checks


def _command(req: ExecutionRequest, script_path: str) -> list[str]:
    if req.interpreter is None:
        return [sys.executable, script_path]
    rendered = req.interpreter.format(
        script_path=script_path,
        timeout=req.timeout,
        cpu_seconds=req.cpu_seconds if req.cpu_seconds is not None else int(req.timeout),
        mem_bytes=req.mem_bytes if req.mem_bytes is not None else 0,
    )
    return shlex.split(rendered)


def _scrubbed_env(allowlist: tuple[str, ...]) -> dict[str, str]:
    return {key: os.environ[key] for key in allowlist if key in os.environ}


def _kill_group(pgid: int) -> None:
    try:
        os.killpg(pgid, signal.SIGKILL)
    except (ProcessLookupError, PermissionError):
        pass


def _cap(text: str, limit: int) -> tuple[str, bool]:
    if len(text) > limit:
        return text[:limit], True
    return text, False


def execute(req: ExecutionRequest) -> ExecutionResult:
    """Run one script to completion or deadline.

    Total for any script behavior: crashes, floods, and hangs all come back as
    results. Raises :class:`SandboxError` only for sandbox-side failures.
    """
    try:
        workdir = tempfile.mkdtemp(prefix="rci-exec-")
    except OSError as exc:
        raise SandboxError(f"cannot create workdir: {exc}") from exc
    pgid = -1
    started = time.monotonic()
    try:
        script_path = os.path.join(workdir, "script.py")
        with open(script_path, "w", encoding="utf-8", errors="replace") as fh:
            fh.write(req.code)
        try:
            proc = subprocess.Popen(
                _command(req, script_path),
                cwd=workdir,
                env=_scrubbed_env(req.env_allowlist),
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                stdin=subprocess.DEVNULL,
                text=True,
                errors="replace",
                start_new_session=True,
            )
        except OSError as exc:
            raise SandboxError(f"cannot spawn interpreter: {exc}") from exc
        pgid = proc.pid
        timed_out = False
        try:
            stdout, stderr = proc.communicate(timeout=req.timeout)
        except subprocess.TimeoutExpired:
            timed_out = True
            _kill_group(pgid)
            try:
                stdout, stderr = proc.communicate(timeout=5)
            except subprocess.TimeoutExpired:  # pragma: no cover - kernel refusing SIGKILL
                stdout, stderr = "", ""
        finally:
            _kill_group(pgid)  # reap stragglers the script may have spawned
        wall_ms = int((time.monotonic() - started) * 1000)
        stdout, truncated = _cap(stdout or "", req.stdout_limit)
        stderr, _ = _cap(stderr or "", req.stdout_limit)
        return ExecutionResult(
            stdout=stdout,
            stderr=stderr,
            exit_code=proc.returncode if proc.returncode is not None else -1,
            timed_out=timed_out,
            wall_ms=wall_ms,
            truncated=truncated,
            pgid=pgid,
        )
    finally:
        shutil.rmtree(workdir, ignore_errors=True)


class Sandbox:
    """Callable executor handle: ``sandbox(code, timeout) -> ExecutionResult``.

    Direct mode (default) spawns this interpreter on a temp file. Passing an
    ``interpreter`` template such as
    ``"node shim/dist/shim.js {script_path} {cpu_seconds} {mem_bytes}"``
    switches to shim mode with CPU/memory limits.
    """

    def __init__(
        self,
        interpreter: str | None = None,
        *,
        stdout_limit: int = DEFAULT_STDOUT_LIMIT,
        env_allowlist: tuple[str, ...] = DEFAULT_ENV_ALLOWLIST,
        cpu_seconds: int | None = None,
        mem_bytes: int | None = None,
    ):
        self.interpreter = interpreter
        self.stdout_limit = stdout_limit
        self.env_allowlist = env_allowlist
        self.cpu_seconds = cpu_seconds
        self.mem_bytes = mem_bytes

    def __call__(self, code: str, timeout: float) -> ExecutionResult:
        return execute(
            ExecutionRequest(
                code=code,
                timeout=timeout,
                interpreter=self.interpreter,
                stdout_limit=self.stdout_limit,
                env_allowlist=self.env_allowlist,
                cpu_seconds=self.cpu_seconds,
                mem_bytes=self.mem_bytes,
            )
        )


def execute_pool(
    requests: list[ExecutionRequest], max_parallel: int
) -> list[ExecutionResult | SandboxError]:
    """Run many scripts with at most ``max_parallel`` children alive at once.

    Results are ordered like the requests; a per-request infrastructure error
    lands in its own slot without aborting siblings.
    """
    if max_parallel < 1:
        raise ValueError("max_parallel must be >= 1")
    if not requests:
        return []
    results: list[ExecutionResult | SandboxError] = [None] * len(requests)  # type: ignore[list-item]

    def run(index: int) -> None:
        try:
            results[index] = execute(requests[index])
        except SandboxError as exc:
            results[index] = exc

    with ThreadPoolExecutor(max_workers=max_parallel) as pool:
        list(pool.map(run, range(len(requests))))
    return results
