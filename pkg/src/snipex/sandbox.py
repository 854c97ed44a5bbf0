"""Source preparation and time-limited child-process execution."""

from __future__ import annotations

import base64
import dataclasses
import html
import json
import logging
import os
import shutil
import signal
import subprocess
import sys
import tempfile
import textwrap
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

logger = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 10.0
KILL_GRACE = 1.0
DEFAULT_MAX_OUTPUT = 64 * 1024
SCRIPT_NAME = "snippet.py"

PY2SHIM_PATH = str(Path(__file__).with_name("py2shim.py"))

# Inherited by the child; everything else is dropped.
_INHERITED_ENV = ("PATH", "LANG", "LC_ALL", "LC_CTYPE", "SYSTEMROOT")


class SandboxEnvironmentError(Exception):
    """The harness itself could not set up an execution (not a snippet failure)."""


@dataclass(frozen=True)
class InterpreterConfig:
    id: str
    command: tuple[str, ...]
    installer_command: tuple[str, ...] = ()
    env_overrides: dict[str, str] = field(default_factory=dict)
    timeout: float = DEFAULT_TIMEOUT
    max_output_bytes: int = DEFAULT_MAX_OUTPUT

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError(f"{self.id}: timeout must be > 0")
        if self.max_output_bytes <= 0:
            raise ValueError(f"{self.id}: max_output_bytes must be > 0")
        if "{file}" not in " ".join(self.command):
            raise ValueError(f"{self.id}: command must contain a {{file}} placeholder")

    def argv(self, script: str) -> list[str]:
        return [_expand(part, file=script, workdir=os.path.dirname(script)) for part in self.command]

    def installer_argv(self, module: str) -> list[str]:
        return [_expand(part, module=module) for part in self.installer_command]

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["command"] = list(self.command)
        d["installer_command"] = list(self.installer_command)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> InterpreterConfig:
        return cls(
            id=d["id"],
            command=tuple(d["command"]),
            installer_command=tuple(d.get("installer_command", ())),
            env_overrides=dict(d.get("env_overrides", {})),
            timeout=float(d.get("timeout", DEFAULT_TIMEOUT)),
            max_output_bytes=int(d.get("max_output_bytes", DEFAULT_MAX_OUTPUT)),
        )


def _expand(part: str, **values: str) -> str:
    part = part.replace("{python}", sys.executable).replace("{py2shim}", PY2SHIM_PATH)
    for key, value in values.items():
        part = part.replace("{" + key + "}", value)
    return part


def load_configs(path: Path | str) -> list[InterpreterConfig]:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if isinstance(data, dict):
        data = data.get("configs", [])
    configs = [InterpreterConfig.from_dict(d) for d in data]
    ids = [c.id for c in configs]
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate interpreter ids in {path}: {ids}")
    return configs


def default_configs() -> list[InterpreterConfig]:
    """py2 and py3 configurations for this machine.

    A real ``python2.7``/``python2`` on PATH is preferred for py2; without one
    the translating shim runs the snippet under the current interpreter.
    """
    pip3 = ("{python}", "-m", "pip", "install", "--quiet", "--disable-pip-version-check", "{module}")
    py2 = shutil.which("python2.7") or shutil.which("python2")
    if py2:
        py2_cfg = InterpreterConfig("py2", (py2, "{file}"), (py2, "-m", "pip", "install", "--quiet", "{module}"))
    else:
        py2_cfg = InterpreterConfig("py2", ("{python}", "{py2shim}", "{file}"), pip3)
    return [py2_cfg, InterpreterConfig("py3", ("{python}", "{file}"), pip3)]


@dataclass(frozen=True)
class RawExecution:
    exit_status: int | None = None
    timed_out: bool = False
    stdout_tail: bytes = b""
    stderr_tail: bytes = b""
    duration: float = 0.0
    spawn_error: str | None = None

    def __post_init__(self):
        states = (self.exit_status is not None) + self.timed_out + (self.spawn_error is not None)
        if states != 1:
            raise ValueError(
                "exactly one of exit_status, timed_out, spawn_error must hold "
                f"(got exit_status={self.exit_status}, timed_out={self.timed_out}, spawn_error={self.spawn_error!r})"
            )

    def to_dict(self) -> dict:
        return {
            "exit_status": self.exit_status,
            "timed_out": self.timed_out,
            "stdout_tail": base64.b64encode(self.stdout_tail).decode("ascii"),
            "stderr_tail": base64.b64encode(self.stderr_tail).decode("ascii"),
            "duration": self.duration,
            "spawn_error": self.spawn_error,
        }

    @classmethod
    def from_dict(cls, d: dict) -> RawExecution:
        return cls(
            exit_status=d.get("exit_status"),
            timed_out=bool(d.get("timed_out", False)),
            stdout_tail=base64.b64decode(d.get("stdout_tail", "")),
            stderr_tail=base64.b64decode(d.get("stderr_tail", "")),
            duration=float(d.get("duration", 0.0)),
            spawn_error=d.get("spawn_error"),
        )


def prepare_source(raw: str | bytes) -> str:
    """Turn dump content into runnable text.

    Decodes bytes lossily, strips a BOM, normalizes line endings, decodes
    HTML entities and removes indentation common to all non-blank lines.
    """
    if isinstance(raw, bytes):
        raw = raw.decode("utf-8", errors="replace")
    text = raw.removeprefix("\ufeff")
    text = text.replace("\r\n", "\n").replace("\r", "\n")
    text = html.unescape(text)
    return textwrap.dedent(text)


class _TailBuffer:
    def __init__(self, limit: int):
        self.limit = limit
        self.data = bytearray()

    def feed(self, chunk: bytes):
        self.data += chunk
        if len(self.data) > self.limit:
            del self.data[: len(self.data) - self.limit]


def _drain(stream, buf: _TailBuffer):
    try:
        for chunk in iter(lambda: stream.read1(65536), b""):
            buf.feed(chunk)
    except (OSError, ValueError):
        pass
    finally:
        stream.close()


def _kill_group(pgid: int, sig: int = signal.SIGKILL):
    try:
        os.killpg(pgid, sig)
    except (ProcessLookupError, PermissionError):
        pass


def run_process(
    argv: list[str],
    cwd: str,
    env: dict[str, str],
    timeout: float,
    max_output_bytes: int = DEFAULT_MAX_OUTPUT,
    grace: float = KILL_GRACE,
) -> RawExecution:
    """Run ``argv`` in its own process group with stdin closed.

    At ``timeout`` the group gets SIGTERM, after ``grace`` more seconds SIGKILL.
    The group is always SIGKILLed once the leader has exited, so background
    children do not outlive the call.
    """
    start = time.monotonic()
    try:
        proc = subprocess.Popen(
            argv,
            cwd=cwd,
            env=env,
            stdin=subprocess.DEVNULL,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            start_new_session=True,
        )
    except OSError as e:
        return RawExecution(spawn_error=f"{type(e).__name__}: {e}", duration=time.monotonic() - start)

    out, err = _TailBuffer(max_output_bytes), _TailBuffer(max_output_bytes)
    readers = [
        threading.Thread(target=_drain, args=(proc.stdout, out), daemon=True),
        threading.Thread(target=_drain, args=(proc.stderr, err), daemon=True),
    ]
    for t in readers:
        t.start()

    timed_out = False
    try:
        proc.wait(timeout=max(0.0, timeout - (time.monotonic() - start)))
    except subprocess.TimeoutExpired:
        timed_out = True
        _kill_group(proc.pid, signal.SIGTERM)
        try:
            proc.wait(timeout=grace)
        except subprocess.TimeoutExpired:
            _kill_group(proc.pid, signal.SIGKILL)
            proc.wait()
    duration = time.monotonic() - start
    _kill_group(proc.pid, signal.SIGKILL)
    for t in readers:
        t.join(timeout=grace)

    if timed_out:
        return RawExecution(timed_out=True, stdout_tail=bytes(out.data), stderr_tail=bytes(err.data), duration=duration)
    code = proc.returncode
    if code < 0:
        code = 128 - code
    return RawExecution(exit_status=code, stdout_tail=bytes(out.data), stderr_tail=bytes(err.data), duration=duration)


def child_env(workdir: str, overrides: dict[str, str] | None = None) -> dict[str, str]:
    env = {k: os.environ[k] for k in _INHERITED_ENV if k in os.environ}
    env.setdefault("PATH", os.defpath)
    env.setdefault("LANG", "C.UTF-8")
    env.update(
        HOME=workdir,
        TMPDIR=workdir,
        PYTHONDONTWRITEBYTECODE="1",
        PYTHONHASHSEED="0",
    )
    env.update(overrides or {})
    return env


def run_snippet(source: str, config: InterpreterConfig, workdir: str | Path | None = None) -> RawExecution:
    """Execute prepared ``source`` under ``config`` inside a fresh ``workdir``.

    The directory is created when not given and is removed afterwards either way.
    """
    try:
        if workdir is None:
            workdir = tempfile.mkdtemp(prefix="snipex-")
        else:
            os.makedirs(workdir, exist_ok=True)
        workdir = os.path.realpath(workdir)
        script = os.path.join(workdir, SCRIPT_NAME)
        with open(script, "w", encoding="utf-8") as fh:
            fh.write(source)
    except OSError as e:
        raise SandboxEnvironmentError(f"cannot prepare workdir: {e}") from e
    try:
        return run_process(
            config.argv(script),
            cwd=workdir,
            env=child_env(workdir, config.env_overrides),
            timeout=config.timeout,
            max_output_bytes=config.max_output_bytes,
        )
    finally:
        shutil.rmtree(workdir, ignore_errors=True)
