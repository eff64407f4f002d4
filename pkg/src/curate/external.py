"""Line-oriented subprocess protocol used to plug external models into a stage.

The child receives one absolute path per line on stdin (stdin is then
closed) and must answer with ``path<TAB>value`` lines on stdout, covering
every requested path exactly once.
"""

from __future__ import annotations

import os
import shlex
import subprocess
from typing import Sequence

from . import CurateError


class ScorerCrashed(CurateError):
    def __init__(self, returncode: int, stderr: str = ""):
        msg = f"external command exited with status {returncode}"
        if stderr.strip():
            msg += f": {stderr.strip().splitlines()[-1]}"
        super().__init__(msg)
        self.returncode = returncode
        self.stderr = stderr


class ScorerProtocol(CurateError):
    def __init__(self, message: str, path: str | None = None):
        super().__init__(message)
        self.path = path


class ScorerTimeout(CurateError):
    pass


def _argv(command: str | Sequence[str]) -> list[str]:
    argv = shlex.split(command) if isinstance(command, str) else list(command)
    if not argv:
        raise ValueError("external command is empty")
    return argv


def run_line_protocol(
    paths: Sequence[str | os.PathLike], command: str | Sequence[str], timeout_s: float = 300.0
) -> dict[str, str]:
    """Send ``paths`` to ``command`` and return ``{original path: raw value}``."""
    if not paths:
        return {}
    absolute = {os.path.abspath(os.fspath(p)): os.fspath(p) for p in paths}
    if len(absolute) != len(paths):
        raise ValueError("duplicate paths in request")
    payload = "".join(p + "\n" for p in absolute)
    try:
        proc = subprocess.run(
            _argv(command),
            input=payload.encode("utf-8"),
            capture_output=True,
            timeout=timeout_s,
        )
    except subprocess.TimeoutExpired:
        raise ScorerTimeout(f"external command exceeded {timeout_s} s") from None
    except OSError as exc:
        raise ScorerCrashed(-1, str(exc)) from exc
    if proc.returncode != 0:
        raise ScorerCrashed(proc.returncode, proc.stderr.decode("utf-8", "replace"))

    try:
        text = proc.stdout.decode("utf-8")
    except UnicodeDecodeError:
        raise ScorerProtocol("external command output is not valid UTF-8") from None
    values: dict[str, str] = {}
    for line_no, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        path, sep, value = line.partition("\t")
        if not sep:
            raise ScorerProtocol(f"line {line_no}: expected 'path<TAB>value', got {line!r}")
        if path not in absolute:
            raise ScorerProtocol(f"line {line_no}: unrequested path {path!r}", path)
        if path in values:
            raise ScorerProtocol(f"duplicate path {path!r}", path)
        values[path] = value.strip()
    for path in absolute:
        if path not in values:
            raise ScorerProtocol(f"missing path {path!r}", path)
    return {absolute[p]: v for p, v in values.items()}
