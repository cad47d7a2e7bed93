"""Move compiler and prover adapters.

Outcomes come from process exit codes only; diagnostic parsing is best
effort, with the unparsed output preserved as a raw diagnostic.
"""

from __future__ import annotations

import json
import re
import shutil
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Protocol, Sequence

from .codegen import CandidateTranslation
from .errors import ScriptExhausted, ToolNotFound

DEFAULT_TIMEOUT = 120.0
TIMEOUT_EXIT_CODE = 124

DEFAULT_MANIFEST = """[package]
name = "{name}"
version = "0.0.1"

[addresses]
std = "0x1"
{name} = "0xCAFE"

[dependencies]
MoveStdlib = {{ git = "https://github.com/move-language/move.git", subdir = "language/move-stdlib", rev = "main" }}
"""


class Severity(str, Enum):
    ERROR = "error"
    WARNING = "warning"


@dataclass(frozen=True)
class Diagnostic:
    severity: Severity
    message: str
    raw: str
    file: str | None = None
    line: int | None = None

    def __post_init__(self):
        if not self.message or not self.raw:
            raise ValueError("diagnostic message and raw text must be non-empty")

    def location(self) -> str:
        if self.file and self.line is not None:
            return f"{self.file}:{self.line}"
        return self.file or ""

    def to_dict(self) -> dict:
        return {"severity": self.severity.value, "message": self.message, "file": self.file, "line": self.line}


@dataclass(frozen=True)
class CompileResult:
    success: bool
    diagnostics: tuple[Diagnostic, ...]
    exit_code: int
    duration: float  # milliseconds
    command: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return self.success


@dataclass(frozen=True)
class ProveResult:
    verified: bool
    diagnostics: tuple[Diagnostic, ...]
    exit_code: int
    duration: float  # milliseconds
    command: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return self.verified


# --------------------------------------------------------------------------
# diagnostic parsing

_HEADER_RE = re.compile(r"^\s*(error|warning)(?:\[([A-Za-z0-9_]+)\])?\s*:\s*(.*?)\s*$", re.IGNORECASE)
_LOCATOR_RE = re.compile(r"^\s*(?:-->|┌─|╭─|\|--)\s*(.+?):(\d+)(?::\d+)?\s*$")


def parse_diagnostics(output: str, exit_code: int) -> list[Diagnostic]:
    """Split compiler/prover output into diagnostics at `error[...]:` / `warning:` headers."""
    blocks: list[list[str]] = []
    for line in output.splitlines():
        if _HEADER_RE.match(line):
            blocks.append([line])
        elif blocks:
            blocks[-1].append(line)

    diags: list[Diagnostic] = []
    for block in blocks:
        head = _HEADER_RE.match(block[0])
        severity = Severity(head.group(1).lower())
        if exit_code == 0:
            severity = Severity.WARNING
        message = head.group(3) or (f"{head.group(1)} {head.group(2)}" if head.group(2) else head.group(1))
        if head.group(2):
            message = f"[{head.group(2)}] {message}"
        file = line_no = None
        for line in block[1:]:
            loc = _LOCATOR_RE.match(line)
            if loc:
                file, line_no = loc.group(1).strip(), int(loc.group(2))
                break
        raw = "\n".join(block).strip("\n")
        diags.append(Diagnostic(severity, message, raw, file, line_no))

    if exit_code != 0 and not any(d.severity is Severity.ERROR for d in diags):
        text = output.strip()
        first = next((ln.strip() for ln in text.splitlines() if ln.strip()), f"exited with code {exit_code}")
        diags.append(Diagnostic(Severity.ERROR, first, text or first))
    return diags


def summarize_diagnostics(diags: Sequence[Diagnostic], budget: int = 2000) -> str:
    """Errors first, one `file:line: message` per line, cut at entry boundaries."""
    if not diags:
        raise ValueError("no diagnostics to summarize")
    ordered = [d for d in diags if d.severity is Severity.ERROR] + [d for d in diags if d.severity is Severity.WARNING]
    lines = [f"{d.location()}: {d.message}" if d.location() else d.message for d in ordered]

    def render(n: int) -> str:
        rest = len(lines) - n
        return "\n".join(lines[:n] + ([f"(+{rest} more)"] if rest else []))

    for n in range(len(lines), 0, -1):
        out = render(n)
        if len(out) <= budget:
            return out
    # the first entry is always reported, cut mid-message only when it alone overflows
    return lines[0][:budget]


# --------------------------------------------------------------------------
# adapters


class Toolchain(Protocol):
    def compile(self, candidate: CandidateTranslation, timeout: float | None = None) -> CompileResult: ...

    def prove(self, candidate: CandidateTranslation, timeout: float | None = None) -> ProveResult: ...


@dataclass(frozen=True)
class ToolchainConfig:
    compile_command: tuple[str, ...] = ("move", "build", "--path", "{package}")
    prove_command: tuple[str, ...] = ("move", "prove", "--path", "{package}")
    manifest_template: str = DEFAULT_MANIFEST
    package_name: str = "translated"
    timeout: float = DEFAULT_TIMEOUT
    work_root: str | None = None
    keep_workdirs: bool = False


@dataclass(frozen=True)
class _Run:
    exit_code: int
    output: str
    duration: float
    command: tuple[str, ...]


class MoveToolchain:
    """Drives the real toolchain, one freshly materialised package per call."""

    def __init__(self, cfg: ToolchainConfig = ToolchainConfig()):
        self.cfg = cfg

    def _materialise(self, candidate: CandidateTranslation) -> Path:
        root = Path(self.cfg.work_root) if self.cfg.work_root else None
        if root:
            root.mkdir(parents=True, exist_ok=True)
        pkg = Path(tempfile.mkdtemp(prefix="movepkg-", dir=root))
        (pkg / "Move.toml").write_text(self.cfg.manifest_template.format(name=self.cfg.package_name), encoding="utf-8")
        (pkg / "sources").mkdir()
        (pkg / "sources" / f"{self.cfg.package_name}.move").write_text(candidate.move_source, encoding="utf-8")
        return pkg

    def _run(self, template: Sequence[str], candidate: CandidateTranslation, timeout: float | None) -> _Run:
        timeout = self.cfg.timeout if timeout is None else min(self.cfg.timeout, timeout)
        pkg = self._materialise(candidate)
        command = tuple(arg.replace("{package}", str(pkg)) for arg in template)
        start = time.monotonic()
        try:
            proc = subprocess.run(command, cwd=pkg, capture_output=True, text=True, timeout=max(timeout, 0.001))
            code, output = proc.returncode, (proc.stdout or "") + (proc.stderr or "")
        except FileNotFoundError as exc:
            raise ToolNotFound(f"executable not found: {command[0]}") from exc
        except subprocess.TimeoutExpired as exc:
            partial = exc.stdout or ""
            if isinstance(partial, bytes):
                partial = partial.decode("utf-8", "replace")
            code, output = TIMEOUT_EXIT_CODE, f"{partial}\nerror: timed out after {timeout:g}s"
        finally:
            if not self.cfg.keep_workdirs:
                shutil.rmtree(pkg, ignore_errors=True)
        return _Run(code, output, (time.monotonic() - start) * 1000.0, command)

    def compile(self, candidate: CandidateTranslation, timeout: float | None = None) -> CompileResult:
        run = self._run(self.cfg.compile_command, candidate, timeout)
        diags = tuple(parse_diagnostics(run.output, run.exit_code))
        return CompileResult(run.exit_code == 0, diags, run.exit_code, run.duration, run.command)

    def prove(self, candidate: CandidateTranslation, timeout: float | None = None) -> ProveResult:
        run = self._run(self.cfg.prove_command, candidate, timeout)
        diags = tuple(parse_diagnostics(run.output, run.exit_code))
        return ProveResult(run.exit_code == 0, diags, run.exit_code, run.duration, run.command)


@dataclass(frozen=True)
class ScriptStep:
    outcome: str  # "pass" or "fail"
    stderr: str = ""

    def __post_init__(self):
        if self.outcome not in ("pass", "fail"):
            raise ValueError(f"script outcome must be 'pass' or 'fail', got {self.outcome!r}")

    @classmethod
    def coerce(cls, item) -> "ScriptStep":
        if isinstance(item, ScriptStep):
            return item
        if isinstance(item, str):
            return cls(item)
        return cls(item["outcome"], item.get("stderr", ""))


@dataclass
class ScriptedToolchain:
    """Mock toolchain that replays ordered compile and prove outcomes.

    Calling either tool more often than scripted raises ScriptExhausted.
    """

    compile_script: list[ScriptStep] = field(default_factory=list)
    prove_script: list[ScriptStep] = field(default_factory=list)
    calls: list[tuple[str, str]] = field(default_factory=list)

    def __post_init__(self):
        self.compile_script = [ScriptStep.coerce(s) for s in self.compile_script]
        self.prove_script = [ScriptStep.coerce(s) for s in self.prove_script]
        self._pos = {"compile": 0, "prove": 0}

    @classmethod
    def from_dict(cls, d: dict) -> "ScriptedToolchain":
        return cls(list(d.get("compile", [])), list(d.get("prove", [])))

    @classmethod
    def load(cls, path: str | Path) -> "ScriptedToolchain":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def _next(self, tool: str, candidate: CandidateTranslation) -> tuple[int, str]:
        script = self.compile_script if tool == "compile" else self.prove_script
        pos = self._pos[tool]
        if pos >= len(script):
            raise ScriptExhausted(f"{tool} script of {len(script)} steps exhausted")
        self._pos[tool] = pos + 1
        self.calls.append((tool, candidate.move_source))
        step = script[pos]
        stderr = step.stderr or ("" if step.outcome == "pass" else f"error: scripted {tool} failure {pos + 1}")
        return (0 if step.outcome == "pass" else 1), stderr

    def compile(self, candidate: CandidateTranslation, timeout: float | None = None) -> CompileResult:
        code, stderr = self._next("compile", candidate)
        return CompileResult(code == 0, tuple(parse_diagnostics(stderr, code)), code, 0.0, ("scripted", "compile"))

    def prove(self, candidate: CandidateTranslation, timeout: float | None = None) -> ProveResult:
        code, stderr = self._next("prove", candidate)
        return ProveResult(code == 0, tuple(parse_diagnostics(stderr, code)), code, 0.0, ("scripted", "prove"))
