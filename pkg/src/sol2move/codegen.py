"""Per-sub-task code generation, assembly into one Move file, and whole-file repair."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DuplicateIndex, EmptyPlan, NoCodeBlock
from .llm import DEFAULT_SYSTEM_PROMPT, FewShotExemplar, LlmBackend, build_fewshot_messages
from .planner import SubTask

WHOLE_FILE = 0  # subtask_index of the single chunk produced by a repair

FORMAT_DIRECTIVE = "Return only Move code, inside a single fenced code block (```move ... ```)."
REPAIR_DIRECTIVE = "Fix every reported problem and return the corrected complete file in one fenced code block."

_FENCE_RE = re.compile(r"```[^\n`]*\n(.*?)```", re.DOTALL)


def extract_code(response: str) -> str:
    """Contents of the first fenced block, whatever its info string."""
    for m in _FENCE_RE.finditer(response):
        code = m.group(1).strip("\n").rstrip()
        if code.strip():
            return code
    raise NoCodeBlock("response contains no fenced code block", response)


@dataclass(frozen=True)
class CodeChunk:
    subtask_index: int
    code: str
    raw_response: str

    def __post_init__(self):
        if not self.code:
            raise ValueError("code chunk must be non-empty")


@dataclass(frozen=True)
class CandidateTranslation:
    move_source: str
    chunks: tuple[CodeChunk, ...]
    revision: int = 0
    provenance: dict[int, tuple[int, int]] = field(default_factory=dict)

    def provenance_record(self) -> dict:
        return {
            "revision": self.revision,
            "provenance": {str(k): list(v) for k, v in sorted(self.provenance.items())},
            "chunks": [c.subtask_index for c in self.chunks],
        }

    def write(self, directory: str | Path) -> Path:
        """Persist as `<directory>/<revision>.move` plus a JSON provenance sidecar."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / f"{self.revision}.move"
        path.write_text(self.move_source, encoding="utf-8")
        (directory / f"{self.revision}.json").write_text(
            json.dumps(self.provenance_record(), sort_keys=True, indent=2), encoding="utf-8"
        )
        return path


def generation_prompt(task: SubTask) -> str:
    parts = [f"Sub-task {task.index}: {task.instruction}"]
    if task.snippet:
        parts.append("Reference Move snippet:\n```move\n" + task.snippet + "\n```")
    parts.append(FORMAT_DIRECTIVE)
    return "\n\n".join(parts)


def generate_chunk(
    llm: LlmBackend,
    task: SubTask,
    exemplars: Sequence[FewShotExemplar] = (),
    system: str = DEFAULT_SYSTEM_PROMPT,
) -> CodeChunk:
    messages = build_fewshot_messages(exemplars, generation_prompt(task), system)
    raw = llm.complete(messages).content
    return CodeChunk(task.index, extract_code(raw), raw)


def assemble(chunks: Iterable[CodeChunk]) -> CandidateTranslation:
    """Join chunk code in sub-task order, separated by one blank line."""
    ordered = sorted(chunks, key=lambda c: c.subtask_index)
    if not ordered:
        raise EmptyPlan("no code chunks to assemble")
    seen: set[int] = set()
    for c in ordered:
        if c.subtask_index in seen:
            raise DuplicateIndex(f"duplicate sub-task index {c.subtask_index}")
        seen.add(c.subtask_index)

    provenance: dict[int, tuple[int, int]] = {}
    line = 1
    for c in ordered:
        n = c.code.count("\n") + 1
        provenance[c.subtask_index] = (line, line + n - 1)
        line += n + 1  # blank separator line
    return CandidateTranslation("\n\n".join(c.code for c in ordered), tuple(ordered), 0, provenance)


def repair_prompt(candidate: CandidateTranslation, diagnostics: str) -> str:
    return (
        "The following Move file failed checking.\n\n"
        f"```move\n{candidate.move_source}\n```\n\n"
        f"Diagnostics:\n{diagnostics}\n\n"
        f"{REPAIR_DIRECTIVE}"
    )


def repair(
    llm: LlmBackend,
    candidate: CandidateTranslation,
    diagnostics: str,
    system: str = DEFAULT_SYSTEM_PROMPT,
) -> CandidateTranslation:
    """Ask for a corrected whole file; the result replaces all chunks."""
    if not diagnostics or not diagnostics.strip():
        raise ValueError("repair needs a non-empty diagnostics digest")
    messages = build_fewshot_messages((), repair_prompt(candidate, diagnostics), system)
    raw = llm.complete(messages).content
    code = extract_code(raw)
    n = code.count("\n") + 1
    return CandidateTranslation(
        move_source=code,
        chunks=(CodeChunk(WHOLE_FILE, code, raw),),
        revision=candidate.revision + 1,
        provenance={WHOLE_FILE: (1, n)},
    )
