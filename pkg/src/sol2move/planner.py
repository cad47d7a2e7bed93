"""Concept retrieval, snippet-based concept selection and sub-task planning."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib import resources
from typing import Sequence

from .corpus.bm25 import Bm25Index, search_bm25
from .corpus.dense import Encoder, search_dense
from .corpus.fragments import Fragment, FragmentStore
from .errors import PlanParseError, TemplateError
from .frontend import TaskPrompt
from .llm import ChatMessage, LlmBackend, Role

logger = logging.getLogger(__name__)

MAX_SUBTASKS = 12
EXCERPT_CHARS = 400
PLANNER_SYSTEM_PROMPT = "You plan Move smart contract implementations as short ordered sub-tasks."


class Channel(str, Enum):
    SPARSE = "sparse"
    DENSE = "dense"


@dataclass(frozen=True)
class ConceptCandidate:
    fragment: Fragment
    score: float
    channel: Channel


@dataclass(frozen=True)
class SubTask:
    index: int
    instruction: str
    snippet: str | None = None
    concept_id: str | None = None

    def __post_init__(self):
        if self.index < 1 or not self.instruction.strip():
            raise ValueError("sub-task needs a 1-based index and a non-empty instruction")

    def to_dict(self) -> dict:
        return {"index": self.index, "instruction": self.instruction, "snippet": self.snippet, "concept_id": self.concept_id}

    @classmethod
    def from_dict(cls, d: dict) -> "SubTask":
        return cls(d["index"], d["instruction"], d.get("snippet"), d.get("concept_id"))


def dense_query(prompt: TaskPrompt) -> str:
    return " ".join([prompt.topic, *prompt.keywords])


def retrieve_concepts(
    prompt: TaskPrompt,
    sparse: Bm25Index,
    store: FragmentStore,
    dense: tuple[Encoder, Encoder] | None = None,
    k: int = 10,
) -> list[ConceptCandidate]:
    """Union of sparse and (optionally) dense top-k, deduplicated by fragment id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    best: dict[str, ConceptCandidate] = {}
    hits = [(fid, s, Channel.SPARSE) for fid, s in search_bm25(sparse, list(prompt.keywords), k)]
    if dense is not None:
        enc_q, enc_c = dense
        hits += [(fid, s, Channel.DENSE) for fid, s in search_dense(enc_q, enc_c, store, dense_query(prompt), k)]
    for fid, score, channel in hits:
        if fid not in store:
            continue
        if fid not in best or score > best[fid].score:
            best[fid] = ConceptCandidate(store[fid], score, channel)
    return sorted(best.values(), key=lambda c: (-c.score, c.fragment.id))


def select_concepts(candidates: Sequence[ConceptCandidate]) -> list[ConceptCandidate]:
    return [c for c in candidates if c.fragment.code_snippets]


# --------------------------------------------------------------------------
# planning


@lru_cache(maxsize=1)
def default_planner_template() -> str:
    return resources.files("sol2move.data").joinpath("planner_prompt.txt").read_text(encoding="utf-8")


def render_concepts(concepts: Sequence[ConceptCandidate]) -> str:
    blocks = []
    for i, c in enumerate(concepts, 1):
        frag = c.fragment
        block = [f"[{i}] {frag.heading}", frag.text[:EXCERPT_CHARS]]
        if frag.code_snippets:
            block.append("```move\n" + frag.code_snippets[0] + "\n```")
        blocks.append("\n".join(b for b in block if b))
    return "\n\n".join(blocks) if blocks else "(none)"


def build_planner_prompt(prompt: TaskPrompt, concepts: Sequence[ConceptCandidate], template: str | None = None) -> str:
    template = default_planner_template() if template is None else template
    for name in ("task", "concepts"):
        if "{" + name + "}" not in template:
            raise TemplateError(f"planner template missing {{{name}}}")
    values = {"task": prompt.rendered, "concepts": render_concepts(concepts)}
    return re.sub(r"\{(task|concepts)\}", lambda m: values[m.group(1)], template)


_ITEM_RE = re.compile(r"^\s*(?:[*_]{2})?(\d+)[.)](?:[*_]{2})?\s+(.*\S)\s*$")


def parse_plan(response: str) -> list[str]:
    """Numbered-list items of an LLM response.

    Unindented prose anywhere is ignored; indented lines directly under an
    item are folded into it.
    """
    items: list[str] = []
    attach = False
    for line in response.splitlines():
        m = _ITEM_RE.match(line)
        if m:
            items.append(m.group(2).strip())
            attach = True
        elif attach and line[:1] in (" ", "\t") and line.strip():
            items[-1] += " " + line.strip().lstrip("-*").strip()
        elif line.strip():
            attach = False
    cleaned = [re.sub(r"\*\*|__", "", it).strip() for it in items]
    return [it for it in cleaned if it]


def _link(instruction: str, concepts: Sequence[ConceptCandidate]) -> ConceptCandidate | None:
    low = instruction.lower()
    named = [c for c in concepts if c.fragment.heading and c.fragment.heading.lower() in low]
    if not named:
        return None
    return max(named, key=lambda c: len(c.fragment.heading))


def generate_subtasks(
    llm: LlmBackend,
    prompt: TaskPrompt,
    concepts: Sequence[ConceptCandidate],
    template: str | None = None,
) -> list[SubTask]:
    planner_prompt = build_planner_prompt(prompt, concepts, template)
    response = llm.complete(
        [ChatMessage(Role.SYSTEM, PLANNER_SYSTEM_PROMPT), ChatMessage(Role.USER, planner_prompt)]
    ).content
    items = parse_plan(response)
    if not items:
        raise PlanParseError("planner response contains no numbered items", response)
    if len(items) > MAX_SUBTASKS:
        logger.warning("plan has %d items, keeping the first %d", len(items), MAX_SUBTASKS)
        items = items[:MAX_SUBTASKS]
    tasks = []
    for i, instruction in enumerate(items, 1):
        linked = _link(instruction, concepts)
        snippet = linked.fragment.code_snippets[0] if linked and linked.fragment.code_snippets else None
        tasks.append(SubTask(i, instruction, snippet, linked.fragment.id if linked else None))
    return tasks
