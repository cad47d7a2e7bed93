"""Solidity source understanding: comments, function signatures, topic and task prompt.

The scanner is a single lexical pass that tracks string and comment state. It
does not build a Solidity AST, which keeps it robust on partial or
non-compiling files.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from importlib import resources
from pathlib import Path

from .errors import EncodingError, PromptBudgetError, TemplateError, UnparsableSource


class CommentKind(str, Enum):
    LINE = "line"
    BLOCK = "block"
    NATSPEC = "natspec"


class Visibility(str, Enum):
    PUBLIC = "public"
    EXTERNAL = "external"
    INTERNAL = "internal"
    PRIVATE = "private"
    UNSPECIFIED = "unspecified"


@dataclass(frozen=True)
class CommentBlock:
    text: str
    kind: CommentKind
    start_offset: int
    end_offset: int


@dataclass(frozen=True)
class FunctionSig:
    name: str
    params: tuple[tuple[str, str], ...]
    visibility: Visibility
    mutability: str | None
    start_offset: int
    end_offset: int
    doc_comment: CommentBlock | None = None

    def signature(self) -> str:
        args = ", ".join(f"{t} {n}".strip() for n, t in self.params)
        parts = [f"{self.name}({args})"]
        if self.visibility is not Visibility.UNSPECIFIED:
            parts.append(self.visibility.value)
        if self.mutability:
            parts.append(self.mutability)
        return " ".join(parts)


@dataclass(frozen=True)
class SoliditySource:
    raw_text: str
    path: Path
    comments: tuple[CommentBlock, ...]
    functions: tuple[FunctionSig, ...]
    pragma_version: str | None = None


@dataclass(frozen=True)
class ContractSummary:
    topic: str
    keywords: tuple[str, ...]
    source: SoliditySource


@dataclass(frozen=True)
class TaskPrompt:
    topic: str
    keywords: tuple[str, ...]
    keyword_section: str
    comment_digest: str
    function_digest: str
    rendered: str
    function_names: tuple[str, ...] = field(default=())


# --------------------------------------------------------------------------
# lexical scanner


@dataclass(frozen=True)
class Span:
    start: int
    end: int
    kind: str  # "line", "block", "natspec" or "string"


def scan(text: str) -> list[Span]:
    """Return comment and string-literal spans in source order.

    Empty comments are kept here; `parse_source` drops them.
    """
    spans: list[Span] = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "/" and i + 1 < n and text[i + 1] == "/":
            end = text.find("\n", i)
            end = n if end == -1 else end
            kind = "natspec" if text.startswith("///", i) else "line"
            spans.append(Span(i, end, kind))
            i = end
        elif ch == "/" and i + 1 < n and text[i + 1] == "*":
            close = text.find("*/", i + 2)
            end = n if close == -1 else close + 2
            natspec = text.startswith("/**", i) and not text.startswith("/**/", i)
            spans.append(Span(i, end, "natspec" if natspec else "block"))
            i = end
        elif ch in "\"'":
            j = i + 1
            while j < n and text[j] != ch and text[j] != "\n":
                j += 2 if text[j] == "\\" else 1
            end = min(j + 1, n) if j < n and text[j] == ch else min(j, n)
            spans.append(Span(i, end, "string"))
            i = end
        else:
            i += 1
    return spans


def mask(text: str, spans: list[Span]) -> str:
    """Blank out every span with spaces, keeping newlines so line numbers hold."""
    chars = list(text)
    for sp in spans:
        for k in range(sp.start, sp.end):
            if chars[k] != "\n":
                chars[k] = " "
    return "".join(chars)


def _strip_comment(raw: str, kind: str) -> str:
    if kind in ("line", "natspec") and raw.startswith("//"):
        return raw.lstrip("/").strip()
    body = raw[2:-2] if raw.endswith("*/") and len(raw) >= 4 else raw[2:]
    if kind == "natspec" and body.startswith("*"):
        body = body[1:]
    lines = []
    for line in body.splitlines():
        line = line.strip()
        if line.startswith("*"):
            line = line[1:].strip()
        lines.append(line)
    return "\n".join(lines).strip()


_KIND = {"line": CommentKind.LINE, "block": CommentKind.BLOCK, "natspec": CommentKind.NATSPEC}
_CONTRACT_RE = re.compile(r"\b(?:contract|library|interface)\s+[A-Za-z_$][\w$]*")
_FUNCTION_RE = re.compile(r"\bfunction\s+([A-Za-z_$][\w$]*)\s*\(")
_PRAGMA_RE = re.compile(r"\bpragma\s+solidity\s+([^;]+);")
_LOCATIONS = {"memory", "storage", "calldata", "payable"}
_MUTABILITY = ("pure", "view", "payable", "constant")


def _split_params(s: str) -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in s:
        if ch in "([":
            depth += 1
        elif ch in ")]":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return [p.strip() for p in parts if p.strip()]


def _parse_param(p: str) -> tuple[str, str]:
    toks = p.split()
    if len(toks) >= 2 and toks[-1] not in _LOCATIONS and not toks[-1].endswith(")"):
        return toks[-1], " ".join(toks[:-1])
    return "", " ".join(toks)


def _matching_paren(s: str, open_idx: int) -> int:
    depth = 0
    for k in range(open_idx, len(s)):
        if s[k] == "(":
            depth += 1
        elif s[k] == ")":
            depth -= 1
            if depth == 0:
                return k
    return len(s) - 1


def _doc_comment(comments: list[CommentBlock], masked: str, text: str, start: int) -> CommentBlock | None:
    best = None
    for c in comments:
        if c.end_offset <= start:
            best = c
        else:
            break
    if best is None:
        return None
    gap = masked[best.end_offset:start]
    if gap.strip():
        return None
    if text.count("\n", best.end_offset, start) > 2:
        return None
    return best


def parse_source(text: str | bytes, path: str | Path = "<memory>") -> SoliditySource:
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise EncodingError(f"{path}: not valid UTF-8 ({exc.reason} at byte {exc.start})") from exc
    spans = scan(text)
    masked = mask(text, spans)

    comments: list[CommentBlock] = []
    for sp in spans:
        if sp.kind == "string":
            continue
        body = _strip_comment(text[sp.start:sp.end], sp.kind)
        if body:
            comments.append(CommentBlock(body, _KIND[sp.kind], sp.start, sp.end))

    functions: list[FunctionSig] = []
    for m in _FUNCTION_RE.finditer(masked):
        open_idx = m.end() - 1
        close_idx = _matching_paren(masked, open_idx)
        params = tuple(_parse_param(p) for p in _split_params(masked[open_idx + 1:close_idx]))
        term = re.compile(r"[{;]").search(masked, close_idx)
        end = term.end() if term else len(text)
        header = masked[close_idx + 1:end]
        header = re.split(r"\breturns\b", header)[0]
        words = set(re.findall(r"[A-Za-z_]\w*", header))
        visibility = next((v for v in Visibility if v.value in words), Visibility.UNSPECIFIED)
        mutability = next((w for w in _MUTABILITY if w in words), None)
        functions.append(
            FunctionSig(
                name=m.group(1),
                params=params,
                visibility=visibility,
                mutability=mutability,
                start_offset=m.start(),
                end_offset=end,
                doc_comment=_doc_comment(comments, masked, text, m.start()),
            )
        )

    if not functions and not _CONTRACT_RE.search(masked):
        raise UnparsableSource(f"{path}: no contract, library, interface or function declaration found")
    pragma = _PRAGMA_RE.search(masked)
    return SoliditySource(
        raw_text=text,
        path=Path(path),
        comments=tuple(comments),
        functions=tuple(functions),
        pragma_version=pragma.group(1).strip() if pragma else None,
    )


def load_source(path: str | Path) -> SoliditySource:
    path = Path(path)
    return parse_source(path.read_bytes(), path)


# --------------------------------------------------------------------------
# keywords and topic


@lru_cache(maxsize=1)
def stopwords() -> frozenset[str]:
    text = resources.files("sol2move.data").joinpath("stopwords.txt").read_text(encoding="utf-8")
    return frozenset(w.strip().lower() for w in text.split() if w.strip())


_WORD_RE = re.compile(r"(?<![@\w])[A-Za-z][A-Za-z0-9]*")
_SENTENCE_END = re.compile(r"(?<=[.!?])\s+")


def is_license_header(comment: CommentBlock) -> bool:
    return comment.text.lstrip().upper().startswith("SPDX-LICENSE-IDENTIFIER")


def descriptive_comments(src: SoliditySource) -> list[CommentBlock]:
    return [c for c in src.comments if not is_license_header(c)]


def comment_tokens(text: str) -> list[str]:
    stop = stopwords()
    return [w for w in (t.lower() for t in _WORD_RE.findall(text)) if len(w) >= 2 and w not in stop]


def _first_sentence(text: str) -> str:
    text = re.sub(r"@\w+\s*", "", text)
    text = " ".join(text.split())
    return _SENTENCE_END.split(text, maxsplit=1)[0].strip()


def extract_keywords(src: SoliditySource, max_k: int = 20) -> ContractSummary:
    """Function names first, then comment words by descending in-file frequency."""
    if max_k < 1:
        raise ValueError("max_k must be >= 1")
    keywords: list[str] = []
    seen: set[str] = set()
    for fn in src.functions:
        if fn.name.lower() not in seen:
            seen.add(fn.name.lower())
            keywords.append(fn.name)

    comments = descriptive_comments(src)
    counts: Counter[str] = Counter()
    first_pos: dict[str, int] = {}
    for c in comments:
        for tok in comment_tokens(c.text):
            counts[tok] += 1
            first_pos.setdefault(tok, len(first_pos))
    for tok in sorted(counts, key=lambda t: (-counts[t], first_pos[t])):
        if tok not in seen:
            seen.add(tok)
            keywords.append(tok)

    topic = ""
    for c in comments:
        topic = _first_sentence(c.text)
        if topic:
            break
    if not topic and src.functions:
        topic = " ".join(dict.fromkeys(fn.name for fn in src.functions))
    return ContractSummary(topic=topic or "unknown", keywords=tuple(keywords[:max_k]), source=src)


# --------------------------------------------------------------------------
# task prompt

PLACEHOLDERS = ("topic", "keywords", "comments", "functions")
_PLACEHOLDER_RE = re.compile(r"\{(topic|keywords|comments|functions)\}")
_SENTENCE_BOUNDARY = re.compile(r"[.!?](?=\s|$)|\n")


def default_task_template() -> str:
    return resources.files("sol2move.data").joinpath("task_prompt.txt").read_text(encoding="utf-8")


def _render(template: str, values: dict[str, str]) -> str:
    return _PLACEHOLDER_RE.sub(lambda m: values[m.group(1)], template)


def function_digest(src: SoliditySource) -> tuple[str, tuple[str, ...]]:
    by_name: dict[str, list[FunctionSig]] = {}
    for fn in src.functions:
        by_name.setdefault(fn.name, []).append(fn)
    lines = []
    for name, sigs in by_name.items():
        line = f"- {sigs[0].signature()}"
        if len(sigs) > 1:
            line += f" [{len(sigs)} overloads]"
        lines.append(line)
    return "\n".join(lines), tuple(by_name)


def build_task_prompt(summary: ContractSummary, template: str | None = None, budget: int = 4000) -> TaskPrompt:
    template = default_task_template() if template is None else template
    missing = [p for p in PLACEHOLDERS if "{" + p + "}" not in template]
    if missing:
        raise TemplateError(f"template missing placeholder(s): {', '.join('{' + p + '}' for p in missing)}")

    fn_digest, names = function_digest(summary.source)
    comment_digest = "\n".join(c.text for c in descriptive_comments(summary.source))
    values = {
        "topic": summary.topic,
        "keywords": ", ".join(summary.keywords),
        "comments": comment_digest,
        "functions": fn_digest,
    }
    rendered = _render(template, values)
    if len(rendered) > budget:
        cuts = [m.end() for m in _SENTENCE_BOUNDARY.finditer(comment_digest)]
        for cut in sorted(set(cuts), reverse=True) + [0]:
            values["comments"] = comment_digest[:cut].rstrip()
            rendered = _render(template, values)
            if len(rendered) <= budget:
                break
        if len(rendered) > budget:
            raise PromptBudgetError(
                f"prompt needs {len(rendered)} chars without comments, budget is {budget}"
            )
    return TaskPrompt(
        topic=summary.topic,
        keywords=summary.keywords,
        keyword_section=values["keywords"],
        comment_digest=values["comments"],
        function_digest=fn_digest,
        rendered=rendered,
        function_names=names,
    )
