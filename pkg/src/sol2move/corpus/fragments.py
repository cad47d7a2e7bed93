"""Documentation pages, heading-based segmentation and fixed-width chunking."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from html.parser import HTMLParser
from pathlib import Path
from typing import Iterable, Iterator

from ..errors import EmptyDocument, FormatVersionError

STORE_FORMAT_VERSION = 1
DEFAULT_WIDTH = 256


class Origin(str, Enum):
    TEXTBOOK = "textbook"
    BLOG = "blog"
    TUTORIAL = "tutorial"
    CODE_SAMPLE = "code_sample"


@dataclass(frozen=True)
class DocPage:
    source_id: str
    html: str
    origin: Origin = Origin.TEXTBOOK

    def __post_init__(self):
        if not self.html:
            raise ValueError(f"{self.source_id}: empty html")


def fragment_id(source_id: str, seq: tuple[int, ...], text: str) -> str:
    payload = json.dumps([source_id, list(seq), text], ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:20]


@dataclass(frozen=True)
class Fragment:
    id: str
    heading: str
    text: str
    code_snippets: tuple[str, ...]
    source_id: str
    seq: tuple[int, ...]

    @classmethod
    def make(
        cls,
        source_id: str,
        seq: Iterable[int],
        heading: str,
        text: str,
        code_snippets: Iterable[str] = (),
    ) -> "Fragment":
        seq = tuple(seq)
        return cls(fragment_id(source_id, seq, text), heading, text, tuple(code_snippets), source_id, seq)

    @property
    def search_text(self) -> str:
        """Text seen by the retrievers: heading followed by body."""
        return f"{self.heading}\n{self.text}" if self.heading else self.text

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "heading": self.heading,
            "text": self.text,
            "code_snippets": list(self.code_snippets),
            "source_id": self.source_id,
            "seq": list(self.seq),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Fragment":
        return cls(d["id"], d["heading"], d["text"], tuple(d["code_snippets"]), d["source_id"], tuple(d["seq"]))


_HEADINGS = {"h1", "h2", "h3", "h4", "h5", "h6"}
_CODE_TAGS = {"pre", "code"}
_SKIP_TAGS = {"script", "style"}
_BREAK_TAGS = {"p", "div", "li", "br", "tr", "td", "th", "ul", "ol", "table", "section", "article", "blockquote", "dd", "dt"}


@dataclass
class _Segment:
    heading: str | None
    text: list[str] = field(default_factory=list)
    code: list[str] = field(default_factory=list)


class _Segmenter(HTMLParser):
    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.segments = [_Segment(heading=None)]
        self.title: list[str] = []
        self._in_title = False
        self._heading: list[str] | None = None
        self._code_depth = 0
        self._code: list[str] = []
        self._skip = 0

    def handle_starttag(self, tag, attrs):
        if tag in _SKIP_TAGS:
            self._skip += 1
        elif tag == "title":
            self._in_title = True
        elif tag in _HEADINGS:
            self._close_heading()
            self._flush_code()
            self.segments.append(_Segment(heading=""))
            self._heading = []
        elif tag in _CODE_TAGS and self._heading is None:
            self._code_depth += 1
        elif tag in _BREAK_TAGS:
            self._data(" ")

    def handle_startendtag(self, tag, attrs):
        if tag in _BREAK_TAGS:
            self._data(" ")

    def handle_endtag(self, tag):
        if tag in _SKIP_TAGS:
            self._skip = max(0, self._skip - 1)
        elif tag == "title":
            self._in_title = False
        elif tag in _HEADINGS:
            self._close_heading()
        elif tag == "pre" and self._code_depth:
            self._code_depth = 0
            self._flush_code()
        elif tag == "code" and self._code_depth:
            self._code_depth -= 1
            if self._code_depth == 0:
                self._flush_code()
        elif tag in _BREAK_TAGS:
            self._data(" ")

    def handle_data(self, data):
        if self._skip:
            return
        if self._in_title:
            self.title.append(data)
        elif self._heading is not None:
            self._heading.append(data)
        elif self._code_depth:
            self._code.append(data)
        else:
            self._data(data)

    def _data(self, data: str) -> None:
        if self._code_depth == 0 and self._heading is None:
            self.segments[-1].text.append(data)

    def _close_heading(self) -> None:
        if self._heading is not None:
            self.segments[-1].heading = " ".join("".join(self._heading).split())
            self._heading = None

    def _flush_code(self) -> None:
        snippet = "".join(self._code).strip()
        if snippet:
            self.segments[-1].code.append(snippet)
        self._code = []
        self._code_depth = 0

    def close(self):
        super().close()
        self._close_heading()
        self._flush_code()


def segment_html(page: DocPage) -> list[Fragment]:
    """Split a page into one fragment per heading; code regions go to `code_snippets`."""
    parser = _Segmenter()
    parser.feed(page.html)
    parser.close()
    title = " ".join("".join(parser.title).split())

    out: list[Fragment] = []
    for seg in parser.segments:
        text = " ".join("".join(seg.text).split())
        if seg.heading is None:
            if not text and not seg.code:
                continue
            heading = title or "preamble"
        else:
            heading = seg.heading
        out.append(Fragment.make(page.source_id, (len(out),), heading, text, seg.code))
    if not any(f.text or f.code_snippets or f.heading for f in out):
        raise EmptyDocument(f"{page.source_id}: no text content")
    return out


def chunk_fragment(frag: Fragment, width: int = DEFAULT_WIDTH) -> list[Fragment]:
    """Split a fragment's text into consecutive chunks of at most `width` tokens."""
    if width < 16:
        raise ValueError("fragment width must be >= 16")
    tokens = frag.text.split()
    pieces = [" ".join(tokens[i:i + width]) for i in range(0, len(tokens), width)] or [frag.text]
    return [
        Fragment.make(frag.source_id, frag.seq + (j,), frag.heading, piece, frag.code_snippets)
        for j, piece in enumerate(pieces)
    ]


class FragmentStore:
    """Immutable ordered collection of fragments, addressable by id."""

    def __init__(self, fragments: Iterable[Fragment]):
        self._fragments = tuple(fragments)
        self._by_id = {f.id: f for f in self._fragments}
        if len(self._by_id) != len(self._fragments):
            raise ValueError("duplicate fragment ids in store")

    def __len__(self) -> int:
        return len(self._fragments)

    def __iter__(self) -> Iterator[Fragment]:
        return iter(self._fragments)

    def __contains__(self, fid: str) -> bool:
        return fid in self._by_id

    def __getitem__(self, fid: str) -> Fragment:
        return self._by_id[fid]

    @property
    def ids(self) -> list[str]:
        return [f.id for f in self._fragments]

    def to_dict(self) -> dict:
        return {"format_version": STORE_FORMAT_VERSION, "fragments": [f.to_dict() for f in self._fragments]}

    @classmethod
    def from_dict(cls, d: dict) -> "FragmentStore":
        if d.get("format_version") != STORE_FORMAT_VERSION:
            raise FormatVersionError(
                f"fragment store format {d.get('format_version')!r}, expected {STORE_FORMAT_VERSION}"
            )
        return cls(Fragment.from_dict(x) for x in d["fragments"])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "FragmentStore":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def build_store(pages: Iterable[DocPage], width: int = DEFAULT_WIDTH) -> FragmentStore:
    frags: list[Fragment] = []
    for page in pages:
        for seg in segment_html(page):
            frags.extend(chunk_fragment(seg, width))
    return FragmentStore(frags)


# corpus manifest: one JSON object per line with source_id, origin, path


def read_corpus_manifest(path: str | Path) -> list[DocPage]:
    path = Path(path)
    pages = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        rec = json.loads(line)
        html_path = Path(rec["path"])
        if not html_path.is_absolute():
            html_path = path.parent / html_path
        pages.append(DocPage(rec["source_id"], html_path.read_text(encoding="utf-8"), Origin(rec.get("origin", "textbook"))))
    return pages


def pages_from_dir(directory: str | Path) -> list[DocPage]:
    directory = Path(directory)
    files = sorted(p for p in directory.rglob("*") if p.suffix.lower() in (".html", ".htm"))
    return [DocPage(p.relative_to(directory).as_posix(), p.read_text(encoding="utf-8")) for p in files]
