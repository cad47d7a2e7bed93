"""Solidity input corpus: repository search, file extraction and manifest building."""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import os
import random
import time
from dataclasses import asdict, dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence
from urllib.parse import urlencode

import requests

from .errors import ConfigError, RateLimited, ApiError, Sol2MoveError
from .frontend import parse_source, scan

logger = logging.getLogger(__name__)

API_ROOT = "https://api.github.com"
PER_PAGE = 100

# SPDX identifiers accepted when permissive_licenses_only is set
PERMISSIVE_LICENSES = frozenset(
    {"MIT", "MIT-0", "Apache-2.0", "BSD-2-Clause", "BSD-3-Clause", "BSD-3-Clause-Clear", "0BSD", "ISC", "Unlicense"}
)


@dataclass(frozen=True)
class RepoRecord:
    full_name: str
    stars: int
    languages: frozenset[str] = frozenset()
    license_id: str | None = None
    default_branch: str = "main"

    def __post_init__(self):
        if self.stars < 0:
            raise ValueError("stars must be >= 0")


@dataclass(frozen=True)
class HarvestCriteria:
    min_stars: int = 50
    required_language: str = "Solidity"
    min_comment_density: float = 0.05
    permissive_licenses_only: bool = False

    def __post_init__(self):
        if not 0.0 <= self.min_comment_density <= 1.0:
            raise ValueError("min_comment_density must lie in [0, 1]")

    def accepts(self, repo: RepoRecord) -> bool:
        return repo.stars >= self.min_stars and self.required_language in repo.languages


@dataclass(frozen=True)
class SolFile:
    repo: str
    path: str
    content: str
    license_id: str | None = None


@dataclass(frozen=True)
class ManifestEntry:
    repo: str
    path: str
    content_hash: str
    comment_density: float
    license_id: str | None = None
    quarantined: bool = False


@dataclass(frozen=True)
class CorpusManifest:
    entries: tuple[ManifestEntry, ...]
    created_at: str

    def __post_init__(self):
        hashes = [e.content_hash for e in self.entries]
        if len(hashes) != len(set(hashes)):
            raise ValueError("manifest content hashes must be unique")
        bad = [e.path for e in self.entries if not e.path.endswith(".sol")]
        if bad:
            raise ValueError(f"non-Solidity paths in manifest: {bad}")

    def to_jsonl(self) -> str:
        lines = [json.dumps({"type": "manifest", "created_at": self.created_at, "entries": len(self.entries)})]
        lines += [json.dumps({"type": "entry", **asdict(e)}, sort_keys=True) for e in self.entries]
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_jsonl(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "CorpusManifest":
        created_at, entries = "", []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            if rec.get("type") == "manifest":
                created_at = rec["created_at"]
            elif rec.get("type") == "entry":
                rec.pop("type")
                entries.append(ManifestEntry(**rec))
        return cls(tuple(entries), created_at)


# --------------------------------------------------------------------------
# API transport


class Transport(Protocol):
    def get(self, path: str, params: dict | None = None) -> tuple[int, dict, object]:
        """Return (status, headers, decoded JSON body)."""
        ...


def request_key(path: str, params: dict | None = None) -> str:
    """Canonical fixture key: path plus sorted query string."""
    return path + ("?" + urlencode(sorted((params or {}).items())) if params else "")


class HttpTransport:
    def __init__(self, token: str | None = None, root: str = API_ROOT, timeout: float = 30.0, session=None):
        self.root = root.rstrip("/")
        self.timeout = timeout
        self.session = session or requests.Session()
        self.session.headers["Accept"] = "application/vnd.github+json"
        if token:
            self.session.headers["Authorization"] = f"Bearer {token}"

    def get(self, path: str, params: dict | None = None) -> tuple[int, dict, object]:
        try:
            resp = self.session.get(self.root + path, params=params, timeout=self.timeout)
        except requests.RequestException as exc:
            raise ApiError(f"GET {path} failed: {exc}") from exc
        try:
            body = resp.json()
        except ValueError:
            body = None
        return resp.status_code, dict(resp.headers), body


class ReplayTransport:
    """Serves recorded responses keyed by `request_key`; unknown requests are 404s."""

    def __init__(self, fixtures: dict):
        self.fixtures = fixtures
        self.requests: list[str] = []

    @classmethod
    def load(cls, path: str | Path) -> "ReplayTransport":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    def get(self, path: str, params: dict | None = None) -> tuple[int, dict, object]:
        key = request_key(path, params)
        self.requests.append(key)
        rec = self.fixtures.get(key)
        if rec is None:
            return 404, {}, {"message": "Not Found"}
        return rec.get("status", 200), rec.get("headers", {}), rec.get("body")


class GitHubClient:
    def __init__(self, transport: Transport, clock: Callable[[], float] = time.time):
        self.transport = transport
        self.clock = clock

    @classmethod
    def from_env(cls, token_env: str = "GITHUB_TOKEN", required: bool = True) -> "GitHubClient":
        token = os.environ.get(token_env)
        if required and not token:
            raise ConfigError(f"environment variable {token_env} is not set; export a GitHub token or pass --fixtures")
        return cls(HttpTransport(token))

    def get(self, path: str, params: dict | None = None, allow_missing: bool = False):
        status, headers, body = self.transport.get(path, params)
        if status == 429 or (status == 403 and str(headers.get("X-RateLimit-Remaining", "")) == "0"):
            raise RateLimited(f"rate limited on {path}", self._retry_after(headers), status)
        if status == 404 and allow_missing:
            return None
        if status >= 400:
            message = body.get("message", "") if isinstance(body, dict) else ""
            raise ApiError(f"GET {path} returned HTTP {status} {message}".rstrip(), status)
        return body

    def _retry_after(self, headers: dict) -> float | None:
        if "Retry-After" in headers:
            return float(headers["Retry-After"])
        if "X-RateLimit-Reset" in headers:
            return max(float(headers["X-RateLimit-Reset"]) - self.clock(), 0.0)
        return None


# --------------------------------------------------------------------------
# harvesting


def query_repos(client: GitHubClient, criteria: HarvestCriteria = HarvestCriteria(), page_limit: int = 10) -> list[RepoRecord]:
    """Search by language and stars, then re-check every hit against the criteria."""
    q = f"language:{criteria.required_language} stars:>={criteria.min_stars}"
    repos: list[RepoRecord] = []
    for page in range(1, page_limit + 1):
        body = client.get("/search/repositories", {"q": q, "sort": "stars", "per_page": PER_PAGE, "page": page})
        items = (body or {}).get("items") or []
        for item in items:
            name = item["full_name"]
            langs = client.get(f"/repos/{name}/languages", allow_missing=True) or {}
            lic = item.get("license") or {}
            repo = RepoRecord(
                full_name=name,
                stars=int(item.get("stargazers_count", 0)),
                languages=frozenset(langs),
                license_id=lic.get("spdx_id"),
                default_branch=item.get("default_branch") or "main",
            )
            if criteria.accepts(repo):
                repos.append(repo)
            else:
                logger.debug("rejected %s (stars=%d, languages=%s)", name, repo.stars, sorted(repo.languages))
        if len(items) < PER_PAGE:
            break
    return repos


def is_harvestable(path: str) -> bool:
    parts = path.split("/")
    return path.endswith(".sol") and "node_modules" not in parts


def extract_sol_files(client: GitHubClient, repo: RepoRecord) -> list[tuple[str, str]]:
    tree = client.get(f"/repos/{repo.full_name}/git/trees/{repo.default_branch}", {"recursive": 1}, allow_missing=True)
    if not tree:
        return []
    out = []
    for node in tree.get("tree", []):
        path = node.get("path", "")
        if node.get("type") != "blob" or not is_harvestable(path):
            continue
        blob = client.get(f"/repos/{repo.full_name}/contents/{path}", {"ref": repo.default_branch})
        if blob.get("encoding") == "base64":
            content = base64.b64decode(blob["content"]).decode("utf-8", errors="replace")
        else:
            content = blob.get("content", "")
        out.append((path, content))
    return sorted(out)


def comment_density(content: str) -> float:
    """Non-whitespace characters inside comments over all non-whitespace characters."""
    total = sum(1 for ch in content if not ch.isspace())
    if total == 0:
        return 0.0
    in_comments = sum(
        1
        for sp in scan(content)
        if sp.kind != "string"
        for ch in content[sp.start : sp.end]
        if not ch.isspace()
    )
    return in_comments / total


def content_hash(content: str) -> str:
    return hashlib.sha256(content.encode("utf-8")).hexdigest()


def utc_timestamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _parses(content: str) -> bool:
    try:
        parse_source(content)
    except Sol2MoveError:
        return False
    return True


def build_manifest(
    files: Iterable[SolFile],
    criteria: HarvestCriteria = HarvestCriteria(),
    created_at: str | None = None,
) -> CorpusManifest:
    """Filter, deduplicate and sort harvested files into a manifest.

    Duplicates keep the first occurrence in (repo, path, hash) order; files
    that fail to parse are kept but flagged quarantined.
    """
    seen: set[str] = set()
    entries = []
    for f in sorted(files, key=lambda f: (f.repo, f.path, content_hash(f.content))):
        if not is_harvestable(f.path):
            continue
        if criteria.permissive_licenses_only and f.license_id not in PERMISSIVE_LICENSES:
            continue
        density = comment_density(f.content)
        if density < criteria.min_comment_density:
            continue
        digest = content_hash(f.content)
        if digest in seen:
            continue
        seen.add(digest)
        entries.append(ManifestEntry(f.repo, f.path, digest, round(density, 6), f.license_id, not _parses(f.content)))
    return CorpusManifest(tuple(entries), created_at or utc_timestamp())


def harvest(
    client: GitHubClient,
    criteria: HarvestCriteria = HarvestCriteria(),
    page_limit: int = 10,
) -> list[SolFile]:
    files = []
    for repo in query_repos(client, criteria, page_limit):
        for path, content in extract_sol_files(client, repo):
            files.append(SolFile(repo.full_name, path, content, repo.license_id))
    return files


def write_corpus(files: Sequence[SolFile], manifest: CorpusManifest, corpus_dir: str | Path) -> Path:
    """Store each manifest entry as `<corpus_dir>/<hash>.sol` plus `manifest.jsonl`."""
    corpus_dir = Path(corpus_dir)
    corpus_dir.mkdir(parents=True, exist_ok=True)
    by_hash = {content_hash(f.content): f.content for f in files}
    for e in manifest.entries:
        (corpus_dir / f"{e.content_hash}.sol").write_text(by_hash[e.content_hash], encoding="utf-8")
    path = corpus_dir / "manifest.jsonl"
    manifest.save(path)
    return path


def sample_manifest(manifest: CorpusManifest, n: int, seed: int = 0) -> CorpusManifest:
    """Deterministic sample of n non-quarantined entries, kept in manifest order."""
    pool = [e for e in manifest.entries if not e.quarantined]
    if n >= len(pool):
        return replace(manifest, entries=tuple(pool))
    picked = set(random.Random(seed).sample(range(len(pool)), n))
    return replace(manifest, entries=tuple(e for i, e in enumerate(pool) if i in picked))
