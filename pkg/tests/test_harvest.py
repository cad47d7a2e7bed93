from __future__ import annotations

import random
from pathlib import Path

import pytest
from hypothesis import given, strategies as st

from sol2move.errors import ApiError, ConfigError, RateLimited
from sol2move.harvest import (
    CorpusManifest,
    GitHubClient,
    HarvestCriteria,
    ReplayTransport,
    RepoRecord,
    SolFile,
    build_manifest,
    comment_density,
    content_hash,
    harvest,
    is_harvestable,
    query_repos,
    request_key,
    sample_manifest,
    write_corpus,
)

FIXTURES = Path(__file__).parent / "fixtures"
STAMP = "2026-01-01T00:00:00+00:00"
HOTEL = (FIXTURES / "hotel.sol").read_text()


def client() -> GitHubClient:
    return GitHubClient(ReplayTransport.load(FIXTURES / "github_api.json"))


@pytest.mark.parametrize("stars,ok", [(49, False), (50, True), (120, True)])
def test_star_threshold(stars, ok):
    assert HarvestCriteria().accepts(RepoRecord("a/b", stars, frozenset({"Solidity"}))) is ok


def test_language_required():
    assert not HarvestCriteria().accepts(RepoRecord("a/b", 500, frozenset({"JavaScript"})))
    with pytest.raises(ValueError):
        RepoRecord("a/b", -1)
    with pytest.raises(ValueError):
        HarvestCriteria(min_comment_density=1.5)


@pytest.mark.parametrize(
    "path,ok",
    [("contracts/A.sol", True), ("A.sol", True), ("node_modules/x/A.sol", False), ("a/node_modules/B.sol", False),
     ("scripts/deploy.js", False), ("A.sol.bak", False)],
)
def test_harvestable_paths(path, ok):
    assert is_harvestable(path) is ok


def test_density_examples():
    assert comment_density("// only a comment") == 1.0
    assert comment_density("contract A { uint x; }") == 0.0
    assert comment_density("") == 0.0
    code = "x" * 450
    text = "/*" + "c" * 46 + "*/\n" + code
    assert comment_density(text) == pytest.approx(0.1)
    assert comment_density('string s = "// not a comment";') == 0.0


def test_density_threshold_excludes_just_below():
    below = "//" + "c" * 2 + "\n" + "x" * 96  # 4/100
    at = "//" + "c" * 3 + "\n" + "x" * 95  # 5/100
    m = build_manifest([SolFile("r", "a.sol", below + "contract A {}"), SolFile("r", "b.sol", at)], created_at=STAMP)
    assert comment_density(below + "contract A {}") < 0.05
    assert [e.path for e in m.entries] == ["b.sol"]


def test_empty_input_gives_empty_manifest():
    m = build_manifest([], created_at=STAMP)
    assert m.entries == () and m.created_at == STAMP


def test_dedup_keeps_first_in_repo_path_order():
    files = [SolFile("z/repo", "a.sol", HOTEL), SolFile("a/repo", "b.sol", HOTEL), SolFile("a/repo", "c.sol", HOTEL + "\n")]
    m = build_manifest(files, created_at=STAMP)
    assert [(e.repo, e.path) for e in m.entries] == [("a/repo", "b.sol"), ("a/repo", "c.sol")]
    assert m.entries[0].content_hash == content_hash(HOTEL)


def test_unparsable_file_quarantined():
    m = build_manifest([SolFile("r", "x.sol", "// just words, no contract here at all")], created_at=STAMP)
    assert m.entries[0].quarantined


def test_permissive_filter():
    files = [SolFile("r", "a.sol", HOTEL, "MIT"), SolFile("r", "b.sol", HOTEL + " ", "GPL-3.0"), SolFile("r", "c.sol", HOTEL + "  ")]
    m = build_manifest(files, HarvestCriteria(permissive_licenses_only=True), STAMP)
    assert [e.path for e in m.entries] == ["a.sol"]


def test_manifest_validation_and_round_trip(tmp_path):
    m = build_manifest([SolFile("r", "a.sol", HOTEL, "MIT")], created_at=STAMP)
    m.save(tmp_path / "m.jsonl")
    assert CorpusManifest.load(tmp_path / "m.jsonl") == m
    e = m.entries[0]
    with pytest.raises(ValueError):
        CorpusManifest((e, e), STAMP)


def test_fixture_harvest_end_to_end(tmp_path):
    c = client()
    repos = query_repos(c)
    assert [r.full_name for r in repos] == ["acme/popular", "acme/fifty"]
    files = harvest(c)
    assert all(f.path.endswith(".sol") and "node_modules" not in f.path for f in files)
    m = build_manifest(files, created_at=STAMP)
    assert [(e.repo, e.path, e.quarantined) for e in m.entries] == [
        ("acme/fifty", "contracts/Hotel.sol", False),
        ("acme/popular", "contracts/Broken.sol", True),
        ("acme/popular", "contracts/Token.sol", False),
    ]
    path = write_corpus(files, m, tmp_path / "corpus")
    assert path.name == "manifest.jsonl"
    assert len(list((tmp_path / "corpus").glob("*.sol"))) == 3
    assert not any("contents/README.md" in k for k in c.transport.requests)


def test_harvest_is_deterministic():
    a = build_manifest(harvest(client()), created_at=STAMP)
    b = build_manifest(harvest(client()), created_at=STAMP)
    assert a.to_jsonl() == b.to_jsonl()


def test_rate_limit_and_errors():
    key = request_key("/search/repositories", {"q": "language:Solidity stars:>=50", "sort": "stars", "per_page": 100, "page": 1})
    limited = GitHubClient(ReplayTransport({key: {"status": 403, "headers": {"X-RateLimit-Remaining": "0", "X-RateLimit-Reset": "130"}}}), clock=lambda: 100.0)
    with pytest.raises(RateLimited) as err:
        query_repos(limited)
    assert err.value.retry_after == 30.0
    too_many = GitHubClient(ReplayTransport({key: {"status": 429, "headers": {"Retry-After": "7"}}}))
    with pytest.raises(RateLimited) as err:
        query_repos(too_many)
    assert err.value.retry_after == 7.0
    broken = GitHubClient(ReplayTransport({key: {"status": 500, "body": {"message": "boom"}}}))
    with pytest.raises(ApiError) as err:
        query_repos(broken)
    assert err.value.status == 500 and not isinstance(err.value, RateLimited)


def test_missing_token_is_config_error(monkeypatch):
    monkeypatch.delenv("NO_SUCH_TOKEN_VAR", raising=False)
    with pytest.raises(ConfigError):
        GitHubClient.from_env("NO_SUCH_TOKEN_VAR")


def test_request_key_sorts_params():
    assert request_key("/p", {"b": 1, "a": 2}) == "/p?a=2&b=1"
    assert request_key("/p") == "/p"


def test_sample_is_deterministic_and_skips_quarantine():
    files = [SolFile("r", f"f{i}.sol", HOTEL + "\n" * i) for i in range(10)]
    files.append(SolFile("r", "zz.sol", "// only prose here"))
    m = build_manifest(files, created_at=STAMP)
    s1, s2 = sample_manifest(m, 4, seed=5), sample_manifest(m, 4, seed=5)
    assert s1 == s2 and len(s1.entries) == 4
    assert not any(e.quarantined for e in sample_manifest(m, 100).entries)
    assert len(sample_manifest(m, 100).entries) == 10


@given(st.lists(st.tuples(st.sampled_from(["a/x", "b/y"]), st.integers(0, 5), st.integers(0, 3)), max_size=12))
def test_manifest_invariants(items):
    files = [SolFile(repo, f"f{n}.sol", f"// note {v}\ncontract C{v} {{}}") for repo, n, v in items]
    m = build_manifest(files, created_at=STAMP)
    keys = [(e.repo, e.path) for e in m.entries]
    assert keys == sorted(keys)
    assert len({e.content_hash for e in m.entries}) == len(m.entries)
    assert all(e.comment_density >= 0.05 for e in m.entries)
    shuffled = list(files)
    random.Random(0).shuffle(shuffled)
    assert build_manifest(shuffled, created_at=STAMP) == m
