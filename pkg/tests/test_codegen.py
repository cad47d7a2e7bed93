from __future__ import annotations

import json

import pytest

from sol2move.codegen import (
    WHOLE_FILE,
    CandidateTranslation,
    CodeChunk,
    assemble,
    extract_code,
    generate_chunk,
    generation_prompt,
    repair,
)
from sol2move.errors import DuplicateIndex, EmptyPlan, NoCodeBlock
from sol2move.llm import ReplayBackend
from sol2move.planner import SubTask


@pytest.mark.parametrize("fence", ["```move", "```", "```rust", "``` move  "])
def test_extract_code_any_info_string(fence):
    text = f"Here you go:\n{fence}\nmodule 0x1::m {{}}\n```\nthen more\n```move\nsecond\n```"
    assert extract_code(text) == "module 0x1::m {}"


def test_extract_code_skips_blank_blocks():
    assert extract_code("```\n\n```\n```move\nreal\n```") == "real"


def test_no_code_block_keeps_raw():
    with pytest.raises(NoCodeBlock) as err:
        extract_code("I cannot do that.")
    assert err.value.raw_response == "I cannot do that."


def test_generate_chunk_includes_snippet_and_format_rule():
    llm = ReplayBackend(["```move\nstruct Room has key {}\n```"])
    chunk = generate_chunk(llm, SubTask(2, "Define the room resource", "struct S has key {}", "frag"))
    assert chunk.subtask_index == 2 and chunk.code == "struct Room has key {}"
    prompt = llm.prompts[-1]
    assert "Define the room resource" in prompt and "struct S has key {}" in prompt
    assert "fenced code block" in prompt
    assert "Reference" not in generation_prompt(SubTask(1, "no snippet"))


def test_assemble_orders_by_index_with_provenance():
    chunks = [CodeChunk(3, "c1\nc2", "r"), CodeChunk(1, "a1", "r"), CodeChunk(2, "b1\nb2\nb3", "r")]
    cand = assemble(chunks)
    assert cand.move_source == "a1\n\nb1\nb2\nb3\n\nc1\nc2"
    assert [c.subtask_index for c in cand.chunks] == [1, 2, 3]
    lines = cand.move_source.split("\n")
    for c in cand.chunks:
        lo, hi = cand.provenance[c.subtask_index]
        assert "\n".join(lines[lo - 1:hi]) == c.code
    assert cand.revision == 0


def test_assemble_errors():
    with pytest.raises(EmptyPlan):
        assemble([])
    with pytest.raises(DuplicateIndex):
        assemble([CodeChunk(1, "a", "r"), CodeChunk(1, "b", "r")])
    with pytest.raises(ValueError):
        CodeChunk(1, "", "r")


def test_repair_increments_revision_and_carries_diagnostics():
    cand = assemble([CodeChunk(1, "module m {}", "r")])
    diags = "sources/t.move:3: [E03002] unbound module\nsources/t.move:12: [E04007] incompatible types"
    llm = ReplayBackend(["```move\nmodule fixed {}\n```"])
    fixed = repair(llm, cand, diags)
    assert fixed.revision == 1 and fixed.move_source == "module fixed {}"
    assert [c.subtask_index for c in fixed.chunks] == [WHOLE_FILE]
    prompt = llm.prompts[0]
    assert "unbound module" in prompt and "incompatible types" in prompt and "module m {}" in prompt
    again = repair(ReplayBackend(["```\nmodule fixed2 {}\n```"]), fixed, diags)
    assert again.revision == 2


@pytest.mark.parametrize("diags", ["", "   \n"])
def test_repair_requires_diagnostics(diags):
    cand = assemble([CodeChunk(1, "x", "r")])
    with pytest.raises(ValueError):
        repair(ReplayBackend(["```\ny\n```"]), cand, diags)


def test_write_outputs(tmp_path):
    cand = CandidateTranslation("module m {}", (CodeChunk(1, "module m {}", "r"),), 4, {1: (1, 1)})
    path = cand.write(tmp_path / "out")
    assert path.name == "4.move" and path.read_text() == "module m {}"
    meta = json.loads((tmp_path / "out" / "4.json").read_text())
    assert meta == {"revision": 4, "provenance": {"1": [1, 1]}, "chunks": [1]}
