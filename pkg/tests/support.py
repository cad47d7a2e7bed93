"""Builders shared by several test modules."""

from __future__ import annotations

import random
from pathlib import Path

from sol2move.frontend import load_source
from sol2move.llm import ReplayBackend
from sol2move.pipeline import Deps, PipelineSettings, Status, TranslationRecord, translate_contract
from sol2move.toolchain import ScriptedToolchain

FIXTURES = Path(__file__).parent / "fixtures"
CODE = "```move\nmodule 0xCAFE::m {}\n```"


def records_for_row(total: int, sc: int, sc_feedback: int, sc_prover: int, seed: int = 0) -> list[TranslationRecord]:
    """Hand-built records whose SC columns are the given counts, in shuffled order."""
    recs = []
    for i in range(sc):
        status = random.Random(i).choice([Status.COMPILED_FIRST_TRY, Status.VERIFIED_SAFE, Status.COMPILABLE_UNVERIFIED])
        recs.append(TranslationRecord(f"c{i}", status, 1, 0 if status is Status.COMPILED_FIRST_TRY else 1))
    for i in range(sc, sc_feedback):
        recs.append(TranslationRecord(f"c{i}", Status.COMPILED_AFTER_FEEDBACK, 2 + i % 4))
    for i in range(sc_feedback, sc_prover):
        recs.append(TranslationRecord(f"c{i}", Status.COMPILABLE_UNVERIFIED, 5, 0, rescue_attempts=1, compiled_in_prover_phase=True))
    for i in range(sc_prover, total):
        if i % 7 == 0:
            recs.append(TranslationRecord(f"c{i}", Status.FAILED_PLANNING))
        else:
            recs.append(TranslationRecord(f"c{i}", Status.FAILED_COMPILATION, 5))
    random.Random(seed).shuffle(recs)
    return recs


def scripted_records(rng: random.Random, n: int) -> list[TranslationRecord]:
    """Run n contracts end to end with random toolchain scripts."""
    source = load_source(FIXTURES / "hotel.sol")
    out = []
    for i in range(n):
        steps = lambda: [rng.choice(["pass", "fail"]) for _ in range(20)]  # noqa: E731
        deps = Deps(ReplayBackend([]), ReplayBackend([CODE] * 40), ScriptedToolchain(steps(), steps()))
        settings = PipelineSettings(
            strategy="direct",
            run_prover=rng.random() < 0.8,
            prover_rescue=rng.random() < 0.5,
            max_compile_attempts=rng.randint(1, 5),
            max_prove_attempts=rng.randint(1, 5),
        )
        out.append(translate_contract(source, deps, settings, f"c{i}", lambda: "t"))
    return out
