"""Per-contract lifecycle: prompt, plan, generate, compile loop, prove loop."""

from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Callable, Sequence

from .codegen import CandidateTranslation, assemble, generate_chunk, repair
from .corpus.bm25 import Bm25Index, scope_fraction
from .corpus.dense import Encoder
from .corpus.fragments import FragmentStore
from .errors import NoCodeBlock, PlanParseError, PromptBudgetError, TemplateError
from .frontend import SoliditySource, build_task_prompt, extract_keywords
from .llm import FewShotExemplar, LlmBackend, LlmError
from .planner import SubTask, generate_subtasks, retrieve_concepts, select_concepts
from .toolchain import CompileResult, ProveResult, Toolchain, summarize_diagnostics

logger = logging.getLogger(__name__)

MAX_ATTEMPTS = 5


class Status(str, Enum):
    PENDING = "Pending"
    COMPILED_FIRST_TRY = "CompiledFirstTry"
    COMPILED_AFTER_FEEDBACK = "CompiledAfterCompilerFeedback"
    VERIFIED_SAFE = "VerifiedSafe"
    COMPILABLE_UNVERIFIED = "CompilableUnverified"
    FAILED_COMPILATION = "FailedCompilation"
    FAILED_PLANNING = "FailedPlanning"

    @property
    def terminal(self) -> bool:
        return self is not Status.PENDING


COMPILED_STATUSES = frozenset(
    {Status.COMPILED_FIRST_TRY, Status.COMPILED_AFTER_FEEDBACK, Status.VERIFIED_SAFE, Status.COMPILABLE_UNVERIFIED}
)


@dataclass
class TranslationRecord:
    contract_id: str
    status: Status = Status.PENDING
    compile_attempts: int = 0
    prove_attempts: int = 0
    final_revision: int = 0
    timeline: list[dict] = field(default_factory=list)
    # prover-feedback rescue of a candidate the compile loop gave up on
    rescue_attempts: int = 0
    compiled_in_prover_phase: bool = False
    planner_model: str = ""
    generator_model: str = ""

    def check(self) -> None:
        """Raise AssertionError when the record breaks a lifecycle invariant."""
        assert 0 <= self.compile_attempts <= MAX_ATTEMPTS, self
        assert 0 <= self.prove_attempts <= MAX_ATTEMPTS, self
        assert self.prove_attempts + self.rescue_attempts <= MAX_ATTEMPTS, self
        if self.status is Status.FAILED_COMPILATION:
            assert self.prove_attempts == 0
        if self.status is Status.COMPILED_FIRST_TRY:
            assert self.compile_attempts == 1
        if self.prove_attempts:
            assert self.status in (Status.VERIFIED_SAFE, Status.COMPILABLE_UNVERIFIED)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["status"] = self.status.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TranslationRecord":
        known = {f.name for f in dataclasses.fields(cls)}
        kwargs = {k: v for k, v in d.items() if k in known}
        kwargs["status"] = Status(d["status"])
        return cls(**kwargs)


@dataclass
class Deps:
    """Everything a translation run talks to."""

    planner: LlmBackend
    generator: LlmBackend
    toolchain: Toolchain
    index: Bm25Index | None = None
    store: FragmentStore | None = None
    dense: tuple[Encoder, Encoder] | None = None
    exemplars: Sequence[FewShotExemplar] = ()
    task_template: str | None = None
    planner_template: str | None = None


@dataclass(frozen=True)
class PipelineSettings:
    max_compile_attempts: int = MAX_ATTEMPTS
    max_prove_attempts: int = MAX_ATTEMPTS
    retrieval_k: int = 10
    max_keywords: int = 20
    prompt_budget: int = 4000
    digest_budget: int = 2000
    run_prover: bool = True
    prover_rescue: bool = False
    strategy: str = "planned"  # "planned" or "direct"
    contract_budget: float = 1800.0  # seconds of wall clock per contract
    artifacts_dir: Path | None = None

    def __post_init__(self):
        if not 1 <= self.max_compile_attempts <= MAX_ATTEMPTS or not 1 <= self.max_prove_attempts <= MAX_ATTEMPTS:
            raise ValueError(f"loop bounds must lie in 1..{MAX_ATTEMPTS}")
        if self.strategy not in ("planned", "direct"):
            raise ValueError(f"unknown strategy {self.strategy!r}")


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


class Trace:
    """Collects timeline events and persists candidate revisions for one contract."""

    def __init__(
        self,
        record: TranslationRecord | None = None,
        clock: Callable[[], str] = utc_now,
        artifacts: Path | None = None,
        deadline: float | None = None,
    ):
        self.record = record
        self.clock = clock
        self.artifacts = artifacts
        self.deadline = deadline

    def event(self, phase: str, **data) -> None:
        if self.record is not None:
            self.record.timeline.append({"t": self.clock(), "phase": phase, **data})

    def candidate(self, candidate: CandidateTranslation) -> None:
        if self.artifacts is not None:
            candidate.write(self.artifacts)

    def tool(self, tool: str, result: CompileResult | ProveResult, attempt: int, revision: int) -> None:
        self.event(
            tool,
            attempt=attempt,
            revision=revision,
            command=list(result.command),
            exit_code=result.exit_code,
            duration_ms=round(result.duration, 3),
            ok=result.ok,
        )

    def timeout(self, default: float | None = None) -> float | None:
        if self.deadline is None:
            return default
        remaining = max(self.deadline - time.monotonic(), 0.0)
        return remaining if default is None else min(default, remaining)


def _try_repair(llm: LlmBackend, candidate: CandidateTranslation, digest: str, trace: Trace) -> CandidateTranslation:
    try:
        fixed = repair(llm, candidate, digest)
    except (NoCodeBlock, LlmError) as exc:
        trace.event("repair_failed", revision=candidate.revision, error=f"{type(exc).__name__}: {exc}")
        return candidate
    trace.event("repair", revision=fixed.revision)
    trace.candidate(fixed)
    return fixed


def compile_loop(
    candidate: CandidateTranslation,
    deps: Deps,
    max_attempts: int = MAX_ATTEMPTS,
    digest_budget: int = 2000,
    trace: Trace | None = None,
) -> tuple[CandidateTranslation, CompileResult, int]:
    """Compile, and on failure feed the diagnostics back for a whole-file repair."""
    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    trace = trace or Trace()
    attempts = 0
    while True:
        attempts += 1
        result = deps.toolchain.compile(candidate, trace.timeout())
        trace.tool("compile", result, attempts, candidate.revision)
        if result.success or attempts >= max_attempts:
            return candidate, result, attempts
        candidate = _try_repair(deps.generator, candidate, summarize_diagnostics(result.diagnostics, digest_budget), trace)


def prove_loop(
    candidate: CandidateTranslation,
    deps: Deps,
    max_attempts: int = MAX_ATTEMPTS,
    digest_budget: int = 2000,
    trace: Trace | None = None,
) -> tuple[CandidateTranslation, ProveResult, int]:
    """Prove, and on failure repair from the prover diagnostics.

    A repair that no longer compiles counts as a failed attempt and the loop
    rolls back to the last compiling content (as a fresh revision).
    """
    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    trace = trace or Trace()
    current = candidate
    result = deps.toolchain.prove(current, trace.timeout())
    trace.tool("prove", result, 1, current.revision)
    attempts = 1
    digest = summarize_diagnostics(result.diagnostics, digest_budget) if not result.verified else ""
    while not result.verified and attempts < max_attempts:
        attempts += 1
        repaired = _try_repair(deps.generator, current, digest, trace)
        check = deps.toolchain.compile(repaired, trace.timeout())
        trace.tool("compile", check, attempts, repaired.revision)
        if not check.success:
            current = dataclasses.replace(current, revision=repaired.revision + 1)
            trace.event("rollback", revision=current.revision)
            trace.candidate(current)
            digest = summarize_diagnostics(tuple(result.diagnostics) + tuple(check.diagnostics), digest_budget)
            continue
        current = repaired
        result = deps.toolchain.prove(current, trace.timeout())
        trace.tool("prove", result, attempts, current.revision)
        if not result.verified:
            digest = summarize_diagnostics(result.diagnostics, digest_budget)
    return current, result, attempts


def _rescue(
    candidate: CandidateTranslation,
    last: CompileResult,
    deps: Deps,
    settings: PipelineSettings,
    trace: Trace,
) -> tuple[CandidateTranslation, int, bool]:
    """Use prover diagnostics to repair a candidate the compile loop gave up on."""
    attempts = 0
    current = candidate
    diagnostics = tuple(last.diagnostics)
    while attempts < settings.max_prove_attempts:
        attempts += 1
        pres = deps.toolchain.prove(current, trace.timeout())
        trace.tool("rescue_prove", pres, attempts, current.revision)
        digest = summarize_diagnostics(pres.diagnostics or diagnostics, settings.digest_budget)
        current = _try_repair(deps.generator, current, digest, trace)
        cres = deps.toolchain.compile(current, trace.timeout())
        trace.tool("rescue_compile", cres, attempts, current.revision)
        if cres.success:
            return current, attempts, True
        diagnostics = tuple(cres.diagnostics)
    return current, attempts, False


def direct_subtask(source: SoliditySource) -> SubTask:
    return SubTask(1, "Translate this Solidity contract into an equivalent Move module:\n\n" + source.raw_text)


def translate_contract(
    source: SoliditySource,
    deps: Deps,
    settings: PipelineSettings = PipelineSettings(),
    contract_id: str | None = None,
    clock: Callable[[], str] = utc_now,
) -> TranslationRecord:
    """Run every phase for one contract; failures end up as terminal statuses."""
    rec = TranslationRecord(
        contract_id=contract_id or source.path.stem,
        planner_model=getattr(deps.planner, "model_name", "unknown"),
        generator_model=getattr(deps.generator, "model_name", "unknown"),
    )
    artifacts = settings.artifacts_dir / rec.contract_id if settings.artifacts_dir else None
    trace = Trace(rec, clock, artifacts, time.monotonic() + settings.contract_budget)

    try:
        summary = extract_keywords(source, settings.max_keywords)
        prompt = build_task_prompt(summary, deps.task_template, settings.prompt_budget)
        trace.event("task_created", topic=prompt.topic, keywords=list(prompt.keywords))
        if settings.strategy == "direct":
            plan = [direct_subtask(source)]
        else:
            if deps.index is None or deps.store is None:
                raise ValueError("planned strategy needs a BM25 index and fragment store")
            candidates = retrieve_concepts(prompt, deps.index, deps.store, deps.dense, settings.retrieval_k)
            trace.event(
                "concepts_retrieved",
                ids=[c.fragment.id for c in candidates],
                scope_fraction=round(scope_fraction(deps.index, prompt.keywords), 6),
            )
            selected = select_concepts(candidates)
            trace.event("concepts_selected", ids=[c.fragment.id for c in selected])
            plan = generate_subtasks(deps.planner, prompt, selected, deps.planner_template)
        trace.event("planned", subtasks=[t.to_dict() for t in plan])
    except (LlmError, PlanParseError, PromptBudgetError, TemplateError) as exc:
        rec.status = Status.FAILED_PLANNING
        trace.event("terminal", status=rec.status.value, error=f"{type(exc).__name__}: {exc}")
        return rec

    chunks = []
    for task in plan:
        try:
            chunks.append(generate_chunk(deps.generator, task, deps.exemplars))
        except (NoCodeBlock, LlmError) as exc:
            trace.event("chunk_failed", subtask=task.index, error=f"{type(exc).__name__}: {exc}")
    candidate = assemble(chunks) if chunks else CandidateTranslation("", (), 0, {})
    trace.event("assembled", chunks=[c.subtask_index for c in chunks], revision=candidate.revision)
    trace.candidate(candidate)

    candidate, cres, rec.compile_attempts = compile_loop(
        candidate, deps, settings.max_compile_attempts, settings.digest_budget, trace
    )
    if cres.success:
        rec.status = Status.COMPILED_FIRST_TRY if rec.compile_attempts == 1 else Status.COMPILED_AFTER_FEEDBACK
        prove_budget = settings.max_prove_attempts
    elif settings.run_prover and settings.prover_rescue:
        candidate, rec.rescue_attempts, rescued = _rescue(candidate, cres, deps, settings, trace)
        rec.compiled_in_prover_phase = rescued
        rec.status = Status.COMPILABLE_UNVERIFIED if rescued else Status.FAILED_COMPILATION
        prove_budget = settings.max_prove_attempts - rec.rescue_attempts
    else:
        rec.status = Status.FAILED_COMPILATION
        prove_budget = 0

    if rec.status in COMPILED_STATUSES and settings.run_prover and prove_budget > 0:
        candidate, pres, rec.prove_attempts = prove_loop(candidate, deps, prove_budget, settings.digest_budget, trace)
        rec.status = Status.VERIFIED_SAFE if pres.verified else Status.COMPILABLE_UNVERIFIED

    rec.final_revision = candidate.revision
    trace.event("terminal", status=rec.status.value, final_revision=rec.final_revision)
    return rec
