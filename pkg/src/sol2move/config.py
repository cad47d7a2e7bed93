"""Run configuration loaded from TOML, with `${VAR}` environment interpolation."""

from __future__ import annotations

import dataclasses
import os
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .llm import LlmConfig, RetryPolicy
from .pipeline import MAX_ATTEMPTS, PipelineSettings
from .toolchain import ToolchainConfig

_VAR_RE = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")


@dataclass(frozen=True)
class Paths:
    corpus: str = "corpus"
    docs: str = "docs"
    index: str = "index"
    ledger: str = "ledger.jsonl"
    reports: str = "reports"
    artifacts: str = "artifacts"


@dataclass(frozen=True)
class RetrievalParams:
    k: int = 10
    fragment_width: int = 256
    k1: float = 1.2
    b: float = 0.75
    mode: str = "sparse"  # "sparse" or "sparse+dense"
    encoders: str | None = None


@dataclass(frozen=True)
class LoopParams:
    max_compile_attempts: int = MAX_ATTEMPTS
    max_prove_attempts: int = MAX_ATTEMPTS
    run_prover: bool = True
    prover_rescue: bool = False
    contract_budget: float = 1800.0


@dataclass(frozen=True)
class Templates:
    task: str | None = None
    planner: str | None = None
    exemplars: str | None = None


@dataclass(frozen=True)
class PipelineConfig:
    paths: Paths = field(default_factory=Paths)
    planner: LlmConfig = field(default_factory=LlmConfig)
    generator: LlmConfig = field(default_factory=LlmConfig)
    toolchain: ToolchainConfig = field(default_factory=ToolchainConfig)
    retrieval: RetrievalParams = field(default_factory=RetrievalParams)
    loop: LoopParams = field(default_factory=LoopParams)
    templates: Templates = field(default_factory=Templates)
    workers: int = 1
    shots: int = 0  # 0 (zero-shot) or 5
    strategy: str = "planned"

    def validate(self) -> "PipelineConfig":
        for name in ("max_compile_attempts", "max_prove_attempts"):
            value = getattr(self.loop, name)
            if not 1 <= value <= MAX_ATTEMPTS:
                raise ConfigError(f"loop.{name} must lie in 1..{MAX_ATTEMPTS}, got {value}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.shots not in (0, 5):
            raise ConfigError(f"shots must be 0 or 5, got {self.shots}")
        if self.shots and not self.templates.exemplars:
            raise ConfigError("five-shot mode needs templates.exemplars")
        if self.retrieval.mode not in ("sparse", "sparse+dense"):
            raise ConfigError(f"retrieval.mode must be 'sparse' or 'sparse+dense', got {self.retrieval.mode!r}")
        if self.retrieval.mode == "sparse+dense" and not self.retrieval.encoders:
            raise ConfigError("sparse+dense retrieval needs retrieval.encoders")
        if self.strategy not in ("planned", "direct"):
            raise ConfigError(f"strategy must be 'planned' or 'direct', got {self.strategy!r}")
        for name in ("task", "planner", "exemplars"):
            ref = getattr(self.templates, name)
            if ref and not Path(ref).is_file():
                raise ConfigError(f"templates.{name} file not found: {ref}")
        return self

    def settings(self, artifacts_dir: Path | None = None) -> PipelineSettings:
        return PipelineSettings(
            max_compile_attempts=self.loop.max_compile_attempts,
            max_prove_attempts=self.loop.max_prove_attempts,
            retrieval_k=self.retrieval.k,
            run_prover=self.loop.run_prover,
            prover_rescue=self.loop.prover_rescue,
            strategy=self.strategy,
            contract_budget=self.loop.contract_budget,
            artifacts_dir=artifacts_dir,
        )

    def run_header(self) -> dict:
        """Effective settings for the ledger, without filesystem paths or secrets."""
        def llm(c: LlmConfig) -> dict:
            return {"model_name": c.model_name, "temperature": c.temperature, "max_output_tokens": c.max_output_tokens}

        return {
            "planner": llm(self.planner),
            "generator": llm(self.generator),
            "retrieval": {k: v for k, v in dataclasses.asdict(self.retrieval).items() if k != "encoders"},
            "loop": dataclasses.asdict(self.loop),
            "shots": self.shots,
            "strategy": self.strategy,
        }


def interpolate(value, env=None):
    """Replace `${VAR}` in every string of a nested structure; unset variables are an error."""
    env = os.environ if env is None else env
    if isinstance(value, str):
        def sub(m):
            if m.group(1) not in env:
                raise ConfigError(f"config references unset environment variable {m.group(1)}")
            return env[m.group(1)]

        return _VAR_RE.sub(sub, value)
    if isinstance(value, dict):
        return {k: interpolate(v, env) for k, v in value.items()}
    if isinstance(value, list):
        return [interpolate(v, env) for v in value]
    return value


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"[{where}] must be a table")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(unknown)}")
    kwargs = dict(data)
    for f in dataclasses.fields(cls):
        if f.name in kwargs and isinstance(kwargs[f.name], list):
            kwargs[f.name] = tuple(kwargs[f.name])
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [{where}]: {exc}") from exc


def _llm(data: dict, where: str) -> LlmConfig:
    data = dict(data)
    retry = RetryPolicy(
        max_retries=data.pop("max_retries", RetryPolicy.max_retries),
        backoff=data.pop("backoff", RetryPolicy.backoff),
    )
    cfg = _build(LlmConfig, data, where)
    return dataclasses.replace(cfg, retry_policy=retry)


_SECTIONS = {
    "paths": lambda d: _build(Paths, d, "paths"),
    "planner": lambda d: _llm(d, "planner"),
    "generator": lambda d: _llm(d, "generator"),
    "toolchain": lambda d: _build(ToolchainConfig, d, "toolchain"),
    "retrieval": lambda d: _build(RetrievalParams, d, "retrieval"),
    "loop": lambda d: _build(LoopParams, d, "loop"),
    "templates": lambda d: _build(Templates, d, "templates"),
}


def config_from_dict(data: dict, env=None) -> PipelineConfig:
    data = interpolate(data, env)
    kwargs = {}
    for key, value in data.items():
        if key in _SECTIONS:
            kwargs[key] = _SECTIONS[key](value)
        elif key in ("workers", "shots", "strategy"):
            kwargs[key] = value
        else:
            raise ConfigError(f"unknown top-level config key {key!r}")
    return PipelineConfig(**kwargs).validate()


def load_config(path: str | Path | None = None, env=None) -> PipelineConfig:
    if path is None:
        return PipelineConfig().validate()
    try:
        data = tomllib.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(data, env)


def override(cfg: PipelineConfig, section: str | None, **values) -> PipelineConfig:
    """Apply non-None flag values on top of a loaded config."""
    values = {k: v for k, v in values.items() if v is not None}
    if not values:
        return cfg
    if section is None:
        return dataclasses.replace(cfg, **values)
    return dataclasses.replace(cfg, **{section: dataclasses.replace(getattr(cfg, section), **values)})
