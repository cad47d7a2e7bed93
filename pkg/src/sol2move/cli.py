"""Command-line entry point: harvest, index, train-retriever, translate, report."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Sequence

from .config import PipelineConfig, load_config
from .corpus.bm25 import Bm25Index, build_bm25_index
from .corpus.dense import (
    Encoder,
    TrainingExample,
    corpus_vocab,
    dense_accuracy_at_1,
    load_encoders,
    make_separable_corpus,
    save_encoders,
    train_retriever,
)
from .corpus.fragments import FragmentStore, build_store, pages_from_dir, read_corpus_manifest
from .errors import (
    ApiError,
    ConfigError,
    EmptyCorpus,
    EmptyDocument,
    InsufficientCorpus,
    ScriptExhausted,
    Sol2MoveError,
    ToolchainError,
)
from .frontend import load_source
from .harvest import (
    GitHubClient,
    HarvestCriteria,
    ReplayTransport,
    build_manifest,
    harvest,
    sample_manifest,
    write_corpus,
)
from .ledger import Ledger
from .llm import ChatClient, ReplayBackend, load_exemplars
from .metrics import aggregate_metrics, render_report
from .pipeline import Deps, TranslationRecord, translate_contract
from .toolchain import MoveToolchain, ScriptedToolchain

logger = logging.getLogger("sol2move")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_TOOL = 3
EXIT_PARTIAL = 4

DEFAULTS = PipelineConfig()
HARVEST_DEFAULTS = HarvestCriteria()

# (command, argparse dest) -> dotted PipelineConfig attribute the flag overrides
CONFIG_FLAGS: dict[tuple[str, str], str] = {}


def config_default(attr: str):
    value = DEFAULTS
    for part in attr.split("."):
        value = getattr(value, part)
    return value


def _config_option(parser: argparse.ArgumentParser, command: str, flag: str, attr: str, help: str, **kw) -> None:
    dest = flag.lstrip("-").replace("-", "_")
    CONFIG_FLAGS[(command, dest)] = attr
    parser.add_argument(flag, dest=dest, default=None, help=f"{help} (default: {config_default(attr)})", **kw)


def _bool_config_option(parser: argparse.ArgumentParser, command: str, flag: str, attr: str, help: str) -> None:
    dest = flag.lstrip("-").replace("-", "_")
    CONFIG_FLAGS[(command, dest)] = attr
    parser.add_argument(
        flag, dest=dest, default=None, action=argparse.BooleanOptionalAction, help=f"{help} (default: {config_default(attr)})"
    )


def apply_flags(cfg: PipelineConfig, command: str, args: argparse.Namespace) -> PipelineConfig:
    """Override config values with every flag the user actually passed."""
    for (cmd, dest), attr in CONFIG_FLAGS.items():
        value = getattr(args, dest, None)
        if cmd != command or value is None:
            continue
        section, _, name = attr.rpartition(".")
        if section:
            inner = dataclasses.replace(getattr(cfg, section), **{name: value})
            cfg = dataclasses.replace(cfg, **{section: inner})
        else:
            cfg = dataclasses.replace(cfg, **{name: value})
    return cfg.validate()


# --------------------------------------------------------------------------
# harvest


def cmd_harvest(args: argparse.Namespace, cfg: PipelineConfig) -> int:
    criteria = HarvestCriteria(
        min_stars=args.min_stars,
        required_language=args.language,
        min_comment_density=args.min_comment_density,
        permissive_licenses_only=args.permissive_only,
    )
    if args.fixtures:
        client = GitHubClient(ReplayTransport.load(args.fixtures))
    else:
        client = GitHubClient.from_env(args.token_env)
    files = harvest(client, criteria, args.page_limit)
    manifest = build_manifest(files, criteria)
    if args.sample is not None:
        manifest = sample_manifest(manifest, args.sample, args.seed)
    path = write_corpus(files, manifest, cfg.paths.corpus)
    quarantined = sum(e.quarantined for e in manifest.entries)
    print(f"wrote {len(manifest.entries)} entries ({quarantined} quarantined) to {path}")
    return EXIT_OK


# --------------------------------------------------------------------------
# index

FRAGMENTS_FILE = "fragments.json"
BM25_FILE = "bm25.json"
ENCODERS_FILE = "encoders.json"


def cmd_index(args: argparse.Namespace, cfg: PipelineConfig) -> int:
    docs = Path(cfg.paths.docs)
    if docs.is_file():
        pages = read_corpus_manifest(docs)
    elif docs.is_dir():
        pages = pages_from_dir(docs)
    else:
        raise ConfigError(f"documentation path not found: {docs}")
    if not pages:
        raise EmptyCorpus(f"no HTML documents under {docs}")
    store = build_store(pages, cfg.retrieval.fragment_width)
    index = build_bm25_index(list(store), cfg.retrieval.k1, cfg.retrieval.b)
    out = Path(cfg.paths.index)
    out.mkdir(parents=True, exist_ok=True)
    store.save(out / FRAGMENTS_FILE)
    index.save(out / BM25_FILE)
    print(f"indexed {len(pages)} documents into {len(store)} fragments at {out}")
    return EXIT_OK


def load_index(directory: str | Path) -> tuple[Bm25Index, FragmentStore]:
    directory = Path(directory)
    if not (directory / BM25_FILE).is_file():
        raise ConfigError(f"no index at {directory}; run `sol2move index` first")
    return Bm25Index.load(directory / BM25_FILE), FragmentStore.load(directory / FRAGMENTS_FILE)


# --------------------------------------------------------------------------
# train-retriever


def _read_pairs(path: Path) -> list[TrainingExample]:
    out = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.strip():
            rec = json.loads(line)
            out.append(TrainingExample(rec["query"], rec["positive_id"]))
    return out


def cmd_train_retriever(args: argparse.Namespace, cfg: PipelineConfig) -> int:
    if args.synthetic:
        store, examples = make_separable_corpus(args.synthetic, seed=args.seed)
    elif args.pairs:
        _, store = load_index(cfg.paths.index)
        examples = _read_pairs(Path(args.pairs))
        missing = [ex.positive_id for ex in examples if ex.positive_id not in store]
        if missing:
            raise ConfigError(f"training pairs reference unknown fragment ids: {missing[:5]}")
    else:
        raise ConfigError("train-retriever needs --synthetic N or --pairs FILE")

    vocab = corpus_vocab(store, examples)
    enc_q = Encoder.random(vocab, args.dim, seed=args.seed)
    enc_c = Encoder.random(vocab, args.dim, seed=args.seed + 1)
    enc_q, enc_c, losses = train_retriever(
        enc_q,
        enc_c,
        store,
        examples,
        steps=args.steps,
        lr=args.lr,
        m=args.negatives,
        negatives="hard" if args.hard_negatives else "random",
        seed=args.seed,
    )

    out = Path(args.out) if args.out else Path(cfg.paths.index) / ENCODERS_FILE
    out.parent.mkdir(parents=True, exist_ok=True)
    save_encoders(out, enc_q, enc_c)
    curve = Path(args.loss_csv) if args.loss_csv else Path(cfg.paths.reports) / "retriever_loss.csv"
    curve.parent.mkdir(parents=True, exist_ok=True)
    with open(curve, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["step", "loss"])
        writer.writerows((i, f"{loss:.10g}") for i, loss in enumerate(losses))
    acc = dense_accuracy_at_1(enc_q, enc_c, store, examples)
    print(f"trained {args.steps} steps; accuracy@1 = {acc:.4f}; encoders at {out}; loss curve at {curve}")
    return EXIT_OK


# --------------------------------------------------------------------------
# translate


def collect_contracts(inputs: Sequence[str]) -> list[Path]:
    paths: list[Path] = []
    for item in inputs:
        p = Path(item)
        if p.is_dir():
            paths.extend(sorted(p.rglob("*.sol")))
        elif p.is_file():
            paths.append(p)
        else:
            raise ConfigError(f"contract path not found: {item}")
    stems = [p.stem for p in paths]
    dupes = sorted({s for s in stems if stems.count(s) > 1})
    if dupes:
        raise ConfigError(f"contract ids must be unique, duplicated: {dupes}")
    return paths


def _load_json(path: str | None) -> dict | None:
    if not path:
        return None
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"file not found: {path}") from exc


def make_deps_factory(args: argparse.Namespace, cfg: PipelineConfig) -> Callable[[str], Deps]:
    """Build a per-contract dependency factory; live clients are shared across contracts."""
    index = store = dense = None
    if cfg.strategy == "planned":
        index, store = load_index(cfg.paths.index)
        if cfg.retrieval.mode == "sparse+dense":
            dense = load_encoders(cfg.retrieval.encoders)
    exemplars = load_exemplars(cfg.templates.exemplars) if cfg.shots else []
    task_template = Path(cfg.templates.task).read_text(encoding="utf-8") if cfg.templates.task else None
    planner_template = Path(cfg.templates.planner).read_text(encoding="utf-8") if cfg.templates.planner else None

    replay = _load_json(args.replay_scripts)
    scripts = _load_json(args.toolchain_script)
    live_planner = live_generator = live_toolchain = None
    if replay is None:
        live_planner, live_generator = ChatClient(cfg.planner), ChatClient(cfg.generator)
    if scripts is None:
        live_toolchain = MoveToolchain(cfg.toolchain)

    def factory(contract_id: str) -> Deps:
        if replay is not None:
            script = replay.get(contract_id, {})
            planner = ReplayBackend(script.get("planner", []), "replay-planner")
            generator = ReplayBackend(script.get("generator", []), "replay-generator")
        else:
            planner, generator = live_planner, live_generator
        toolchain = ScriptedToolchain.from_dict(scripts.get(contract_id, {})) if scripts is not None else live_toolchain
        return Deps(planner, generator, toolchain, index, store, dense, exemplars, task_template, planner_template)

    return factory


def cmd_translate(args: argparse.Namespace, cfg: PipelineConfig) -> int:
    contracts = collect_contracts(args.contracts)
    ledger = Ledger(cfg.paths.ledger)
    done = ledger.completed_ids()
    todo = [p for p in contracts if p.stem not in done]
    if len(todo) < len(contracts):
        print(f"skipping {len(contracts) - len(todo)} contract(s) already in the ledger")
    if not todo:
        return EXIT_OK

    factory = make_deps_factory(args, cfg)
    settings = cfg.settings(Path(cfg.paths.artifacts))
    ledger.append_run(cfg.run_header())

    def run_one(path: Path) -> TranslationRecord | None:
        try:
            source = load_source(path)
            rec = translate_contract(source, factory(path.stem), settings, path.stem)
        except ToolchainError:
            raise
        except Sol2MoveError as exc:
            logger.error("%s: %s: %s", path.stem, type(exc).__name__, exc)
            return None
        ledger.append(rec)
        print(f"{rec.contract_id}: {rec.status.value} (compile {rec.compile_attempts}, prove {rec.prove_attempts})")
        return rec

    if cfg.workers == 1:
        results = [run_one(p) for p in todo]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(run_one, todo))
    failed = sum(r is None for r in results)
    if failed:
        print(f"{failed} of {len(todo)} contract(s) failed before reaching a terminal status", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


# --------------------------------------------------------------------------
# report


def _ledger_arg(item: str) -> tuple[str | None, Path]:
    label, sep, path = item.partition("=")
    return (label, Path(path)) if sep else (None, Path(item))


def cmd_report(args: argparse.Namespace, cfg: PipelineConfig) -> int:
    items = [_ledger_arg(x) for x in (args.ledger or [cfg.paths.ledger])]
    reports = []
    for label, path in items:
        if not path.is_file():
            raise ConfigError(f"ledger not found: {path}")
        records = Ledger(path).records()
        if label is None:
            label = records[0].generator_model if records else path.stem
        reports.append(aggregate_metrics(records, label))
    out = Path(cfg.paths.reports)
    out.mkdir(parents=True, exist_ok=True)
    formats = ("csv", "markdown") if args.format == "both" else (args.format,)
    for fmt in formats:
        target = out / ("report.csv" if fmt == "csv" else "report.md")
        target.write_text(render_report(reports, fmt), encoding="utf-8")
        print(f"wrote {target}")
    sys.stdout.write(render_report(reports, "markdown"))
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    CONFIG_FLAGS.clear()
    parser = argparse.ArgumentParser(prog="sol2move", description=__doc__)
    parser.add_argument("--config", default=None, help="TOML config file (default: built-in defaults)")
    parser.add_argument("--verbose", action="store_true", default=False, help="debug logging (default: False)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("harvest", help="search GitHub and build the Solidity corpus manifest")
    p.add_argument("--min-stars", type=int, default=HARVEST_DEFAULTS.min_stars, help="minimum stars (default: %(default)s)")
    p.add_argument("--language", default=HARVEST_DEFAULTS.required_language, help="required language tag (default: %(default)s)")
    p.add_argument(
        "--min-comment-density",
        type=float,
        default=HARVEST_DEFAULTS.min_comment_density,
        help="minimum comment density per file (default: %(default)s)",
    )
    p.add_argument(
        "--permissive-only",
        action=argparse.BooleanOptionalAction,
        default=HARVEST_DEFAULTS.permissive_licenses_only,
        help="keep only permissively licensed repos (default: %(default)s)",
    )
    p.add_argument("--page-limit", type=int, default=10, help="search result pages to fetch (default: %(default)s)")
    p.add_argument("--token-env", default="GITHUB_TOKEN", help="env var holding the API token (default: %(default)s)")
    p.add_argument("--fixtures", default=None, help="replay recorded API responses from this JSON file (default: %(default)s)")
    p.add_argument("--sample", type=int, default=None, help="keep a deterministic sample of N entries (default: %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="sampling seed (default: %(default)s)")
    _config_option(p, "harvest", "--corpus", "paths.corpus", "output corpus directory")
    p.set_defaults(func=cmd_harvest)

    p = sub.add_parser("index", help="segment HTML documentation and build the BM25 index")
    _config_option(p, "index", "--docs", "paths.docs", "HTML directory or corpus manifest (.jsonl)")
    _config_option(p, "index", "--index", "paths.index", "output index directory")
    _config_option(p, "index", "--fragment-width", "retrieval.fragment_width", "tokens per fragment chunk", type=int)
    _config_option(p, "index", "--k1", "retrieval.k1", "BM25 term saturation", type=float)
    _config_option(p, "index", "--b", "retrieval.b", "BM25 length normalisation", type=float)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("train-retriever", help="train the dense dual encoder")
    p.add_argument("--synthetic", type=int, default=0, help="train on a synthetic separable corpus of N docs (default: %(default)s)")
    p.add_argument("--pairs", default=None, help="JSONL of {query, positive_id} over the index (default: %(default)s)")
    _config_option(p, "train-retriever", "--index", "paths.index", "index directory holding fragments")
    _config_option(p, "train-retriever", "--reports", "paths.reports", "directory for the loss curve")
    p.add_argument("--steps", type=int, default=200, help="training steps (default: %(default)s)")
    p.add_argument("--lr", type=float, default=1.0, help="learning rate (default: %(default)s)")
    p.add_argument("--dim", type=int, default=32, help="embedding dimension (default: %(default)s)")
    p.add_argument("--negatives", type=int, default=8, help="negatives per example (default: %(default)s)")
    p.add_argument(
        "--hard-negatives",
        action=argparse.BooleanOptionalAction,
        default=False,
        help="mine negatives by BM25 instead of sampling (default: %(default)s)",
    )
    p.add_argument("--seed", type=int, default=0, help="initialisation and sampling seed (default: %(default)s)")
    p.add_argument("--out", default=None, help="encoder output file (default: <index>/encoders.json)")
    p.add_argument("--loss-csv", default=None, help="loss curve CSV (default: <reports>/retriever_loss.csv)")
    p.set_defaults(func=cmd_train_retriever)

    p = sub.add_parser("translate", help="translate contracts and append outcomes to the ledger")
    p.add_argument("contracts", nargs="+", help="Solidity files or directories")
    _config_option(p, "translate", "--ledger", "paths.ledger", "ledger file")
    _config_option(p, "translate", "--artifacts", "paths.artifacts", "directory for .move revisions")
    _config_option(p, "translate", "--index", "paths.index", "index directory")
    _config_option(p, "translate", "--max-attempts", "loop.max_compile_attempts", "compile attempts per contract", type=int)
    _config_option(p, "translate", "--max-prove-attempts", "loop.max_prove_attempts", "prover attempts per contract", type=int)
    _bool_config_option(p, "translate", "--prover", "loop.run_prover", "run the prover on compiled output")
    _bool_config_option(p, "translate", "--prover-rescue", "loop.prover_rescue", "use prover feedback on non-compiling output")
    _config_option(p, "translate", "--workers", "workers", "contracts translated in parallel", type=int)
    _config_option(p, "translate", "--strategy", "strategy", "planned (retrieve + plan) or direct", choices=("planned", "direct"))
    _config_option(p, "translate", "--shots", "shots", "generator exemplars, 0 or 5", type=int, choices=(0, 5))
    _config_option(p, "translate", "--exemplars", "templates.exemplars", "exemplar JSON file")
    _config_option(p, "translate", "--retrieval-mode", "retrieval.mode", "sparse or sparse+dense", choices=("sparse", "sparse+dense"))
    _config_option(p, "translate", "--encoders", "retrieval.encoders", "dense encoder file")
    _config_option(p, "translate", "--k", "retrieval.k", "concepts retrieved per channel", type=int)
    p.add_argument("--replay-scripts", default=None, help="JSON {contract: {planner: [...], generator: [...]}} (default: %(default)s)")
    p.add_argument("--toolchain-script", default=None, help="JSON {contract: {compile: [...], prove: [...]}} (default: %(default)s)")
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("report", help="render SC/IC tables from ledgers")
    p.add_argument("--ledger", action="append", default=None, help="ledger path or LABEL=PATH, repeatable (default: config ledger)")
    _config_option(p, "report", "--reports", "paths.reports", "output directory")
    p.add_argument("--format", choices=("csv", "markdown", "both"), default="both", help="output format (default: %(default)s)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = apply_flags(load_config(args.config), args.command, args)
        return args.func(args, cfg)
    except (ConfigError, EmptyCorpus, EmptyDocument, InsufficientCorpus) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ApiError, ToolchainError, ScriptExhausted) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_TOOL
    except Sol2MoveError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
