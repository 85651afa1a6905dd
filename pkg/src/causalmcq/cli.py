"""Command-line entry point.

Subcommands: convert, validate, split, build, rationales, emit-sft, infer,
score, stats, all. Run configuration comes from an optional JSON file plus
flag overrides; credentials are read only from the environment variable
named by --api-key-env.
"""
from __future__ import annotations

import argparse
import json
import sys

from .client import Client, ClientError, EndpointConfig
from .corpus import CorpusError, document_from_flat_dict, load_corpus, save_corpus
from .emitter import EmitError, WEIGHTS_THREE_TASK
from .inference import InferenceError
from .mcq import BuildError
from .pipeline import (
    PipelineError,
    RunConfig,
    mock_responder,
    run_all,
    run_build,
    run_infer,
    run_rationales,
    run_emit,
    run_score,
    run_split,
    run_stats,
    run_validate,
    score_files,
)
from .prompts import PromptError, TaskKind
from .scorer import ScoringError
from .stats import StatsDomainError, analytic_report, monte_carlo_p_test
from .synthetic import GenerationError
from .util import read_json

HANDLED_ERRORS = (
    CorpusError,
    BuildError,
    PromptError,
    ClientError,
    EmitError,
    InferenceError,
    ScoringError,
    StatsDomainError,
    PipelineError,
    GenerationError,
    OSError,
    ValueError,
)


def _parse_weights(text: str) -> dict[TaskKind, float]:
    """Parse "qa=0.5,rationale=0.25,ecg=0.25" into task weights."""
    valid = {t.value: t for t in TaskKind}
    weights: dict[TaskKind, float] = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        name, sep, value = part.partition("=")
        if not sep or name not in valid:
            raise PipelineError(
                f"bad weight {part!r}; expected task=value with task in "
                f"{sorted(valid)}"
            )
        weights[valid[name]] = float(value)
    if not weights:
        raise PipelineError("empty weights string")
    return weights


def _add_run_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="JSON file with run configuration")
    sub.add_argument("--corpus", help="corpus file (JSON array or JSONL)")
    sub.add_argument("--output-dir", help="artifact directory")
    sub.add_argument("--split-seed", type=int)
    sub.add_argument("--split-ratio", type=float)
    sub.add_argument("--num-options", type=int)
    sub.add_argument("--min-distractors", type=int)
    sub.add_argument(
        "--weights", help='per-task loss weights, e.g. "qa=0.5,rationale=0.25,ecg=0.25"'
    )
    sub.add_argument("--emission-mode", choices=["multitask", "concat"])
    sub.add_argument("--expand-coref", action="store_true", default=None)
    sub.add_argument("--templates", help="JSON file overriding prompt templates")


def _add_endpoint_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--base-url", help="OpenAI-compatible endpoint base URL")
    sub.add_argument("--model")
    sub.add_argument(
        "--api-key-env",
        help="name of the environment variable holding the bearer token",
    )
    sub.add_argument("--temperature", type=float)
    sub.add_argument("--timeout-ms", type=int)
    sub.add_argument("--max-retries", type=int)
    sub.add_argument("--max-in-flight", type=int)


def _build_run_config(args: argparse.Namespace) -> RunConfig:
    base: dict = {}
    if getattr(args, "config", None):
        base = read_json(args.config)
        if not isinstance(base, dict):
            raise PipelineError(f"{args.config}: expected a JSON object")

    def pick(flag: str, key: str, default=None):
        value = getattr(args, flag, None)
        if value is not None:
            return value
        return base.get(key, default)

    corpus_path = pick("corpus", "corpus_path")
    output_dir = pick("output_dir", "output_dir")
    if not corpus_path:
        raise PipelineError("no corpus given; pass --corpus or set corpus_path")
    if not output_dir:
        raise PipelineError("no output dir given; pass --output-dir or set output_dir")

    weights = dict(WEIGHTS_THREE_TASK)
    if getattr(args, "weights", None):
        weights = _parse_weights(args.weights)
    elif isinstance(base.get("weights"), dict):
        weights = _parse_weights(
            ",".join(f"{k}={v}" for k, v in base["weights"].items())
        )

    endpoint = None
    ep_base: dict = base.get("endpoint") or {}

    def ep_pick(flag: str, key: str, default=None):
        value = getattr(args, flag, None)
        if value is not None:
            return value
        return ep_base.get(key, default)

    base_url = ep_pick("base_url", "base_url")
    if base_url:
        endpoint = EndpointConfig(
            base_url=base_url,
            model=ep_pick("model", "model") or "",
            api_key_env=ep_pick("api_key_env", "api_key_env"),
            temperature=ep_pick("temperature", "temperature", 0.0),
            timeout_ms=ep_pick("timeout_ms", "timeout_ms", 30_000),
            max_retries=ep_pick("max_retries", "max_retries", 3),
            max_in_flight=ep_pick("max_in_flight", "max_in_flight", 4),
        )
        if not endpoint.model:
            raise PipelineError("endpoint requires --model")

    return RunConfig(
        corpus_path=corpus_path,
        output_dir=output_dir,
        split_seed=pick("split_seed", "split_seed", 7),
        split_ratio=pick("split_ratio", "split_ratio", 0.8),
        num_options=pick("num_options", "num_options", 5),
        min_distractors=pick("min_distractors", "min_distractors", 3),
        weights=weights,
        emission_mode=pick("emission_mode", "emission_mode", "multitask"),
        expand_coref=bool(pick("expand_coref", "expand_coref", False)),
        templates_path=pick("templates", "templates_path"),
        endpoint=endpoint,
    )


def _emit(payload: dict) -> None:
    print(json.dumps(payload, indent=2, ensure_ascii=False))


def _responder_for(args: argparse.Namespace, cfg: RunConfig):
    if getattr(args, "mock_oracle", False):
        return mock_responder(cfg)
    if cfg.endpoint is None:
        raise PipelineError(
            "no endpoint configured; pass --base-url/--model or --mock-oracle"
        )
    return Client(cfg.endpoint)


def cmd_convert(args: argparse.Namespace) -> int:
    raw = read_json(args.input)
    if not isinstance(raw, list):
        raise CorpusError(f"{args.input}: expected a JSON array of documents")
    docs = [document_from_flat_dict(item) for item in raw]
    count = save_corpus(args.output, docs)
    _emit({"documents": count, "output": args.output})
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    if args.corpus and not args.output_dir:
        docs = load_corpus(args.corpus)
        _emit(
            {
                "documents": len(docs),
                "events": sum(len(d.events) for d in docs),
                "causal_links": sum(len(d.causal_links) for d in docs),
                "coref_clusters": sum(len(d.coref_clusters) for d in docs),
            }
        )
        return 0
    _emit(run_validate(_build_run_config(args)))
    return 0


def cmd_split(args: argparse.Namespace) -> int:
    _emit(run_split(_build_run_config(args)))
    return 0


def cmd_build(args: argparse.Namespace) -> int:
    _emit(run_build(_build_run_config(args)))
    return 0


def cmd_rationales(args: argparse.Namespace) -> int:
    cfg = _build_run_config(args)
    responder = _responder_for(args, cfg)
    _emit(run_rationales(cfg, responder=responder, resume=args.resume))
    return 0


def cmd_emit_sft(args: argparse.Namespace) -> int:
    _emit(run_emit(_build_run_config(args)))
    return 0


def cmd_infer(args: argparse.Namespace) -> int:
    cfg = _build_run_config(args)
    responder = _responder_for(args, cfg)
    _emit(run_infer(cfg, responder=responder, resume=args.resume))
    return 0


def cmd_score(args: argparse.Namespace) -> int:
    if args.pred:
        if not args.gold or not args.report:
            raise PipelineError("score with --pred also needs --gold and --report")
        payload = score_files(
            args.pred,
            args.gold,
            args.report,
            split_path=args.split,
            subset=args.subset,
        )
        _emit(payload)
        return 0
    _emit(run_score(_build_run_config(args)))
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    if args.n is not None:
        if args.x is None or args.d is None:
            raise PipelineError("formula mode needs --n, --x, and --d together")
        payload = analytic_report(args.n, args.x, args.d).to_dict()
        if args.mc_trials:
            if not (float(args.n).is_integer() and float(args.x).is_integer()):
                raise StatsDomainError("Monte Carlo needs integer --n and --x")
            payload["monte_carlo_p_test"] = monte_carlo_p_test(
                int(args.n), int(args.x), args.d, args.mc_trials, seed=args.seed
            )
            payload["monte_carlo_trials"] = args.mc_trials
        _emit(payload)
        return 0
    _emit(run_stats(_build_run_config(args)))
    return 0


def cmd_all(args: argparse.Namespace) -> int:
    cfg = _build_run_config(args)
    if not args.mock_oracle and cfg.endpoint is None:
        raise PipelineError(
            "no endpoint configured; pass --base-url/--model or --mock-oracle"
        )
    _emit(run_all(cfg, mock=args.mock_oracle, resume=args.resume))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="causalmcq",
        description=(
            "Build multiple-choice causality datasets, emit multi-task "
            "fine-tuning records, run inference, and score predicted pairs."
        ),
    )
    subs = parser.add_subparsers(dest="command", required=True)

    sub = subs.add_parser(
        "convert", help="normalize document-level offset annotations"
    )
    sub.add_argument("--input", required=True)
    sub.add_argument("--output", required=True)
    sub.set_defaults(func=cmd_convert)

    sub = subs.add_parser("validate", help="load and validate a corpus")
    _add_run_flags(sub)
    sub.set_defaults(func=cmd_validate)

    sub = subs.add_parser("split", help="seeded document-level train/test split")
    _add_run_flags(sub)
    sub.set_defaults(func=cmd_split)

    sub = subs.add_parser("build", help="build train and test question samples")
    _add_run_flags(sub)
    sub.set_defaults(func=cmd_build)

    sub = subs.add_parser("rationales", help="collect answer justifications")
    _add_run_flags(sub)
    _add_endpoint_flags(sub)
    sub.add_argument("--mock-oracle", action="store_true")
    sub.add_argument("--resume", action="store_true")
    sub.set_defaults(func=cmd_rationales)

    sub = subs.add_parser("emit-sft", help="write fine-tuning records")
    _add_run_flags(sub)
    sub.set_defaults(func=cmd_emit_sft)

    sub = subs.add_parser("infer", help="answer test questions and collect pairs")
    _add_run_flags(sub)
    _add_endpoint_flags(sub)
    sub.add_argument("--mock-oracle", action="store_true")
    sub.add_argument("--resume", action="store_true")
    sub.set_defaults(func=cmd_infer)

    sub = subs.add_parser("score", help="score predicted pairs against gold links")
    _add_run_flags(sub)
    sub.add_argument("--pred", help="pairs JSONL (standalone mode)")
    sub.add_argument("--gold", help="gold corpus file (standalone mode)")
    sub.add_argument("--report", help="report JSON output (standalone mode)")
    sub.add_argument("--split", help="optional split.json restricting documents")
    sub.add_argument("--subset", default="test", choices=["train", "test"])
    sub.set_defaults(func=cmd_score)

    sub = subs.add_parser("stats", help="distribution analysis")
    _add_run_flags(sub)
    sub.add_argument("--n", type=float, help="events per document")
    sub.add_argument("--x", type=float, help="events with causal relations")
    sub.add_argument("--d", type=int, help="option-set size")
    sub.add_argument("--mc-trials", type=int, default=0)
    sub.add_argument("--seed", type=int, default=0)
    sub.set_defaults(func=cmd_stats)

    sub = subs.add_parser("all", help="run every stage end to end")
    _add_run_flags(sub)
    _add_endpoint_flags(sub)
    sub.add_argument("--mock-oracle", action="store_true")
    sub.add_argument("--resume", action="store_true")
    sub.set_defaults(func=cmd_all)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except HANDLED_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
