"""Stage orchestration: each stage reads prior artifacts from the output
directory, writes its own, and records itself in a manifest.

Artifacts: split.json, train_samples.jsonl, test_samples.jsonl,
rationales.jsonl, sft.jsonl, predictions.jsonl, pairs.jsonl, report.json,
stats.json, manifest.json. Every stage is deterministic given corpus,
config, and seed; reruns rewrite identical bytes (manifest timestamps aside).
"""
from __future__ import annotations

import hashlib
import json
import math
import subprocess
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .client import Client, EndpointConfig, MockOracle
from .corpus import Document, load_corpus
from .emitter import (
    MODE_CONCAT,
    MODE_MULTITASK,
    WEIGHTS_THREE_TASK,
    emit_sft,
    gold_linearizations,
)
from .inference import aggregate, record_to_dict, run_inference
from .mcq import (
    MODE_TEST,
    MODE_TRAIN,
    BuilderConfig,
    build_split,
    sample_from_dict,
    sample_to_dict,
)
from .prompts import (
    DEFAULT_TEMPLATES,
    TaskKind,
    TemplateSet,
    load_templates,
    render_rationale_request,
)
from .scorer import load_pairs, metrics_to_dict, save_pairs, score
from .stats import measure_corpus
from .util import dumps, read_json, read_jsonl, shuffled, substream, write_json, write_jsonl


class PipelineError(Exception):
    """Missing artifacts or invalid run configuration."""


@dataclass(frozen=True)
class RunConfig:
    corpus_path: str
    output_dir: str
    split_seed: int = 7
    split_ratio: float = 0.8
    num_options: int = 5
    min_distractors: int = 3
    weights: dict = field(default_factory=lambda: dict(WEIGHTS_THREE_TASK))
    emission_mode: str = MODE_MULTITASK
    expand_coref: bool = False
    templates_path: str | None = None
    endpoint: EndpointConfig | None = None

    def __post_init__(self) -> None:
        if not 0.0 < self.split_ratio < 1.0:
            raise PipelineError(
                f"split_ratio must be in (0, 1), got {self.split_ratio}"
            )
        if self.emission_mode not in (MODE_MULTITASK, MODE_CONCAT):
            raise PipelineError(f"unknown emission mode {self.emission_mode!r}")

    def builder_config(self) -> BuilderConfig:
        return BuilderConfig(
            num_options=self.num_options,
            min_distractors=self.min_distractors,
            seed=self.split_seed,
        )

    def templates(self) -> TemplateSet:
        if self.templates_path:
            return load_templates(self.templates_path)
        return DEFAULT_TEMPLATES

    def to_dict(self) -> dict:
        endpoint = None
        if self.endpoint is not None:
            endpoint = {
                "base_url": self.endpoint.base_url,
                "model": self.endpoint.model,
                "api_key_env": self.endpoint.api_key_env,
                "temperature": self.endpoint.temperature,
                "timeout_ms": self.endpoint.timeout_ms,
                "max_retries": self.endpoint.max_retries,
                "max_in_flight": self.endpoint.max_in_flight,
            }
        return {
            "corpus_path": self.corpus_path,
            "output_dir": self.output_dir,
            "split_seed": self.split_seed,
            "split_ratio": self.split_ratio,
            "num_options": self.num_options,
            "min_distractors": self.min_distractors,
            "weights": {task.value: w for task, w in self.weights.items()},
            "emission_mode": self.emission_mode,
            "expand_coref": self.expand_coref,
            "templates_path": self.templates_path,
            "endpoint": endpoint,
        }


class Artifacts:
    def __init__(self, output_dir: str | Path):
        self.root = Path(output_dir)

    @property
    def split(self) -> Path:
        return self.root / "split.json"

    @property
    def train_samples(self) -> Path:
        return self.root / "train_samples.jsonl"

    @property
    def test_samples(self) -> Path:
        return self.root / "test_samples.jsonl"

    @property
    def rationales(self) -> Path:
        return self.root / "rationales.jsonl"

    @property
    def sft(self) -> Path:
        return self.root / "sft.jsonl"

    @property
    def predictions(self) -> Path:
        return self.root / "predictions.jsonl"

    @property
    def pairs(self) -> Path:
        return self.root / "pairs.jsonl"

    @property
    def report(self) -> Path:
        return self.root / "report.json"

    @property
    def stats(self) -> Path:
        return self.root / "stats.json"

    @property
    def manifest(self) -> Path:
        return self.root / "manifest.json"

    def require(self, path: Path, producer: str) -> Path:
        if not path.exists():
            raise PipelineError(
                f"missing artifact {path}; run `causalmcq {producer}` first"
            )
        return path


def _git_describe() -> str | None:
    try:
        proc = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True,
            text=True,
            timeout=10,
        )
    except (OSError, subprocess.TimeoutExpired):
        return None
    if proc.returncode != 0:
        return None
    return proc.stdout.strip() or None


def _config_hash(cfg: RunConfig) -> str:
    canonical = json.dumps(cfg.to_dict(), sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def record_stage(cfg: RunConfig, stage: str, outputs: list[Path]) -> None:
    art = Artifacts(cfg.output_dir)
    manifest = {}
    if art.manifest.exists():
        manifest = read_json(art.manifest)
    manifest["config"] = cfg.to_dict()
    manifest["config_sha256"] = _config_hash(cfg)
    manifest.setdefault("git", _git_describe())
    stages = manifest.setdefault("stages", {})
    stages[stage] = {
        "completed_at": datetime.now(timezone.utc).isoformat(),
        "outputs": [str(p) for p in outputs],
    }
    write_json(art.manifest, manifest)


def _load_docs(cfg: RunConfig) -> list[Document]:
    if not Path(cfg.corpus_path).exists():
        raise PipelineError(f"corpus file not found: {cfg.corpus_path}")
    return load_corpus(cfg.corpus_path)


def _load_samples(path: Path) -> list:
    return [sample_from_dict(row) for row in read_jsonl(path)]


def _split_docs(cfg: RunConfig, docs: list[Document]) -> tuple[list[Document], list[Document]]:
    art = Artifacts(cfg.output_dir)
    art.require(art.split, "split")
    split = read_json(art.split)
    by_id = {d.doc_id: d for d in docs}
    missing = [
        did for did in split["train"] + split["test"] if did not in by_id
    ]
    if missing:
        raise PipelineError(
            f"split references documents absent from the corpus: {missing[:3]}"
        )
    train = [by_id[did] for did in split["train"]]
    test = [by_id[did] for did in split["test"]]
    return train, test


def run_validate(cfg: RunConfig) -> dict:
    docs = _load_docs(cfg)
    return {
        "documents": len(docs),
        "events": sum(len(d.events) for d in docs),
        "causal_links": sum(len(d.causal_links) for d in docs),
        "coref_clusters": sum(len(d.coref_clusters) for d in docs),
    }


def run_split(cfg: RunConfig) -> dict:
    docs = _load_docs(cfg)
    ids = [d.doc_id for d in docs]
    order = shuffled(substream(cfg.split_seed, "split"), ids)
    n_train = math.floor(cfg.split_ratio * len(order))
    payload = {
        "seed": cfg.split_seed,
        "ratio": cfg.split_ratio,
        "train": order[:n_train],
        "test": order[n_train:],
    }
    art = Artifacts(cfg.output_dir)
    write_json(art.split, payload)
    record_stage(cfg, "split", [art.split])
    return {"train_docs": n_train, "test_docs": len(order) - n_train}


def run_build(cfg: RunConfig) -> dict:
    docs = _load_docs(cfg)
    train_docs, test_docs = _split_docs(cfg, docs)
    bcfg = cfg.builder_config()
    train = build_split(train_docs, MODE_TRAIN, bcfg)
    test = build_split(test_docs, MODE_TEST, bcfg)
    art = Artifacts(cfg.output_dir)
    write_jsonl(art.train_samples, (sample_to_dict(s) for s in train))
    write_jsonl(art.test_samples, (sample_to_dict(s) for s in test))
    record_stage(cfg, "build", [art.train_samples, art.test_samples])
    return {"train_samples": len(train), "test_samples": len(test)}


def _default_responder(cfg: RunConfig):
    if cfg.endpoint is None:
        raise PipelineError(
            "no endpoint configured; pass --base-url/--model or --mock-oracle"
        )
    return Client(cfg.endpoint)


def mock_responder(cfg: RunConfig) -> MockOracle:
    """Oracle over every built sample, for network-free runs."""
    art = Artifacts(cfg.output_dir)
    art.require(art.train_samples, "build")
    art.require(art.test_samples, "build")
    samples = _load_samples(art.train_samples) + _load_samples(art.test_samples)
    return MockOracle(samples, docs=_load_docs(cfg), templates=cfg.templates())


def run_rationales(cfg: RunConfig, responder=None, resume: bool = False) -> dict:
    art = Artifacts(cfg.output_dir)
    art.require(art.train_samples, "build")
    samples = _load_samples(art.train_samples)
    responder = responder or _default_responder(cfg)
    templates = cfg.templates()

    done: set[str] = set()
    if resume and art.rationales.exists():
        done = {row["id"] for row in read_jsonl(art.rationales)}
    pending = [s for s in samples if s.sample_id not in done]

    workers = cfg.endpoint.max_in_flight if cfg.endpoint else 4
    art.root.mkdir(parents=True, exist_ok=True)
    written = 0
    with open(art.rationales, "a" if resume else "w", encoding="utf-8") as sink:
        if pending:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                futures = {
                    pool.submit(
                        responder,
                        render_rationale_request(s, templates=templates),
                        s.sample_id,
                    ): s.sample_id
                    for s in pending
                }
                for future in as_completed(futures):
                    row = {"id": futures[future], "rationale": future.result()}
                    sink.write(dumps(row))
                    sink.write("\n")
                    sink.flush()
                    written += 1
    record_stage(cfg, "rationales", [art.rationales])
    return {"requested": len(pending), "skipped": len(done), "written": written}


def _task_weights(cfg: RunConfig) -> dict[TaskKind, float]:
    return dict(cfg.weights)


def run_emit(cfg: RunConfig) -> dict:
    art = Artifacts(cfg.output_dir)
    art.require(art.train_samples, "build")
    samples = _load_samples(art.train_samples)
    docs = _load_docs(cfg)
    weights = _task_weights(cfg)

    rationales: dict[str, str] = {}
    needs_rationales = (
        cfg.emission_mode == MODE_CONCAT or TaskKind.RATIONALE in weights
    )
    if needs_rationales:
        art.require(art.rationales, "rationales")
        rationales = {
            row["id"]: row["rationale"] for row in read_jsonl(art.rationales)
        }
    linearizations = gold_linearizations(samples, docs)
    report = emit_sft(
        samples,
        rationales=rationales,
        linearizations=linearizations,
        weights=weights if cfg.emission_mode == MODE_MULTITASK else None,
        mode=cfg.emission_mode,
        out=art.sft,
        templates=cfg.templates(),
    )
    record_stage(cfg, "emit-sft", [art.sft])
    return report.to_dict()


def run_infer(cfg: RunConfig, responder=None, resume: bool = False) -> dict:
    art = Artifacts(cfg.output_dir)
    art.require(art.test_samples, "build")
    samples = _load_samples(art.test_samples)
    docs = _load_docs(cfg)
    responder = responder or _default_responder(cfg)
    endpoint = cfg.endpoint or EndpointConfig(base_url="mock://", model="mock")

    records = run_inference(
        samples,
        endpoint,
        responder,
        out_path=art.predictions,
        resume=resume,
        templates=cfg.templates(),
    )
    pred = aggregate(records, samples, docs=docs, expand_coref=cfg.expand_coref)
    save_pairs(art.pairs, pred)
    statuses: dict[str, int] = {}
    for record in records:
        statuses[record.status] = statuses.get(record.status, 0) + 1
    record_stage(cfg, "infer", [art.predictions, art.pairs])
    return {"samples": len(samples), "pairs": len(pred.pairs), "statuses": statuses}


def score_files(
    pred_path: str | Path,
    corpus_path: str | Path,
    report_path: str | Path,
    split_path: str | Path | None = None,
    subset: str = "test",
) -> dict:
    docs = load_corpus(corpus_path)
    if split_path is not None:
        split = read_json(split_path)
        if subset not in split:
            raise PipelineError(f"split file has no {subset!r} list")
        wanted = set(split[subset])
        docs = [d for d in docs if d.doc_id in wanted]
    metrics = score(load_pairs(pred_path), docs)
    payload = metrics_to_dict(metrics)
    write_json(report_path, payload)
    return payload


def run_score(cfg: RunConfig) -> dict:
    art = Artifacts(cfg.output_dir)
    art.require(art.pairs, "infer")
    split_path = art.split if art.split.exists() else None
    payload = score_files(
        art.pairs, cfg.corpus_path, art.report, split_path=split_path
    )
    record_stage(cfg, "score", [art.report])
    return payload


def run_stats(cfg: RunConfig) -> dict:
    docs = _load_docs(cfg)
    payload = measure_corpus(docs, cfg.builder_config())
    art = Artifacts(cfg.output_dir)
    write_json(art.stats, payload)
    record_stage(cfg, "stats", [art.stats])
    return payload


def run_all(cfg: RunConfig, mock: bool = False, resume: bool = False) -> dict:
    summary = {"validate": run_validate(cfg)}
    summary["split"] = run_split(cfg)
    summary["build"] = run_build(cfg)
    responder = mock_responder(cfg) if mock else _default_responder(cfg)
    summary["rationales"] = run_rationales(cfg, responder=responder, resume=resume)
    summary["emit-sft"] = run_emit(cfg)
    summary["infer"] = run_infer(cfg, responder=responder, resume=resume)
    summary["score"] = run_score(cfg)
    summary["stats"] = run_stats(cfg)
    return summary
