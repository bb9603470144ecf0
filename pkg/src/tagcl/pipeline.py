"""Full-pipeline orchestration from one JSON config file.

Stages (augment, encode both views, train, eval, report) are memoized by
content digests of their inputs and parameters, never by timestamps: a
rerun with unchanged inputs skips straight to whatever is missing. The
run manifest is written last, so its presence certifies a complete run.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

import tagcl
from tagcl import matrixio
from tagcl.augment import (
    AugmentationKind,
    MockLlmClient,
    augment_graph,
    read_corpus,
    write_corpus,
)
from tagcl.cache import CacheStore, canonical_json
from tagcl.contrastive import LossConfig, TrainConfig, train, write_trace
from tagcl.encoder import AdaptorConfig, encoder_forward, init_params, propagation_matrix
from tagcl.errors import ConfigError
from tagcl.evaluate import MetricsReport, ProbeHyper, run_protocol, write_report
from tagcl.graph import TextAttributedGraph, load_graph
from tagcl.llm import ChatCompletionsClient, EmbeddingsClient
from tagcl.rng import Rng, mix_seed
from tagcl.text_encoder import EmbeddingConfig, encode_corpus, remote_encode


@dataclass(frozen=True)
class AugmentationSettings:
    kind: AugmentationKind = AugmentationKind.SHORTEN
    subject_hint: str = "an item"
    model_id: str = "gpt-3.5-turbo"
    backend: str = "mock"  # "mock" | "live"
    cache_dir: str | None = None
    max_in_flight: int = 1


@dataclass(frozen=True)
class EncoderSettings:
    backend: str = "local"  # "local" | "remote"
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    endpoint: str | None = None
    model_id: str = "text-embedding-3-small"
    batch_size: int = 16


@dataclass(frozen=True)
class EvalSettings:
    repeats: int = 5
    seed: int = 0
    train_frac: float = 0.2
    test_frac: float = 0.1
    stratified: bool = False
    probe: ProbeHyper = field(default_factory=ProbeHyper)


@dataclass(frozen=True)
class PipelineConfig:
    nodes_path: Path
    edges_path: Path
    output_dir: Path
    augmentation: AugmentationSettings
    encoder: EncoderSettings
    train: TrainConfig
    eval: EvalSettings
    report_format: str = "markdown"
    snapshot: dict = field(default_factory=dict)


@dataclass(frozen=True)
class RunManifest:
    config: dict
    inputs: dict[str, str]
    outputs: dict[str, str]
    tool_version: str
    stage_seconds: dict[str, float]
    created_at: str


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------

def _check_keys(section: dict, allowed: set[str], where: str) -> None:
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {unknown}; allowed: {sorted(allowed)}")


def _section(raw: dict, name: str) -> dict:
    value = raw.get(name, {})
    if not isinstance(value, dict):
        raise ConfigError(f"{name}: expected an object")
    return value


def validate_config(path, seed_override: int | None = None) -> PipelineConfig:
    """Parse and validate a pipeline config file; unknown keys are errors.

    Omitted fields fall back to the standard defaults (temperature 0.5,
    2 encoder layers, 768-dim text features, 256-dim output, learning
    rate 2e-5, batch 512, 10 epochs, 5 eval repeats).
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("top-level config must be a JSON object")

    _check_keys(
        raw,
        {"dataset", "augmentation", "encoder", "train", "eval", "output_dir", "report_format"},
        "config",
    )

    dataset = _section(raw, "dataset")
    _check_keys(dataset, {"nodes", "edges"}, "dataset")
    for key in ("nodes", "edges"):
        if key not in dataset:
            raise ConfigError(f"dataset.{key}: required")
    nodes_path = Path(dataset["nodes"])
    edges_path = Path(dataset["edges"])
    for p in (nodes_path, edges_path):
        if not p.exists():
            raise ConfigError(f"dataset path {p} does not exist")

    aug = _section(raw, "augmentation")
    _check_keys(
        aug,
        {"kind", "subject_hint", "model_id", "backend", "cache_dir", "max_in_flight"},
        "augmentation",
    )
    kind_raw = aug.get("kind", "shorten")
    if not isinstance(kind_raw, str):
        raise ConfigError(
            "augmentation.kind: exactly one kind expected, as a string "
            f"(got {type(kind_raw).__name__})"
        )
    try:
        kind = AugmentationKind.parse(kind_raw)
    except ValueError as exc:
        raise ConfigError(f"augmentation.kind: {exc}") from None
    backend = aug.get("backend")
    if backend is None:
        if os.environ.get("LLM_API_KEY"):
            backend = "live"
        else:
            backend = "mock"
            print(
                "warning: LLM_API_KEY is not set; augmentation falls back to the "
                "deterministic mock backend",
                file=sys.stderr,
            )
    if backend not in ("mock", "live"):
        raise ConfigError(f"augmentation.backend: expected 'mock' or 'live', got {backend!r}")
    max_in_flight = aug.get("max_in_flight", 1)
    if not isinstance(max_in_flight, int) or max_in_flight < 1:
        raise ConfigError("augmentation.max_in_flight: expected an integer >= 1")
    augmentation = AugmentationSettings(
        kind=kind,
        subject_hint=aug.get("subject_hint", "an item"),
        model_id=aug.get("model_id", "gpt-3.5-turbo"),
        backend=backend,
        cache_dir=aug.get("cache_dir"),
        max_in_flight=max_in_flight,
    )

    enc = _section(raw, "encoder")
    _check_keys(
        enc,
        {"backend", "dimension", "ngram_min", "ngram_max", "lowercase", "hash_seed",
         "endpoint", "model_id", "batch_size"},
        "encoder",
    )
    enc_backend = enc.get("backend", "local")
    if enc_backend not in ("local", "remote"):
        raise ConfigError(
            f"encoder.backend: exactly one of 'local' or 'remote' expected, got {enc_backend!r}"
        )
    try:
        embedding = EmbeddingConfig(
            dimension=enc.get("dimension", 768),
            ngram_min=enc.get("ngram_min", 1),
            ngram_max=enc.get("ngram_max", 2),
            lowercase=enc.get("lowercase", True),
            hash_seed=enc.get("hash_seed", 0),
        )
    except ValueError as exc:
        raise ConfigError(f"encoder: {exc}") from None
    encoder = EncoderSettings(
        backend=enc_backend,
        embedding=embedding,
        endpoint=enc.get("endpoint"),
        model_id=enc.get("model_id", "text-embedding-3-small"),
        batch_size=enc.get("batch_size", 16),
    )

    trn = _section(raw, "train")
    _check_keys(
        trn,
        {"batch_size", "epochs", "learning_rate", "seed", "temperature",
         "negatives_per_target", "tau_on_negatives", "symmetric_views",
         "encoder_kind", "num_layers", "hidden_dim", "output_dim", "adaptor"},
        "train",
    )
    adaptor_raw = trn.get("adaptor", {})
    if not isinstance(adaptor_raw, dict):
        raise ConfigError("train.adaptor: expected an object")
    _check_keys(adaptor_raw, {"enabled", "out_dim"}, "train.adaptor")
    try:
        adaptor = AdaptorConfig(
            enabled=adaptor_raw.get("enabled", False),
            out_dim=adaptor_raw.get("out_dim", 256),
        )
        loss = LossConfig(
            temperature=trn.get("temperature", 0.5),
            negatives_per_target=trn.get("negatives_per_target", "all"),
            tau_on_negatives=trn.get("tau_on_negatives", True),
            symmetric_views=trn.get("symmetric_views", False),
        )
        train_cfg = TrainConfig(
            batch_size=trn.get("batch_size", 512),
            epochs=trn.get("epochs", 10),
            learning_rate=trn.get("learning_rate", 2e-5),
            seed=trn.get("seed", 0),
            loss=loss,
            adaptor=adaptor,
            encoder_kind=trn.get("encoder_kind", "gcn"),
            num_layers=trn.get("num_layers", 2),
            hidden_dim=trn.get("hidden_dim", 256),
            output_dim=trn.get("output_dim", 256),
        )
    except ValueError as exc:
        raise ConfigError(f"train: {exc}") from None

    evl = _section(raw, "eval")
    _check_keys(
        evl,
        {"repeats", "seed", "train_frac", "test_frac", "stratified", "probe"},
        "eval",
    )
    probe_raw = evl.get("probe", {})
    if not isinstance(probe_raw, dict):
        raise ConfigError("eval.probe: expected an object")
    _check_keys(probe_raw, {"learning_rate", "epochs", "l2", "objective"}, "eval.probe")
    try:
        probe = ProbeHyper(
            learning_rate=probe_raw.get("learning_rate", 0.01),
            epochs=probe_raw.get("epochs", 200),
            l2=probe_raw.get("l2", 1e-4),
            objective=probe_raw.get("objective", "logistic"),
        )
    except ValueError as exc:
        raise ConfigError(f"eval.probe: {exc}") from None
    eval_settings = EvalSettings(
        repeats=evl.get("repeats", 5),
        seed=evl.get("seed", 0),
        train_frac=evl.get("train_frac", 0.2),
        test_frac=evl.get("test_frac", 0.1),
        stratified=evl.get("stratified", False),
        probe=probe,
    )
    if eval_settings.repeats < 1:
        raise ConfigError("eval.repeats: must be >= 1")

    report_format = raw.get("report_format", "markdown")
    if report_format not in ("markdown", "csv"):
        raise ConfigError(f"report_format: expected 'markdown' or 'csv', got {report_format!r}")

    output_dir = Path(raw.get("output_dir", "runs/default"))

    config = PipelineConfig(
        nodes_path=nodes_path,
        edges_path=edges_path,
        output_dir=output_dir,
        augmentation=augmentation,
        encoder=encoder,
        train=train_cfg,
        eval=eval_settings,
        report_format=report_format,
        snapshot=raw,
    )
    if seed_override is not None:
        config = override_seed(config, seed_override)
    return config


def override_seed(config: PipelineConfig, seed: int) -> PipelineConfig:
    """Apply one seed to every seeded stage (train and eval)."""
    from dataclasses import replace

    return replace(
        config,
        train=replace(config.train, seed=seed),
        eval=replace(config.eval, seed=seed),
    )


# ---------------------------------------------------------------------------
# stage memoization
# ---------------------------------------------------------------------------

def file_digest(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class _StageRunner:
    def __init__(self, out_dir: Path):
        self.state_dir = out_dir / ".stages"
        self.state_dir.mkdir(parents=True, exist_ok=True)
        self.timings: dict[str, float] = {}

    def run(self, name: str, inputs: list[Path], outputs: list[Path], params: dict, fn) -> None:
        key_path = self.state_dir / f"{name}.json"
        current_inputs = {str(p): file_digest(p) for p in inputs}
        params_json = canonical_json(params)
        if key_path.exists():
            recorded = json.loads(key_path.read_text(encoding="utf-8"))
            if (
                recorded.get("inputs") == current_inputs
                and recorded.get("params") == params_json
                and all(Path(p).exists() for p in recorded.get("outputs", {}))
                and all(
                    file_digest(p) == digest
                    for p, digest in recorded.get("outputs", {}).items()
                )
            ):
                self.timings[name] = 0.0
                return
        started = time.perf_counter()
        fn()
        self.timings[name] = time.perf_counter() - started
        record = {
            "inputs": current_inputs,
            "params": params_json,
            "outputs": {str(p): file_digest(p) for p in outputs},
        }
        key_path.write_text(json.dumps(record, indent=2, sort_keys=True), encoding="utf-8")


# ---------------------------------------------------------------------------
# the pipeline
# ---------------------------------------------------------------------------

def _build_llm_client(settings: AugmentationSettings):
    if settings.backend == "mock":
        return MockLlmClient(model_id=settings.model_id)
    return ChatCompletionsClient(model_id=settings.model_id)


def _encode_texts(config: PipelineConfig, texts, cache_dir: Path) -> np.ndarray:
    if config.encoder.backend == "local":
        return encode_corpus(texts, config.encoder.embedding)
    client = EmbeddingsClient(
        model_id=config.encoder.model_id,
        base_url=config.encoder.endpoint,
        batch_size=config.encoder.batch_size,
    )
    return remote_encode(
        client, texts, config.encoder.embedding.dimension, CacheStore(cache_dir)
    )


def untrained_embeddings(graph: TextAttributedGraph, features: np.ndarray, cfg: TrainConfig) -> np.ndarray:
    """Output of the encoder at its random initialization (control arm)."""
    from tagcl.contrastive import _INIT_STREAM

    prop = propagation_matrix(graph.adjacency, cfg.encoder_kind)
    stack = init_params(
        Rng(mix_seed(cfg.seed, _INIT_STREAM)),
        input_dim=features.shape[1],
        hidden_dim=cfg.hidden_dim,
        output_dim=cfg.output_dim,
        num_layers=cfg.num_layers,
        kind=cfg.encoder_kind,
        adaptor=cfg.adaptor,
    )
    return encoder_forward(prop, features, stack).value


def run_pipeline(config: PipelineConfig) -> RunManifest:
    """Execute augment -> encode -> train -> eval -> report with stage reuse.

    Any stage failure propagates with its stage name; completed stage
    outputs stay on disk and the manifest is only written on success.
    """
    out = config.output_dir
    out.mkdir(parents=True, exist_ok=True)
    corpus_path = out / "corpus.jsonl"
    h_orig_path = out / "h_orig.lgx"
    h_aug_path = out / "h_aug.lgx"
    h_final_path = out / "h_final.lgx"
    checkpoint_path = out / "checkpoint.lgxp"
    trace_path = out / "trace.csv"
    report_csv_path = out / "report.csv"
    report_rendered_path = out / ("report.md" if config.report_format == "markdown" else "report.out.csv")
    runner = _StageRunner(out)

    def stage(name, fn):
        def wrapped():
            try:
                fn()
            except Exception as exc:
                raise type(exc)(f"[stage {name}] {exc}").with_traceback(exc.__traceback__)
        return wrapped

    aug = config.augmentation
    cache_dir = Path(aug.cache_dir) if aug.cache_dir else out / "llm-cache"

    def do_augment():
        graph = load_graph(config.nodes_path, config.edges_path)
        client = _build_llm_client(aug)
        corpus = augment_graph(
            client, aug.kind, graph, CacheStore(cache_dir),
            max_in_flight=aug.max_in_flight, subject_hint=aug.subject_hint,
        )
        write_corpus(corpus, corpus_path)

    runner.run(
        "augment",
        inputs=[config.nodes_path],
        outputs=[corpus_path],
        params={
            "kind": aug.kind.value, "subject_hint": aug.subject_hint,
            "model_id": aug.model_id, "backend": aug.backend,
        },
        fn=stage("augment", do_augment),
    )

    emb = config.encoder.embedding
    encode_params = {
        "backend": config.encoder.backend,
        "dimension": emb.dimension, "ngram_min": emb.ngram_min,
        "ngram_max": emb.ngram_max, "lowercase": emb.lowercase,
        "hash_seed": emb.hash_seed, "model_id": config.encoder.model_id,
    }

    def do_encode_original():
        graph = load_graph(config.nodes_path, config.edges_path)
        matrixio.write_matrix(
            _encode_texts(config, graph.texts, out / "emb-cache"), h_orig_path
        )

    runner.run(
        "encode_original",
        inputs=[config.nodes_path],
        outputs=[h_orig_path],
        params=encode_params,
        fn=stage("encode_original", do_encode_original),
    )

    def do_encode_augmented():
        corpus = read_corpus(corpus_path)
        matrixio.write_matrix(
            _encode_texts(config, corpus.output_texts(), out / "emb-cache"), h_aug_path
        )

    runner.run(
        "encode_augmented",
        inputs=[corpus_path],
        outputs=[h_aug_path],
        params=encode_params,
        fn=stage("encode_augmented", do_encode_augmented),
    )

    cfg_train = config.train
    train_params = {
        "batch_size": cfg_train.batch_size, "epochs": cfg_train.epochs,
        "learning_rate": cfg_train.learning_rate, "seed": cfg_train.seed,
        "temperature": cfg_train.loss.temperature,
        "negatives_per_target": cfg_train.loss.negatives_per_target,
        "tau_on_negatives": cfg_train.loss.tau_on_negatives,
        "symmetric_views": cfg_train.loss.symmetric_views,
        "encoder_kind": cfg_train.encoder_kind, "num_layers": cfg_train.num_layers,
        "hidden_dim": cfg_train.hidden_dim, "output_dim": cfg_train.output_dim,
        "adaptor_enabled": cfg_train.adaptor.enabled,
        "adaptor_out_dim": cfg_train.adaptor.out_dim,
    }

    def do_train():
        graph = load_graph(config.nodes_path, config.edges_path)
        features = matrixio.read_matrix(h_orig_path)
        features_aug = matrixio.read_matrix(h_aug_path)
        result = train(graph, features, features_aug, cfg_train)
        matrixio.write_matrix(result.h_final, h_final_path)
        result.stack.save(checkpoint_path)
        write_trace(result, trace_path)

    runner.run(
        "train",
        inputs=[config.nodes_path, config.edges_path, h_orig_path, h_aug_path],
        outputs=[h_final_path, checkpoint_path, Path(str(checkpoint_path) + ".json"), trace_path],
        params=train_params,
        fn=stage("train", do_train),
    )

    evl = config.eval
    eval_params = {
        "repeats": evl.repeats, "seed": evl.seed,
        "train_frac": evl.train_frac, "test_frac": evl.test_frac,
        "stratified": evl.stratified,
        "probe_learning_rate": evl.probe.learning_rate,
        "probe_epochs": evl.probe.epochs, "probe_l2": evl.probe.l2,
        "probe_objective": evl.probe.objective,
    }

    def do_eval():
        graph = load_graph(config.nodes_path, config.edges_path)
        if graph.labels is None:
            raise ConfigError("evaluation requires labeled nodes")
        embeddings = matrixio.read_matrix(h_final_path)
        report = run_protocol(
            embeddings, graph.labels,
            repeats=evl.repeats, seed=evl.seed,
            train_frac=evl.train_frac, test_frac=evl.test_frac,
            hyper=evl.probe, stratified=evl.stratified,
        )
        write_report(report, report_csv_path, format="csv")

    runner.run(
        "eval",
        inputs=[h_final_path, config.nodes_path],
        outputs=[report_csv_path],
        params=eval_params,
        fn=stage("eval", do_eval),
    )

    def do_report():
        from tagcl.evaluate import read_report

        report = read_report(report_csv_path)
        write_report(report, report_rendered_path, format=config.report_format)

    runner.run(
        "report",
        inputs=[report_csv_path],
        outputs=[report_rendered_path],
        params={"format": config.report_format},
        fn=stage("report", do_report),
    )

    inputs = {
        str(p): file_digest(p) for p in (config.nodes_path, config.edges_path)
    }
    outputs = {
        str(p): file_digest(p)
        for p in (
            corpus_path, h_orig_path, h_aug_path, h_final_path,
            checkpoint_path, Path(str(checkpoint_path) + ".json"),
            trace_path, report_csv_path, report_rendered_path,
        )
    }
    manifest = RunManifest(
        config=config.snapshot,
        inputs=inputs,
        outputs=outputs,
        tool_version=tagcl.__version__,
        stage_seconds=dict(runner.timings),
        created_at=datetime.now(timezone.utc).isoformat(),
    )
    (out / "manifest.json").write_text(
        json.dumps(
            {
                "config": manifest.config,
                "inputs": manifest.inputs,
                "outputs": manifest.outputs,
                "tool_version": manifest.tool_version,
                "stage_seconds": manifest.stage_seconds,
                "created_at": manifest.created_at,
            },
            indent=2,
            sort_keys=True,
        ),
        encoding="utf-8",
    )
    return manifest


# ---------------------------------------------------------------------------
# adaptor sweep harness
# ---------------------------------------------------------------------------

def run_adaptor_sweep(
    graph: TextAttributedGraph,
    features: np.ndarray,
    features_aug: np.ndarray,
    base_train: TrainConfig,
    eval_settings: EvalSettings = EvalSettings(),
    out_dims: tuple[int, ...] = (256, 512, 768),
    include_default: bool = True,
) -> list[tuple[str, MetricsReport]]:
    """Train and evaluate once per adaptor width, plus a no-adaptor default row."""
    from dataclasses import replace

    rows: list[tuple[str, MetricsReport]] = []
    settings: list[tuple[str, AdaptorConfig]] = []
    if include_default:
        settings.append(("default", AdaptorConfig(enabled=False)))
    settings.extend(
        (str(dim), AdaptorConfig(enabled=True, out_dim=dim)) for dim in out_dims
    )
    for label, adaptor in settings:
        cfg = replace(base_train, adaptor=adaptor)
        result = train(graph, features, features_aug, cfg)
        report = run_protocol(
            result.h_final, graph.labels,
            repeats=eval_settings.repeats, seed=eval_settings.seed,
            train_frac=eval_settings.train_frac, test_frac=eval_settings.test_frac,
            hyper=eval_settings.probe, stratified=eval_settings.stratified,
        )
        rows.append((label, report))
    return rows


def render_sweep_markdown(rows: list[tuple[str, MetricsReport]]) -> str:
    """One row per adaptor setting, metric cells as 'mean (std s)' percents."""
    lines = [
        "| Setting | Accuracy (%) | Precision (%) | Recall (%) | F1 (%) |",
        "| --- | --- | --- | --- | --- |",
    ]
    for label, report in rows:
        cells = [
            f"{report.means[m] * 100:.2f} (std {report.stds[m] * 100:.2f})"
            for m in ("accuracy", "macro_precision", "macro_recall", "macro_f1")
        ]
        lines.append("| " + " | ".join([label] + cells) + " |")
    return "\n".join(lines) + "\n"
