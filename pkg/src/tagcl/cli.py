"""Command-line entry points.

Subcommands: synth, augment, encode, train, eval, report, run. Every
subcommand accepts --config (a pipeline config JSON); explicit flags win
over config values. Exit codes: 0 success, 2 config error, 3 transport
error, 4 numeric failure, 5 partial-augmentation failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from tagcl import matrixio
from tagcl.augment import AugmentationKind, augment_graph, read_corpus, write_corpus
from tagcl.cache import CacheStore
from tagcl.contrastive import TrainConfig, write_trace
from tagcl.contrastive import train as train_encoder
from tagcl.errors import (
    ConfigError,
    NumericsError,
    PartialAugmentationError,
    TagclError,
    TransportError,
)
from tagcl.evaluate import ProbeHyper, read_report, run_protocol, write_report
from tagcl.graph import (
    SyntheticSpec,
    generate_synthetic,
    load_graph,
    read_node_texts,
    save_graph,
)
from tagcl.pipeline import (
    AugmentationSettings,
    PipelineConfig,
    run_pipeline,
    validate_config,
)
from tagcl.text_encoder import EmbeddingConfig, encode_corpus


def _load_config(args) -> PipelineConfig | None:
    if getattr(args, "config", None) is None:
        return None
    return validate_config(args.config, seed_override=getattr(args, "seed", None))


def _cmd_synth(args) -> int:
    spec_raw = json.loads(Path(args.spec).read_text(encoding="utf-8"))
    allowed = {
        "classes", "nodes_per_class", "p_in", "p_out",
        "vocab_per_class", "tokens_per_node", "noise_token_fraction",
    }
    unknown = sorted(set(spec_raw) - allowed)
    if unknown:
        raise ConfigError(f"synthetic spec: unknown key(s) {unknown}")
    try:
        spec = SyntheticSpec(**spec_raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"synthetic spec: {exc}") from None
    graph = generate_synthetic(spec, seed=args.seed)
    save_graph(graph, args.out_nodes, args.out_edges)
    print(f"wrote {graph.node_count} nodes, {len(graph.edges)} edges")
    return 0


def _cmd_augment(args) -> int:
    config = _load_config(args)
    settings = config.augmentation if config else AugmentationSettings()
    kind = AugmentationKind.parse(args.kind) if args.kind else settings.kind
    subject = args.subject if args.subject is not None else settings.subject_hint
    model = args.model if args.model is not None else settings.model_id
    backend = args.backend or settings.backend
    cache_dir = args.cache_dir or settings.cache_dir
    if cache_dir is None:
        raise ConfigError("augment: --cache-dir is required (or set augmentation.cache_dir)")
    nodes = args.nodes or (config.nodes_path if config else None)
    edges = args.edges or (config.edges_path if config else None)
    if nodes is None or edges is None:
        raise ConfigError("augment: --nodes and --edges are required")
    graph = load_graph(nodes, edges)
    if backend == "mock":
        from tagcl.augment import MockLlmClient

        client = MockLlmClient(model_id=model)
    else:
        from tagcl.llm import ChatCompletionsClient

        client = ChatCompletionsClient(model_id=model)
    corpus = augment_graph(
        client, kind, graph, CacheStore(cache_dir),
        max_in_flight=args.max_in_flight, subject_hint=subject,
    )
    write_corpus(corpus, args.out)
    print(f"augmented {graph.node_count} nodes -> {args.out} ({client.request_count} requests)")
    return 0


def _cmd_encode(args) -> int:
    config = _load_config(args)
    if config is not None and args.dim is None:
        emb = config.encoder.embedding
    else:
        emb = EmbeddingConfig(dimension=args.dim if args.dim else 768)
    nodes = args.nodes or (config.nodes_path if config else None)
    if args.corpus:
        texts = read_corpus(args.corpus).output_texts()
    elif nodes is not None:
        texts = read_node_texts(nodes)
    else:
        raise ConfigError("encode: need --nodes or --corpus")
    matrix = encode_corpus(texts, emb)
    matrixio.write_matrix(matrix, args.out)
    print(f"encoded {matrix.shape[0]} texts into {matrix.shape[1]} dims -> {args.out}")
    return 0


def _cmd_train(args) -> int:
    config = _load_config(args)
    train_cfg = config.train if config else TrainConfig()
    if args.seed is not None and config is None:
        train_cfg = replace(train_cfg, seed=args.seed)
    emb = config.encoder.embedding if config else EmbeddingConfig()
    nodes = args.nodes or (config.nodes_path if config else None)
    edges = args.edges or (config.edges_path if config else None)
    if nodes is None or edges is None:
        raise ConfigError("train: --nodes and --edges are required")
    graph = load_graph(nodes, edges)
    corpus = read_corpus(args.corpus)
    features = encode_corpus(graph.texts, emb)
    features_aug = encode_corpus(corpus.output_texts(), emb)
    result = train_encoder(graph, features, features_aug, train_cfg)
    matrixio.write_matrix(result.h_final, args.out_embeddings)
    if args.out_checkpoint:
        result.stack.save(args.out_checkpoint)
    if args.out_trace:
        write_trace(result, args.out_trace)
    print(
        f"trained {train_cfg.epochs} epochs; "
        f"loss {result.loss_trace[0]:.6f} -> {result.loss_trace[-1]:.6f}"
    )
    return 0


def _cmd_eval(args) -> int:
    config = _load_config(args)
    evl = config.eval if config else None
    nodes = args.nodes or (config.nodes_path if config else None)
    if nodes is None:
        raise ConfigError("eval: --nodes is required")
    edges = args.edges or (config.edges_path if config else nodes)
    graph = load_graph(nodes, edges)
    if graph.labels is None:
        raise ConfigError("eval: nodes file has no labels")
    embeddings = matrixio.read_matrix(args.embeddings)
    seed = args.seed if args.seed is not None else (evl.seed if evl else 0)
    repeats = args.repeats if args.repeats is not None else (evl.repeats if evl else 5)
    report = run_protocol(
        embeddings, graph.labels, repeats=repeats, seed=seed,
        train_frac=evl.train_frac if evl else 0.2,
        test_frac=evl.test_frac if evl else 0.1,
        hyper=evl.probe if evl else ProbeHyper(),
        stratified=evl.stratified if evl else False,
    )
    write_report(report, args.out, format=args.format)
    print(f"accuracy {report.means['accuracy']:.4f} (std {report.stds['accuracy']:.4f}) -> {args.out}")
    return 0


def _cmd_report(args) -> int:
    report = read_report(args.report)
    write_report(report, args.out, format=args.format)
    print(f"rendered {args.report} -> {args.out}")
    return 0


def _cmd_run(args) -> int:
    config = validate_config(args.config, seed_override=args.seed)
    manifest = run_pipeline(config)
    print(f"pipeline complete; manifest at {config.output_dir / 'manifest.json'}")
    for stage, seconds in manifest.stage_seconds.items():
        status = "skipped (cached)" if seconds == 0.0 else f"{seconds:.2f}s"
        print(f"  {stage}: {status}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tagcl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labeled graph")
    p.add_argument("--spec", required=True, help="JSON file of synthetic-spec fields")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-nodes", required=True)
    p.add_argument("--out-edges", required=True)
    p.set_defaults(fn=_cmd_synth)

    p = sub.add_parser("augment", help="augment node texts through an LLM or mock")
    p.add_argument("--kind", choices=[k.value for k in AugmentationKind])
    p.add_argument("--subject", help="what the texts describe, e.g. 'a book'")
    p.add_argument("--nodes")
    p.add_argument("--edges")
    p.add_argument("--cache-dir")
    p.add_argument("--model")
    p.add_argument("--backend", choices=["mock", "live"])
    p.add_argument("--max-in-flight", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=_cmd_augment)

    p = sub.add_parser("encode", help="encode texts into a feature matrix")
    p.add_argument("--nodes")
    p.add_argument("--corpus", help="augmented corpus jsonl; omit to encode node texts")
    p.add_argument("--dim", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=_cmd_encode)

    p = sub.add_parser("train", help="contrastive training over two views")
    p.add_argument("--nodes")
    p.add_argument("--edges")
    p.add_argument("--corpus", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-embeddings", required=True)
    p.add_argument("--out-checkpoint")
    p.add_argument("--out-trace")
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("eval", help="linear evaluation of an embedding matrix")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--nodes")
    p.add_argument("--edges")
    p.add_argument("--repeats", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["csv", "markdown"], default="csv")
    p.add_argument("--config")
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("report", help="re-render a metrics report")
    p.add_argument("--report", required=True, help="existing report.csv")
    p.add_argument("--format", choices=["csv", "markdown"], default="markdown")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=_cmd_report)

    p = sub.add_parser("run", help="full pipeline from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=_cmd_run)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except TransportError as exc:
        print(f"transport error: {exc}", file=sys.stderr)
        return 3
    except NumericsError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4
    except PartialAugmentationError as exc:
        print(f"partial augmentation failure: {exc}", file=sys.stderr)
        return 5
    except TagclError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
