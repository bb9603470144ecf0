"""LLM-based text augmentation: prompts, caching, and bulk graph runs.

Three augmentation kinds, each a fixed request sentence with a subject
slot. Results are cached by (kind, model, input text), so re-running a
graph augmentation is idempotent and issues no new requests.
"""

from __future__ import annotations

import hashlib
import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path

from tagcl.cache import CacheStore, canonical_json
from tagcl.errors import PartialAugmentationError, TagclError
from tagcl.graph import TextAttributedGraph


class AugmentationKind(str, Enum):
    SHORTEN = "shorten"
    REWRITING = "rewriting"
    EXPANSION = "expansion"

    @classmethod
    def parse(cls, value: str) -> "AugmentationKind":
        try:
            return cls(value.lower())
        except ValueError:
            raise ValueError(
                f"unknown augmentation kind {value!r}; expected one of "
                f"{[k.value for k in cls]}"
            ) from None


# Request sentences, one per kind; the {subject} slot names what the
# content describes (e.g. "a book").
_REQUEST_SENTENCES = {
    AugmentationKind.SHORTEN: (
        "The following content is the description of {subject}. Please simplify "
        "and summarize the provided content in one short sentence."
    ),
    AugmentationKind.REWRITING: (
        "The following content is the description of {subject}. Please rewrite "
        "the provided content to improve the spelling, grammar, clarity, "
        "concision, logical coherence, and overall readability."
    ),
    AugmentationKind.EXPANSION: (
        "The following content is the description of {subject}. Please expand "
        "the provided content to give more related and necessary information."
    ),
}


@dataclass(frozen=True)
class PromptTemplate:
    kind: AugmentationKind
    subject_hint: str

    @property
    def request_sentence(self) -> str:
        return _REQUEST_SENTENCES[self.kind].format(subject=self.subject_hint)

    def render(self, text: str) -> str:
        if not text.strip():
            raise ValueError("cannot render a prompt for empty text")
        return f"Request: {self.request_sentence}\nContent: {text}"


def render_prompt(kind: AugmentationKind, subject_hint: str, text: str) -> str:
    return PromptTemplate(kind, subject_hint).render(text)


def cache_key(kind: AugmentationKind, model_id: str, text: str) -> str:
    """SHA-256 over kind-tag, model id, and text with NUL domain separators."""
    h = hashlib.sha256()
    h.update(kind.value.encode("utf-8"))
    h.update(b"\x00")
    h.update(model_id.encode("utf-8"))
    h.update(b"\x00")
    h.update(text.encode("utf-8"))
    return h.hexdigest()


def mock_augment(kind: AugmentationKind, text: str) -> str:
    """Deterministic offline stand-in for the three augmentations."""
    if kind is AugmentationKind.SHORTEN:
        cut = text.find(".")
        head = text if cut < 0 else text[: cut + 1]
        return "SUMMARY: " + head
    if kind is AugmentationKind.REWRITING:
        return "REWRITTEN: " + text
    vocab = " ".join(sorted(set(text.split())))
    return text + " EXPANDED: " + vocab


class MockLlmClient:
    """Chat-shaped backend that applies `mock_augment` to the prompt content.

    It parses the rendered prompt exactly the way a live model would read
    it, so the rest of the pipeline exercises the same code paths.
    """

    def __init__(self, model_id: str = "mock"):
        self.model_id = model_id
        self.request_count = 0
        self._lock = threading.Lock()

    def complete(self, prompt: str) -> str:
        with self._lock:
            self.request_count += 1
        request, sep, content = prompt.partition("\nContent: ")
        if not sep:
            raise ValueError("prompt missing 'Content:' section")
        if "simplify and summarize" in request:
            kind = AugmentationKind.SHORTEN
        elif "Please rewrite" in request:
            kind = AugmentationKind.REWRITING
        elif "Please expand" in request:
            kind = AugmentationKind.EXPANSION
        else:
            raise ValueError("prompt request sentence does not match any kind")
        return mock_augment(kind, content)


@dataclass(frozen=True)
class AugmentationRecord:
    node_id: int
    kind: AugmentationKind
    model_id: str
    input_text: str
    output_text: str
    cache_key: str
    timestamp: str  # UTC ISO 8601

    def to_json_obj(self) -> dict:
        return {
            "node_id": self.node_id,
            "kind": self.kind.value,
            "model_id": self.model_id,
            "input_text": self.input_text,
            "output_text": self.output_text,
            "cache_key": self.cache_key,
            "timestamp": self.timestamp,
        }

    @staticmethod
    def from_json_obj(obj: dict) -> "AugmentationRecord":
        return AugmentationRecord(
            node_id=int(obj["node_id"]),
            kind=AugmentationKind.parse(obj["kind"]),
            model_id=obj["model_id"],
            input_text=obj["input_text"],
            output_text=obj["output_text"],
            cache_key=obj["cache_key"],
            timestamp=obj["timestamp"],
        )


@dataclass(frozen=True)
class AugmentedCorpus:
    kind: AugmentationKind
    records: tuple[AugmentationRecord, ...]

    def __post_init__(self):
        for r in self.records:
            if r.kind != self.kind:
                raise ValueError("corpus mixes augmentation kinds")

    def output_texts(self) -> list[str]:
        return [r.output_text for r in self.records]


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def augment_node(
    client,
    kind: AugmentationKind,
    subject_hint: str,
    text: str,
    cache: CacheStore,
    node_id: int = 0,
    clock=None,
) -> AugmentationRecord:
    """Augment one node's text, consulting the cache first.

    A cache hit returns the stored record (re-stamped with the caller's
    node id) without touching the client. On a miss, one completion
    request is issued and the record is stored before returning. Empty
    responses raise and are never cached.
    """
    key = cache_key(kind, client.model_id, text)
    stored = cache.get(key)
    if stored is not None:
        return replace(AugmentationRecord.from_json_obj(stored), node_id=node_id)
    prompt = render_prompt(kind, subject_hint, text)
    output = client.complete(prompt).strip()
    if not output:
        raise TagclError("model response empty after trimming; not cached")
    record = AugmentationRecord(
        node_id=node_id,
        kind=kind,
        model_id=client.model_id,
        input_text=text,
        output_text=output,
        cache_key=key,
        timestamp=(clock or _utc_now)(),
    )
    cache.put(key, record.to_json_obj())
    return record


def augment_graph(
    client,
    kind: AugmentationKind,
    graph: TextAttributedGraph,
    cache: CacheStore,
    max_in_flight: int = 1,
    subject_hint: str = "an item",
    clock=None,
) -> AugmentedCorpus:
    """Augment every node, at most max_in_flight requests outstanding.

    Progress is durable through the cache, so a failed run resumes where
    it stopped. If any node still fails, the whole run fails and reports
    the failing node ids; successfully augmented nodes stay cached.
    """
    if max_in_flight < 1:
        raise ValueError("max_in_flight must be >= 1")

    def job(node_id: int) -> AugmentationRecord:
        return augment_node(
            client, kind, subject_hint, graph.texts[node_id], cache,
            node_id=node_id, clock=clock,
        )

    results: dict[int, AugmentationRecord] = {}
    failures: dict[int, str] = {}
    if max_in_flight == 1:
        for i in range(graph.node_count):
            try:
                results[i] = job(i)
            except Exception as exc:
                failures[i] = str(exc)
    else:
        with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
            futures = {i: pool.submit(job, i) for i in range(graph.node_count)}
            for i, fut in futures.items():
                try:
                    results[i] = fut.result()
                except Exception as exc:
                    failures[i] = str(exc)
    if failures:
        raise PartialAugmentationError(failures.keys(), failures)
    return AugmentedCorpus(
        kind=kind, records=tuple(results[i] for i in range(graph.node_count))
    )


def write_corpus(corpus: AugmentedCorpus, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for record in corpus.records:
            fh.write(canonical_json(record.to_json_obj()) + "\n")


def read_corpus(path) -> AugmentedCorpus:
    records = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(AugmentationRecord.from_json_obj(json.loads(line)))
    if not records:
        raise ValueError(f"corpus file {path} is empty")
    return AugmentedCorpus(kind=records[0].kind, records=tuple(records))
