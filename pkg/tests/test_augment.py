import json
import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tagcl.augment import (
    AugmentationKind,
    AugmentationRecord,
    MockLlmClient,
    augment_graph,
    augment_node,
    cache_key,
    mock_augment,
    read_corpus,
    render_prompt,
    write_corpus,
)
from tagcl.cache import CacheStore
from tagcl.errors import EmptyResponseError, PartialAugmentationError, TransportError
from tagcl.graph import TextAttributedGraph
from tagcl.llm import ChatCompletionsClient, RetryPolicy, TransportFailure, TransportResult

# The three request sentences, frozen byte-for-byte.
GOLDEN_SHORTEN = (
    "The following content is the description of a book. Please simplify "
    "and summarize the provided content in one short sentence."
)
GOLDEN_REWRITING = (
    "The following content is the description of a product. Please rewrite "
    "the provided content to improve the spelling, grammar, clarity, "
    "concision, logical coherence, and overall readability."
)
GOLDEN_EXPANSION = (
    "The following content is the description of a book. Please expand "
    "the provided content to give more related and necessary information."
)


class TestPrompts:
    def test_shorten_prompt_golden(self):
        out = render_prompt(AugmentationKind.SHORTEN, "a book", "Long intro")
        assert out == f"Request: {GOLDEN_SHORTEN}\nContent: Long intro"
        assert (
            "Please simplify and summarize the provided content in one short sentence."
            in out
        )

    def test_rewriting_prompt_golden(self):
        out = render_prompt(AugmentationKind.REWRITING, "a product", "t")
        assert out == f"Request: {GOLDEN_REWRITING}\nContent: t"
        assert (
            "improve the spelling, grammar, clarity, concision, logical coherence, "
            "and overall readability." in out
        )

    def test_expansion_prompt_golden(self):
        out = render_prompt(AugmentationKind.EXPANSION, "a book", "t")
        assert out == f"Request: {GOLDEN_EXPANSION}\nContent: t"
        assert (
            "Please expand the provided content to give more related and necessary "
            "information." in out
        )

    def test_empty_text_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            render_prompt(AugmentationKind.SHORTEN, "a book", "   ")

    def test_kind_parse(self):
        assert AugmentationKind.parse("Shorten") is AugmentationKind.SHORTEN
        with pytest.raises(ValueError, match="unknown augmentation kind"):
            AugmentationKind.parse("summarize")


class TestCacheKey:
    def test_deterministic(self):
        a = cache_key(AugmentationKind.SHORTEN, "m", "text")
        b = cache_key(AugmentationKind.SHORTEN, "m", "text")
        assert a == b
        assert len(a) == 64 and a == a.lower()

    def test_domain_separation_across_kinds(self):
        keys = {cache_key(k, "m", "t") for k in AugmentationKind}
        assert len(keys) == 3

    def test_golden_digest(self):
        # sha256 of b"shorten\x00gpt-3.5-turbo\x00abc", computed once with
        # a reference implementation (coreutils sha256sum).
        assert cache_key(AugmentationKind.SHORTEN, "gpt-3.5-turbo", "abc") == (
            "be5ce71faef1f2b7a3383e62c5b3515eec2250486f7cd8129566bb0ffe6f1041"
        )

    @settings(max_examples=80, deadline=None)
    @given(st.text(max_size=30), st.text(max_size=30))
    def test_injective_over_model_and_text(self, model, text):
        base = cache_key(AugmentationKind.REWRITING, model, text)
        other = cache_key(AugmentationKind.REWRITING, model, text + "x")
        assert base != other


class TestMockAugment:
    def test_shorten_cuts_at_first_period(self):
        assert mock_augment(AugmentationKind.SHORTEN, "A cat. A dog.") == "SUMMARY: A cat."

    def test_shorten_without_period_keeps_all(self):
        assert mock_augment(AugmentationKind.SHORTEN, "no stop") == "SUMMARY: no stop"

    def test_rewriting_prefixes(self):
        assert mock_augment(AugmentationKind.REWRITING, "x") == "REWRITTEN: x"

    def test_expansion_appends_sorted_vocab(self):
        assert mock_augment(AugmentationKind.EXPANSION, "b a b") == "b a b EXPANDED: a b"

    def test_mock_client_parses_prompts(self):
        client = MockLlmClient()
        out = client.complete(render_prompt(AugmentationKind.SHORTEN, "a book", "A cat. A dog."))
        assert out == "SUMMARY: A cat."
        assert client.request_count == 1


def fixture_transport(content="Concise summary."):
    """Replay transport: always returns one recorded chat completion."""
    calls = []

    def transport(url, payload, headers, timeout):
        calls.append({"url": url, "payload": payload, "headers": headers})
        return TransportResult(200, {"choices": [{"message": {"content": content}}]})

    return transport, calls


class TestLiveClient:
    def test_replayed_fixture_content(self, tmp_path):
        transport, calls = fixture_transport("Concise summary.")
        client = ChatCompletionsClient(
            "gpt-3.5-turbo", base_url="https://llm.example", api_key="k",
            transport=transport, sleep=lambda s: None,
        )
        record = augment_node(
            client, AugmentationKind.SHORTEN, "a book", "text", CacheStore(tmp_path)
        )
        assert record.output_text == "Concise summary."
        assert calls[0]["url"] == "https://llm.example/v1/chat/completions"
        assert calls[0]["payload"]["model"] == "gpt-3.5-turbo"
        assert calls[0]["payload"]["temperature"] == 0
        assert calls[0]["payload"]["messages"][0]["role"] == "user"
        assert calls[0]["headers"]["Authorization"] == "Bearer k"

    def test_retries_on_5xx_then_succeeds(self):
        outcomes = [
            TransportResult(500, {}),
            TransportResult(429, {}),
            TransportResult(200, {"choices": [{"message": {"content": "ok"}}]}),
        ]
        slept = []
        client = ChatCompletionsClient(
            "m", base_url="https://x", api_key="k",
            transport=lambda *a: outcomes.pop(0), sleep=slept.append,
        )
        assert client.complete("p") == "ok"
        assert client.request_count == 3
        assert len(slept) == 2
        assert slept[1] > slept[0] * 1.5  # exponential growth despite jitter

    def test_gives_up_after_attempt_budget(self):
        client = ChatCompletionsClient(
            "m", base_url="https://x", api_key="k",
            transport=lambda *a: TransportResult(503, {"err": "down"}),
            sleep=lambda s: None, retry=RetryPolicy(attempts=5, base_delay=0.01),
        )
        with pytest.raises(TransportError) as excinfo:
            client.complete("p")
        assert excinfo.value.status == 503
        assert client.request_count == 5

    def test_non_retryable_error_fails_fast(self):
        client = ChatCompletionsClient(
            "m", base_url="https://x", api_key="k",
            transport=lambda *a: TransportResult(401, {"err": "no auth"}),
            sleep=lambda s: None,
        )
        with pytest.raises(TransportError):
            client.complete("p")
        assert client.request_count == 1

    def test_transport_failures_are_retried(self):
        attempts = []

        def transport(*a):
            attempts.append(1)
            if len(attempts) < 3:
                raise TransportFailure("timeout")
            return TransportResult(200, {"choices": [{"message": {"content": "ok"}}]})

        client = ChatCompletionsClient(
            "m", base_url="https://x", api_key="k",
            transport=transport, sleep=lambda s: None,
        )
        assert client.complete("p") == "ok"

    def test_empty_response_errors_and_is_not_cached(self, tmp_path):
        transport, _ = fixture_transport("   ")
        client = ChatCompletionsClient(
            "m", base_url="https://x", api_key="k",
            transport=transport, sleep=lambda s: None,
        )
        cache = CacheStore(tmp_path)
        with pytest.raises(EmptyResponseError):
            augment_node(client, AugmentationKind.SHORTEN, "a book", "t", cache)
        assert cache.keys() == []


class TestAugmentNode:
    def test_cache_hit_skips_transport(self, tmp_path):
        cache = CacheStore(tmp_path)
        client = MockLlmClient()
        first = augment_node(
            client, AugmentationKind.SHORTEN, "a book", "A cat. A dog.", cache, node_id=4
        )
        assert first.output_text == "SUMMARY: A cat."
        assert client.request_count == 1
        again = augment_node(
            client, AugmentationKind.SHORTEN, "a book", "A cat. A dog.", cache, node_id=4
        )
        assert again == first
        assert client.request_count == 1  # unchanged

    def test_record_fields(self, tmp_path):
        cache = CacheStore(tmp_path)
        record = augment_node(
            MockLlmClient(), AugmentationKind.REWRITING, "a thing", "hello", cache,
            node_id=2, clock=lambda: "2024-01-01T00:00:00+00:00",
        )
        assert record.node_id == 2
        assert record.model_id == "mock"
        assert record.input_text == "hello"
        assert record.cache_key == cache_key(AugmentationKind.REWRITING, "mock", "hello")
        assert record.timestamp == "2024-01-01T00:00:00+00:00"


def small_graph(n=3):
    return TextAttributedGraph.create(
        texts=[f"token{i} alpha. tail{i}" for i in range(n)],
        edges=[(i, i + 1) for i in range(n - 1)],
        labels=[i % 2 for i in range(n)],
    )


class TestAugmentGraph:
    def test_small_graph_mock(self, tmp_path):
        corpus = augment_graph(
            MockLlmClient(), AugmentationKind.SHORTEN, small_graph(), CacheStore(tmp_path),
            subject_hint="a thing",
        )
        assert len(corpus.records) == 3
        assert {r.kind for r in corpus.records} == {AugmentationKind.SHORTEN}
        assert [r.node_id for r in corpus.records] == [0, 1, 2]

    def test_second_run_issues_zero_calls(self, tmp_path):
        graph = small_graph(5)
        cache = CacheStore(tmp_path)
        first_client = MockLlmClient()
        first = augment_graph(first_client, AugmentationKind.EXPANSION, graph, cache)
        assert first_client.request_count == 5
        second_client = MockLlmClient()
        second = augment_graph(second_client, AugmentationKind.EXPANSION, graph, cache)
        assert second_client.request_count == 0
        assert first == second

    def test_output_independent_of_concurrency(self, tmp_path):
        graph = small_graph(40)
        clock = lambda: "2024-06-01T00:00:00+00:00"  # noqa: E731
        serial = augment_graph(
            MockLlmClient(), AugmentationKind.SHORTEN, graph,
            CacheStore(tmp_path / "serial"), max_in_flight=1, clock=clock,
        )
        concurrent = augment_graph(
            MockLlmClient(), AugmentationKind.SHORTEN, graph,
            CacheStore(tmp_path / "par"), max_in_flight=4, clock=clock,
        )
        assert serial == concurrent
        # byte-for-byte identical on disk too
        write_corpus(serial, tmp_path / "a.jsonl")
        write_corpus(concurrent, tmp_path / "b.jsonl")
        assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()

    def test_partial_failure_reports_node_ids(self, tmp_path):
        graph = small_graph(4)

        class FlakyClient:
            model_id = "flaky"

            def __init__(self):
                self.request_count = 0
                self._lock = threading.Lock()

            def complete(self, prompt):
                with self._lock:
                    self.request_count += 1
                if "token2" in prompt:
                    raise TransportError("boom", status=500)
                return "ok output"

        with pytest.raises(PartialAugmentationError) as excinfo:
            augment_graph(FlakyClient(), AugmentationKind.SHORTEN, graph, CacheStore(tmp_path))
        assert excinfo.value.failed_nodes == [2]

    def test_resume_after_partial_failure(self, tmp_path):
        graph = small_graph(4)
        cache = CacheStore(tmp_path)

        class FailOnce:
            model_id = "mock"  # same id so the retry reuses cached wins

            def __init__(self, fail):
                self.fail = fail
                self.request_count = 0

            def complete(self, prompt):
                self.request_count += 1
                if self.fail and "token2" in prompt:
                    raise TransportError("boom", status=500)
                return MockLlmClient(model_id="mock").complete(prompt)

        with pytest.raises(PartialAugmentationError):
            augment_graph(FailOnce(True), AugmentationKind.SHORTEN, graph, cache)
        retry = FailOnce(False)
        corpus = augment_graph(retry, AugmentationKind.SHORTEN, graph, cache)
        assert len(corpus.records) == 4
        assert retry.request_count == 1  # only the failed node is re-requested


def test_corpus_round_trip(tmp_path):
    corpus = augment_graph(
        MockLlmClient(), AugmentationKind.SHORTEN, small_graph(), CacheStore(tmp_path),
    )
    path = tmp_path / "corpus.jsonl"
    write_corpus(corpus, path)
    assert read_corpus(path) == corpus
    lines = path.read_text(encoding="utf-8").strip().splitlines()
    assert len(lines) == 3
    assert json.loads(lines[0])["node_id"] == 0


def test_corpus_rejects_mixed_kinds(tmp_path):
    cache = CacheStore(tmp_path)
    a = augment_node(MockLlmClient(), AugmentationKind.SHORTEN, "s", "x. y", cache)
    b = augment_node(MockLlmClient(), AugmentationKind.EXPANSION, "s", "x. y", cache)
    from tagcl.augment import AugmentedCorpus

    with pytest.raises(ValueError, match="mixes"):
        AugmentedCorpus(kind=AugmentationKind.SHORTEN, records=(a, b))
