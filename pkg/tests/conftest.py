import pytest

from tagcl.augment import AugmentationKind, MockLlmClient, augment_graph
from tagcl.cache import CacheStore
from tagcl.graph import SyntheticSpec, TextAttributedGraph, generate_synthetic
from tagcl.text_encoder import EmbeddingConfig, encode_corpus

# The fixed desk-scale fixture: 200 nodes, 4 classes, informative structure
# (within-class edge prob 0.1, cross-class 0.01) and moderately noisy texts.
SBM_SPEC = SyntheticSpec(
    classes=4,
    nodes_per_class=50,
    p_in=0.1,
    p_out=0.01,
    vocab_per_class=30,
    tokens_per_node=12,
    noise_token_fraction=0.3,
)
SBM_SEED = 20240501


@pytest.fixture(scope="session")
def sbm_graph() -> TextAttributedGraph:
    return generate_synthetic(SBM_SPEC, seed=SBM_SEED)


@pytest.fixture(scope="session")
def sbm_views(sbm_graph, tmp_path_factory):
    """(original, augmented) feature matrices for the fixture graph."""
    cache = CacheStore(tmp_path_factory.mktemp("sbm-cache"))
    corpus = augment_graph(
        MockLlmClient(), AugmentationKind.SHORTEN, sbm_graph, cache,
        subject_hint="an item",
    )
    config = EmbeddingConfig()
    features = encode_corpus(sbm_graph.texts, config)
    features_aug = encode_corpus(corpus.output_texts(), config)
    return features, features_aug
