import numpy as np
import pytest

from ctxens.data import Context, ContextSet, Dataset, ScoreMatrix, validate_dataset
from ctxens.datagen import ContextBlock, GeneratorSpec, generate_conditional


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_labeled_dataset() -> Dataset:
    """60 rows, 4 features, 6 anomalies; big enough to split, fast to fit."""
    spec = GeneratorSpec(
        n_normal=54,
        blocks=(ContextBlock(2, 2, n_anomalies=6, n_contextual_components=2,
                             n_behavioral_components=2),),
    )
    ds, _ = generate_conditional(spec, seed=99)
    return ds


@pytest.fixture
def small_conditional_dataset() -> Dataset:
    """A 5-dim conditional dataset: 30 contexts, still fits in ~a second."""
    spec = GeneratorSpec(
        n_normal=300,
        blocks=(ContextBlock(3, 2, n_anomalies=12, n_contextual_components=3,
                             n_behavioral_components=3),),
    )
    ds, _ = generate_conditional(spec, seed=7)
    return ds


def make_score_matrix(scores: np.ndarray) -> ScoreMatrix:
    """Wrap a raw (n, m) array with a synthetic context set of matching width."""
    m = scores.shape[1]
    d = 2
    while (2**d - 2) < m:
        d += 1
    from ctxens.contexts import enumerate_contexts

    all_ctx = enumerate_contexts(d)
    return ScoreMatrix(scores, ContextSet(all_ctx.contexts[:m], d))
