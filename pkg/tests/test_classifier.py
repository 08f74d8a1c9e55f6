import numpy as np
import pytest

from aovr.classifier import (Vocabulary, VocabularyError, base_concept_vector,
                             concept_similarity_topk, cosine_similarity, predict)
from aovr.container import ClassEntry, EmbeddingGridDataset


def vocab_from(vectors, splits=None):
    vectors = [np.asarray(v, dtype=np.float32) for v in vectors]
    splits = splits or ["base"] * len(vectors)
    return Vocabulary(names=[f"c{i}" for i in range(len(vectors))],
                      splits=splits, matrix=np.stack(vectors))


def basis(i, d=4):
    v = np.zeros(d, dtype=np.float32)
    v[i] = 1.0
    return v


def test_cosine_similarity_values():
    e = basis(0)
    assert cosine_similarity(e, e) == pytest.approx(1.0)
    assert cosine_similarity(e, -e) == pytest.approx(-1.0)
    assert cosine_similarity(np.array([0.6, 0.8]), np.array([0.8, 0.6])) == pytest.approx(0.96)


def test_cosine_similarity_rejects_zero_vector():
    with pytest.raises(ValueError):
        cosine_similarity(np.zeros(3), basis(0, 3))


def test_predict_two_class_probs():
    vocab = vocab_from([basis(0), basis(1)])
    dist = predict(basis(0), vocab, "open", temperature=1.0)
    expected = np.exp([1.0, 0.0])
    expected /= expected.sum()
    assert np.allclose(dist.probs, expected, atol=1e-4)
    assert dist.probs[0] == pytest.approx(0.7311, abs=1e-4)
    assert dist.argmax == 0


def test_predict_uniform_when_similarities_equal():
    vocab = vocab_from([basis(0), basis(1), basis(2)])
    feat = np.ones(4, dtype=np.float32)
    dist = predict(feat, vocab, "open")
    assert np.allclose(dist.probs, 1.0 / 3.0, atol=1e-9)
    assert dist.argmax == 0  # ties resolve to the lowest class index


def test_predict_argmax_invariant_to_temperature():
    rng = np.random.default_rng(3)
    vocab = vocab_from([v / np.linalg.norm(v) for v in rng.standard_normal((6, 8))])
    for _ in range(25):
        feat = rng.standard_normal(8)
        assert predict(feat, vocab, "open", 1.0).argmax == predict(feat, vocab, "open", 0.01).argmax


def test_predict_argmax_invariant_to_constant_shift():
    # adding a constant to every similarity is a rigid shift of the logits
    rng = np.random.default_rng(4)
    sims = rng.standard_normal(5)
    e1 = np.exp(sims - sims.max())
    e2 = np.exp((sims + 3.7) - (sims + 3.7).max())
    assert np.argmax(e1 / e1.sum()) == np.argmax(e2 / e2.sum())


def test_predict_requires_positive_temperature_and_subset():
    vocab = vocab_from([basis(0), basis(1)], splits=["base", "base"])
    with pytest.raises(ValueError):
        predict(basis(0), vocab, "open", temperature=0.0)
    with pytest.raises(VocabularyError):
        predict(basis(0), vocab, "novel")


def test_topk_sorted_descending():
    feat = basis(0)
    sims = [0.9, 0.1, 0.5, 0.7]
    vecs = []
    for s in sims:
        v = np.array([s, np.sqrt(1 - s * s), 0.0, 0.0], dtype=np.float32)
        vecs.append(v)
    vocab = vocab_from(vecs)
    out = concept_similarity_topk(feat, vocab, 2)
    assert np.allclose(out, [0.9, 0.7], atol=1e-6)
    full = concept_similarity_topk(feat, vocab, 4)
    assert np.allclose(full, sorted(sims, reverse=True), atol=1e-6)


def test_topk_exact_match_gives_one():
    vocab = vocab_from([basis(0), basis(1)])
    assert concept_similarity_topk(basis(1), vocab, 1)[0] == pytest.approx(1.0, abs=1e-6)


def test_topk_rejects_oversized_k():
    vocab = vocab_from([basis(0)])
    with pytest.raises(VocabularyError):
        concept_similarity_topk(basis(0), vocab, 2)


def test_topk_invariant_to_vocabulary_permutation():
    rng = np.random.default_rng(7)
    vecs = [v / np.linalg.norm(v) for v in rng.standard_normal((5, 8))]
    feat = rng.standard_normal(8)
    a = concept_similarity_topk(feat, vocab_from(vecs), 3)
    b = concept_similarity_topk(feat, vocab_from([vecs[i] for i in (4, 2, 0, 1, 3)]), 3)
    assert np.allclose(a, b, atol=1e-12)


def test_base_concept_vector_is_class_aligned():
    vocab = vocab_from([basis(0), basis(1), basis(2)])
    out = base_concept_vector(basis(0), vocab)
    assert np.allclose(out, [1.0, 0.0, 0.0], atol=1e-6)
    orth = basis(3)
    assert np.allclose(base_concept_vector(orth, vocab), np.zeros(3), atol=1e-6)


def test_base_concept_vector_zero_feature_gives_zeros():
    vocab = vocab_from([basis(0), basis(1)])
    assert np.array_equal(base_concept_vector(np.zeros(4), vocab), np.zeros(2))


def test_base_concept_vector_permutation_equivariant():
    rng = np.random.default_rng(9)
    vecs = [v / np.linalg.norm(v) for v in rng.standard_normal((4, 8))]
    feat = rng.standard_normal(8)
    base_out = base_concept_vector(feat, vocab_from(vecs))
    perm = [2, 0, 3, 1]
    permuted_out = base_concept_vector(feat, vocab_from([vecs[i] for i in perm]))
    assert np.allclose(permuted_out, base_out[perm], atol=1e-12)


def test_base_concept_vector_only_covers_base_split():
    vocab = vocab_from([basis(0), basis(1), basis(2)], splits=["base", "novel", "base"])
    out = base_concept_vector(basis(2), vocab)
    assert out.shape == (2,)
    assert np.allclose(out, [0.0, 1.0], atol=1e-6)


def test_vocabulary_from_dataset_subsets():
    classes = [ClassEntry("a", "base", basis(0)), ClassEntry("b", "novel", basis(1))]
    ds = EmbeddingGridDataset(embed_dim=4, azimuths=1, elevations=1, classes=classes)
    vocab = Vocabulary.from_dataset(ds)
    assert list(vocab.subset_indices("base")) == [0]
    assert list(vocab.subset_indices("novel")) == [1]
    assert list(vocab.subset_indices("open")) == [0, 1]
