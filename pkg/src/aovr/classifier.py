"""Zero-shot open-vocabulary classification over embedding vectors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .container import EmbeddingGridDataset


class VocabularyError(ValueError):
    pass


@dataclass
class Vocabulary:
    """Class names, base/novel flags, and the [C, D] text-embedding matrix."""
    names: list[str]
    splits: list[str]
    matrix: np.ndarray

    @classmethod
    def from_dataset(cls, dataset: EmbeddingGridDataset) -> "Vocabulary":
        return cls(names=[c.name for c in dataset.classes],
                   splits=[c.split for c in dataset.classes],
                   matrix=dataset.class_matrix())

    def __len__(self) -> int:
        return len(self.names)

    def subset_indices(self, subset: str) -> np.ndarray:
        if subset == "open":
            return np.arange(len(self.names))
        if subset in ("base", "novel"):
            return np.array([i for i, s in enumerate(self.splits) if s == subset], dtype=int)
        raise VocabularyError(f"unknown subset '{subset}'")

    def base_matrix(self) -> np.ndarray:
        return self.matrix[self.subset_indices("base")]


@dataclass
class ClassDistribution:
    probs: np.ndarray
    subset: str
    indices: np.ndarray  # vocabulary indices backing each prob entry

    @property
    def argmax(self) -> int:
        """Winning vocabulary index; ties resolve to the lowest class index."""
        return int(self.indices[int(np.argmax(self.probs))])

    def top(self, k: int) -> np.ndarray:
        order = np.argsort(-self.probs, kind="stable")[:k]
        return self.indices[order]


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity undefined for zero vectors")
    return float(np.dot(a, b) / (na * nb))


def _softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max())
    return e / e.sum()


def predict(feature: np.ndarray, vocab: Vocabulary, subset: str = "open",
            temperature: float = 1.0) -> ClassDistribution:
    """Softmax over cosine similarities to the subset's text embeddings."""
    if temperature <= 0:
        raise ValueError("temperature must be > 0")
    indices = vocab.subset_indices(subset)
    if indices.size == 0:
        raise VocabularyError(f"subset '{subset}' is empty")
    feat = np.asarray(feature, dtype=np.float64)
    norm = np.linalg.norm(feat)
    if norm == 0.0:
        raise ValueError("cannot classify a zero feature")
    sims = (vocab.matrix[indices].astype(np.float64) @ feat) / norm
    return ClassDistribution(probs=_softmax(sims / temperature), subset=subset, indices=indices)


def similarities(features: np.ndarray, vocab: Vocabulary, subset: str = "open") -> np.ndarray:
    """Cosine similarities for a [V, D] batch of features. Zero rows map to
    zero similarities."""
    indices = vocab.subset_indices(subset)
    feats = np.asarray(features, dtype=np.float64)
    norms = np.linalg.norm(feats, axis=-1, keepdims=True)
    feats = feats / np.where(norms == 0.0, 1.0, norms)
    return feats @ vocab.matrix[indices].astype(np.float64).T


def concept_similarity_topk(feature: np.ndarray, vocab: Vocabulary, k: int) -> np.ndarray:
    """The k largest cosine similarities to the open vocabulary, sorted
    descending. Class identities are deliberately dropped."""
    if k > len(vocab):
        raise VocabularyError(f"k={k} exceeds vocabulary size {len(vocab)}")
    sims = similarities(np.asarray(feature)[None, :], vocab, "open")[0]
    return np.sort(sims)[::-1][:k]


def base_concept_vector(feature: np.ndarray, vocab: Vocabulary) -> np.ndarray:
    """Cosine similarities to every base-class embedding, vocabulary order."""
    return similarities(np.asarray(feature)[None, :], vocab, "base")[0]
