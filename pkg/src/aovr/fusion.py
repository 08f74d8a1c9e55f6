"""Attention-based evidence fusion across the frames of an episode.

Each observed frame gets a descriptor [top-k open-vocabulary similarities,
similarities to the other observed frames, proprioception]. Descriptors are
class-anonymous: sorted similarities carry confidence, not identity, so the
fusion parameters transfer to novel vocabularies. A single-head
self-attention block plus a linear scorer maps descriptors to one logit
per frame; softmax over the observed logits gives the frame weights, and
the global feature is the weighted sum of frame features.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .classifier import Vocabulary, concept_similarity_topk, predict, ClassDistribution
from .container import EmbeddingGridDataset
from .env import GridEnv, OcclusionConfig, PROPRIO_DIM, random_policy
from .nn import Adam, Dense, SelfAttention, Tensor, load_tensors, save_tensors
from .nn import autograd as ag


class FusionError(RuntimeError):
    pass


@dataclass
class StepDescriptor:
    s_concept: np.ndarray    # [k] sorted descending
    s_frame: np.ndarray      # [T-1], zeros for unobserved slots
    proprio: np.ndarray
    observed: bool = True

    def vector(self) -> np.ndarray:
        return np.concatenate([self.s_concept, self.s_frame, self.proprio]).astype(np.float32)


def build_descriptor(feature: np.ndarray, history: list[np.ndarray], vocab: Vocabulary,
                     k: int, proprio: np.ndarray, horizon: int) -> StepDescriptor:
    """Descriptor for the frame at index len(history), given all prior frames.

    Frame-similarity slots follow absolute frame index with the own slot
    skipped; slots for frames not yet observed stay zero.
    """
    t = len(history)
    if t >= horizon:
        raise FusionError(f"history already holds {t} frames for horizon {horizon}")
    s_concept = concept_similarity_topk(feature, vocab, k)
    s_frame = np.zeros(horizon - 1, dtype=np.float64)
    feat = feature / np.linalg.norm(feature)
    for j, other in enumerate(history):
        slot = j if j < t else j - 1
        s_frame[slot] = float(feat @ (other / np.linalg.norm(other)))
    return StepDescriptor(s_concept=s_concept, s_frame=s_frame, proprio=np.asarray(proprio))


def episode_descriptors(features: list[np.ndarray], proprios: list[np.ndarray],
                        vocab: Vocabulary, k: int, horizon: int) -> np.ndarray:
    """[t, k + (T-1) + p] descriptor matrix for the observed prefix."""
    t = len(features)
    feats = np.stack(features).astype(np.float64)
    feats = feats / np.linalg.norm(feats, axis=1, keepdims=True)
    concept = np.sort(feats @ vocab.matrix.astype(np.float64).T, axis=1)[:, ::-1][:, :k]
    pair = feats @ feats.T
    frame = np.zeros((t, horizon - 1), dtype=np.float64)
    for i in range(t):
        for j in range(t):
            if j == i:
                continue
            frame[i, j if j < i else j - 1] = pair[i, j]
    prop = np.stack(proprios).astype(np.float64)
    return np.concatenate([concept, frame, prop], axis=1).astype(np.float32)


class FusionModel:
    """Self-attention frame scorer plus the linear logit head.

    W_k starts as a copy of W_q (scaled up by qk_gain), which makes the
    attention diagonally dominant at initialization: each frame's embedding
    keeps its own descriptor signature instead of washing out into a uniform
    mixture, so the scorer sees per-frame differences from the first step.
    The two matrices decouple freely during training.
    """

    def __init__(self, k: int = 5, horizon: int = 6, d_model: int = 64,
                 proprio_dim: int = PROPRIO_DIM, seed: int = 0, dtype=np.float32,
                 qk_gain: float = 5.0):
        self.k = k
        self.horizon = horizon
        self.d_model = d_model
        self.proprio_dim = proprio_dim
        self.d_q = k + (horizon - 1) + proprio_dim
        rng = np.random.default_rng(seed)
        self.attention = SelfAttention(self.d_q, d_model, rng, dtype=dtype, prefix="fusion.attn")
        self.attention.W_q.data = self.attention.W_q.data * dtype(qk_gain)
        self.attention.W_k.data = self.attention.W_q.data.copy()
        self.scorer = Dense(d_model, 1, rng, dtype=dtype, prefix="fusion.scorer")

    def params(self) -> dict[str, Tensor]:
        return {**self.attention.params(), **self.scorer.params()}

    def save(self, path) -> None:
        tensors = {name: p.data for name, p in self.params().items()}
        tensors["meta.fusion"] = np.array(
            [self.k, self.horizon, self.d_model, self.proprio_dim], dtype=np.float32)
        save_tensors(path, tensors)

    @classmethod
    def load(cls, path) -> "FusionModel":
        tensors = load_tensors(path)
        k, horizon, d_model, proprio_dim = (int(x) for x in tensors["meta.fusion"])
        model = cls(k=k, horizon=horizon, d_model=d_model, proprio_dim=proprio_dim)
        for name, p in model.params().items():
            p.data = tensors[name].astype(p.data.dtype)
        return model


@dataclass
class FusedResult:
    alpha: np.ndarray            # [T], zeros on unobserved frames
    global_feature: np.ndarray   # [D]
    _global_tensor: Tensor | None = field(default=None, repr=False)


def fuse(model: FusionModel, descriptors: np.ndarray, features: np.ndarray,
         observed_mask: np.ndarray) -> FusedResult:
    """Weight the observed frames and form the global feature.

    descriptors: [T, d_q] with zero rows where unobserved; features: [T, D];
    observed_mask: [T] booleans.
    """
    mask = np.asarray(observed_mask, dtype=bool)
    if not mask.any():
        raise FusionError("fuse requires at least one observed frame")
    horizon = descriptors.shape[0]
    obs_idx = np.nonzero(mask)[0]

    rows = Tensor(descriptors.astype(model.params()["fusion.attn.W_q"].data.dtype))
    embed = model.attention(rows, mask)
    logits = ag.reshape(model.scorer(embed), (horizon,))
    alpha_obs = ag.softmax(logits[obs_idx])
    global_t = alpha_obs @ Tensor(features[obs_idx].astype(alpha_obs.data.dtype))

    alpha = np.zeros(horizon, dtype=np.float64)
    alpha[obs_idx] = alpha_obs.data
    return FusedResult(alpha=alpha, global_feature=np.asarray(global_t.data, dtype=np.float64),
                       _global_tensor=global_t)


def fuse_numpy(model: FusionModel, descriptors: np.ndarray, features: np.ndarray,
               observed_mask: np.ndarray) -> FusedResult:
    """Gradient-free twin of fuse() for metric and reward hot paths."""
    mask = np.asarray(observed_mask, dtype=bool)
    if not mask.any():
        raise FusionError("fuse requires at least one observed frame")
    obs_idx = np.nonzero(mask)[0]
    rows = descriptors.astype(np.float64)
    w_q = model.attention.W_q.data.astype(np.float64)
    w_k = model.attention.W_k.data.astype(np.float64)
    w_v = model.attention.W_v.data.astype(np.float64)
    q, k, v = rows @ w_q, rows @ w_k, rows @ w_v
    scores = (q @ k.T) / np.sqrt(model.d_model)
    scores = scores + np.where(mask, 0.0, -np.inf)
    scores -= scores.max(axis=1, keepdims=True)
    weights = np.exp(scores)
    weights /= weights.sum(axis=1, keepdims=True)
    embed = weights @ v
    logits = embed @ model.scorer.W.data.astype(np.float64).T + model.scorer.b.data
    logits = logits.reshape(-1)[obs_idx]
    e = np.exp(logits - logits.max())
    alpha_obs = e / e.sum()
    alpha = np.zeros(descriptors.shape[0], dtype=np.float64)
    alpha[obs_idx] = alpha_obs
    global_feature = alpha_obs @ features[obs_idx].astype(np.float64)
    return FusedResult(alpha=alpha, global_feature=global_feature)


def fuse_prefix(model: FusionModel, frames: list[np.ndarray], proprios: list[np.ndarray],
                vocab: Vocabulary, embed_dim: int, grad: bool = False) -> FusedResult:
    """Fuse the observed prefix of an episode (frames 1..t)."""
    t = len(frames)
    desc = episode_descriptors(frames, proprios, vocab, model.k, model.horizon)
    padded_desc = np.zeros((model.horizon, model.d_q), dtype=np.float32)
    padded_desc[:t] = desc
    padded_feat = np.zeros((model.horizon, embed_dim), dtype=np.float32)
    padded_feat[:t] = np.stack(frames)
    mask = np.arange(model.horizon) < t
    fn = fuse if grad else fuse_numpy
    return fn(model, padded_desc, padded_feat, mask)


def fusion_loss(result: FusedResult, vocab: Vocabulary, label: int,
                temperature: float = 1.0) -> Tensor:
    """Cross-entropy of the softmax over base-class similarities of the
    global feature. Differentiable into the fusion parameters when the
    result came from fuse()."""
    base_idx = vocab.subset_indices("base")
    positions = np.nonzero(base_idx == label)[0]
    if positions.size == 0:
        raise FusionError(f"label {label} is not a base class")
    pos = int(positions[0])

    g = result._global_tensor if result._global_tensor is not None \
        else Tensor(result.global_feature)
    base_mat = vocab.matrix[base_idx].astype(g.data.dtype)
    norm = ag.sqrt(ag.tsum(g * g))
    logits = (g @ Tensor(base_mat.T)) / norm * (1.0 / temperature)
    return -ag.log_softmax(logits)[pos]


@dataclass
class FusionTrainResult:
    curve: list[dict[str, float]] = field(default_factory=list)
    final_accuracy: float = 0.0


def train_fusion(model: FusionModel, dataset: EmbeddingGridDataset,
                 episode_source=None, epochs: int = 5, batch_size: int = 16,
                 lr: float = 3e-4, seed: int = 0, temperature: float = 1.0,
                 objects: list[int] | None = None,
                 occlusion: OcclusionConfig | None = None) -> FusionTrainResult:
    """Minimize the fusion cross-entropy over base-class episodes; the
    prediction at step t fuses frames 1..t."""
    vocab = Vocabulary.from_dataset(dataset)
    base_objects = objects if objects is not None else dataset.objects_of_split("base")
    if not base_objects:
        raise FusionError("dataset has no base-class objects to train on")
    policy = episode_source or random_policy
    env = GridEnv(dataset, horizon=model.horizon, occlusion=occlusion)
    optimizer = Adam(model.params(), lr=lr)
    root = np.random.SeedSequence(seed)
    order_rng = np.random.default_rng(root.spawn(1)[0])

    result = FusionTrainResult()
    for epoch in range(epochs):
        order = order_rng.permutation(len(base_objects))
        epoch_loss = 0.0
        epoch_correct = 0
        n_eps = 0
        for start in range(0, len(order), batch_size):
            chunk = order[start:start + batch_size]
            losses = []
            for local in chunk:
                obj = base_objects[int(local)]
                # one fixed episode per object: epochs revisit the same set
                ep_seed = np.random.SeedSequence(entropy=root.entropy,
                                                 spawn_key=(1, int(local)))
                frames, proprios, label = _run_episode(env, obj, policy, ep_seed)
                for t in range(1, model.horizon + 1):
                    fused = fuse_prefix(model, frames[:t], proprios[:t], vocab,
                                        dataset.embed_dim, grad=True)
                    losses.append(fusion_loss(fused, vocab, label, temperature))
                    if t == model.horizon:
                        dist = predict(fused.global_feature, vocab, "base", temperature)
                        epoch_correct += int(dist.argmax == label)
                n_eps += 1
            total = ag.tmean(ag.stack(losses))
            if not np.isfinite(total.data):
                raise FusionError(f"fusion training diverged at epoch {epoch}: loss={total.data}")
            optimizer.zero_grad()
            total.backward()
            optimizer.step()
            epoch_loss += float(total.data) * len(chunk)
        result.curve.append({"epoch": epoch, "loss": epoch_loss / len(order),
                             "train_acc": epoch_correct / max(n_eps, 1)})
        result.final_accuracy = epoch_correct / max(n_eps, 1)
    return result


def fusion_objective(model: FusionModel, dataset: EmbeddingGridDataset,
                     objects: list[int] | None = None, seed: int = 0,
                     temperature: float = 1.0,
                     occlusion: OcclusionConfig | None = None) -> float:
    """Mean per-step-prefix cross-entropy over the fixed episode set that
    train_fusion(seed=...) optimizes."""
    vocab = Vocabulary.from_dataset(dataset)
    base_objects = objects if objects is not None else dataset.objects_of_split("base")
    env = GridEnv(dataset, horizon=model.horizon, occlusion=occlusion)
    root = np.random.SeedSequence(seed)
    total, count = 0.0, 0
    for local, obj in enumerate(base_objects):
        ep_seed = np.random.SeedSequence(entropy=root.entropy, spawn_key=(1, local))
        frames, proprios, label = _run_episode(env, obj, random_policy, ep_seed)
        for t in range(1, model.horizon + 1):
            fused = fuse_prefix(model, frames[:t], proprios[:t], vocab, dataset.embed_dim)
            total += float(fusion_loss(fused, vocab, label, temperature).data)
            count += 1
    return total / count


def _run_episode(env: GridEnv, object_index: int, policy, seed_seq) -> tuple[list, list, int]:
    seeds = seed_seq.spawn(2)
    state, obs = env.reset(object_index, seeds[0])
    action_rng = np.random.default_rng(seeds[1])
    frames = [obs.feature]
    proprios = [obs.proprio]
    while state.step_index < env.horizon:
        action = policy(state, action_rng)
        obs = env.step(state, action)
        frames.append(obs.feature)
        proprios.append(obs.proprio)
    return frames, proprios, state.label


BASELINE_STRATEGIES = ("average_feature", "average_prediction", "max_prediction", "vote")


def fuse_baseline(strategy: str, features: list[np.ndarray], vocab: Vocabulary,
                  subset: str = "open", temperature: float = 1.0):
    """The four non-attention fusion strategies. `vote` returns a class
    index; the others return a ClassDistribution."""
    if not features:
        raise FusionError("fuse_baseline requires at least one frame")
    if strategy == "average_feature":
        return predict(np.mean(np.stack(features), axis=0), vocab, subset, temperature)
    dists = [predict(f, vocab, subset, temperature) for f in features]
    if strategy == "average_prediction":
        probs = np.mean([d.probs for d in dists], axis=0)
        probs = probs / probs.sum()
        return ClassDistribution(probs=probs, subset=subset, indices=dists[0].indices)
    if strategy == "max_prediction":
        best = int(np.argmax([d.probs.max() for d in dists]))
        return dists[best]
    if strategy == "vote":
        votes = np.array([d.argmax for d in dists])
        counts = np.bincount(votes)
        return int(np.argmax(counts))
    raise FusionError(f"unknown fusion strategy '{strategy}'")
