"""Recurrent actor-critic movement policy and its PPO trainer.

The policy never sees raw class semantics by default: its visual channel
is a frozen random projection of the view feature, refined by a trainable
encoder, alongside base-class concept similarities and proprioception. The
reward is the classification score of the ground-truth class computed from
the fused global feature, so better viewpoints and better evidence both
pay off.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .classifier import Vocabulary, base_concept_vector, predict
from .container import EmbeddingGridDataset
from .env import (ALL_ACTIONS, GridEnv, N_ACTIONS, OcclusionConfig, PROPRIO_DIM,
                  largest_step_policy, random_policy)
from .fusion import FusionModel, fuse_prefix, fusion_loss, train_fusion
from .nn import Adam, Dense, GRUCell, Tensor, load_tensors, save_tensors
from .nn import autograd as ag

MODE_DEFAULT = "default"
MODE_RAW_FEATURE = "raw_feature"


class PolicyError(RuntimeError):
    pass


class PolicyModel:
    """Encoder -> GRU -> actor/critic heads.

    Default mode projects the view feature through a frozen random matrix
    before the trainable 3-layer encoder; raw_feature mode swaps the frozen
    projection for a trainable linear head (the semantics-leak ablation).
    """

    def __init__(self, embed_dim: int, n_base: int, mode: str = MODE_DEFAULT,
                 proj_dim: int = 32, enc_widths: tuple[int, int, int] = (64, 64, 32),
                 gru_hidden: int = 128, seed: int = 0, dtype=np.float32):
        if mode not in (MODE_DEFAULT, MODE_RAW_FEATURE):
            raise PolicyError(f"unknown policy input mode '{mode}'")
        self.embed_dim = embed_dim
        self.n_base = n_base
        self.mode = mode
        self.proj_dim = proj_dim
        self.enc_widths = tuple(enc_widths)
        self.gru_hidden = gru_hidden
        rng = np.random.default_rng(seed)

        # Frozen projection: never registered with the optimizer.
        self.projection = (rng.standard_normal((proj_dim, embed_dim)) /
                           np.sqrt(embed_dim)).astype(dtype)
        self.raw_head = Dense(embed_dim, proj_dim, rng, dtype=dtype, prefix="policy.raw_head")

        w1, w2, w3 = self.enc_widths
        self.enc1 = Dense(proj_dim, w1, rng, dtype=dtype, prefix="policy.enc1")
        self.enc2 = Dense(w1, w2, rng, dtype=dtype, prefix="policy.enc2")
        self.enc3 = Dense(w2, w3, rng, dtype=dtype, prefix="policy.enc3")
        self.input_dim = w3 + n_base + PROPRIO_DIM
        self.gru = GRUCell(self.input_dim, gru_hidden, rng, dtype=dtype, prefix="policy.gru")
        self.actor = Dense(gru_hidden, N_ACTIONS, rng, dtype=dtype, prefix="policy.actor")
        self.critic = Dense(gru_hidden, 1, rng, dtype=dtype, prefix="policy.critic")

    def params(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        if self.mode == MODE_RAW_FEATURE:
            out.update(self.raw_head.params())
        for layer in (self.enc1, self.enc2, self.enc3, self.gru, self.actor, self.critic):
            out.update(layer.params())
        return out

    def initial_state(self, batch: int | None = None) -> np.ndarray:
        shape = (self.gru_hidden,) if batch is None else (batch, self.gru_hidden)
        return np.zeros(shape, dtype=self.projection.dtype)

    def input_vector(self, features: np.ndarray, base_sims: np.ndarray,
                     proprio: np.ndarray) -> Tensor:
        """Assemble the policy input: encoded visual channel + base-class
        similarities + proprioception. Works on single vectors or batches."""
        feats = Tensor(np.asarray(features, dtype=self.projection.dtype))
        if self.mode == MODE_RAW_FEATURE:
            channel = self.raw_head(feats)
        else:
            channel = feats @ Tensor(self.projection.T)
        h = ag.tanh(self.enc1(channel))
        h = ag.tanh(self.enc2(h))
        h = ag.tanh(self.enc3(h))
        consts = Tensor(np.concatenate(
            [np.asarray(base_sims, dtype=np.float64),
             np.asarray(proprio, dtype=np.float64)], axis=-1).astype(self.projection.dtype))
        return ag.concat([h, consts], axis=-1)

    def forward(self, features, base_sims, proprio, h_prev) -> tuple[Tensor, Tensor, Tensor]:
        """Returns (logits, value, h_next); accepts [d] vectors or [B, d].
        h_prev may be a Tensor (to extend a backprop chain) or numpy."""
        x = self.input_vector(features, base_sims, proprio)
        if not isinstance(h_prev, Tensor):
            h_prev = Tensor(np.asarray(h_prev, dtype=self.projection.dtype))
        h_next = self.gru(x, h_prev)
        logits = self.actor(h_next)
        value = self.critic(h_next)
        return logits, value, h_next

    def save(self, path) -> None:
        tensors = {name: p.data for name, p in self.params().items()}
        tensors["policy.projection"] = self.projection
        tensors["meta.policy"] = np.array(
            [self.embed_dim, self.n_base, 1.0 if self.mode == MODE_RAW_FEATURE else 0.0,
             self.proj_dim, *self.enc_widths, self.gru_hidden], dtype=np.float32)
        save_tensors(path, tensors)

    @classmethod
    def load(cls, path) -> "PolicyModel":
        tensors = load_tensors(path)
        meta = tensors["meta.policy"]
        model = cls(embed_dim=int(meta[0]), n_base=int(meta[1]),
                    mode=MODE_RAW_FEATURE if meta[2] > 0.5 else MODE_DEFAULT,
                    proj_dim=int(meta[3]), enc_widths=(int(meta[4]), int(meta[5]), int(meta[6])),
                    gru_hidden=int(meta[7]))
        model.projection = tensors["policy.projection"].copy()
        for name, p in model.params().items():
            p.data = tensors[name].astype(p.data.dtype)
        return model


def policy_input(model: PolicyModel, observation, vocab: Vocabulary) -> np.ndarray:
    """The assembled input vector for one observation."""
    sims = base_concept_vector(observation.feature, vocab)
    return model.input_vector(observation.feature, sims, observation.proprio).data


@dataclass
class EpisodeRollout:
    features: np.ndarray    # [S, D] observations at decision steps
    base_sims: np.ndarray   # [S, n_base]
    proprios: np.ndarray    # [S, P]
    actions: np.ndarray     # [S] ints
    log_probs: np.ndarray   # [S]
    values: np.ndarray      # [S]
    rewards: np.ndarray     # [S]
    h_in: np.ndarray        # [S, H] GRU state before each decision
    label: int
    score_first: float      # ground-truth score after the first observation
    score_final: float      # ground-truth score after the last observation
    all_frames: np.ndarray  # [T, D] every observation, for fusion updates
    all_proprios: np.ndarray
    success: bool = False   # final fused top-1 over the base subset was correct
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None

    @property
    def steps(self) -> int:
        return len(self.actions)


@dataclass
class RolloutBuffer:
    episodes: list[EpisodeRollout] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.episodes)

    def mean_reward(self) -> float:
        return float(np.mean([e.rewards.sum() for e in self.episodes]))


REWARD_MODES = ("dense", "delta", "terminal")


def _truth_score(fusion: FusionModel, frames, proprios, vocab, embed_dim,
                 label_pos: int, temperature: float) -> tuple[float, bool]:
    fused = fuse_prefix(fusion, frames, proprios, vocab, embed_dim)
    dist = predict(fused.global_feature, vocab, "base", temperature)
    return float(dist.probs[label_pos]), int(np.argmax(dist.probs)) == label_pos


def collect_rollouts(env: GridEnv, policy: PolicyModel, fusion: FusionModel,
                     vocab: Vocabulary, object_indices, n_episodes: int,
                     reward_mode: str = "dense", temperature: float = 1.0,
                     seed: int = 0) -> RolloutBuffer:
    """Run episodes with actions sampled from the policy; rewards come from
    the fused ground-truth classification score.

    The reward for the action taken at step t is scored after the resulting
    observation: dense pays the new score, delta pays its change (so episode
    reward telescopes to final minus first score), terminal pays only the
    final score.
    """
    if reward_mode not in REWARD_MODES:
        raise PolicyError(f"unknown reward mode '{reward_mode}'")
    base_idx = vocab.subset_indices("base")
    root = np.random.SeedSequence(seed)
    pick_rng = np.random.default_rng(root.spawn(1)[0])
    object_indices = list(object_indices)

    buffer = RolloutBuffer()
    for ep in range(n_episodes):
        obj = object_indices[int(pick_rng.integers(0, len(object_indices)))]
        ep_seq = np.random.SeedSequence(entropy=root.entropy, spawn_key=(1, ep))
        reset_seed, action_seed = ep_seq.spawn(2)
        state, obs = env.reset(obj, reset_seed)
        label = state.label
        positions = np.nonzero(base_idx == label)[0]
        if positions.size == 0:
            raise PolicyError(f"episode label {label} is not a base class")
        label_pos = int(positions[0])
        act_rng = np.random.default_rng(action_seed)

        frames = [obs.feature]
        proprios = [obs.proprio]
        score_prev, hit = _truth_score(fusion, frames, proprios, vocab,
                                       env.dataset.embed_dim, label_pos, temperature)
        score_first = score_prev

        h = policy.initial_state()
        feats, sims_list, props, actions, logps, values, rewards, h_states = \
            [], [], [], [], [], [], [], []
        while state.step_index < env.horizon:
            sims = base_concept_vector(obs.feature, vocab)
            h_states.append(h.copy())
            logits, value, h_t = policy.forward(obs.feature, sims, obs.proprio, h)
            lsm = logits.data - logits.data.max()
            lsm = lsm - np.log(np.exp(lsm).sum())
            probs = np.exp(lsm)
            action = int(act_rng.choice(N_ACTIONS, p=probs / probs.sum()))

            feats.append(obs.feature)
            sims_list.append(sims)
            props.append(obs.proprio)
            actions.append(action)
            logps.append(float(lsm[action]))
            values.append(float(value.data.reshape(())))

            obs = env.step(state, ALL_ACTIONS[action])
            frames.append(obs.feature)
            proprios.append(obs.proprio)
            score_new, hit = _truth_score(fusion, frames, proprios, vocab,
                                          env.dataset.embed_dim, label_pos, temperature)
            if reward_mode == "dense":
                rewards.append(score_new)
            elif reward_mode == "delta":
                rewards.append(score_new - score_prev)
            else:
                rewards.append(score_new if state.step_index == env.horizon else 0.0)
            score_prev = score_new
            h = h_t.data

        buffer.episodes.append(EpisodeRollout(
            features=np.stack(feats), base_sims=np.stack(sims_list),
            proprios=np.stack(props), actions=np.array(actions, dtype=np.int64),
            log_probs=np.array(logps), values=np.array(values),
            rewards=np.array(rewards), h_in=np.stack(h_states),
            label=label, score_first=score_first, score_final=score_prev,
            all_frames=np.stack(frames), all_proprios=np.stack(proprios),
            success=bool(hit)))
    return buffer


def gae_advantages(rewards: np.ndarray, values: np.ndarray, gamma: float,
                   lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Recursive generalized advantage estimation for one complete episode
    (the final step is terminal). Returns (advantages, returns)."""
    n = len(rewards)
    if n == 0:
        raise PolicyError("empty episode")
    adv = np.zeros(n, dtype=np.float64)
    running = 0.0
    next_value = 0.0
    for t in range(n - 1, -1, -1):
        nonterminal = 0.0 if t == n - 1 else 1.0
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        running = delta + gamma * lam * nonterminal * running
        adv[t] = running
        next_value = values[t]
    return adv, adv + values


def compute_gae(buffer: RolloutBuffer, gamma: float, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Fill per-episode advantages (normalized across the whole batch:
    mean 0, std 1 with a 1e-8 guard) and returns."""
    if not buffer.episodes:
        raise PolicyError("empty rollout buffer")
    raw = []
    for ep in buffer.episodes:
        adv, ret = gae_advantages(ep.rewards, ep.values, gamma, lam)
        ep.advantages = adv
        ep.returns = ret
        raw.append(adv)
    flat = np.concatenate(raw)
    mean, std = flat.mean(), flat.std()
    for ep in buffer.episodes:
        ep.advantages = (ep.advantages - mean) / max(std, 1e-8)
    return np.concatenate([ep.advantages for ep in buffer.episodes]), \
        np.concatenate([ep.returns for ep in buffer.episodes])


@dataclass
class PPOConfig:
    gamma: float = 0.95
    lam: float = 0.9
    clip_eps: float = 0.2
    epochs: int = 4
    minibatch_episodes: int = 8
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    lr: float = 3e-4
    updates: int = 300
    episodes_per_update: int = 16
    reward_mode: str = "dense"

    def validate(self) -> None:
        if not (0.0 <= self.gamma <= 1.0 and 0.0 <= self.lam <= 1.0):
            raise PolicyError("gamma and lam must lie in [0, 1]")
        if self.clip_eps <= 0:
            raise PolicyError("clip_eps must be > 0")
        if self.reward_mode not in REWARD_MODES:
            raise PolicyError(f"unknown reward mode '{self.reward_mode}'")


def ppo_update(policy: PolicyModel, optimizer: Adam, buffer: RolloutBuffer,
               cfg: PPOConfig, seed: int = 0) -> dict[str, float]:
    """Clipped-surrogate update. Episode sequences are replayed through the
    GRU from their stored initial states; aborts (restoring the pre-update
    parameters) if the loss goes non-finite."""
    cfg.validate()
    if any(ep.advantages is None for ep in buffer.episodes):
        compute_gae(buffer, cfg.gamma, cfg.lam)
    rng = np.random.default_rng(seed)
    params = policy.params()
    snapshot = {k: p.data.copy() for k, p in params.items()}

    stats = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0, "clip_frac": 0.0}
    n_batches = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(len(buffer.episodes))
        for start in range(0, len(order), cfg.minibatch_episodes):
            batch = [buffer.episodes[i] for i in order[start:start + cfg.minibatch_episodes]]
            steps = batch[0].steps
            b = len(batch)
            h = ag.as_tensor(np.stack([ep.h_in[0] for ep in batch]))
            surr_terms, value_terms, entropy_terms = [], [], []
            clip_hits = 0
            for s in range(steps):
                feats = np.stack([ep.features[s] for ep in batch])
                sims = np.stack([ep.base_sims[s] for ep in batch])
                props = np.stack([ep.proprios[s] for ep in batch])
                actions = np.array([ep.actions[s] for ep in batch])
                old_logp = np.array([ep.log_probs[s] for ep in batch])
                adv = np.array([ep.advantages[s] for ep in batch])
                rets = np.array([ep.returns[s] for ep in batch])

                logits, value, h = policy.forward(feats, sims, props, h)
                lsm = ag.log_softmax(logits, axis=-1)
                logp = lsm[np.arange(b), actions]
                ratio = ag.exp(logp - Tensor(old_logp.astype(logp.data.dtype)))
                clipped = ag.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps)
                adv_t = Tensor(adv.astype(ratio.data.dtype))
                surr_terms.append(ag.minimum(ratio * adv_t, clipped * adv_t))
                diff = ag.reshape(value, (b,)) - Tensor(rets.astype(value.data.dtype))
                value_terms.append(diff * diff)
                entropy_terms.append(-ag.tsum(ag.exp(lsm) * lsm, axis=-1))
                clip_hits += int(np.sum(np.abs(ratio.data - 1.0) > cfg.clip_eps))

            n_samples = float(b * steps)
            policy_loss = -ag.tsum(ag.concat(surr_terms)) / n_samples
            value_loss = ag.tsum(ag.concat(value_terms)) / n_samples
            entropy = ag.tsum(ag.concat(entropy_terms)) / n_samples
            total = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy
            if not np.isfinite(total.data):
                for k, p in params.items():
                    p.data = snapshot[k]
                raise PolicyError("PPO update hit a non-finite loss; parameters restored")
            optimizer.zero_grad()
            total.backward()
            optimizer.step()

            stats["policy_loss"] += float(policy_loss.data)
            stats["value_loss"] += float(value_loss.data)
            stats["entropy"] += float(entropy.data)
            stats["clip_frac"] += clip_hits / n_samples
            n_batches += 1
    for key in stats:
        stats[key] /= max(n_batches, 1)
    return stats


# episode actors ----------------------------------------------------
class HeuristicActor:
    """Wraps a stateless policy function like random_policy."""

    def __init__(self, fn):
        self.fn = fn

    def begin(self) -> None:
        pass

    def act(self, state, obs, vocab: Vocabulary, rng: np.random.Generator):
        return self.fn(state, rng)


class PolicyActor:
    """Runs a trained policy model, sampling actions from its logits."""

    def __init__(self, policy: PolicyModel):
        self.policy = policy
        self._h = policy.initial_state()

    def begin(self) -> None:
        self._h = self.policy.initial_state()

    def act(self, state, obs, vocab: Vocabulary, rng: np.random.Generator):
        sims = base_concept_vector(obs.feature, vocab)
        logits, _, h = self.policy.forward(obs.feature, sims, obs.proprio, self._h)
        self._h = h.data
        lsm = logits.data - logits.data.max()
        probs = np.exp(lsm)
        probs /= probs.sum()
        return ALL_ACTIONS[int(rng.choice(N_ACTIONS, p=probs))]


def make_actor(spec, dataset_or_policy=None):
    if isinstance(spec, PolicyModel):
        return PolicyActor(spec)
    if spec == "random":
        return HeuristicActor(random_policy)
    if spec == "largest_step":
        return HeuristicActor(largest_step_policy)
    raise PolicyError(f"unknown policy variant '{spec}'")


def run_episode(env: GridEnv, actor, vocab: Vocabulary, object_index: int, seed_seq):
    """One full episode; returns (frames, proprios, positions, actions, label)."""
    reset_seed, action_seed = seed_seq.spawn(2)
    state, obs = env.reset(object_index, reset_seed)
    rng = np.random.default_rng(action_seed)
    actor.begin()
    frames = [obs.feature]
    proprios = [obs.proprio]
    positions = [obs.position]
    actions = []
    while state.step_index < env.horizon:
        action = actor.act(state, obs, vocab, rng)
        actions.append(action)
        obs = env.step(state, action)
        frames.append(obs.feature)
        proprios.append(obs.proprio)
        positions.append(obs.position)
    return frames, proprios, positions, actions, state.label


# full training pipeline --------------------------------------------
def _derive_seed(root: int, stream: int, index: int) -> int:
    seq = np.random.SeedSequence(entropy=root, spawn_key=(stream, index))
    return int(seq.generate_state(1)[0])


@dataclass
class AgentTrainConfig:
    fusion_epochs: int = 4
    fusion_batch: int = 16
    fusion_lr: float = 1e-2
    fusion_k: int = 5
    fusion_d_model: int = 64
    ppo: PPOConfig = field(default_factory=PPOConfig)
    policy_mode: str = MODE_DEFAULT
    temperature: float = 1.0
    val_fraction: float = 0.1
    val_every: int = 50
    interleave_fusion: bool = True


@dataclass
class AgentTrainResult:
    fusion: FusionModel
    policy: PolicyModel
    fusion_curve: list[dict[str, float]]
    policy_curve: list[dict[str, float]]
    val_curve: list[dict[str, float]]


def train_agent(dataset: EmbeddingGridDataset, horizon: int, cfg: AgentTrainConfig,
                seed: int = 0, train_objects: list[int] | None = None,
                occlusion: OcclusionConfig | None = None) -> AgentTrainResult:
    """Stage the fusion scorer on random-policy episodes, then run PPO on
    the movement policy while refreshing fusion with one cross-entropy step
    per iteration on the newly collected rollouts."""
    vocab = Vocabulary.from_dataset(dataset)
    if train_objects is None:
        train_objects = dataset.objects_of_split("base")
    if not train_objects:
        raise PolicyError("no base-class objects available for training")

    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(91,)))
    shuffled = list(rng.permutation(train_objects))
    n_val = max(1, int(len(shuffled) * cfg.val_fraction)) if cfg.val_fraction > 0 else 0
    val_objects = [int(i) for i in shuffled[:n_val]]
    fit_objects = [int(i) for i in shuffled[n_val:]] or val_objects

    fusion = FusionModel(k=cfg.fusion_k, horizon=horizon, d_model=cfg.fusion_d_model, seed=seed)
    phase_a = train_fusion(fusion, dataset, epochs=cfg.fusion_epochs,
                           batch_size=cfg.fusion_batch, lr=cfg.fusion_lr, seed=seed,
                           temperature=cfg.temperature, objects=fit_objects,
                           occlusion=occlusion)

    policy = PolicyModel(embed_dim=dataset.embed_dim,
                         n_base=len(vocab.subset_indices("base")),
                         mode=cfg.policy_mode, seed=seed)
    env = GridEnv(dataset, horizon=horizon, occlusion=occlusion)
    policy_opt = Adam(policy.params(), lr=cfg.ppo.lr)
    fusion_opt = Adam(fusion.params(), lr=cfg.fusion_lr)

    policy_curve: list[dict[str, float]] = []
    val_curve: list[dict[str, float]] = []
    for update in range(cfg.ppo.updates):
        buffer = collect_rollouts(env, policy, fusion, vocab, fit_objects,
                                  cfg.ppo.episodes_per_update,
                                  reward_mode=cfg.ppo.reward_mode,
                                  temperature=cfg.temperature,
                                  seed=_derive_seed(seed, 101, update))
        compute_gae(buffer, cfg.ppo.gamma, cfg.ppo.lam)
        stats = ppo_update(policy, policy_opt, buffer, cfg.ppo,
                           seed=_derive_seed(seed, 103, update))
        if cfg.interleave_fusion:
            losses = []
            for ep in buffer.episodes:
                fused = fuse_prefix(fusion, list(ep.all_frames), list(ep.all_proprios),
                                    vocab, dataset.embed_dim, grad=True)
                losses.append(fusion_loss(fused, vocab, ep.label, cfg.temperature))
            total = ag.tmean(ag.stack(losses))
            fusion_opt.zero_grad()
            total.backward()
            fusion_opt.step()
        row = {"update": update, "mean_reward": buffer.mean_reward(), **stats}
        policy_curve.append(row)
        if val_objects and cfg.val_every > 0 and (update + 1) % cfg.val_every == 0:
            val_curve.append({"update": update,
                              **_validation_row(env, policy, fusion, vocab, val_objects,
                                                cfg.temperature, seed)})
    return AgentTrainResult(fusion=fusion, policy=policy,
                            fusion_curve=phase_a.curve, policy_curve=policy_curve,
                            val_curve=val_curve)


def _validation_row(env: GridEnv, policy: PolicyModel, fusion: FusionModel,
                    vocab: Vocabulary, objects: list[int], temperature: float,
                    seed: int) -> dict[str, float]:
    per_step_hits = np.zeros(env.horizon)
    root = np.random.SeedSequence(entropy=seed, spawn_key=(97,))
    actor = PolicyActor(policy)
    for j, obj in enumerate(objects):
        ep_seq = np.random.SeedSequence(entropy=root.entropy, spawn_key=(97, j))
        frames, proprios, _, _, label = run_episode(env, actor, vocab, obj, ep_seq)
        for t in range(1, env.horizon + 1):
            fused = fuse_prefix(fusion, frames[:t], proprios[:t], vocab, env.dataset.embed_dim)
            dist = predict(fused.global_feature, vocab, "open", temperature)
            per_step_hits[t - 1] += int(dist.argmax == label)
    rates = per_step_hits / len(objects)
    return {f"val_top1_step{t + 1}": float(rates[t]) for t in range(env.horizon)}
