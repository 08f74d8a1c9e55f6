"""Episode evaluation, metric tables, per-step curves, and experiment
orchestration."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analytics import (SCHEMA_VERSION, occlusion_study, random_vs_best_gap,
                        viewpoint_sensitivity_report, write_occlusion_csv,
                        write_random_vs_best_csv, write_sensitivity_csv,
                        write_summary_json)
from .classifier import Vocabulary, predict
from .container import EmbeddingGridDataset, load_container, save_container
from .env import GridEnv, OcclusionConfig
from .fusion import BASELINE_STRATEGIES, FusionModel, fuse_baseline, fuse_prefix
from .policy import (AgentTrainConfig, PPOConfig, make_actor, run_episode,
                     train_agent)
from .synth import SynthConfig, generate_synthetic

log = logging.getLogger(__name__)

SPLITS = ("base", "novel", "open")
PREDICTORS = ("attention", "last_frame") + BASELINE_STRATEGIES


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[stage: {stage}] {message}")
        self.stage = stage


@dataclass
class EvaluationReport:
    policy_name: str
    predictor: str
    horizon: int
    seed: int
    episodes: dict[str, int] = field(default_factory=dict)
    top1: dict[str, list[float]] = field(default_factory=dict)   # split -> per-step rates
    top3: dict[str, list[float]] = field(default_factory=dict)
    fingerprint: str = ""

    def rate(self, split: str, step: int, k: int = 1) -> float:
        table = self.top1 if k == 1 else self.top3
        return table[split][step - 1]

    def rows(self) -> list[dict]:
        out = []
        for split in SPLITS:
            if split not in self.top1:
                continue
            for t in range(self.horizon):
                out.append({"policy": self.policy_name, "predictor": self.predictor,
                            "split": split, "step": t + 1,
                            "top1": self.top1[split][t], "top3": self.top3[split][t],
                            "episodes": self.episodes[split], "seed": self.seed})
        return out


def _vote_top(frames, vocab, temperature, k):
    votes = [predict(f, vocab, "open", temperature).argmax for f in frames]
    counts = np.bincount(np.array(votes), minlength=len(vocab))
    return np.argsort(-counts, kind="stable")[:k]


def _step_topk(predictor: str, frames, proprios, fusion: FusionModel | None,
               vocab: Vocabulary, embed_dim: int, temperature: float) -> np.ndarray:
    """Top-3 open-vocabulary class indices for the observed prefix."""
    if predictor == "attention":
        fused = fuse_prefix(fusion, frames, proprios, vocab, embed_dim)
        return predict(fused.global_feature, vocab, "open", temperature).top(3)
    if predictor == "last_frame":
        return predict(frames[-1], vocab, "open", temperature).top(3)
    if predictor == "vote":
        return _vote_top(frames, vocab, temperature, 3)
    dist = fuse_baseline(predictor, frames, vocab, "open", temperature)
    return dist.top(3)


def evaluate(dataset: EmbeddingGridDataset, policy_spec, predictor: str = "attention",
             fusion: FusionModel | None = None, horizon: int = 6,
             occlusion: OcclusionConfig | None = None,
             objects: list[int] | None = None, repeats: int = 1,
             seed: int = 0, temperature: float = 1.0) -> EvaluationReport:
    """Run the policy over the evaluation objects and record top-1/top-3
    success against the open vocabulary at every step."""
    if predictor not in PREDICTORS:
        raise ValueError(f"unknown predictor '{predictor}'")
    if predictor == "attention" and fusion is None:
        raise ValueError("attention predictor requires a fusion model")
    vocab = Vocabulary.from_dataset(dataset)
    if objects is None:
        objects = list(range(len(dataset.objects)))
    if not objects:
        raise ValueError("no evaluation objects")
    env = GridEnv(dataset, horizon=horizon, occlusion=occlusion)
    actor = make_actor(policy_spec)
    policy_name = policy_spec if isinstance(policy_spec, str) else \
        ("trained_raw" if policy_spec.mode == "raw_feature" else "trained")

    hits1 = {s: np.zeros(horizon) for s in SPLITS}
    hits3 = {s: np.zeros(horizon) for s in SPLITS}
    counts = {s: 0 for s in SPLITS}
    base_set = set(int(i) for i in vocab.subset_indices("base"))

    root = np.random.SeedSequence(seed)
    for rep in range(repeats):
        for j, obj in enumerate(objects):
            ep_seq = np.random.SeedSequence(entropy=root.entropy, spawn_key=(rep, j))
            frames, proprios, _, _, label = run_episode(env, actor, vocab, obj, ep_seq)
            label_split = "base" if label in base_set else "novel"
            counts[label_split] += 1
            counts["open"] += 1
            for t in range(1, horizon + 1):
                top = _step_topk(predictor, frames[:t], proprios[:t], fusion,
                                 vocab, dataset.embed_dim, temperature)
                hit1 = int(top[0] == label)
                hit3 = int(label in top)
                for s in (label_split, "open"):
                    hits1[s][t - 1] += hit1
                    hits3[s][t - 1] += hit3

    report = EvaluationReport(policy_name=policy_name, predictor=predictor,
                              horizon=horizon, seed=seed)
    for s in SPLITS:
        if counts[s] == 0:
            continue
        report.episodes[s] = counts[s]
        report.top1[s] = [float(x / counts[s]) for x in hits1[s]]
        report.top3[s] = [float(x / counts[s]) for x in hits3[s]]
    return report


def write_report_csv(reports: list[EvaluationReport], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["schema_version", "policy", "predictor", "split", "step",
                    "top1", "top3", "episodes", "seed"])
        for report in reports:
            for row in report.rows():
                w.writerow([SCHEMA_VERSION, row["policy"], row["predictor"], row["split"],
                            row["step"], repr(row["top1"]), repr(row["top3"]),
                            row["episodes"], row["seed"]])


def split_objects(dataset: EmbeddingGridDataset, train_per_class: int) -> tuple[list[int], list[int]]:
    """Deterministic object-level split: the first train_per_class objects
    of each class (dataset order) train, the rest test."""
    seen: dict[int, int] = {}
    train, test = [], []
    for i, o in enumerate(dataset.objects):
        c = seen.get(o.class_index, 0)
        seen[o.class_index] = c + 1
        (train if c < train_per_class else test).append(i)
    return train, test


def config_fingerprint(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()


def write_trace(path: Path, dataset: EmbeddingGridDataset, policy_spec,
                fusion: FusionModel, horizon: int, objects: list[int],
                seed: int = 0, temperature: float = 1.0,
                occlusion: OcclusionConfig | None = None) -> None:
    """Episode traces as JSON lines: step, position, action, top-1, alpha."""
    vocab = Vocabulary.from_dataset(dataset)
    env = GridEnv(dataset, horizon=horizon, occlusion=occlusion)
    actor = make_actor(policy_spec)
    root = np.random.SeedSequence(seed)
    with open(path, "w") as fh:
        for j, obj in enumerate(objects):
            ep_seq = np.random.SeedSequence(entropy=root.entropy, spawn_key=(0, j))
            frames, proprios, positions, actions, label = run_episode(
                env, actor, vocab, obj, ep_seq)
            for t in range(1, horizon + 1):
                fused = fuse_prefix(fusion, frames[:t], proprios[:t], vocab, dataset.embed_dim)
                dist = predict(fused.global_feature, vocab, "open", temperature)
                action = actions[t - 1] if t - 1 < len(actions) else None
                fh.write(json.dumps({
                    "episode": j,
                    "object": dataset.objects[obj].object_id,
                    "label": vocab.names[label],
                    "step": t,
                    "position": list(positions[t - 1]),
                    "action": [action.dm, action.dn] if action is not None else None,
                    "top1": vocab.names[dist.argmax],
                    "alpha": [round(float(a), 6) for a in fused.alpha],
                }) + "\n")


def run_experiment(config: dict, out_dir: Path, seed: int | None = None) -> Path:
    """synth/ingest -> investigate -> train -> eval, fully reproducible from
    config + seed. Any stage failure is re-raised with the stage name."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if seed is None:
        seed = int(config.get("seed", 0))

    # stage: dataset ------------------------------------------------
    try:
        ds_cfg = config["dataset"]
        dataset_path = out_dir / "dataset.aovr"
        if ds_cfg.get("path"):
            source = Path(ds_cfg["path"])
            if not source.exists():
                raise FileNotFoundError(f"dataset file '{source}' does not exist")
            dataset = load_container(source)
            dataset_path = source
        else:
            synth_kwargs = dict(ds_cfg.get("synth", {}))
            synth_kwargs.setdefault("seed", seed)
            dataset = generate_synthetic(SynthConfig(**synth_kwargs))
            save_container(dataset, dataset_path)
        fingerprint = hashlib.sha256(Path(dataset_path).read_bytes()).hexdigest()
        (out_dir / "dataset.fingerprint").write_text(fingerprint + "\n")
    except Exception as exc:
        raise StageError("ingest" if config["dataset"].get("path") else "synth", str(exc)) from exc

    train_idx, test_idx = split_objects(dataset, int(config["dataset"]["train_objects_per_class"]))
    if not test_idx:
        test_idx = list(range(len(dataset.objects)))

    # stage: investigate ---------------------------------------------
    try:
        inv = config["investigate"]
        sens = viewpoint_sensitivity_report(dataset)
        write_sensitivity_csv(sens, out_dir / "sensitivity_map.csv",
                              out_dir / "sensitivity_summary.csv")
        rvb = random_vs_best_gap(dataset, runs=int(inv["runs"]), seed=seed)
        write_random_vs_best_csv(rvb, out_dir / "random_vs_best.csv")
        occ = occlusion_study(dataset, probs=tuple(inv["occlusion_probs"]), seed=seed)
        write_occlusion_csv(occ, out_dir / "occlusion.csv")
        write_summary_json(out_dir / "investigate_summary.json", sens, rvb, occ)
    except Exception as exc:
        raise StageError("investigate", str(exc)) from exc

    # stage: train ----------------------------------------------------
    try:
        tr = config["train"]
        env_cfg = config["env"]
        occ_cfg = OcclusionConfig(**env_cfg.get("occlusion", {}))
        agent_cfg = AgentTrainConfig(
            fusion_epochs=int(tr["fusion_epochs"]), fusion_batch=int(tr["fusion_batch"]),
            fusion_lr=float(tr["fusion_lr"]), fusion_k=int(tr["fusion_k"]),
            fusion_d_model=int(tr["fusion_d_model"]), policy_mode=tr["policy_mode"],
            temperature=float(tr["temperature"]), val_fraction=float(tr["val_fraction"]),
            val_every=int(tr["val_every"]), interleave_fusion=bool(tr["interleave_fusion"]),
            ppo=PPOConfig(**tr["ppo"]))
        result = train_agent(dataset, int(env_cfg["horizon"]), agent_cfg, seed=seed,
                             train_objects=[i for i in train_idx
                                            if dataset.objects[i].class_index in
                                            set(dataset.class_indices("base"))],
                             occlusion=occ_cfg)
        result.fusion.save(out_dir / "fusion.ckpt")
        result.policy.save(out_dir / "policy.ckpt")
        _write_curves(out_dir, result)
    except Exception as exc:
        raise StageError("train", str(exc)) from exc

    # stage: eval -----------------------------------------------------
    try:
        ev = config["eval"]
        horizon = int(config["env"]["horizon"])
        reports = []
        for variant in ev["variants"]:
            spec = result.policy if variant["policy"] == "trained" else variant["policy"]
            reports.append(evaluate(dataset, spec, predictor=variant["predictor"],
                                    fusion=result.fusion, horizon=horizon,
                                    occlusion=OcclusionConfig(**config["env"].get("occlusion", {})),
                                    objects=test_idx, repeats=int(ev["repeats"]),
                                    seed=seed, temperature=float(config["train"]["temperature"])))
        write_report_csv(reports, out_dir / "eval_report.csv")
        summary = {
            "schema_version": SCHEMA_VERSION,
            "seed": seed,
            "config_fingerprint": config_fingerprint(config),
            "dataset_fingerprint": fingerprint,
            "shared_fusion_checkpoint": True,
            "variants": [{"policy": r.policy_name, "predictor": r.predictor,
                          "final_top1": {s: r.top1[s][-1] for s in r.top1},
                          "final_top3": {s: r.top3[s][-1] for s in r.top3}}
                         for r in reports],
        }
        (out_dir / "eval_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    except Exception as exc:
        raise StageError("eval", str(exc)) from exc
    return out_dir


def _write_curves(out_dir: Path, result) -> None:
    with open(out_dir / "fusion_curve.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["schema_version", "epoch", "loss", "train_acc"])
        for row in result.fusion_curve:
            w.writerow([SCHEMA_VERSION, row["epoch"], repr(row["loss"]), repr(row["train_acc"])])
    with open(out_dir / "policy_curve.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["schema_version", "update", "mean_reward", "policy_loss",
                    "value_loss", "entropy", "clip_frac"])
        for row in result.policy_curve:
            w.writerow([SCHEMA_VERSION, row["update"], repr(row["mean_reward"]),
                        repr(row["policy_loss"]), repr(row["value_loss"]),
                        repr(row["entropy"]), repr(row["clip_frac"])])
    if result.val_curve:
        keys = [k for k in result.val_curve[0] if k != "update"]
        with open(out_dir / "validation_curve.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["schema_version", "update"] + keys)
            for row in result.val_curve:
                w.writerow([SCHEMA_VERSION, row["update"]] + [repr(row[k]) for k in keys])
