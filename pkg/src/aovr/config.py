"""Experiment configuration: YAML files deep-merged over documented defaults."""

from __future__ import annotations

import copy
from pathlib import Path

import yaml

DEFAULT_CONFIG: dict = {
    "seed": 0,
    "dataset": {
        # Load an existing AOVR1 container instead of generating one.
        "path": None,
        "synth": {
            "num_base": 10,
            "num_novel": 10,
            "objects_per_class": 70,
            "embed_dim": 64,
            "azimuths": 12,
            "elevations": 12,
            "instance_noise": 0.1,
            "ambiguity_kind": "distance",   # 'distance' or 'constant'
            "ambiguity_value": 0.0,          # used when ambiguity_kind = constant
            "ambiguity_radius": 4,
            "canonical_views_per_object": 1,
            "canonical_scope": "class",     # 'class' keeps grids aligned within a class
            "distractor_jitter": 1.0,
            "distractor_mix": [0.5, 0.9],
            "split_separation": 0.5,
        },
        "train_objects_per_class": 50,       # remainder of each class is the test split
    },
    "env": {
        "horizon": 6,
        # transient occlusion on most observations makes evidence fusion and
        # view selection matter; set prob 0 for a clean environment
        "occlusion": {"prob": 0.8, "strength": 0.333, "mode": "visit"},
    },
    "train": {
        "fusion_epochs": 25,
        "fusion_batch": 32,
        "fusion_lr": 0.01,
        "fusion_k": 5,
        "fusion_d_model": 64,
        "policy_mode": "default",            # 'raw_feature' feeds the policy raw embeddings
        "temperature": 0.15,
        "val_fraction": 0.1,
        "val_every": 50,
        "interleave_fusion": True,
        "ppo": {
            "gamma": 0.95,
            "lam": 0.9,
            "clip_eps": 0.2,
            "epochs": 4,
            "minibatch_episodes": 8,
            "value_coef": 0.5,
            "entropy_coef": 0.01,
            "lr": 1e-3,
            "updates": 400,
            "episodes_per_update": 16,
            "reward_mode": "dense",          # 'dense', 'delta', or 'terminal'
        },
    },
    "investigate": {
        "runs": 5,
        "occlusion_probs": [0.2, 0.35, 0.5],
    },
    "eval": {
        "repeats": 1,
        "variants": [
            {"policy": "trained", "predictor": "attention"},
            {"policy": "trained", "predictor": "last_frame"},
            {"policy": "random", "predictor": "attention"},
            {"policy": "largest_step", "predictor": "attention"},
        ],
    },
}


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> dict:
    config = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        loaded = yaml.safe_load(Path(path).read_text())
        if loaded:
            config = _merge(config, loaded)
    if overrides:
        config = _merge(config, overrides)
    return config
