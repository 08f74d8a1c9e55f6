"""Synthetic embedding-world generation and the occlusion corruption model.

Each class gets a prototype drawn uniformly on the unit sphere; the text
embedding is the prototype itself. Objects are noisy copies of their class
prototype. Views blend the object's instance vector toward a distractor
direction according to an ambiguity field that is low near the class's
canonical viewing cells and rises with wrap-around grid distance, so
zero-shot accuracy varies with viewpoint the way it should.

The distractor is an equal mixture of the two class prototypes nearest to
a per-object random probe direction (plus per-view jitter). Because the
probe never looks at the object's own label, a fully ambiguous view carries
no information about the class: over balanced classes, zero-shot accuracy
at ambiguity 1 is exactly chance.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

from .container import ClassEntry, EmbeddingGridDataset, ObjectRecord

DEFAULT_OCCLUSION_STRENGTH = 1.0 / 9.0  # area fraction of a 1/3-length square patch


class ConfigError(ValueError):
    pass


@dataclass
class SynthConfig:
    num_base: int = 10
    num_novel: int = 10
    objects_per_class: int = 70
    embed_dim: int = 64
    azimuths: int = 12
    elevations: int = 12
    instance_noise: float = 0.1
    # 'distance': ambiguity = min(1, wrap-chebyshev distance to nearest canonical / radius)
    # 'constant': ambiguity = ambiguity_value everywhere
    ambiguity_kind: str = "distance"
    ambiguity_value: float = 0.0
    ambiguity_radius: int = 4
    canonical_views_per_object: int = 1
    # 'class': canonical cells shared by all objects of a class (aligned grids);
    # 'object': resampled per object.
    canonical_scope: str = "class"
    distractor_jitter: float = 0.5
    # mixture weight of the nearer prototype, drawn per object from this
    # range; values above 0.5 make some distractors confidently single-class
    distractor_mix: tuple[float, float] = (0.5, 0.9)
    # pulls base and novel prototypes toward two orthogonal anchor
    # directions: 0 = fully shared geometry, 1 = disjoint cones. Gives the
    # splits a semantic shift so base-tuned shortcuts transfer poorly.
    split_separation: float = 0.5
    seed: int = 0

    def validate(self) -> None:
        if self.num_base < 2:
            raise ConfigError("num_base must be >= 2")
        if self.embed_dim < 8:
            raise ConfigError("embed_dim must be >= 8")
        if self.instance_noise < 0:
            raise ConfigError("instance_noise must be >= 0")
        if self.ambiguity_kind not in ("distance", "constant"):
            raise ConfigError(f"unknown ambiguity_kind '{self.ambiguity_kind}'")
        if not (0.0 <= self.ambiguity_value <= 1.0):
            raise ConfigError("ambiguity_value must lie in [0, 1]")
        if self.ambiguity_radius < 1:
            raise ConfigError("ambiguity_radius must be >= 1")
        if self.canonical_views_per_object < 1:
            raise ConfigError("canonical_views_per_object must be >= 1")
        if self.canonical_scope not in ("class", "object"):
            raise ConfigError(f"unknown canonical_scope '{self.canonical_scope}'")
        if self.distractor_jitter < 0:
            raise ConfigError("distractor_jitter must be >= 0")
        lo, hi = self.distractor_mix
        if not (0.0 <= lo <= hi <= 1.0):
            raise ConfigError("distractor_mix must satisfy 0 <= low <= high <= 1")
        if not (0.0 <= self.split_separation < 1.0):
            raise ConfigError("split_separation must lie in [0, 1)")


def _unit(v: np.ndarray, axis: int = -1) -> np.ndarray:
    return v / np.linalg.norm(v, axis=axis, keepdims=True)


def wrap_chebyshev(m1: int, n1: int, m2: int, n2: int, m_size: int, n_size: int) -> int:
    dm = abs(m1 - m2)
    dn = abs(n1 - n2)
    return max(min(dm, m_size - dm), min(dn, n_size - dn))


def _ambiguity_map(cfg: SynthConfig, canonicals: np.ndarray) -> np.ndarray:
    """[M, N] ambiguity in [0, 1] given canonical cells [[m, n], ...]."""
    m_size, n_size = cfg.azimuths, cfg.elevations
    if cfg.ambiguity_kind == "constant":
        return np.full((m_size, n_size), cfg.ambiguity_value, dtype=np.float64)
    mm, nn = np.meshgrid(np.arange(m_size), np.arange(n_size), indexing="ij")
    dist = np.full((m_size, n_size), np.iinfo(np.int64).max, dtype=np.int64)
    for cm, cn in canonicals:
        dm = np.abs(mm - cm)
        dn = np.abs(nn - cn)
        d = np.maximum(np.minimum(dm, m_size - dm), np.minimum(dn, n_size - dn))
        dist = np.minimum(dist, d)
    return np.minimum(1.0, dist / float(cfg.ambiguity_radius))


def generate_synthetic(cfg: SynthConfig) -> EmbeddingGridDataset:
    """Build a dataset from the config. Pure function of config + seed."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    n_classes = cfg.num_base + cfg.num_novel
    d, m_size, n_size = cfg.embed_dim, cfg.azimuths, cfg.elevations

    prototypes = _unit(rng.standard_normal((n_classes, d)))
    if cfg.split_separation > 0.0:
        anchors = np.zeros((2, d))
        anchors[0, 0] = 1.0
        anchors[1, 1] = 1.0
        s = cfg.split_separation
        for ci in range(n_classes):
            anchor = anchors[0] if ci < cfg.num_base else anchors[1]
            prototypes[ci] = s * anchor + np.sqrt(1.0 - s * s) * prototypes[ci]
        prototypes = _unit(prototypes)
    classes = [
        ClassEntry(name=f"class_{ci:03d}",
                   split="base" if ci < cfg.num_base else "novel",
                   text_embedding=prototypes[ci].astype(np.float32))
        for ci in range(n_classes)
    ]

    class_canonicals = {}
    if cfg.canonical_scope == "class":
        for ci in range(n_classes):
            cells = rng.integers(0, [m_size, n_size], size=(cfg.canonical_views_per_object, 2))
            class_canonicals[ci] = cells

    objects: list[ObjectRecord] = []
    for ci in range(n_classes):
        for oi in range(cfg.objects_per_class):
            instance = _unit(prototypes[ci] + cfg.instance_noise * rng.standard_normal(d))

            probe = _unit(rng.standard_normal(d))
            top2 = np.argsort(prototypes @ probe)[-2:]
            w = rng.uniform(*cfg.distractor_mix)
            mix = _unit(w * prototypes[top2[1]] + (1.0 - w) * prototypes[top2[0]])

            if cfg.canonical_scope == "class":
                canonicals = class_canonicals[ci]
            else:
                canonicals = rng.integers(0, [m_size, n_size], size=(cfg.canonical_views_per_object, 2))
            amb = _ambiguity_map(cfg, canonicals)

            jitter = rng.standard_normal((m_size, n_size, d))
            distractor = _unit(mix[None, None, :] + cfg.distractor_jitter * jitter)
            views = (1.0 - amb[..., None]) * instance[None, None, :] + amb[..., None] * distractor
            views = _unit(views)

            objects.append(ObjectRecord(
                object_id=f"obj_{ci:03d}_{oi:04d}",
                class_index=ci,
                grid=views.astype(np.float32),
                info_map=(1.0 - amb).astype(np.float32),
            ))

    meta = {"generator": "synthetic-v1", "config": json.dumps(asdict(cfg), sort_keys=True)}
    dataset = EmbeddingGridDataset(embed_dim=d, azimuths=m_size, elevations=n_size,
                                   classes=classes, objects=objects, metadata=meta)
    dataset.validate()
    return dataset


def apply_occlusion(feature: np.ndarray, prob: float, strength: float,
                    rng: np.random.Generator) -> np.ndarray:
    """With probability `prob`, blend the unit feature toward a fresh random
    unit direction by `strength` (clamped to [0, 1]) and renormalize;
    otherwise return the feature unchanged."""
    if prob <= 0.0 or rng.random() >= prob:
        return feature
    beta = float(np.clip(strength, 0.0, 1.0))
    u = rng.standard_normal(feature.shape[-1])
    u /= np.linalg.norm(u)
    blend = (1.0 - beta) * feature.astype(np.float64) + beta * u
    norm = np.linalg.norm(blend)
    if norm < 1e-12:
        blend, norm = u, 1.0
    return (blend / norm).astype(feature.dtype)


def occlude_views(views: np.ndarray, prob: float, strength: float,
                  rng: np.random.Generator) -> np.ndarray:
    """Vectorized occlusion over a [V, D] batch of unit features."""
    if prob <= 0.0:
        return views
    beta = float(np.clip(strength, 0.0, 1.0))
    v, d = views.shape
    hit = np.nonzero(rng.random(v) < prob)[0]
    if hit.size == 0:
        return views
    u = rng.standard_normal((hit.size, d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    blend = (1.0 - beta) * views[hit].astype(np.float64) + beta * u
    out = views.copy()
    out[hit] = _unit(blend).astype(views.dtype)
    return out
