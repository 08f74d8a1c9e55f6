import numpy as np
import pytest

from aovr.classifier import Vocabulary
from aovr.synth import (ConfigError, SynthConfig, apply_occlusion,
                        generate_synthetic, occlude_views)


def small_config(**kw):
    base = dict(num_base=4, num_novel=2, objects_per_class=5, embed_dim=16,
                azimuths=6, elevations=6, instance_noise=0.05, seed=11)
    base.update(kw)
    return SynthConfig(**base)


def open_accuracy(dataset):
    vocab = Vocabulary.from_dataset(dataset)
    views = np.concatenate([o.grid.reshape(-1, dataset.embed_dim) for o in dataset.objects])
    pred = np.argmax(views.astype(np.float64) @ vocab.matrix.T.astype(np.float64), axis=1)
    labels = np.repeat([o.class_index for o in dataset.objects], dataset.n_views)
    return (pred == labels), labels


def test_zero_ambiguity_zero_noise_views_equal_text_embedding():
    ds = generate_synthetic(small_config(ambiguity_kind="constant", ambiguity_value=0.0,
                                         instance_noise=0.0))
    for obj in ds.objects:
        proto = ds.classes[obj.class_index].text_embedding
        assert np.allclose(obj.grid, np.broadcast_to(proto, obj.grid.shape), atol=1e-6)
    correct, _ = open_accuracy(ds)
    assert correct.mean() == 1.0


def test_full_ambiguity_accuracy_is_chance():
    # With ambiguity 1 everywhere the view direction never conditions on the
    # object's label, so over balanced classes accuracy is chance in
    # expectation. Standard error is estimated at object level since views
    # within an object share the distractor mixture.
    cfg = small_config(num_base=6, num_novel=6, objects_per_class=20,
                       ambiguity_kind="constant", ambiguity_value=1.0, seed=5)
    ds = generate_synthetic(cfg)
    correct, labels = open_accuracy(ds)
    n_objects = len(ds.objects)
    assert correct.size >= 1000
    per_object = correct.reshape(n_objects, -1).mean(axis=1)
    chance = 1.0 / len(ds.classes)
    se = per_object.std(ddof=1) / np.sqrt(n_objects)
    assert abs(per_object.mean() - chance) <= 3.0 * se + 1e-9


def test_generation_deterministic():
    a = generate_synthetic(small_config())
    b = generate_synthetic(small_config())
    assert a.metadata == b.metadata
    for ca, cb in zip(a.classes, b.classes):
        assert np.array_equal(ca.text_embedding, cb.text_embedding)
    for oa, ob in zip(a.objects, b.objects):
        assert np.array_equal(oa.grid, ob.grid)
        assert np.array_equal(oa.info_map, ob.info_map)


def test_different_seed_changes_data():
    a = generate_synthetic(small_config(seed=1))
    b = generate_synthetic(small_config(seed=2))
    assert not np.array_equal(a.objects[0].grid, b.objects[0].grid)


def test_info_map_is_one_minus_ambiguity():
    ds = generate_synthetic(small_config(ambiguity_kind="constant", ambiguity_value=0.25))
    for obj in ds.objects:
        assert np.allclose(obj.info_map, 0.75, atol=1e-6)


def test_class_scope_shares_canonical_cells():
    ds = generate_synthetic(small_config(canonical_scope="class"))
    by_class = {}
    for obj in ds.objects:
        by_class.setdefault(obj.class_index, []).append(obj.info_map)
    for maps in by_class.values():
        for m in maps[1:]:
            assert np.array_equal(maps[0], m)


def test_config_validation():
    with pytest.raises(ConfigError):
        generate_synthetic(small_config(num_base=1))
    with pytest.raises(ConfigError):
        generate_synthetic(small_config(embed_dim=4))
    with pytest.raises(ConfigError):
        generate_synthetic(small_config(instance_noise=-0.1))
    with pytest.raises(ConfigError):
        generate_synthetic(small_config(ambiguity_value=1.5, ambiguity_kind="constant"))


# occlusion ----------------------------------------------------------
def unit_vec(d, seed):
    v = np.random.default_rng(seed).standard_normal(d)
    return (v / np.linalg.norm(v)).astype(np.float32)


def test_occlusion_p_zero_is_identity():
    f = unit_vec(32, 0)
    out = apply_occlusion(f, 0.0, 0.5, np.random.default_rng(1))
    assert out is f


def test_occlusion_full_strength_is_input_independent():
    f1, f2 = unit_vec(32, 1), unit_vec(32, 2)
    out1 = apply_occlusion(f1, 1.0, 1.0, np.random.default_rng(7))
    out2 = apply_occlusion(f2, 1.0, 1.0, np.random.default_rng(7))
    assert np.allclose(out1, out2, atol=1e-7)
    assert abs(np.linalg.norm(out1) - 1.0) <= 1e-6


def test_occlusion_default_strength_mean_cosine():
    f = unit_vec(64, 3)
    rng = np.random.default_rng(123)
    cosines = []
    for _ in range(10_000):
        out = apply_occlusion(f, 1.0, 1.0 / 9.0, rng)
        cosines.append(float(out @ f))
    assert np.mean(cosines) >= 0.95


def test_occlusion_output_unit_norm():
    rng = np.random.default_rng(9)
    for d in (8, 16, 64):
        f = unit_vec(d, d)
        for _ in range(50):
            out = apply_occlusion(f, 1.0, rng.uniform(0, 1), rng)
            assert abs(np.linalg.norm(out.astype(np.float64)) - 1.0) <= 1e-6


def test_occlusion_strength_clamped():
    f = unit_vec(16, 4)
    out = apply_occlusion(f, 1.0, 5.0, np.random.default_rng(2))  # clamps to 1
    assert abs(np.linalg.norm(out.astype(np.float64)) - 1.0) <= 1e-6


def test_occlude_views_batch_matches_probability():
    views = np.stack([unit_vec(16, i) for i in range(400)])
    rng = np.random.default_rng(5)
    out = occlude_views(views, 0.5, 0.5, rng)
    changed = np.any(out != views, axis=1).mean()
    assert 0.35 < changed < 0.65


def test_accuracy_monotone_under_occlusion():
    # monotonicity hook: accuracy non-increasing in p, three seeds
    ds = generate_synthetic(small_config(num_base=5, num_novel=5, objects_per_class=6,
                                         embed_dim=32, seed=3))
    vocab = Vocabulary.from_dataset(ds)
    views = np.concatenate([o.grid.reshape(-1, ds.embed_dim) for o in ds.objects])
    labels = np.repeat([o.class_index for o in ds.objects], ds.n_views)
    assert views.shape[0] >= 2000
    for seed in (0, 1, 2):
        accs = []
        for p in (0.0, 0.2, 0.35, 0.5):
            rng = np.random.default_rng(seed)
            corrupted = occlude_views(views, p, 1.0 / 9.0, rng)
            pred = np.argmax(corrupted.astype(np.float64) @ vocab.matrix.T.astype(np.float64), axis=1)
            accs.append((pred == labels).mean())
        for lo, hi in zip(accs[1:], accs[:-1]):
            assert lo <= hi + 0.01  # 1-point noise tolerance
