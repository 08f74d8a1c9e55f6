import numpy as np
import pytest

from aovr.analytics import (occlusion_study, random_vs_best_gap,
                            viewpoint_sensitivity_report)
from aovr.container import ClassEntry, EmbeddingGridDataset, ObjectRecord
from aovr.synth import SynthConfig, generate_synthetic


def basis(i, d=8):
    v = np.zeros(d, dtype=np.float32)
    v[i] = 1.0
    return v


def grid_dataset(correct_cells, m=12, n=12, n_objects=3):
    """Two orthogonal classes; class-0 objects show class 0's embedding only
    at `correct_cells`, class 1's embedding elsewhere."""
    classes = [ClassEntry("target", "base", basis(0)),
               ClassEntry("decoy", "base", basis(1))]
    objects = []
    for j in range(n_objects):
        grid = np.broadcast_to(basis(1), (m, n, 8)).copy()
        for cell in correct_cells:
            grid[cell] = basis(0)
        objects.append(ObjectRecord(f"o{j}", 0, grid))
    return EmbeddingGridDataset(embed_dim=8, azimuths=m, elevations=n,
                                classes=classes, objects=objects)


def test_single_correct_view_statistics():
    ds = grid_dataset([(3, 4)])
    report = viewpoint_sensitivity_report(ds)
    target = next(cs for cs in report.per_class if cs.name == "target")
    assert target.mean == pytest.approx(1.0 / 144.0)
    assert target.max == 1.0
    assert target.median == 0.0
    assert target.gap == pytest.approx(1.0 - 1.0 / 144.0)


def test_sensitivity_invariants():
    ds = generate_synthetic(SynthConfig(num_base=4, num_novel=2, objects_per_class=5,
                                        embed_dim=16, azimuths=6, elevations=6, seed=2))
    report = viewpoint_sensitivity_report(ds)
    assert len(report.per_class) == 6
    for cs in report.per_class:
        assert 0.0 <= cs.accuracy_map.min() and cs.accuracy_map.max() <= 1.0
        assert cs.max >= cs.median
        assert cs.max >= cs.mean
    assert report.max_gap >= report.mean_gap


def test_zero_ambiguity_world_has_no_gap():
    ds = generate_synthetic(SynthConfig(num_base=4, num_novel=2, objects_per_class=4,
                                        embed_dim=16, azimuths=6, elevations=6,
                                        ambiguity_kind="constant", ambiguity_value=0.0,
                                        instance_noise=0.0, seed=1))
    report = viewpoint_sensitivity_report(ds)
    for cs in report.per_class:
        assert cs.mean == 1.0 and cs.max == 1.0
    assert report.mean_gap == 0.0


def test_default_world_has_positive_gap():
    ds = generate_synthetic(SynthConfig(num_base=5, num_novel=5, objects_per_class=8,
                                        embed_dim=32, seed=4))
    report = viewpoint_sensitivity_report(ds)
    assert report.mean_gap > 0.0


def test_sensitivity_skips_empty_class(caplog):
    ds = grid_dataset([(0, 0)])
    ds.classes.append(ClassEntry("empty", "novel", basis(2)))
    with caplog.at_level("WARNING"):
        report = viewpoint_sensitivity_report(ds)
    assert all(cs.name != "empty" for cs in report.per_class)
    assert any("empty" in rec.message for rec in caplog.records)


def test_random_vs_best_extremes():
    all_correct = grid_dataset([(m, n) for m in range(12) for n in range(12)])
    res = random_vs_best_gap(all_correct, runs=4, seed=0)
    assert res["target"]["random_acc"] == 1.0
    assert res["target"]["best_acc"] == 1.0

    none_correct = grid_dataset([])
    res = random_vs_best_gap(none_correct, runs=4, seed=0)
    assert res["target"]["random_acc"] == 0.0
    assert res["target"]["best_acc"] == 0.0


def test_random_vs_best_half_views():
    half = [(m, n) for m in range(12) for n in range(12) if (m + n) % 2 == 0]
    ds = grid_dataset(half, n_objects=1)
    runs = 4000
    res = random_vs_best_gap(ds, runs=runs, seed=3)
    assert res["target"]["best_acc"] == 1.0
    se = np.sqrt(0.25 / runs)
    assert abs(res["target"]["random_acc"] - 0.5) <= 3.0 * se


def test_random_vs_best_requires_runs():
    with pytest.raises(ValueError):
        random_vs_best_gap(grid_dataset([(0, 0)]), runs=0)


def test_occlusion_study_zero_prob_and_zero_strength():
    ds = generate_synthetic(SynthConfig(num_base=4, num_novel=2, objects_per_class=4,
                                        embed_dim=16, azimuths=6, elevations=6, seed=6))
    res = occlusion_study(ds, probs=(0.0,), seed=0)
    assert res["levels"][0]["drop"] == 0.0
    res = occlusion_study(ds, probs=(0.2, 0.5), strength=0.0, seed=0)
    for level in res["levels"]:
        assert level["drop"] == 0.0


def test_occlusion_study_monotone_drop():
    ds = generate_synthetic(SynthConfig(num_base=5, num_novel=5, objects_per_class=5,
                                        embed_dim=32, azimuths=8, elevations=8, seed=7))
    assert len(ds.objects) * ds.n_views >= 2000
    for seed in (0, 1, 2):
        res = occlusion_study(ds, probs=(0.2, 0.35, 0.5), seed=seed)
        drops = [level["drop"] for level in res["levels"]]
        assert drops[0] <= drops[1] + 0.01
        assert drops[1] <= drops[2] + 0.01


def test_occlusion_study_rejects_bad_prob():
    ds = grid_dataset([(0, 0)])
    with pytest.raises(ValueError):
        occlusion_study(ds, probs=(1.5,))
