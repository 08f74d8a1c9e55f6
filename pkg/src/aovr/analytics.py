"""Viewpoint-sensitivity and occlusion analytics over a dataset.

All studies classify with the clean (unoccluded) stored views unless the
study itself injects occlusion.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classifier import Vocabulary
from .container import EmbeddingGridDataset
from .synth import DEFAULT_OCCLUSION_STRENGTH, occlude_views

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


@dataclass
class ClassSensitivity:
    name: str
    accuracy_map: np.ndarray  # [M, N]
    mean: float
    median: float
    max: float

    @property
    def gap(self) -> float:
        return self.max - self.mean


@dataclass
class SensitivityReport:
    per_class: list[ClassSensitivity] = field(default_factory=list)
    mean_gap: float = 0.0
    max_gap: float = 0.0


def _correct_matrix(dataset: EmbeddingGridDataset, vocab: Vocabulary,
                    views: np.ndarray | None = None) -> np.ndarray:
    """[n_objects, M*N] booleans: top-1 open-vocabulary hit per view."""
    if views is None:
        views = np.concatenate([o.grid.reshape(-1, dataset.embed_dim) for o in dataset.objects])
    sims = views.astype(np.float64) @ vocab.matrix.astype(np.float64).T
    pred = np.argmax(sims, axis=1)
    labels = np.repeat([o.class_index for o in dataset.objects], dataset.n_views)
    return (pred == labels).reshape(len(dataset.objects), dataset.n_views)


def viewpoint_sensitivity_report(dataset: EmbeddingGridDataset,
                                 temperature: float = 1.0) -> SensitivityReport:
    """Per class and viewing cell: fraction of the class's objects whose
    top-1 open-vocabulary prediction at that cell is correct; then
    mean/median/max of the map per class. Temperature does not move the
    argmax; it is accepted for interface symmetry with predict()."""
    vocab = Vocabulary.from_dataset(dataset)
    correct = _correct_matrix(dataset, vocab)
    class_of = np.array([o.class_index for o in dataset.objects])

    report = SensitivityReport()
    gaps = []
    for ci, entry in enumerate(dataset.classes):
        rows = np.nonzero(class_of == ci)[0]
        if rows.size == 0:
            log.warning("sensitivity: class '%s' has no objects, skipping", entry.name)
            continue
        acc_map = correct[rows].mean(axis=0).reshape(dataset.azimuths, dataset.elevations)
        cs = ClassSensitivity(name=entry.name,
                              accuracy_map=acc_map,
                              mean=float(acc_map.mean()),
                              median=float(np.median(acc_map)),
                              max=float(acc_map.max()))
        report.per_class.append(cs)
        gaps.append(cs.gap)
    if gaps:
        report.mean_gap = float(np.mean(gaps))
        report.max_gap = float(np.max(gaps))
    return report


def random_vs_best_gap(dataset: EmbeddingGridDataset, temperature: float = 1.0,
                       runs: int = 5, seed: int = 0) -> dict[str, dict[str, float]]:
    """Per class: accuracy of uniformly sampled views (mean of `runs` draws
    per object) versus the best single view per object."""
    if runs < 1:
        raise ValueError("runs must be >= 1")
    vocab = Vocabulary.from_dataset(dataset)
    correct = _correct_matrix(dataset, vocab)
    rng = np.random.default_rng(seed)
    class_of = np.array([o.class_index for o in dataset.objects])

    draws = rng.integers(0, dataset.n_views, size=(len(dataset.objects), runs))
    random_acc = np.take_along_axis(correct, draws, axis=1).mean(axis=1)
    best_acc = correct.any(axis=1).astype(np.float64)

    out: dict[str, dict[str, float]] = {}
    for ci, entry in enumerate(dataset.classes):
        rows = np.nonzero(class_of == ci)[0]
        if rows.size == 0:
            log.warning("random_vs_best: class '%s' has no objects, skipping", entry.name)
            continue
        out[entry.name] = {
            "random_acc": float(random_acc[rows].mean()),
            "best_acc": float(best_acc[rows].mean()),
        }
    return out


def occlusion_study(dataset: EmbeddingGridDataset, temperature: float = 1.0,
                    probs: tuple[float, ...] = (0.2, 0.35, 0.5),
                    strength: float = DEFAULT_OCCLUSION_STRENGTH,
                    seed: int = 0) -> dict[str, object]:
    """Mean top-1 accuracy over all views at each occlusion probability,
    reported as a drop against the clean baseline."""
    for p in probs:
        if not (0.0 <= p <= 1.0):
            raise ValueError(f"occlusion probability {p} outside [0, 1]")
    vocab = Vocabulary.from_dataset(dataset)
    views = np.concatenate([o.grid.reshape(-1, dataset.embed_dim) for o in dataset.objects])
    baseline = float(_correct_matrix(dataset, vocab, views).mean())

    levels = []
    for p in probs:
        rng = np.random.default_rng(seed)
        corrupted = occlude_views(views, p, strength, rng)
        acc = float(_correct_matrix(dataset, vocab, corrupted).mean())
        levels.append({"prob": float(p), "accuracy": acc, "drop": baseline - acc})
    return {"baseline_accuracy": baseline, "levels": levels,
            "strength": float(strength), "n_views": int(views.shape[0])}


# report writers ----------------------------------------------------
def write_sensitivity_csv(report: SensitivityReport, map_path: Path, summary_path: Path) -> None:
    with open(map_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["schema_version", "class", "m", "n", "accuracy"])
        for cs in report.per_class:
            m_size, n_size = cs.accuracy_map.shape
            for m in range(m_size):
                for n in range(n_size):
                    w.writerow([SCHEMA_VERSION, cs.name, m, n, repr(float(cs.accuracy_map[m, n]))])
    with open(summary_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["schema_version", "class", "mean", "median", "max", "gap"])
        for cs in report.per_class:
            w.writerow([SCHEMA_VERSION, cs.name, repr(cs.mean), repr(cs.median),
                        repr(cs.max), repr(cs.gap)])


def write_random_vs_best_csv(result: dict[str, dict[str, float]], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["schema_version", "class", "random_acc", "best_acc", "gap"])
        for name, row in result.items():
            w.writerow([SCHEMA_VERSION, name, repr(row["random_acc"]), repr(row["best_acc"]),
                        repr(row["best_acc"] - row["random_acc"])])


def write_occlusion_csv(result: dict[str, object], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["schema_version", "prob", "accuracy", "drop"])
        w.writerow([SCHEMA_VERSION, repr(0.0), repr(result["baseline_accuracy"]), repr(0.0)])
        for level in result["levels"]:
            w.writerow([SCHEMA_VERSION, repr(level["prob"]), repr(level["accuracy"]),
                        repr(level["drop"])])


def write_summary_json(path: Path, sensitivity: SensitivityReport,
                       random_best: dict[str, dict[str, float]],
                       occlusion: dict[str, object]) -> None:
    payload = {
        "schema_version": SCHEMA_VERSION,
        "sensitivity": {
            "mean_gap": sensitivity.mean_gap,
            "max_gap": sensitivity.max_gap,
            "per_class": [{"class": cs.name, "mean": cs.mean, "median": cs.median,
                           "max": cs.max, "gap": cs.gap} for cs in sensitivity.per_class],
        },
        "random_vs_best": random_best,
        "occlusion": occlusion,
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
