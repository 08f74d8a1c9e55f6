"""Desk-scale laboratory for active open-vocabulary recognition over
embedding grids: dataset containers, a synthetic world generator, zero-shot
analytics, attention-based evidence fusion, a viewing-grid environment, and
a PPO-trained movement policy."""

__version__ = "0.1.0"

from .container import (ClassEntry, ContainerError, EmbeddingGridDataset,
                        ObjectRecord, load_container, save_container)
from .synth import SynthConfig, apply_occlusion, generate_synthetic

__all__ = [
    "ClassEntry", "ContainerError", "EmbeddingGridDataset", "ObjectRecord",
    "load_container", "save_container", "SynthConfig", "apply_occlusion",
    "generate_synthetic", "__version__",
]
