"""Embedding-grid dataset container and its AOVR1 binary format.

A dataset holds a vocabulary of unit text embeddings plus, per object, an
M x N grid of unit view embeddings (azimuth-major) and optionally a ground
truth informativeness map. All floats are stored as little-endian float32,
in memory and on disk, so save/load round-trips bit for bit.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"AOVR"
VERSION = 1
NORM_TOL = 1e-5

SPLIT_BASE = "base"
SPLIT_NOVEL = "novel"
_SPLIT_CODE = {SPLIT_BASE: 0, SPLIT_NOVEL: 1}
_SPLIT_NAME = {0: SPLIT_BASE, 1: SPLIT_NOVEL}


class ContainerError(RuntimeError):
    """Malformed file or broken dataset invariant."""


@dataclass
class ClassEntry:
    name: str
    split: str
    text_embedding: np.ndarray

    def __post_init__(self):
        if self.split not in _SPLIT_CODE:
            raise ContainerError(f"class '{self.name}': unknown split '{self.split}'")
        self.text_embedding = np.ascontiguousarray(self.text_embedding, dtype=np.float32)


@dataclass
class ObjectRecord:
    object_id: str
    class_index: int
    grid: np.ndarray                      # [M, N, D]
    info_map: np.ndarray | None = None    # [M, N] in [0, 1]

    def __post_init__(self):
        self.grid = np.ascontiguousarray(self.grid, dtype=np.float32)
        if self.info_map is not None:
            self.info_map = np.ascontiguousarray(self.info_map, dtype=np.float32)


@dataclass
class EmbeddingGridDataset:
    embed_dim: int
    azimuths: int
    elevations: int
    classes: list[ClassEntry] = field(default_factory=list)
    objects: list[ObjectRecord] = field(default_factory=list)
    metadata: dict[str, str] = field(default_factory=dict)

    @property
    def n_views(self) -> int:
        return self.azimuths * self.elevations

    def class_indices(self, split: str) -> list[int]:
        """Indices for 'base', 'novel', or 'open' (all classes)."""
        if split == "open":
            return list(range(len(self.classes)))
        return [i for i, c in enumerate(self.classes) if c.split == split]

    def objects_of_split(self, split: str) -> list[int]:
        wanted = set(self.class_indices(split))
        return [i for i, o in enumerate(self.objects) if o.class_index in wanted]

    def class_matrix(self) -> np.ndarray:
        """[C, D] matrix of text embeddings, vocabulary order."""
        return np.stack([c.text_embedding for c in self.classes]) if self.classes \
            else np.zeros((0, self.embed_dim), dtype=np.float32)

    def validate(self) -> None:
        names = [c.name for c in self.classes]
        if len(set(names)) != len(names):
            raise ContainerError("class names are not unique")
        for i, c in enumerate(self.classes):
            if c.text_embedding.shape != (self.embed_dim,):
                raise ContainerError(f"class '{c.name}': embedding shape {c.text_embedding.shape}, expected ({self.embed_dim},)")
            _check_unit(c.text_embedding, f"class '{c.name}' text embedding")
        for i, o in enumerate(self.objects):
            if not (0 <= o.class_index < len(self.classes)):
                raise ContainerError(f"object {i} ('{o.object_id}'): class_index {o.class_index} out of range")
            expected = (self.azimuths, self.elevations, self.embed_dim)
            if o.grid.shape != expected:
                raise ContainerError(f"object {i} ('{o.object_id}'): grid shape {o.grid.shape}, expected {expected}")
            norms = np.linalg.norm(o.grid.astype(np.float64), axis=-1)
            if not np.all(np.isfinite(o.grid)):
                raise ContainerError(f"object {i} ('{o.object_id}'): non-finite values in grid")
            if np.any(np.abs(norms - 1.0) > NORM_TOL):
                worst = float(np.abs(norms - 1.0).max())
                raise ContainerError(f"object {i} ('{o.object_id}'): view embeddings deviate from unit norm by {worst:.2e}")
            if o.info_map is not None:
                if o.info_map.shape != (self.azimuths, self.elevations):
                    raise ContainerError(f"object {i} ('{o.object_id}'): info_map shape {o.info_map.shape}")
                if np.any(o.info_map < 0.0) or np.any(o.info_map > 1.0) or not np.all(np.isfinite(o.info_map)):
                    raise ContainerError(f"object {i} ('{o.object_id}'): info_map outside [0, 1]")


def _check_unit(vec: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(vec)):
        raise ContainerError(f"{what}: non-finite values")
    norm = float(np.linalg.norm(vec.astype(np.float64)))
    if abs(norm - 1.0) > NORM_TOL:
        raise ContainerError(f"{what}: norm {norm:.6f} is not unit within {NORM_TOL}")


def save_container(dataset: EmbeddingGridDataset, path: str | Path) -> None:
    """Write the dataset in AOVR1 format. Refuses to write if any invariant
    is broken."""
    dataset.validate()
    chunks: list[bytes] = [
        MAGIC,
        struct.pack("<BIII", VERSION, dataset.embed_dim, dataset.azimuths, dataset.elevations),
        struct.pack("<II", len(dataset.classes), len(dataset.objects)),
    ]
    for c in dataset.classes:
        name = c.name.encode("utf-8")
        chunks.append(struct.pack("<H", len(name)))
        chunks.append(name)
        chunks.append(struct.pack("<B", _SPLIT_CODE[c.split]))
        chunks.append(c.text_embedding.astype("<f4").tobytes(order="C"))
    for o in dataset.objects:
        oid = o.object_id.encode("utf-8")
        chunks.append(struct.pack("<H", len(oid)))
        chunks.append(oid)
        chunks.append(struct.pack("<IB", o.class_index, 1 if o.info_map is not None else 0))
        chunks.append(o.grid.astype("<f4").tobytes(order="C"))
        if o.info_map is not None:
            chunks.append(o.info_map.astype("<f4").tobytes(order="C"))
    chunks.append(struct.pack("<H", len(dataset.metadata)))
    for key, val in dataset.metadata.items():
        kb, vb = key.encode("utf-8"), val.encode("utf-8")
        chunks.append(struct.pack("<H", len(kb)))
        chunks.append(kb)
        chunks.append(struct.pack("<H", len(vb)))
        chunks.append(vb)
    Path(path).write_bytes(b"".join(chunks))


class _Reader:
    def __init__(self, buf: bytes, path: str):
        self.buf = buf
        self.off = 0
        self.path = path

    def read(self, n: int, what: str) -> bytes:
        end = self.off + n
        if end > len(self.buf):
            raise ContainerError(f"{self.path}: truncated while reading {what}")
        out = self.buf[self.off:end]
        self.off = end
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.read(struct.calcsize(fmt), what))


def load_container(path: str | Path) -> EmbeddingGridDataset:
    buf = Path(path).read_bytes()
    r = _Reader(buf, str(path))
    magic = r.read(4, "magic")
    if magic != MAGIC:
        raise ContainerError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    version, d, m, n = r.unpack("<BIII", "header")
    if version != VERSION:
        raise ContainerError(f"{path}: unsupported version {version}")
    n_classes, n_objects = r.unpack("<II", "table counts")

    classes: list[ClassEntry] = []
    for ci in range(n_classes):
        (name_len,) = r.unpack("<H", f"class {ci} name length")
        name = r.read(name_len, f"class {ci} name").decode("utf-8")
        (split_code,) = r.unpack("<B", f"class {ci} split")
        if split_code not in _SPLIT_NAME:
            raise ContainerError(f"{path}: class {ci} has invalid split code {split_code}")
        emb = np.frombuffer(r.read(4 * d, f"class {ci} embedding"), dtype="<f4").copy()
        classes.append(ClassEntry(name=name, split=_SPLIT_NAME[split_code], text_embedding=emb))

    objects: list[ObjectRecord] = []
    grid_bytes = 4 * m * n * d
    for oi in range(n_objects):
        (id_len,) = r.unpack("<H", f"object {oi} id length")
        oid = r.read(id_len, f"object {oi} id").decode("utf-8")
        class_index, has_info = r.unpack("<IB", f"object {oi} header")
        grid = np.frombuffer(r.read(grid_bytes, f"object {oi} grid"), dtype="<f4").reshape(m, n, d).copy()
        info = None
        if has_info:
            info = np.frombuffer(r.read(4 * m * n, f"object {oi} info map"), dtype="<f4").reshape(m, n).copy()
        objects.append(ObjectRecord(object_id=oid, class_index=class_index, grid=grid, info_map=info))

    metadata: dict[str, str] = {}
    (n_meta,) = r.unpack("<H", "metadata count")
    for mi in range(n_meta):
        (klen,) = r.unpack("<H", f"metadata {mi} key length")
        key = r.read(klen, f"metadata {mi} key").decode("utf-8")
        (vlen,) = r.unpack("<H", f"metadata {mi} value length")
        val = r.read(vlen, f"metadata {mi} value").decode("utf-8")
        metadata[key] = val

    dataset = EmbeddingGridDataset(embed_dim=d, azimuths=m, elevations=n,
                                   classes=classes, objects=objects, metadata=metadata)
    dataset.validate()
    return dataset
