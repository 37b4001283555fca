# =============================================================================
# 💾 Datasets, Feature Files & Synthetic Shift Benchmark (utils/data.py)
# -----------------------------------------------------------------------------
# Purpose:             DatasetManifest, the NRCF binary format, CSV fallback and the covariate-shift generator
# Project:             NRC Source-Free Adaptation Toolkit
# Version:             1.0.0
# Author:              NRC Toolkit Maintainers
# Created:             2026-09-23
# Last Updated:        2026-10-14
#
# Description:
#   NRCF layout (little-endian):
#     magic "NRCF" | u32 version=1 | u8 tag | u64 rows | u64 cols
#     [tag 2 only: u32 score_cols | u8 has_labels]
#     f32 payload (rows x cols, row-major)
#     [u32 labels x rows when tag 1, or tag 2 with has_labels]
#     u32 CRC32 of payload + labels
#   Tags: 0 features, 1 features + labels, 2 embeddings (z columns then score_cols p columns).
#   CSV fallback: header f0..f{d-1}[,label], UTF-8, LF line endings.
#
#   generate_synthetic_shift() draws C Gaussian classes whose means sit on a circle in the
#   first two coordinates. The target domain rotates and translates the means and scales
#   the cluster spread. A manifest directory holds source.nrcf, target.nrcf (labels hidden
#   from the trainer, used only for evaluation) and manifest.json.
#
# File Location:        /utils/data.py
# Called By:            tools/*, utils/experiment.py, tests
# Int. Dependencies:    utils/numerics, utils/shared/nrc_exceptions
# Ext. Dependencies:    numpy, struct, zlib, csv, json, dataclasses, pathlib, typing
#
# Notes:
#   - Format errors carry the byte offset (binary) or 1-based line number (CSV).
#   - Nothing is returned from a file that fails any check.
# =============================================================================

__all__ = [
    "SyntheticConfig",
    "DatasetManifest",
    "FeatureFile",
    "generate_synthetic_shift",
    "save_features",
    "save_features_csv",
    "save_embeddings",
    "load_features",
    "save_manifest",
    "load_manifest",
]

import csv
import io
import json
import struct
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

from utils.numerics import as_matrix
from utils.shared.nrc_exceptions import ConfigValidationError, FeatureFormatError, InvalidInputError

FEATURE_MAGIC = b"NRCF"
FEATURE_VERSION = 1
TAG_FEATURES = 0
TAG_LABELED = 1
TAG_EMBEDDINGS = 2
_HEADER = struct.Struct("<4sIBQQ")
_EMBED_HEADER = struct.Struct("<IB")

PathLike = Union[str, Path]


@dataclass
class SyntheticConfig:
    """Covariate-shift benchmark settings (the ``synthetic`` config section)."""
    num_classes: int = 4
    d_in: int = 2
    n_per_class: int = 500
    rotation_deg: float = 30.0
    translation: float = 0.5
    noise_scale: float = 1.0
    radius: float = 4.0
    cluster_std: float = 1.0
    seed: int = 0
    target_classes: Optional[List[int]] = None

    def __post_init__(self):
        if self.num_classes < 2 or self.d_in < 2 or self.n_per_class < 1:
            raise ConfigValidationError("synthetic needs num_classes >= 2, d_in >= 2 and n_per_class >= 1",
                                        invalid_keys=["synthetic"])
        if self.target_classes is not None:
            classes = [int(c) for c in self.target_classes]
            if not classes or min(classes) < 0 or max(classes) >= self.num_classes:
                raise ConfigValidationError("synthetic.target_classes must be a non-empty subset of the classes",
                                            invalid_keys=["synthetic.target_classes"])
            self.target_classes = sorted(set(classes))

    @classmethod
    def from_mapping(cls, values: Optional[dict]) -> "SyntheticConfig":
        values = dict(values or {})
        unknown = sorted(set(values) - set(cls.__dataclass_fields__))
        if unknown:
            raise ConfigValidationError(f"synthetic has unknown keys: {unknown}", invalid_keys=unknown)
        return cls(**values)

    @classmethod
    def from_config(cls, cfg) -> "SyntheticConfig":
        return cls.from_mapping(cfg.get("synthetic", {}))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class DatasetManifest:
    """
    Source and target domains. ``target_y`` holds hidden labels for evaluation only; the
    adaptation entry points accept ``target_x`` alone.
    """
    source_x: np.ndarray
    source_y: np.ndarray
    target_x: np.ndarray
    num_classes: int
    target_y: Optional[np.ndarray] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.source_x = as_matrix(self.source_x, "source_x")
        self.target_x = as_matrix(self.target_x, "target_x")
        self.source_y = np.asarray(self.source_y, dtype=np.int64)
        if self.source_x.shape[1] != self.target_x.shape[1]:
            raise InvalidInputError("source and target feature dimensions differ")
        if self.source_y.shape != (self.source_x.shape[0],):
            raise InvalidInputError("source labels do not match the source rows")
        if self.source_y.size and (self.source_y.min() < 0 or self.source_y.max() >= self.num_classes):
            raise InvalidInputError(f"source labels must lie in [0, {self.num_classes})")
        if self.target_y is not None:
            self.target_y = np.asarray(self.target_y, dtype=np.int64)
            if self.target_y.shape != (self.target_x.shape[0],):
                raise InvalidInputError("target labels do not match the target rows")

    @property
    def d_in(self) -> int:
        return int(self.source_x.shape[1])


def _rotation(deg: float) -> np.ndarray:
    t = np.deg2rad(deg)
    return np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])


def class_means(config: SyntheticConfig) -> np.ndarray:
    """(C, d_in) source means on a circle of ``radius`` in the first two coordinates."""
    angles = 2.0 * np.pi * np.arange(config.num_classes) / config.num_classes
    means = np.zeros((config.num_classes, config.d_in))
    means[:, 0] = config.radius * np.cos(angles)
    means[:, 1] = config.radius * np.sin(angles)
    return means


def shifted_means(config: SyntheticConfig) -> np.ndarray:
    """Target means: source means rotated by rotation_deg and moved by (translation, translation)."""
    means = class_means(config)
    means[:, :2] = means[:, :2] @ _rotation(config.rotation_deg).T + config.translation
    return means


def generate_synthetic_shift(config: SyntheticConfig) -> DatasetManifest:
    """
    Draw the source and shifted target domains.

    Each class has ``n_per_class`` samples per domain. Target clusters use standard deviation
    ``cluster_std * noise_scale``. Rows are shuffled within each domain.

    Raises:
        InvalidInputError: If noise_scale or cluster_std is negative.
    """
    if config.noise_scale < 0 or config.cluster_std < 0:
        raise InvalidInputError("noise_scale and cluster_std must be non-negative")
    rng = np.random.default_rng(config.seed)

    def draw(means: np.ndarray, classes: List[int], std: float):
        x = np.concatenate([means[c] + std * rng.standard_normal((config.n_per_class, config.d_in))
                            for c in classes])
        y = np.repeat(np.asarray(classes, dtype=np.int64), config.n_per_class)
        order = rng.permutation(y.size)
        return x[order], y[order]

    all_classes = list(range(config.num_classes))
    source_x, source_y = draw(class_means(config), all_classes, config.cluster_std)
    target_classes = config.target_classes or all_classes
    target_x, target_y = draw(shifted_means(config), target_classes, config.cluster_std * config.noise_scale)

    metadata = {
        "name": "synthetic_shift",
        "seed": config.seed,
        "shift": {
            "rotation_deg": config.rotation_deg,
            "translation": config.translation,
            "noise_scale": config.noise_scale,
        },
        "generator": config.to_dict(),
    }
    return DatasetManifest(source_x=source_x, source_y=source_y, target_x=target_x,
                           num_classes=config.num_classes, target_y=target_y, metadata=metadata)


@dataclass
class FeatureFile:
    """Decoded contents of a feature file."""
    matrix: np.ndarray
    labels: Optional[np.ndarray] = None
    tag: int = TAG_FEATURES
    score_cols: int = 0

    @property
    def z(self) -> np.ndarray:
        return self.matrix[:, :self.matrix.shape[1] - self.score_cols]

    @property
    def p(self) -> np.ndarray:
        return self.matrix[:, self.matrix.shape[1] - self.score_cols:]


def _to_f32(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        out = np.ascontiguousarray(x, dtype="<f4")
    if not np.all(np.isfinite(out)):
        raise InvalidInputError("values exceed the float32 range of the feature format")
    return out


def _labels_block(labels, rows: int) -> Optional[np.ndarray]:
    if labels is None:
        return None
    y = np.asarray(labels)
    if y.shape != (rows,):
        raise InvalidInputError(f"labels must have shape ({rows},), got {y.shape}")
    if y.size and (y.min() < 0 or y.max() > np.iinfo(np.uint32).max):
        raise InvalidInputError("labels must fit in u32")
    return np.ascontiguousarray(y, dtype="<u4")


def _write_nrcf(path: PathLike, matrix: np.ndarray, labels: Optional[np.ndarray], tag: int,
                score_cols: int = 0) -> Path:
    path = Path(path)
    rows, cols = matrix.shape
    payload = _to_f32(matrix).tobytes()
    label_bytes = labels.tobytes() if labels is not None else b""
    header = _HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, tag, rows, cols)
    if tag == TAG_EMBEDDINGS:
        header += _EMBED_HEADER.pack(score_cols, int(labels is not None))
    crc = zlib.crc32(payload + label_bytes) & 0xFFFFFFFF
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(header + payload + label_bytes + struct.pack("<I", crc))
    return path


def save_features(path: PathLike, x, labels=None) -> Path:
    """Write features (tag 0) or features + labels (tag 1) as NRCF."""
    matrix = as_matrix(x, "features")
    block = _labels_block(labels, matrix.shape[0])
    return _write_nrcf(path, matrix, block, TAG_LABELED if block is not None else TAG_FEATURES)


def save_embeddings(path: PathLike, z, p, labels=None) -> Path:
    """
    Write features z and scores p side by side as an NRCF embeddings section (tag 2).

    Raises:
        InvalidInputError: If z and p disagree in row count.
        OSError: If the path is not writable.
    """
    zm = as_matrix(z, "z")
    pm = as_matrix(p, "p")
    if zm.shape[0] != pm.shape[0]:
        raise InvalidInputError(f"z has {zm.shape[0]} rows, p has {pm.shape[0]}")
    block = _labels_block(labels, zm.shape[0])
    return _write_nrcf(path, np.hstack([zm, pm]), block, TAG_EMBEDDINGS, score_cols=pm.shape[1])


def save_features_csv(path: PathLike, x, labels=None) -> Path:
    """Write the CSV fallback encoding with round-trip float formatting."""
    matrix = as_matrix(x, "features")
    block = _labels_block(labels, matrix.shape[0])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        header = [f"f{j}" for j in range(matrix.shape[1])]
        writer.writerow(header + (["label"] if block is not None else []))
        for i, row in enumerate(matrix):
            values = [repr(float(v)) for v in row]
            writer.writerow(values + ([int(block[i])] if block is not None else []))
    return path


def _read_nrcf(path: Path) -> FeatureFile:
    data = path.read_bytes()
    where = str(path)

    def need(offset: int, size: int, what: str):
        if offset + size > len(data):
            raise FeatureFormatError(f"truncated file while reading {what}", offset=offset, path=where)

    need(0, _HEADER.size, "header")
    magic, version, tag, rows, cols = _HEADER.unpack_from(data, 0)
    if magic != FEATURE_MAGIC:
        raise FeatureFormatError(f"bad magic {magic!r}, expected {FEATURE_MAGIC!r}", offset=0, path=where)
    if version != FEATURE_VERSION:
        raise FeatureFormatError(f"unsupported version {version}", offset=4, path=where)
    if tag not in (TAG_FEATURES, TAG_LABELED, TAG_EMBEDDINGS):
        raise FeatureFormatError(f"unknown section tag {tag}", offset=8, path=where)
    offset = _HEADER.size

    score_cols, has_labels = 0, tag == TAG_LABELED
    if tag == TAG_EMBEDDINGS:
        need(offset, _EMBED_HEADER.size, "embedding header")
        score_cols, flag = _EMBED_HEADER.unpack_from(data, offset)
        if score_cols > cols or flag not in (0, 1):
            raise FeatureFormatError("inconsistent embedding header", offset=offset, path=where)
        has_labels = bool(flag)
        offset += _EMBED_HEADER.size

    remaining = len(data) - offset
    if cols == 0 and rows:
        raise FeatureFormatError("zero columns with non-zero rows", offset=17, path=where)
    if rows > remaining or cols > remaining or rows * cols * 4 > remaining:
        raise FeatureFormatError(f"dimensions {rows}x{cols} overflow the {remaining} bytes left",
                                 offset=9, path=where)
    payload_size = rows * cols * 4
    label_size = rows * 4 if has_labels else 0
    need(offset, payload_size, "payload")
    payload = data[offset:offset + payload_size]
    need(offset + payload_size, label_size, "labels")
    label_bytes = data[offset + payload_size:offset + payload_size + label_size]
    crc_offset = offset + payload_size + label_size
    need(crc_offset, 4, "checksum")
    (stored,) = struct.unpack_from("<I", data, crc_offset)
    if crc_offset + 4 != len(data):
        raise FeatureFormatError(f"{len(data) - crc_offset - 4} trailing bytes", offset=crc_offset + 4, path=where)
    actual = zlib.crc32(payload + label_bytes) & 0xFFFFFFFF
    if stored != actual:
        raise FeatureFormatError(f"checksum mismatch (stored {stored:#010x}, computed {actual:#010x})",
                                 offset=crc_offset, path=where)

    matrix = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(rows, cols)
    if not np.all(np.isfinite(matrix)):
        raise FeatureFormatError("payload contains non-finite values", offset=offset, path=where)
    labels = np.frombuffer(label_bytes, dtype="<u4").astype(np.int64) if has_labels else None
    return FeatureFile(matrix=matrix, labels=labels, tag=tag, score_cols=score_cols)


def _read_csv(path: Path) -> FeatureFile:
    where = str(path)
    raw = path.read_bytes()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as e:
        line_no = raw[:e.start].count(b"\n") + 1
        raise FeatureFormatError(f"CSV is not valid UTF-8 (byte {e.start})", offset=line_no, path=where) from e
    reader = csv.reader(io.StringIO(text, newline=""))
    try:
        header = next(reader)
    except StopIteration:
        raise FeatureFormatError("empty CSV file", offset=1, path=where)
    has_labels = bool(header) and header[-1] == "label"
    d = len(header) - int(has_labels)
    if d < 1 or header[:d] != [f"f{j}" for j in range(d)]:
        raise FeatureFormatError(f"bad CSV header {header}", offset=1, path=where)
    rows, labels = [], []
    for line_no, record in enumerate(reader, start=2):
        if len(record) != len(header):
            raise FeatureFormatError(f"expected {len(header)} fields, got {len(record)}", offset=line_no, path=where)
        try:
            rows.append([float(v) for v in record[:d]])
            if has_labels:
                labels.append(int(record[d]))
        except ValueError as e:
            raise FeatureFormatError(f"unparseable value: {e}", offset=line_no, path=where) from e
    matrix = np.asarray(rows, dtype=np.float64).reshape(len(rows), d)
    if not np.all(np.isfinite(matrix)):
        raise FeatureFormatError("CSV contains non-finite values", path=where)
    y = np.asarray(labels, dtype=np.int64) if has_labels else None
    return FeatureFile(matrix=matrix, labels=y, tag=TAG_LABELED if has_labels else TAG_FEATURES)


def load_features(path: PathLike) -> FeatureFile:
    """
    Read an NRCF file, or the CSV fallback when the suffix is ``.csv``.

    Raises:
        FileNotFoundError: Missing file.
        FeatureFormatError: Bad magic, truncation, dimension overflow, checksum mismatch, or a CSV
            that is not UTF-8 or does not parse.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"feature file not found: {path}")
    if path.suffix.lower() == ".csv":
        return _read_csv(path)
    return _read_nrcf(path)


def save_manifest(manifest: DatasetManifest, folder: PathLike) -> Path:
    """Write source.nrcf, target.nrcf and manifest.json into ``folder``."""
    folder = Path(folder)
    folder.mkdir(parents=True, exist_ok=True)
    save_features(folder / "source.nrcf", manifest.source_x, manifest.source_y)
    save_features(folder / "target.nrcf", manifest.target_x, manifest.target_y)
    info = {
        "num_classes": manifest.num_classes,
        "d_in": manifest.d_in,
        "n_source": int(manifest.source_x.shape[0]),
        "n_target": int(manifest.target_x.shape[0]),
        "metadata": manifest.metadata,
    }
    with open(folder / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(info, f, indent=2, sort_keys=True)
        f.write("\n")
    return folder


def load_manifest(folder: PathLike) -> DatasetManifest:
    """Inverse of save_manifest(); values come back widened from float32."""
    folder = Path(folder)
    manifest_path = folder / "manifest.json"
    if not manifest_path.is_file():
        raise FileNotFoundError(f"manifest not found: {manifest_path}")
    with open(manifest_path, "r", encoding="utf-8") as f:
        info = json.load(f)
    source = load_features(folder / "source.nrcf")
    target = load_features(folder / "target.nrcf")
    if source.labels is None:
        raise FeatureFormatError("source file carries no labels", path=str(folder / "source.nrcf"))
    return DatasetManifest(source_x=source.matrix, source_y=source.labels, target_x=target.matrix,
                           num_classes=int(info["num_classes"]), target_y=target.labels,
                           metadata=info.get("metadata", {}))
